// Copyright 2026 The protodc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <set>
#include <vector>

#include "protodc/rng.hpp"
#include "protodc/taps.hpp"
#include "protodc/tensor.hpp"

namespace protodc {

/// Component toggles for ablation studies. Each flag strictly changes the
/// behavior of adapt(); none is a silent no-op.
struct AblationFlags {
    bool disable_global_a = false;  // drop the multiplicative prototype A
    bool free_keys_no_w = false;    // learn K directly instead of P -> W
    bool no_stop_grad = false;      // let key gradients reach P
};

/// Prototype counts per modality. The fused bottleneck uses the image count.
struct SetSizeProfile {
    int n_image = 10;
    int n_depth = 5;

    static SetSizeProfile indoor() { return {10, 5}; }
    static SetSizeProfile outdoor() { return {25, 10}; }

    int count_for(TapModality m) const {
        return m == TapModality::kDepth ? n_depth : n_image;
    }
};

/// Per-domain, per-tap adaptation parameters: global multiplicative
/// prototype A, local additive prototypes P, and the key projection W.
/// With the free-keys ablation, keys K are an independent parameter.
struct PrototypeSet {
    TapId tap_id{};
    int domain_id = 0;
    int set_size = 0;
    int channels = 0;
    Tensor global_scale;  // A: [c]
    Tensor local_protos;  // P: [N x c]
    Tensor projection;    // W: [c x c]
    Tensor free_keys;     // K: [N x c]; defined only for the ablation

    int64_t parameter_count(const AblationFlags& fl = {}) const {
        int64_t n = 0;
        if (!fl.disable_global_a) n += global_scale.numel();
        n += local_protos.numel();
        n += fl.free_keys_no_w ? free_keys.numel() : projection.numel();
        return n;
    }
};

/// K = StopGrad(P) * W. With stop_grad off (ablation), gradients through the
/// keys also reach P.
inline Tensor project_keys(const Tensor& local_protos, const Tensor& projection,
                           bool stop_grad = true) {
    if (projection.ndim() != 2 || local_protos.ndim() != 2 ||
        local_protos.extent(1) != projection.extent(0) ||
        projection.extent(0) != projection.extent(1))
        throw ShapeError("project_keys: P " + shape_str(local_protos.shape()) + " vs W " +
                         shape_str(projection.shape()));
    return matmul(stop_grad ? detach(local_protos) : local_protos, projection);
}

/// Scaled dot-product assignment of prototypes to spatial positions:
/// Q = flatten(X), alpha = softmax(Q K^T / sqrt(c)), B = reshape(alpha P).
/// Every spatial bias vector is a convex combination of rows of P.
inline Tensor local_bias(const Tensor& x, const Tensor& local_protos, const Tensor& keys) {
    if (x.ndim() != 3 || x.extent(2) != local_protos.extent(1) ||
        keys.shape() != local_protos.shape())
        throw ShapeError("local_bias: X " + shape_str(x.shape()) + ", P " +
                         shape_str(local_protos.shape()) + ", K " + shape_str(keys.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    Tensor queries = reshape(x, {h * w, c});
    Tensor scores = scale(matmul(queries, transpose(keys)), 1.0f / std::sqrt(static_cast<float>(c)));
    Tensor weights = softmax_rows(scores);
    return reshape(matmul(weights, local_protos), {h, w, c});
}

/// Latent adaptation: X_hat = A (.) X + B.
inline Tensor adapt(const Tensor& x, const PrototypeSet& set, const AblationFlags& fl = {}) {
    Tensor keys = fl.free_keys_no_w ? set.free_keys
                                    : project_keys(set.local_protos, set.projection, !fl.no_stop_grad);
    Tensor bias = local_bias(x, set.local_protos, keys);
    if (fl.disable_global_a) return add(x, bias);
    return add(broadcast_mul(x, set.global_scale), bias);
}

/// All domains' prototype sets plus the frozen-domain registry. Exactly one
/// PrototypeSet per (domain, tap); frozen domains never change.
class AdapterBank {
public:
    /// Allocates the sets for an unseen domain (identity initialization:
    /// A = 1, P = 0, W = I + noise) and freezes every earlier domain.
    void new_domain(int domain_id, const std::vector<LatentTap>& taps, const SetSizeProfile& sizes,
                    uint64_t seed, const AblationFlags& fl = {}) {
        if (domains_.count(domain_id))
            throw ContractError("AdapterBank: domain " + std::to_string(domain_id) +
                                " already deployed");
        for (auto& [id, sets] : domains_) {
            freeze_domain(id);
        }
        std::vector<PrototypeSet> sets;
        sets.reserve(taps.size());
        for (const auto& tap : taps) {
            const int n = sizes.count_for(tap.modality);
            const int c = tap.channels;
            PrototypeSet s;
            s.tap_id = tap.id;
            s.domain_id = domain_id;
            s.set_size = n;
            s.channels = c;
            s.global_scale = Tensor::ones({c}, true);
            s.local_protos = Tensor::zeros({n, c}, true);
            Rng wrng = substream(seed, std::string("adapter/W/") + tap_name(tap.id),
                                 static_cast<uint64_t>(domain_id));
            std::vector<float> wv(static_cast<size_t>(c) * c, 0.0f);
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < c; ++j)
                    wv[static_cast<size_t>(i) * c + j] =
                        (i == j ? 1.0f : 0.0f) + 1e-3f * wrng.normal();
            s.projection = Tensor::from_vector({c, c}, std::move(wv), true);
            if (fl.free_keys_no_w) {
                Rng krng = substream(seed, std::string("adapter/K/") + tap_name(tap.id),
                                     static_cast<uint64_t>(domain_id));
                std::vector<float> kv(static_cast<size_t>(n) * c);
                for (float& v : kv) v = 1e-3f * krng.normal();
                s.free_keys = Tensor::from_vector({n, c}, std::move(kv), true);
            }
            sets.push_back(std::move(s));
        }
        domains_.emplace(domain_id, std::move(sets));
    }

    bool has_domain(int domain_id) const { return domains_.count(domain_id) != 0; }
    bool is_frozen(int domain_id) const { return frozen_.count(domain_id) != 0; }

    const std::vector<PrototypeSet>& sets(int domain_id) const {
        auto it = domains_.find(domain_id);
        if (it == domains_.end())
            throw ContractError("AdapterBank: unknown domain " + std::to_string(domain_id));
        return it->second;
    }

    std::vector<PrototypeSet>& sets_mutable(int domain_id) {
        auto it = domains_.find(domain_id);
        if (it == domains_.end())
            throw ContractError("AdapterBank: unknown domain " + std::to_string(domain_id));
        return it->second;
    }

    const PrototypeSet& set_for(int domain_id, TapId tap) const {
        for (const auto& s : sets(domain_id))
            if (s.tap_id == tap) return s;
        throw ContractError("AdapterBank: no set for tap");
    }

    /// Parameters of one (unfrozen) domain, in tap order.
    std::vector<Tensor> trainable_params(int domain_id, const AblationFlags& fl = {}) {
        if (is_frozen(domain_id))
            throw ContractError("AdapterBank: domain " + std::to_string(domain_id) + " is frozen");
        std::vector<Tensor> out;
        for (auto& s : sets_mutable(domain_id)) {
            if (!fl.disable_global_a) out.push_back(s.global_scale);
            out.push_back(s.local_protos);
            if (fl.free_keys_no_w)
                out.push_back(s.free_keys);
            else
                out.push_back(s.projection);
        }
        return out;
    }

    /// Install a deserialized domain (checkpoint restore path).
    void restore_domain(int domain_id, std::vector<PrototypeSet> sets, bool frozen) {
        if (domains_.count(domain_id))
            throw ContractError("AdapterBank: domain " + std::to_string(domain_id) +
                                " already present");
        domains_.emplace(domain_id, std::move(sets));
        if (frozen) freeze_domain(domain_id);
    }

    void freeze_domain(int domain_id) {
        if (frozen_.insert(domain_id).second) {
            for (auto& s : domains_.at(domain_id)) {
                s.global_scale.set_requires_grad(false);
                s.local_protos.set_requires_grad(false);
                s.projection.set_requires_grad(false);
                if (s.free_keys.defined()) s.free_keys.set_requires_grad(false);
            }
        }
    }

    std::vector<int> domain_ids() const {
        std::vector<int> ids;
        for (const auto& [id, _] : domains_) ids.push_back(id);
        return ids;
    }

    int64_t domain_parameter_count(int domain_id, const AblationFlags& fl = {}) const {
        int64_t n = 0;
        for (const auto& s : sets(domain_id)) n += s.parameter_count(fl);
        return n;
    }

private:
    std::map<int, std::vector<PrototypeSet>> domains_;
    std::set<int> frozen_;
};

}  // namespace protodc
