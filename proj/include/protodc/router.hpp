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

#include <cmath>
#include <vector>

#include "protodc/losses.hpp"
#include "protodc/nn_ops.hpp"
#include "protodc/optimizer.hpp"
#include "protodc/tensor.hpp"

namespace protodc {

/// Learned summary vector of one domain, matched against sample descriptors
/// by cosine similarity.
struct DomainDescriptor {
    Tensor r;  // [c]
    int domain_id = 0;
    bool frozen = false;
};

/// Global average pool of the pre-adaptation bottleneck features. With the
/// encoders frozen this is a deterministic function of the input.
inline Tensor sample_descriptor(const Tensor& bottleneck_features) {
    return global_avg_pool(bottleneck_features);
}

namespace router_detail {

inline double cosine(const Tensor& a, const Tensor& b) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += static_cast<double>(a.data()[i]) * b.data()[i];
        na += static_cast<double>(a.data()[i]) * a.data()[i];
        nb += static_cast<double>(b.data()[i]) * b.data()[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace router_detail

/// argmax_k cos(s, r_k); ties break toward the lowest domain id.
inline int select_domain(const Tensor& s, const std::vector<DomainDescriptor>& descriptors) {
    if (descriptors.empty()) throw ContractError("select_domain: no descriptors");
    double best = -2.0;
    int best_id = 0;
    bool first = true;
    for (const auto& d : descriptors) {
        const double c = router_detail::cosine(s, d.r);
        if (first || c > best || (c == best && d.domain_id < best_id)) {
            best = c;
            best_id = d.domain_id;
            first = false;
        }
    }
    return best_id;
}

/// Post-hoc frozen descriptor for the pretraining domain: the normalized
/// mean of sample descriptors over a training subset.
inline DomainDescriptor fit_initial_descriptor(const std::vector<Tensor>& sample_descriptors,
                                               int domain_id) {
    if (sample_descriptors.empty())
        throw ContractError("fit_initial_descriptor: empty sample set");
    const int c = static_cast<int>(sample_descriptors.front().numel());
    std::vector<double> mean(static_cast<size_t>(c), 0.0);
    for (const auto& s : sample_descriptors)
        for (int i = 0; i < c; ++i) mean[static_cast<size_t>(i)] += s.data()[i];
    double norm = 0;
    for (double& v : mean) {
        v /= static_cast<double>(sample_descriptors.size());
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("fit_initial_descriptor: zero-norm mean descriptor");
    std::vector<float> r(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) r[static_cast<size_t>(i)] = static_cast<float>(mean[static_cast<size_t>(i)] / norm);
    return DomainDescriptor{Tensor::from_vector({c}, std::move(r)), domain_id, true};
}

/// One gradient step on the descriptor objective with respect to r_k only.
/// Returns the loss value before the step.
inline float train_descriptor_step(DomainDescriptor& desc, const Tensor& s,
                                   const std::vector<DomainDescriptor>& frozen_others,
                                   float learning_rate) {
    if (desc.frozen) throw ContractError("train_descriptor_step: descriptor is frozen");
    std::vector<Tensor> others;
    for (const auto& d : frozen_others) others.push_back(d.r);
    const float w_jk = std::max<float>(1.0f, static_cast<float>(others.size()));
    desc.r.set_requires_grad(true);
    desc.r.zero_grad();
    Tensor loss = descriptor_loss(s, desc.r, others, w_jk);
    loss.backward();
    const std::vector<float>& g = desc.r.grad();
    for (int64_t i = 0; i < desc.r.numel(); ++i) desc.r.data()[i] -= learning_rate * g[i];
    desc.r.zero_grad();
    return loss.item();
}

}  // namespace protodc
