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

#include <string>
#include <utility>
#include <vector>

#include "protodc/nn_ops.hpp"
#include "protodc/prototypes.hpp"
#include "protodc/rng.hpp"
#include "protodc/taps.hpp"
#include "protodc/tensor.hpp"

namespace protodc {

struct BackboneConfig {
    float d_min = 0.2f;
    float d_max = 5.0f;
    float leaky_slope = 0.1f;
    uint64_t seed = 1;
};

/// Dual-encoder/decoder depth completion network. Image and sparse-depth
/// encoders run three stride-2 stages (16/32/64 channels, two convs each);
/// their final features fuse into a 64-channel bottleneck; the decoder
/// upsamples three times with skip concatenation into a 1-channel head.
/// Prototype sets attach on the tap branches feeding the decoder, so the
/// encoders and the pre-adaptation bottleneck never see adapters.
class Backbone {
public:
    struct EncoderFeatures {
        Tensor img_s1, img_s2, img_s3;
        Tensor dep_s1, dep_s2, dep_s3;
        Tensor bottleneck;  // fused, pre-adaptation (descriptor source)
    };

    explicit Backbone(BackboneConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg.d_min > 0.0f) || !(cfg.d_max > cfg.d_min))
            throw ContractError("Backbone: requires 0 < d_min < d_max");
        img_enc_ = {make_conv("img_enc.s1.c1", 3, 3, 16, 2), make_conv("img_enc.s1.c2", 3, 16, 16, 1),
                    make_conv("img_enc.s2.c1", 3, 16, 32, 2), make_conv("img_enc.s2.c2", 3, 32, 32, 1),
                    make_conv("img_enc.s3.c1", 3, 32, 64, 2), make_conv("img_enc.s3.c2", 3, 64, 64, 1)};
        dep_enc_ = {make_conv("dep_enc.s1.c1", 3, 2, 16, 2), make_conv("dep_enc.s1.c2", 3, 16, 16, 1),
                    make_conv("dep_enc.s2.c1", 3, 16, 32, 2), make_conv("dep_enc.s2.c2", 3, 32, 32, 1),
                    make_conv("dep_enc.s3.c1", 3, 32, 64, 2), make_conv("dep_enc.s3.c2", 3, 64, 64, 1)};
        fuse_ = make_conv("fuse.c1", 3, 128, 64, 1);
        dec_ = {make_conv("dec.d3", 3, 192, 96, 1), make_conv("dec.d2", 3, 160, 48, 1),
                make_conv("dec.d1", 3, 80, 24, 1)};
        head_ = make_conv("dec.head", 1, 24, 1, 1);
    }

    static const std::vector<LatentTap>& tap_registry() {
        static const std::vector<LatentTap> taps = {
            {TapId::kImgS1, 16, TapModality::kImage},  {TapId::kImgS2, 32, TapModality::kImage},
            {TapId::kImgS3, 64, TapModality::kImage},  {TapId::kDepS1, 16, TapModality::kDepth},
            {TapId::kDepS2, 32, TapModality::kDepth},  {TapId::kDepS3, 64, TapModality::kDepth},
            {TapId::kBottleneck, 64, TapModality::kFused}};
        return taps;
    }

    /// Runs both frozen-path encoders and the fusing conv. Inputs are the
    /// RGB image [h x w x 3], sparse depth and its mask [h x w].
    EncoderFeatures encode(const Tensor& image, const Tensor& sparse_z, const Tensor& mask) const {
        check_input(image, sparse_z, mask);
        const int h = image.extent(0), w = image.extent(1);
        EncoderFeatures f;
        f.img_s1 = stage(image, img_enc_[0], img_enc_[1]);
        f.img_s2 = stage(f.img_s1, img_enc_[2], img_enc_[3]);
        f.img_s3 = stage(f.img_s2, img_enc_[4], img_enc_[5]);
        Tensor depth_in = concat_channels(
            {reshape(sparse_z, {h, w, 1}), reshape(mask, {h, w, 1})});
        f.dep_s1 = stage(depth_in, dep_enc_[0], dep_enc_[1]);
        f.dep_s2 = stage(f.dep_s1, dep_enc_[2], dep_enc_[3]);
        f.dep_s3 = stage(f.dep_s2, dep_enc_[4], dep_enc_[5]);
        f.bottleneck = apply(concat_channels({f.img_s3, f.dep_s3}), fuse_);
        return f;
    }

    /// Decodes to a dense depth map. When adapters are given (one
    /// PrototypeSet per tap, in registry order), each tap's features are
    /// adapted before they flow into the decoder.
    Tensor decode(const EncoderFeatures& f, const std::vector<PrototypeSet>* adapters,
                  const AblationFlags& fl = {}) const {
        auto tap_feat = [&](const Tensor& x, TapId id) {
            if (!adapters) return x;
            return adapt(x, (*adapters)[static_cast<size_t>(id)], fl);
        };
        Tensor b = tap_feat(f.bottleneck, TapId::kBottleneck);
        Tensor i3 = tap_feat(f.img_s3, TapId::kImgS3);
        Tensor z3 = tap_feat(f.dep_s3, TapId::kDepS3);
        Tensor d3 = apply(bilinear_upsample2(concat_channels({b, i3, z3})), dec_[0]);
        Tensor i2 = tap_feat(f.img_s2, TapId::kImgS2);
        Tensor z2 = tap_feat(f.dep_s2, TapId::kDepS2);
        Tensor d2 = apply(bilinear_upsample2(concat_channels({d3, i2, z2})), dec_[1]);
        Tensor i1 = tap_feat(f.img_s1, TapId::kImgS1);
        Tensor z1 = tap_feat(f.dep_s1, TapId::kDepS1);
        Tensor d1 = apply(bilinear_upsample2(concat_channels({d2, i1, z1})), dec_[2]);
        Tensor logits = broadcast_add(conv2d(d1, head_.weights, 1, 0), head_.bias);
        Tensor bounded = sigmoid(logits);
        const int h = bounded.extent(0), w = bounded.extent(1);
        return add_scalar(scale(reshape(bounded, {h, w}), cfg_.d_max - cfg_.d_min), cfg_.d_min);
    }

    /// (depth_pred, pre-adaptation bottleneck features).
    std::pair<Tensor, Tensor> forward(const Tensor& image, const Tensor& sparse_z, const Tensor& mask,
                                      const std::vector<PrototypeSet>* adapters = nullptr,
                                      const AblationFlags& fl = {}) const {
        EncoderFeatures f = encode(image, sparse_z, mask);
        return {decode(f, adapters, fl), f.bottleneck};
    }

    void freeze() {
        frozen_ = true;
        for (auto& [name, p] : named_params_) p.set_requires_grad(false);
    }
    bool frozen() const { return frozen_; }

    struct ParamCounts {
        int64_t trainable = 0;
        int64_t frozen = 0;
        int64_t total() const { return trainable + frozen; }
    };

    ParamCounts parameter_count() const {
        ParamCounts c;
        for (const auto& [name, p] : named_params_)
            (p.requires_grad() ? c.trainable : c.frozen) += p.numel();
        return c;
    }

    std::vector<Tensor> parameters() {
        std::vector<Tensor> out;
        for (auto& [name, p] : named_params_) out.push_back(p);
        return out;
    }

    const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
        return named_params_;
    }

    /// Overwrite parameter values from a name -> tensor source (checkpoint
    /// restore). Shapes must match exactly.
    void load_parameter(const std::string& name, const Tensor& value) {
        for (auto& [n, p] : named_params_) {
            if (n != name) continue;
            if (p.shape() != value.shape())
                throw IoError("Backbone::load_parameter: shape mismatch for '" + name + "'");
            std::copy(value.data(), value.data() + value.numel(), p.data());
            return;
        }
        throw IoError("Backbone::load_parameter: unknown parameter '" + name + "'");
    }

    const BackboneConfig& config() const { return cfg_; }

private:
    struct ConvLayer {
        Tensor weights;
        Tensor bias;
        int stride = 1;
        int pad = 0;
    };

    ConvLayer make_conv(const std::string& name, int k, int cin, int cout, int stride) {
        // Kaiming-uniform fan-in with the leaky-rectifier gain; zero biases.
        const float fan_in = static_cast<float>(k * k * cin);
        const float gain = std::sqrt(2.0f / (1.0f + cfg_.leaky_slope * cfg_.leaky_slope));
        const float bound = gain * std::sqrt(3.0f / fan_in);
        Rng rng = substream(cfg_.seed, "backbone/" + name);
        std::vector<float> wv(static_cast<size_t>(k) * k * cin * cout);
        for (float& v : wv) v = rng.uniform(-bound, bound);
        ConvLayer layer;
        layer.weights = Tensor::from_vector({k, k, cin, cout}, std::move(wv), true);
        layer.bias = Tensor::zeros({cout}, true);
        layer.stride = stride;
        layer.pad = k / 2;
        named_params_.emplace_back(name + ".weight", layer.weights);
        named_params_.emplace_back(name + ".bias", layer.bias);
        return layer;
    }

    Tensor apply(const Tensor& x, const ConvLayer& l) const {
        return leaky_relu(broadcast_add(conv2d(x, l.weights, l.stride, l.pad), l.bias),
                          cfg_.leaky_slope);
    }

    Tensor stage(const Tensor& x, const ConvLayer& down, const ConvLayer& refine) const {
        return apply(apply(x, down), refine);
    }

    void check_input(const Tensor& image, const Tensor& sparse_z, const Tensor& mask) const {
        if (image.ndim() != 3 || image.extent(2) != 3)
            throw ShapeError("Backbone: image must be [h x w x 3], got " + shape_str(image.shape()));
        const int h = image.extent(0), w = image.extent(1);
        if (h % 8 != 0 || w % 8 != 0)
            throw ShapeError("Backbone: extents must be divisible by 8, got " +
                             shape_str(image.shape()));
        if (sparse_z.ndim() != 2 || sparse_z.extent(0) != h || sparse_z.extent(1) != w ||
            mask.shape() != sparse_z.shape())
            throw ShapeError("Backbone: sparse depth/mask " + shape_str(sparse_z.shape()) +
                             " must match image " + shape_str(image.shape()));
    }

    BackboneConfig cfg_;
    std::vector<ConvLayer> img_enc_;
    std::vector<ConvLayer> dep_enc_;
    ConvLayer fuse_;
    std::vector<ConvLayer> dec_;
    ConvLayer head_;
    std::vector<std::pair<std::string, Tensor>> named_params_;
    bool frozen_ = false;
};

}  // namespace protodc
