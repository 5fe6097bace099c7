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
#include <string>
#include <vector>

#include "protodc/nn_ops.hpp"
#include "protodc/tensor.hpp"

namespace protodc {

/// Weights of the composite objective. w_co/w_st split the photometric term
/// between L1 and structural similarity.
struct LossWeights {
    float w_ph = 1.0f;
    float w_sz = 1.0f;
    float w_sm = 0.1f;
    float w_dr = 0.1f;
    float w_co = 0.15f;
    float w_st = 0.85f;

    void validate() const {
        const float all[] = {w_ph, w_sz, w_sm, w_dr, w_co, w_st};
        for (float v : all)
            if (!(v >= 0.0f)) throw ContractError("LossWeights: weights must be nonnegative");
        if (!(w_co + w_st > 0.0f)) throw ContractError("LossWeights: w_co + w_st must be positive");
    }
};

/// Per-pixel SSIM between two [h x w x 3] images using 3x3 mean windows
/// (stabilizers C1 = 0.01^2, C2 = 0.03^2). Windows shrink at the borders;
/// channel values are averaged into a [h x w] map in [-1, 1].
inline Tensor ssim(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.ndim() != 3)
        throw ShapeError("ssim: expected matching [h x w x 3], got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const int h = a.extent(0), w = a.extent(1), c = a.extent(2);
    const float C1 = 0.01f * 0.01f;
    const float C2 = 0.03f * 0.03f;

    Tensor counts = box_count3(h, w, c);
    std::vector<float> inv(counts.values());
    for (float& v : inv) v = 1.0f / v;
    Tensor inv_counts = Tensor::from_vector({h, w, c}, std::move(inv));

    auto window_mean = [&](const Tensor& x) { return mul(box_sum3(x), inv_counts); };

    Tensor mu_a = window_mean(a);
    Tensor mu_b = window_mean(b);
    Tensor var_a = window_var3(a, mu_a);
    Tensor var_b = window_var3(b, mu_b);
    Tensor cov = window_cov3(a, mu_a, b, mu_b);

    Tensor num = mul(add_scalar(scale(mul(mu_a, mu_b), 2.0f), C1), add_scalar(scale(cov, 2.0f), C2));
    Tensor den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), C1),
                     add_scalar(add(var_a, var_b), C2));
    return channel_mean(div(num, den));
}

/// One reprojected adjacent view: the inverse-warped image plus its validity.
struct WarpedView {
    Tensor image;     // [h x w x 3]
    Tensor validity;  // [h x w], binary, treated as constant
};

struct PhotometricResult {
    Tensor loss;       // scalar
    bool no_support;   // every view had zero valid pixels
};

/// Mean over valid pixels and views of w_co * L1 + w_st * (1 - SSIM).
/// Invalid pixels contribute nothing to numerator or denominator; a view
/// with no valid pixels contributes 0.
inline PhotometricResult photometric_loss(const Tensor& target, const std::vector<WarpedView>& views,
                                          const LossWeights& w) {
    if (views.empty()) throw ContractError("photometric_loss: needs at least one adjacent view");
    Tensor acc = Tensor::zeros({1});
    bool any_support = false;
    for (const auto& view : views) {
        if (view.image.shape() != target.shape())
            throw ShapeError("photometric_loss: view " + shape_str(view.image.shape()) +
                             " vs target " + shape_str(target.shape()));
        double count = 0.0;
        for (int64_t i = 0; i < view.validity.numel(); ++i) count += view.validity.data()[i];
        if (count == 0.0) continue;
        any_support = true;
        Tensor l1 = channel_mean(abs(sub(view.image, target)));
        Tensor dssim = add_scalar(scale(ssim(view.image, target), -1.0f), 1.0f);
        Tensor per_pixel = add(scale(l1, w.w_co), scale(dssim, w.w_st));
        Tensor masked = reduce_sum(mul(per_pixel, view.validity));
        acc = add(acc, scale(masked, static_cast<float>(1.0 / count)));
    }
    acc = scale(acc, 1.0f / static_cast<float>(views.size()));
    return {acc, !any_support};
}

/// (1/|Omega|) * sum |M * (pred - z)|; normalized by total pixel count.
inline Tensor sparse_consistency_loss(const Tensor& pred, const Tensor& z, const Tensor& mask) {
    if (pred.shape() != z.shape() || pred.shape() != mask.shape())
        throw ShapeError("sparse_consistency_loss: shapes " + shape_str(pred.shape()) + ", " +
                         shape_str(z.shape()) + ", " + shape_str(mask.shape()));
    return scale(reduce_sum(abs(mul(mask, sub(pred, z)))), 1.0f / static_cast<float>(pred.numel()));
}

/// Edge-aware smoothness: mean over pixels of
/// exp(-|dI/dx|) |dd/dx| + exp(-|dI/dy|) |dd/dy| with forward differences.
/// Image gradient magnitudes are averaged over channels; the last row/column
/// of each direction contributes 0.
inline Tensor smoothness_loss(const Tensor& pred, const Tensor& image) {
    if (pred.ndim() != 2 || image.ndim() != 3 || image.extent(0) != pred.extent(0) ||
        image.extent(1) != pred.extent(1))
        throw ShapeError("smoothness_loss: pred " + shape_str(pred.shape()) + " vs image " +
                         shape_str(image.shape()));
    const int h = pred.extent(0), w = pred.extent(1), c = image.extent(2);
    std::vector<float> lx(static_cast<size_t>(h) * w, 1.0f);
    std::vector<float> ly(static_cast<size_t>(h) * w, 1.0f);
    const float* pi = image.data();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t off = static_cast<size_t>(i) * w + j;
            if (j < w - 1) {
                float acc = 0.0f;
                for (int ch = 0; ch < c; ++ch)
                    acc += std::fabs(pi[(off + 1) * c + ch] - pi[off * c + ch]);
                lx[off] = std::exp(-acc / static_cast<float>(c));
            }
            if (i < h - 1) {
                float acc = 0.0f;
                for (int ch = 0; ch < c; ++ch)
                    acc += std::fabs(pi[(off + w) * c + ch] - pi[off * c + ch]);
                ly[off] = std::exp(-acc / static_cast<float>(c));
            }
        }
    Tensor lam_x = Tensor::from_vector({h, w}, std::move(lx));
    Tensor lam_y = Tensor::from_vector({h, w}, std::move(ly));
    Tensor term = add(mul(lam_x, abs(forward_diff_x(pred))), mul(lam_y, abs(forward_diff_y(pred))));
    return reduce_mean(term);
}

/// Cosine alignment of the trained descriptor to the sample descriptor plus
/// a repulsion from frozen descriptors:
/// 1 - cos(s, r_k) + (1/w_jk) * sum_j cos(r_j, r_k).
/// Gradients flow into r_k only; s and the frozen descriptors are detached.
inline Tensor descriptor_loss(const Tensor& s, const Tensor& r_k,
                              const std::vector<Tensor>& frozen_others, float w_jk) {
    auto norm_of = [](const Tensor& t) {
        double acc = 0.0;
        for (int64_t i = 0; i < t.numel(); ++i) acc += static_cast<double>(t.data()[i]) * t.data()[i];
        return std::sqrt(acc);
    };
    if (norm_of(s) == 0.0) throw NumericError("descriptor_loss: zero-norm sample descriptor");
    if (norm_of(r_k) == 0.0) throw NumericError("descriptor_loss: zero-norm domain descriptor");
    if (!frozen_others.empty() && !(w_jk > 0.0f))
        throw ContractError("descriptor_loss: w_jk must be positive with frozen descriptors present");

    auto cosine = [](const Tensor& a, const Tensor& b) {
        return div(dot(a, b), mul(l2_norm(a), l2_norm(b)));
    };
    Tensor s_const = detach(s);
    Tensor loss = add_scalar(scale(cosine(s_const, r_k), -1.0f), 1.0f);
    for (const auto& r_j : frozen_others) {
        if (norm_of(r_j) == 0.0) throw NumericError("descriptor_loss: zero-norm frozen descriptor");
        loss = add(loss, scale(cosine(detach(r_j), r_k), 1.0f / w_jk));
    }
    return loss;
}

enum class TrainMode { kPretrain, kAdaptIncremental, kAdaptAgnostic };

/// Scalar terms of the composite objective for one sample.
struct LossTerms {
    Tensor photometric;
    Tensor sparse;
    Tensor smoothness;
    Tensor descriptor;  // only defined in the agnostic mode
};

/// Weighted composite. The descriptor term participates only in the
/// agnostic mode; any non-finite term aborts with the offending name.
inline Tensor total_loss(const LossTerms& terms, const LossWeights& w, TrainMode mode) {
    auto check_finite = [](const Tensor& t, const char* name) {
        if (!std::isfinite(t.item()))
            throw NumericError(std::string("total_loss: non-finite term '") + name + "'");
    };
    check_finite(terms.photometric, "photometric");
    check_finite(terms.sparse, "sparse");
    check_finite(terms.smoothness, "smoothness");
    const bool agnostic = mode == TrainMode::kAdaptAgnostic;
    if (agnostic && !terms.descriptor.defined())
        throw ContractError("total_loss: agnostic mode requires the descriptor term");
    if (!agnostic && terms.descriptor.defined())
        throw ContractError("total_loss: descriptor term is only valid in the agnostic mode");

    Tensor out = add(add(scale(terms.photometric, w.w_ph), scale(terms.sparse, w.w_sz)),
                     scale(terms.smoothness, w.w_sm));
    if (agnostic) {
        check_finite(terms.descriptor, "descriptor");
        out = add(out, scale(terms.descriptor, w.w_dr));
    }
    return out;
}

/// The four depth-completion error metrics, in the units of the inputs.
struct DepthErrorMetrics {
    double mae = 0, rmse = 0, imae = 0, irmse = 0;

    double by_index(int i) const {
        switch (i) {
            case 0: return mae;
            case 1: return rmse;
            case 2: return imae;
            default: return irmse;
        }
    }
    static const char* name(int i) {
        switch (i) {
            case 0: return "MAE";
            case 1: return "RMSE";
            case 2: return "iMAE";
            default: return "iRMSE";
        }
    }
};

/// MAE/RMSE on depth and on inverse depth, restricted to pixels whose
/// ground truth lies in [d_min, d_max].
inline DepthErrorMetrics error_metrics(const Tensor& pred, const Tensor& gt, float d_min,
                                       float d_max) {
    if (pred.shape() != gt.shape())
        throw ShapeError("error_metrics: pred " + shape_str(pred.shape()) + " vs gt " +
                         shape_str(gt.shape()));
    double abs_acc = 0, sq_acc = 0, iabs_acc = 0, isq_acc = 0;
    int64_t n = 0;
    const float* pp = pred.data();
    const float* pg = gt.data();
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const float g = pg[i];
        if (g < d_min || g > d_max) continue;
        const double diff = static_cast<double>(pp[i]) - g;
        const double idiff = 1.0 / static_cast<double>(pp[i]) - 1.0 / static_cast<double>(g);
        abs_acc += std::fabs(diff);
        sq_acc += diff * diff;
        iabs_acc += std::fabs(idiff);
        isq_acc += idiff * idiff;
        ++n;
    }
    if (n == 0) throw NumericError("error_metrics: no ground-truth pixels in range");
    const double inv_n = 1.0 / static_cast<double>(n);
    return {abs_acc * inv_n, std::sqrt(sq_acc * inv_n), iabs_acc * inv_n,
            std::sqrt(isq_acc * inv_n)};
}

}  // namespace protodc
