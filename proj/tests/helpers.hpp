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

#include <cstring>
#include <vector>

#include "protodc/rng.hpp"
#include "protodc/tensor.hpp"

namespace protodc::testing {

/// Snap to the 2^-10 grid so finite-difference probes stay exactly
/// representable.
inline float quantize(float v) { return std::round(v * 1024.0f) / 1024.0f; }

inline Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f,
                            bool requires_grad = false) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (float& v : data) v = quantize(rng.uniform(lo, hi));
    return Tensor::from_vector(std::move(shape), std::move(data), requires_grad);
}

/// Random values bounded away from zero, for ops with a kink or pole there.
inline Tensor random_tensor_away_from_zero(Shape shape, Rng& rng, float min_mag = 0.25f,
                                           float max_mag = 1.0f) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (float& v : data) {
        const float mag = quantize(rng.uniform(min_mag, max_mag));
        v = (rng.uniform() < 0.5f) ? -mag : mag;
    }
    return Tensor::from_vector(std::move(shape), std::move(data));
}

/// Reduce an arbitrary tensor to a scalar via a fixed random weighting, so
/// any op can be put under grad_check. Weight magnitudes stay in [0.5, 1.5]
/// so no coordinate of the true gradient is lost under rounding noise.
inline Tensor scalarize(const Tensor& t, uint64_t salt = 7) {
    Rng rng(0xabcdef1234ULL + salt);
    std::vector<float> w(static_cast<size_t>(t.numel()));
    for (float& v : w) {
        const float mag = quantize(rng.uniform(0.5f, 1.5f));
        v = (rng.uniform() < 0.5f) ? -mag : mag;
    }
    return dot(flatten(t), Tensor::from_vector({static_cast<int>(t.numel())}, std::move(w)));
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const float* pa = a.data();
    const float* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) {
        // Compare representations, not values: distinguishes -0 from +0 and
        // treats NaN == NaN.
        if (std::memcmp(pa + i, pb + i, sizeof(float)) != 0) return false;
    }
    return true;
}

}  // namespace protodc::testing
