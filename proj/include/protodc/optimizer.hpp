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

#include <vector>

#include "protodc/tensor.hpp"

namespace protodc {

/// Plain stochastic gradient descent with momentum. Parameters are updated
/// in place; gradients are consumed (zeroed) by step().
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor> params, float lr, float momentum = 0.9f)
        : params_(std::move(params)), lr_(lr), momentum_(momentum) {
        velocity_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i)
            velocity_[i].assign(static_cast<size_t>(params_[i].numel()), 0.0f);
    }

    void step() {
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            if (!p.has_grad()) continue;
            const std::vector<float>& g = p.grad();
            float* data = p.data();
            std::vector<float>& v = velocity_[i];
            for (size_t j = 0; j < v.size(); ++j) {
                v[j] = momentum_ * v[j] - lr_ * g[j];
                data[j] += v[j];
            }
        }
        zero_grad();
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    float learning_rate() const { return lr_; }
    void set_learning_rate(float lr) { lr_ = lr; }
    size_t parameter_tensors() const { return params_.size(); }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> velocity_;
    float lr_;
    float momentum_;
};

}  // namespace protodc
