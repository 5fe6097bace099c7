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

#include <array>
#include <string>

#include "protodc/errors.hpp"

namespace protodc {

/// Named latent points where per-domain prototype sets attach: the three
/// skip outputs of each encoder plus the fused bottleneck.
enum class TapId { kImgS1 = 0, kImgS2, kImgS3, kDepS1, kDepS2, kDepS3, kBottleneck };

inline constexpr int kNumTaps = 7;

enum class TapModality { kImage, kDepth, kFused };

struct LatentTap {
    TapId id;
    int channels;
    TapModality modality;
};

inline const char* tap_name(TapId id) {
    switch (id) {
        case TapId::kImgS1: return "img_s1";
        case TapId::kImgS2: return "img_s2";
        case TapId::kImgS3: return "img_s3";
        case TapId::kDepS1: return "dep_s1";
        case TapId::kDepS2: return "dep_s2";
        case TapId::kDepS3: return "dep_s3";
        case TapId::kBottleneck: return "bottleneck";
    }
    throw ContractError("tap_name: unknown tap");
}

inline TapId tap_from_name(const std::string& name) {
    for (int i = 0; i < kNumTaps; ++i)
        if (name == tap_name(static_cast<TapId>(i))) return static_cast<TapId>(i);
    throw ContractError("tap_from_name: unknown tap '" + name + "'");
}

}  // namespace protodc
