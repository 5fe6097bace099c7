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
#include <cstdint>
#include <string>
#include <string_view>

namespace protodc {

/// Deterministic counter-based generator (splitmix64 core). All randomness in
/// the project flows from one root seed through named substreams, so results
/// are bit-reproducible regardless of platform or standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    float uniform() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    /// Uniform in [lo, hi).
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    /// Standard normal via Box-Muller.
    float normal() {
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
    }

    float normal(float mean, float sigma) { return mean + sigma * normal(); }

private:
    uint64_t state_;
};

/// FNV-1a over bytes; used both for substream derivation and config hashing.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derive an independent substream from (seed, name). Streams with distinct
/// names never collide in practice; the same (seed, name) always yields the
/// same stream.
inline Rng substream(uint64_t seed, std::string_view name) {
    uint64_t h = fnv1a64(name);
    return Rng(seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

inline Rng substream(uint64_t seed, std::string_view name, uint64_t index) {
    return substream(seed ^ (0xd1b54a32d192ed03ULL * (index + 1)), name);
}

}  // namespace protodc
