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

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "protodc/losses.hpp"
#include "protodc/synth.hpp"

using namespace protodc;
using protodc::testing::bitwise_equal;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    auto p = fs::temp_directory_path() / (std::string("protodc_synth_") + tag);
    fs::remove_all(p);
    return p;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("spec validation rejects bad parameters") {
    DomainSpec s;
    s.density = 0.2f;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = DomainSpec{};
    s.d_min = 0.0f;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = DomainSpec{};
    s.height = 63;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_NOTHROW(DomainSpec{}.validate());
}

TEST_CASE("render_sample is deterministic") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    spec.seed = 77;
    auto a = render_sample(spec, "train", 3);
    auto b = render_sample(spec, "train", 3);
    CHECK(bitwise_equal(a.image_t, b.image_t));
    CHECK(bitwise_equal(a.image_prev, b.image_prev));
    CHECK(bitwise_equal(a.sparse_z, b.sparse_z));
    CHECK(bitwise_equal(a.gt, b.gt));
    // Different index gives a different scene.
    auto c = render_sample(spec, "train", 4);
    CHECK_FALSE(bitwise_equal(a.image_t, c.image_t));
    // Train and eval substreams are disjoint.
    auto d = render_sample(spec, "eval", 3);
    CHECK_FALSE(bitwise_equal(a.image_t, d.image_t));
}

TEST_CASE("ground truth stays inside the depth range") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    for (int i = 0; i < 6; ++i) {
        auto s = render_sample(spec, "train", i);
        for (int64_t p = 0; p < s.gt.numel(); ++p) {
            CHECK(s.gt.data()[p] >= spec.d_min);
            CHECK(s.gt.data()[p] <= spec.d_max);
        }
    }
}

TEST_CASE("sparse depth equals ground truth on the mask") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    auto s = render_sample(spec, "train", 0);
    int64_t points = 0;
    for (int64_t p = 0; p < s.mask.numel(); ++p) {
        const float m = s.mask.data()[p];
        CHECK((m == 0.0f || m == 1.0f));
        if (m == 1.0f) {
            ++points;
            CHECK(s.sparse_z.data()[p] == s.gt.data()[p]);
        } else {
            CHECK(s.sparse_z.data()[p] == 0.0f);
        }
    }
    CHECK(points > 0);
}

TEST_CASE("mask density is within ten percent of rho") {
    DomainSpec spec;  // 64 x 96
    for (int i = 0; i < 4; ++i) {
        auto s = render_sample(spec, "train", i);
        double got = 0;
        for (int64_t p = 0; p < s.mask.numel(); ++p) got += s.mask.data()[p];
        got /= static_cast<double>(s.mask.numel());
        CHECK(got > 0.9 * spec.density);
        CHECK(got < 1.1 * spec.density);
    }
}

TEST_CASE("rendered triplets are photometrically self-consistent") {
    DomainSpec spec;  // default 64 x 96
    double worst = 0;
    for (int i = 0; i < 3; ++i) {
        auto s = render_sample(spec, "train", i);
        for (const auto& [src, pose] :
             {std::pair{s.image_next, s.pose_next}, std::pair{s.image_prev, s.pose_prev}}) {
            auto [warped, valid] = warp_image(src, s.gt, pose, s.intrinsics);
            // Mean L1 over valid interior pixels.
            double err = 0, count = 0;
            const int h = spec.height, w = spec.width;
            for (int v = 2; v < h - 2; ++v)
                for (int u = 2; u < w - 2; ++u) {
                    if (valid.at(v, u) != 1.0f) continue;
                    for (int c = 0; c < 3; ++c)
                        err += std::fabs(warped.at(v, u, c) - s.image_t.at(v, u, c));
                    count += 3;
                }
            REQUIRE(count > 0);
            worst = std::max(worst, err / count);
        }
    }
    INFO("worst interior photometric L1: " << worst);
    CHECK(worst < 0.02);
}

TEST_CASE("shifted family shares the scene family") {
    DomainSpec base;
    auto zero_gap = make_shifted_family(base, 3, 0.0f);
    REQUIRE(zero_gap.size() == 3);
    for (const auto& s : zero_gap) {
        CHECK(s.brightness == base.brightness);
        CHECK(s.texture_freq == base.texture_freq);
        CHECK(s.hue == base.hue);
        CHECK(s.focal == base.focal);
    }
    CHECK(zero_gap[0].seed != zero_gap[1].seed);

    auto shifted = make_shifted_family(base, 3, 1.0f);
    CHECK(shifted[1].brightness != base.brightness);
    CHECK(shifted[1].hue != base.hue);
    CHECK(shifted[2].texture_freq != base.texture_freq);
    CHECK_THROWS_AS(make_shifted_family(base, 1, 1.0f), ConfigError);
}

TEST_CASE("dataset write and open round trip") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    spec.name = "roundtrip";
    const auto dir = temp_dir("roundtrip");
    write_dataset(spec, 3, 2, dir);

    auto ds = Dataset::open(dir);
    CHECK(ds.name() == "roundtrip");
    CHECK(ds.train_count() == 3);
    CHECK(ds.eval_count() == 2);
    CHECK(ds.spec().width == 48);

    auto loaded = ds.train_sample(1);
    auto direct = render_sample(spec, "train", 1);
    CHECK(bitwise_equal(loaded.image_t, direct.image_t));
    CHECK(bitwise_equal(loaded.gt, direct.gt));
    CHECK(bitwise_equal(loaded.mask, direct.mask));
    for (int i = 0; i < 9; ++i)
        CHECK(loaded.pose_prev.rotation[static_cast<size_t>(i)] ==
              direct.pose_prev.rotation[static_cast<size_t>(i)]);
    fs::remove_all(dir);
}

TEST_CASE("dataset generation is byte-identical across runs") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    const auto dir_a = temp_dir("det_a");
    const auto dir_b = temp_dir("det_b");
    write_dataset(spec, 2, 1, dir_a);
    write_dataset(spec, 2, 1, dir_b);
    CHECK(slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json"));
    CHECK(slurp(dir_a / "data/train_0000_image_t.pdt") == slurp(dir_b / "data/train_0000_image_t.pdt"));
    CHECK(slurp(dir_a / "data/eval_0000_gt.pdt") == slurp(dir_b / "data/eval_0000_gt.pdt"));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("loader rejects unknown versions and missing files") {
    DomainSpec spec;
    spec.height = 32;
    spec.width = 48;
    const auto dir = temp_dir("reject");
    write_dataset(spec, 2, 1, dir);

    // Unknown version.
    {
        std::ifstream in(dir / "manifest.json");
        nlohmann::json m;
        in >> m;
        m["format_version"] = 99;
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << m.dump(2);
    }
    CHECK_THROWS_AS(Dataset::open(dir), IoError);

    // Restore version but delete a listed blob.
    {
        std::ifstream in(dir / "manifest.json");
        nlohmann::json m;
        in >> m;
        m["format_version"] = kDatasetFormatVersion;
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << m.dump(2);
    }
    fs::remove(dir / "data/train_0001_mask.pdt");
    CHECK_THROWS_AS(Dataset::open(dir), IoError);
    fs::remove_all(dir);
}

TEST_CASE("spec json round trip rejects unknown keys") {
    DomainSpec s;
    s.name = "x";
    s.density = 0.01f;
    nlohmann::json j = s;
    DomainSpec back = j.get<DomainSpec>();
    CHECK(back.name == "x");
    CHECK(back.density == 0.01f);
    j["bogus"] = 1;
    CHECK_THROWS_AS(j.get<DomainSpec>(), ConfigError);
}
