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

#include "helpers.hpp"
#include "protodc/backbone.hpp"
#include "protodc/optimizer.hpp"

using namespace protodc;
using protodc::testing::bitwise_equal;
using protodc::testing::random_tensor;

namespace {

struct Inputs {
    Tensor image, sparse_z, mask;
};

Inputs make_inputs(int h, int w, uint64_t seed) {
    Rng rng(seed);
    auto image = random_tensor({h, w, 3}, rng, 0.0f, 1.0f);
    std::vector<float> z(static_cast<size_t>(h) * w, 0.0f);
    std::vector<float> m(static_cast<size_t>(h) * w, 0.0f);
    for (size_t i = 0; i < z.size(); ++i)
        if (rng.uniform() < 0.03f) {
            m[i] = 1.0f;
            z[i] = rng.uniform(0.5f, 4.5f);
        }
    return {image, Tensor::from_vector({h, w}, std::move(z)), Tensor::from_vector({h, w}, std::move(m))};
}

}  // namespace

TEST_CASE("tap registry lists exactly seven taps with fused bottleneck") {
    const auto& taps = Backbone::tap_registry();
    REQUIRE(taps.size() == 7);
    int image_taps = 0, depth_taps = 0;
    for (const auto& t : taps) {
        if (t.modality == TapModality::kImage) ++image_taps;
        if (t.modality == TapModality::kDepth) ++depth_taps;
    }
    CHECK(image_taps == 3);
    CHECK(depth_taps == 3);
    CHECK(taps.back().id == TapId::kBottleneck);
    CHECK(taps.back().modality == TapModality::kFused);
    CHECK(taps.back().channels == 64);
}

TEST_CASE("forward emits correctly shaped outputs inside the depth bounds") {
    BackboneConfig cfg;
    Backbone net(cfg);
    auto in = make_inputs(16, 24, 1);
    auto [depth, bneck] = net.forward(in.image, in.sparse_z, in.mask);
    CHECK(depth.shape() == Shape{16, 24});
    CHECK(bneck.shape() == Shape{2, 3, 64});
    for (int64_t i = 0; i < depth.numel(); ++i) {
        CHECK(depth.data()[i] > cfg.d_min);
        CHECK(depth.data()[i] < cfg.d_max);
    }
}

TEST_CASE("forward rejects extents not divisible by 8") {
    Backbone net;
    auto in = make_inputs(16, 24, 2);
    CHECK_THROWS_AS(net.forward(Tensor::zeros({15, 24, 3}), Tensor::zeros({15, 24}),
                                Tensor::zeros({15, 24})),
                    ShapeError);
}

TEST_CASE("frozen forward is deterministic bitwise") {
    Backbone net;
    net.freeze();
    auto in = make_inputs(16, 24, 3);
    auto [d1, b1] = net.forward(in.image, in.sparse_z, in.mask);
    auto [d2, b2] = net.forward(in.image, in.sparse_z, in.mask);
    CHECK(bitwise_equal(d1, d2));
    CHECK(bitwise_equal(b1, b2));
}

TEST_CASE("identity adapters reproduce the unadapted forward bitwise") {
    Backbone net;
    net.freeze();
    AdapterBank bank;
    bank.new_domain(0, Backbone::tap_registry(), SetSizeProfile::indoor(), 42);
    auto in = make_inputs(16, 24, 4);
    auto [plain, b0] = net.forward(in.image, in.sparse_z, in.mask);
    auto [adapted, b1] = net.forward(in.image, in.sparse_z, in.mask, &bank.sets(0));
    CHECK(bitwise_equal(plain, adapted));
    CHECK(bitwise_equal(b0, b1));
}

TEST_CASE("parameter count matches the layer-shape sum") {
    Backbone net;
    // Independent tally over the declared architecture:
    //   image encoder stages (two 3x3 convs each): 3->16->16, 16->32->32, 32->64->64
    //   depth encoder identical but 2 input channels
    //   fuse 128->64, decoder 192->96, 160->48, 80->24, head 1x1 24->1
    auto conv = [](int k, int cin, int cout) { return k * k * cin * cout + cout; };
    const int64_t img = conv(3, 3, 16) + conv(3, 16, 16) + conv(3, 16, 32) + conv(3, 32, 32) +
                        conv(3, 32, 64) + conv(3, 64, 64);
    const int64_t dep = conv(3, 2, 16) + conv(3, 16, 16) + conv(3, 16, 32) + conv(3, 32, 32) +
                        conv(3, 32, 64) + conv(3, 64, 64);
    const int64_t rest = conv(3, 128, 64) + conv(3, 192, 96) + conv(3, 160, 48) + conv(3, 80, 24) +
                         conv(1, 24, 1);
    const int64_t expected = img + dep + rest;
    CHECK(expected == 470289);
    auto counts = net.parameter_count();
    CHECK(counts.total() == expected);
    CHECK(counts.trainable == expected);
    CHECK(counts.frozen == 0);
    net.freeze();
    auto frozen_counts = net.parameter_count();
    CHECK(frozen_counts.trainable == 0);
    CHECK(frozen_counts.frozen == expected);
}

TEST_CASE("prototype overhead is below five percent for both profiles") {
    Backbone net;
    const double backbone_params = static_cast<double>(net.parameter_count().total());
    AdapterBank bank;
    bank.new_domain(0, Backbone::tap_registry(), SetSizeProfile::indoor(), 5);
    bank.new_domain(1, Backbone::tap_registry(), SetSizeProfile::outdoor(), 5);
    const int64_t indoor = bank.domain_parameter_count(0);
    const int64_t outdoor = bank.domain_parameter_count(1);
    CHECK(indoor == 17456);
    CHECK(outdoor == 20656);
    CHECK(static_cast<double>(indoor) / backbone_params < 0.05);
    CHECK(static_cast<double>(outdoor) / backbone_params < 0.05);
}

TEST_CASE("freeze stops every backbone parameter from changing") {
    Backbone net;
    net.freeze();
    AdapterBank bank;
    bank.new_domain(0, Backbone::tap_registry(), SetSizeProfile::indoor(), 7);

    std::vector<std::vector<float>> before;
    for (const auto& [name, p] : net.named_parameters()) before.push_back(p.values());

    auto in = make_inputs(16, 24, 8);
    auto params = bank.trainable_params(0);
    SgdOptimizer opt(params, 0.05f);
    auto [depth, bneck] = net.forward(in.image, in.sparse_z, in.mask, &bank.sets(0));
    reduce_mean(mul(depth, depth)).backward();
    opt.step();

    size_t i = 0;
    for (const auto& [name, p] : net.named_parameters()) CHECK(p.values() == before[i++]);
}

TEST_CASE("unfrozen training step changes backbone parameters") {
    Backbone net;
    auto in = make_inputs(16, 24, 9);
    auto params = net.parameters();
    SgdOptimizer opt(params, 0.05f);
    std::vector<float> w0 = net.named_parameters()[0].second.values();
    auto [depth, bneck] = net.forward(in.image, in.sparse_z, in.mask);
    reduce_mean(mul(depth, depth)).backward();
    opt.step();
    CHECK(net.named_parameters()[0].second.values() != w0);
}

TEST_CASE("adapted forward differs once adapters are trained") {
    Backbone net;
    net.freeze();
    AdapterBank bank;
    bank.new_domain(0, Backbone::tap_registry(), SetSizeProfile::indoor(), 10);
    auto in = make_inputs(16, 24, 11);
    auto [plain, b0] = net.forward(in.image, in.sparse_z, in.mask);
    // Nudge one global prototype away from identity.
    bank.sets_mutable(0)[0].global_scale.data()[3] = 1.5f;
    auto [adapted, b1] = net.forward(in.image, in.sparse_z, in.mask, &bank.sets(0));
    CHECK_FALSE(bitwise_equal(plain, adapted));
    // The pre-adaptation bottleneck is adapter-independent.
    CHECK(bitwise_equal(b0, b1));
}

TEST_CASE("backbone checkpoint parameter round trip") {
    Backbone a(BackboneConfig{0.2f, 5.0f, 0.1f, 123});
    Backbone b(BackboneConfig{0.2f, 5.0f, 0.1f, 456});
    auto in = make_inputs(16, 24, 12);
    auto [da, _] = a.forward(in.image, in.sparse_z, in.mask);
    for (const auto& [name, p] : a.named_parameters()) b.load_parameter(name, p);
    auto [db, __] = b.forward(in.image, in.sparse_z, in.mask);
    CHECK(bitwise_equal(da, db));
    CHECK_THROWS_AS(b.load_parameter("nope.weight", Tensor::zeros({1})), IoError);
}
