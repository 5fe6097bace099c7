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
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "protodc/geometry.hpp"
#include "protodc/losses.hpp"

using namespace protodc;
using protodc::testing::random_tensor;

namespace {

// Independent window-SSIM oracle: naive double-precision loops with the same
// clamped 3x3 window convention, kept free of the tensor ops under test.
double ssim_pixel_oracle(const Tensor& a, const Tensor& b, int i, int j) {
    const int h = a.extent(0), w = a.extent(1), c = a.extent(2);
    const double C1 = 1e-4, C2 = 9e-4;
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        int n = 0;
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
                const int ii = i + di, jj = j + dj;
                if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                const double va = a.at(ii, jj, ch), vb = b.at(ii, jj, ch);
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
                ++n;
            }
        const double mua = sa / n, mub = sb / n;
        const double vara = saa / n - mua * mua;
        const double varb = sbb / n - mub * mub;
        const double cov = sab / n - mua * mub;
        const double num = (2 * mua * mub + C1) * (2 * cov + C2);
        const double den = (mua * mua + mub * mub + C1) * (vara + varb + C2);
        acc += num / den;
    }
    return acc / c;
}

double photometric_oracle(const Tensor& target, const std::vector<WarpedView>& views,
                          const LossWeights& w) {
    double total = 0.0;
    for (const auto& view : views) {
        double sum = 0.0, count = 0.0;
        const int h = target.extent(0), ww = target.extent(1), c = target.extent(2);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < ww; ++j) {
                if (view.validity.at(i, j) == 0.0f) continue;
                double l1 = 0.0;
                for (int ch = 0; ch < c; ++ch)
                    l1 += std::fabs(static_cast<double>(view.image.at(i, j, ch)) -
                                    target.at(i, j, ch));
                l1 /= c;
                const double s = ssim_pixel_oracle(view.image, target, i, j);
                sum += w.w_co * l1 + w.w_st * (1.0 - s);
                count += 1.0;
            }
        if (count > 0) total += sum / count;
    }
    return total / static_cast<double>(views.size());
}

Tensor all_valid(int h, int w) { return Tensor::ones({h, w}); }

/// World-space smooth texture for planar photometric scenes.
float plane_texture(float x, float y, int ch) {
    return 0.5f + 0.3f * std::sin(2.1f * x + 0.7f * static_cast<float>(ch)) *
                      std::cos(1.7f * y - 0.4f * static_cast<float>(ch));
}

Tensor render_plane_from(const Pose& cam_world, float plane_z, int h, int w, const Intrinsics& K) {
    // cam_world maps world -> camera; invert to shoot rays from the camera.
    const Pose cam_to_world = inverse(cam_world);
    std::vector<float> img(static_cast<size_t>(h) * w * 3);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const Vec3 dir_cam{(static_cast<float>(u) - K.cx) / K.fx,
                               (static_cast<float>(v) - K.cy) / K.fy, 1.0f};
            Pose rot = cam_to_world;
            rot.translation = {0, 0, 0};
            const Vec3 dir = rot.apply(dir_cam);
            const Vec3 origin{cam_to_world.translation[0], cam_to_world.translation[1],
                              cam_to_world.translation[2]};
            const float s = (plane_z - origin.z) / dir.z;
            const Vec3 hit = origin + s * dir;
            for (int ch = 0; ch < 3; ++ch)
                img[(static_cast<size_t>(v) * w + u) * 3 + ch] = plane_texture(hit.x, hit.y, ch);
        }
    return Tensor::from_vector({h, w, 3}, std::move(img));
}

}  // namespace

TEST_CASE("ssim of an image with itself is 1") {
    Rng rng(11);
    auto x = random_tensor({6, 7, 3}, rng, 0.0f, 1.0f);
    auto s = ssim(x, x);
    for (int64_t i = 0; i < s.numel(); ++i) CHECK(s.data()[i] == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("ssim of checkerboard and its inverse is negative at texture") {
    const int h = 8, w = 8;
    std::vector<float> a(static_cast<size_t>(h) * w * 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c)
                a[(static_cast<size_t>(i) * w + j) * 3 + c] = static_cast<float>((i + j) % 2);
    auto ta = Tensor::from_vector({h, w, 3}, a);
    std::vector<float> b(a);
    for (float& v : b) v = 1.0f - v;
    auto tb = Tensor::from_vector({h, w, 3}, std::move(b));
    auto s = ssim(ta, tb);
    for (int i = 2; i < h - 2; ++i)
        for (int j = 2; j < w - 2; ++j) CHECK(s.at(i, j) < 0.0f);
}

TEST_CASE("ssim zero-variance closed form") {
    const float av = 0.4f, bv = 0.5f;
    auto a = Tensor::full({5, 5, 3}, av);
    auto b = Tensor::full({5, 5, 3}, bv);
    const double C1 = 1e-4;
    const double expected = (2.0 * av * bv + C1) / (av * av + bv * bv + C1);
    auto s = ssim(a, b);
    for (int64_t i = 0; i < s.numel(); ++i)
        CHECK(s.data()[i] == Catch::Approx(expected).margin(1e-5));
}

TEST_CASE("ssim matches the window oracle on random images") {
    Rng rng(123);
    auto a = random_tensor({6, 6, 3}, rng, 0.0f, 1.0f);
    auto b = random_tensor({6, 6, 3}, rng, 0.0f, 1.0f);
    auto s = ssim(a, b);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            CHECK(s.at(i, j) == Catch::Approx(ssim_pixel_oracle(a, b, i, j)).margin(1e-5));
}

TEST_CASE("photometric loss of a perfect reconstruction is zero") {
    Rng rng(9);
    auto img = random_tensor({6, 8, 3}, rng, 0.0f, 1.0f);
    LossWeights w;
    auto res = photometric_loss(img, {{img, all_valid(6, 8)}}, w);
    CHECK_FALSE(res.no_support);
    CHECK(res.loss.item() == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("photometric loss reduces to L1 with w_st = 0") {
    auto a = Tensor::full({4, 4, 3}, 0.3f);
    auto b = Tensor::full({4, 4, 3}, 0.5f);
    LossWeights w;
    w.w_co = 1.0f;
    w.w_st = 0.0f;
    auto res = photometric_loss(a, {{b, all_valid(4, 4)}}, w);
    CHECK(res.loss.item() == Catch::Approx(0.2).margin(1e-6));
}

TEST_CASE("photometric loss matches direct evaluation on a random pair") {
    Rng rng(77);
    auto target = random_tensor({8, 8, 3}, rng, 0.0f, 1.0f);
    auto warped = random_tensor({8, 8, 3}, rng, 0.0f, 1.0f);
    // Random binary validity.
    std::vector<float> m(64);
    for (float& v : m) v = rng.uniform() < 0.8f ? 1.0f : 0.0f;
    auto valid = Tensor::from_vector({8, 8}, std::move(m));
    LossWeights w;
    std::vector<WarpedView> views{{warped, valid}, {target, all_valid(8, 8)}};
    auto res = photometric_loss(target, views, w);
    CHECK(res.loss.item() == Catch::Approx(photometric_oracle(target, views, w)).margin(1e-6));
}

TEST_CASE("photometric loss with zero valid pixels flags no support") {
    auto img = Tensor::full({4, 4, 3}, 0.5f);
    auto res = photometric_loss(img, {{img, Tensor::zeros({4, 4})}}, LossWeights{});
    CHECK(res.no_support);
    CHECK(res.loss.item() == 0.0f);
}

TEST_CASE("photometric loss ranks true depth above perturbed depth") {
    const int h = 16, w = 20;
    Intrinsics K{22.0f, 22.0f, 9.5f, 7.5f};
    const float Z = 3.0f;
    Pose target_cam = Pose::identity();
    Pose source_cam = pose_from_euler(0.01f, -0.012f, 0.008f, {0.12f, 0.06f, 0.1f});
    Tensor target = render_plane_from(target_cam, Z, h, w, K);
    Tensor source = render_plane_from(source_cam, Z, h, w, K);
    // Pose mapping target-camera coords into the source camera.
    const Pose rel = compose(source_cam, inverse(target_cam));
    LossWeights lw;

    auto loss_at = [&](float depth_value) {
        auto [warped, valid] = warp_image(source, Tensor::full({h, w}, depth_value), rel, K);
        return photometric_loss(target, {{warped, valid}}, lw).loss.item();
    };
    const float truth = loss_at(Z);
    CHECK(truth < loss_at(Z * 1.05f));
    CHECK(truth < loss_at(Z * 0.95f));
    CHECK(truth < loss_at(Z * 1.20f));
}

TEST_CASE("sparse consistency exact fit and empty mask give zero") {
    Rng rng(4);
    auto z = random_tensor({5, 5}, rng, 0.5f, 3.0f);
    std::vector<float> m(25, 0.0f);
    m[7] = 1.0f;
    m[12] = 1.0f;
    auto mask = Tensor::from_vector({5, 5}, std::move(m));
    CHECK(sparse_consistency_loss(z, z, mask).item() == 0.0f);
    CHECK(sparse_consistency_loss(z, z, Tensor::zeros({5, 5})).item() == 0.0f);
}

TEST_CASE("sparse consistency normalizes by total pixel count") {
    auto pred = Tensor::from_vector({2, 2}, {2, 0, 0, 0});
    auto z = Tensor::from_vector({2, 2}, {1, 0, 0, 0});
    auto mask = Tensor::from_vector({2, 2}, {1, 0, 0, 0});
    CHECK(sparse_consistency_loss(pred, z, mask).item() == Catch::Approx(0.25).margin(1e-7));
}

TEST_CASE("smoothness of constant prediction is zero") {
    Rng rng(6);
    auto img = random_tensor({6, 6, 3}, rng, 0.0f, 1.0f);
    CHECK(smoothness_loss(Tensor::full({6, 6}, 2.0f), img).item() == 0.0f);
}

TEST_CASE("smoothness of a unit ramp over a flat image") {
    const int h = 5, w = 8;
    std::vector<float> ramp(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) ramp[static_cast<size_t>(i) * w + j] = static_cast<float>(j);
    auto pred = Tensor::from_vector({h, w}, std::move(ramp));
    auto img = Tensor::full({h, w, 3}, 0.5f);
    // |d/dx| = 1 except the last column: mean = (w-1)/w.
    CHECK(smoothness_loss(pred, img).item() ==
          Catch::Approx(static_cast<double>(w - 1) / w).margin(1e-6));
}

TEST_CASE("image edges relax the smoothness penalty") {
    const int h = 6, w = 6;
    std::vector<float> step(static_cast<size_t>(h) * w, 1.0f);
    for (int i = 0; i < h; ++i)
        for (int j = 3; j < w; ++j) step[static_cast<size_t>(i) * w + j] = 2.0f;
    auto pred = Tensor::from_vector({h, w}, std::move(step));

    std::vector<float> edge(static_cast<size_t>(h) * w * 3, 0.1f);
    for (int i = 0; i < h; ++i)
        for (int j = 3; j < w; ++j)
            for (int c = 0; c < 3; ++c) edge[(static_cast<size_t>(i) * w + j) * 3 + c] = 0.9f;
    auto img_edge = Tensor::from_vector({h, w, 3}, std::move(edge));
    auto img_flat = Tensor::full({h, w, 3}, 0.1f);

    CHECK(smoothness_loss(pred, img_edge).item() < smoothness_loss(pred, img_flat).item());
}

TEST_CASE("descriptor loss worked examples") {
    auto e1 = Tensor::from_vector({2}, {1, 0});
    auto e2 = Tensor::from_vector({2}, {0, 1});
    CHECK(descriptor_loss(e1, e1, {}, 1.0f).item() == Catch::Approx(0.0).margin(1e-6));
    CHECK(descriptor_loss(e1, e2, {}, 1.0f).item() == Catch::Approx(1.0).margin(1e-6));
    CHECK(descriptor_loss(e1, e1, {e1}, 1.0f).item() == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("descriptor loss rejects zero-norm vectors") {
    auto z = Tensor::zeros({2});
    auto e = Tensor::from_vector({2}, {1, 0});
    CHECK_THROWS_AS(descriptor_loss(z, e, {}, 1.0f), NumericError);
    CHECK_THROWS_AS(descriptor_loss(e, z, {}, 1.0f), NumericError);
}

TEST_CASE("descriptor loss sends no gradient into frozen descriptors") {
    Rng rng(20);
    auto s = random_tensor({4}, rng, 0.1f, 1.0f);
    auto rk = random_tensor({4}, rng, 0.1f, 1.0f, true);
    auto r1 = random_tensor({4}, rng, 0.1f, 1.0f, true);
    auto r2 = random_tensor({4}, rng, 0.1f, 1.0f, true);
    auto loss = descriptor_loss(s, rk, {r1, r2}, 2.0f);
    loss.backward();
    CHECK_FALSE(r1.has_grad());
    CHECK_FALSE(r2.has_grad());
    REQUIRE(rk.has_grad());
    float mag = 0;
    for (float g : rk.grad()) mag += std::fabs(g);
    CHECK(mag > 0.0f);
}

TEST_CASE("descriptor loss bounds") {
    Rng rng(21);
    // Total loss >= -(#others)/w_jk; first term in [0, 2].
    for (int trial = 0; trial < 20; ++trial) {
        auto s = protodc::testing::random_tensor_away_from_zero({6}, rng);
        auto rk = protodc::testing::random_tensor_away_from_zero({6}, rng);
        std::vector<Tensor> others{protodc::testing::random_tensor_away_from_zero({6}, rng),
                                   protodc::testing::random_tensor_away_from_zero({6}, rng),
                                   protodc::testing::random_tensor_away_from_zero({6}, rng)};
        const float w_jk = 3.0f;
        const float v = descriptor_loss(s, rk, others, w_jk).item();
        CHECK(v >= -(3.0f / w_jk) - 1e-5f);
        CHECK(v <= 2.0f + 3.0f / w_jk + 1e-5f);
    }
}

TEST_CASE("total loss composes terms and modes") {
    LossTerms t;
    t.photometric = Tensor::scalar(0.5f);
    t.sparse = Tensor::scalar(0.25f);
    t.smoothness = Tensor::scalar(0.125f);
    LossWeights zero{};
    zero.w_ph = zero.w_sz = zero.w_sm = zero.w_dr = 0.0f;
    CHECK(total_loss(t, zero, TrainMode::kPretrain).item() == 0.0f);

    LossWeights ones{};
    ones.w_ph = ones.w_sz = ones.w_sm = 1.0f;
    CHECK(total_loss(t, ones, TrainMode::kPretrain).item() ==
          Catch::Approx(0.875).margin(1e-6));

    // Agnostic with w_dr = 0 equals the incremental value.
    LossTerms ta = t;
    ta.descriptor = Tensor::scalar(123.0f);
    LossWeights wa = ones;
    wa.w_dr = 0.0f;
    CHECK(total_loss(ta, wa, TrainMode::kAdaptAgnostic).item() ==
          total_loss(t, ones, TrainMode::kAdaptIncremental).item());
}

TEST_CASE("total loss rejects NaN terms by name") {
    LossTerms t;
    t.photometric = Tensor::scalar(std::nanf(""));
    t.sparse = Tensor::scalar(0.0f);
    t.smoothness = Tensor::scalar(0.0f);
    CHECK_THROWS_WITH(total_loss(t, LossWeights{}, TrainMode::kPretrain),
                      Catch::Matchers::ContainsSubstring("photometric"));
}

TEST_CASE("total loss mode consistency") {
    LossTerms t;
    t.photometric = Tensor::scalar(0.1f);
    t.sparse = Tensor::scalar(0.1f);
    t.smoothness = Tensor::scalar(0.1f);
    CHECK_THROWS_AS(total_loss(t, LossWeights{}, TrainMode::kAdaptAgnostic), ContractError);
    t.descriptor = Tensor::scalar(0.1f);
    CHECK_THROWS_AS(total_loss(t, LossWeights{}, TrainMode::kPretrain), ContractError);
}

TEST_CASE("error metrics worked examples") {
    auto same = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    auto m0 = error_metrics(same, same, 0.5f, 10.0f);
    CHECK(m0.mae == 0.0);
    CHECK(m0.rmse == 0.0);
    CHECK(m0.imae == 0.0);
    CHECK(m0.irmse == 0.0);

    auto off = Tensor::from_vector({2, 2}, {2, 3, 4, 5});
    auto m1 = error_metrics(off, same, 0.5f, 10.0f);
    CHECK(m1.mae == Catch::Approx(1.0).margin(1e-9));
    CHECK(m1.rmse == Catch::Approx(1.0).margin(1e-9));

    auto gt = Tensor::from_vector({2, 1}, {1, 2});
    auto pr = Tensor::from_vector({2, 1}, {2, 4});
    auto m2 = error_metrics(pr, gt, 0.5f, 10.0f);
    CHECK(m2.mae == Catch::Approx(1.5).margin(1e-9));
    CHECK(m2.rmse == Catch::Approx(std::sqrt(2.5)).margin(1e-9));
    CHECK(m2.imae == Catch::Approx(0.375).margin(1e-9));
}

TEST_CASE("error metrics respect the valid range and reject empty support") {
    auto gt = Tensor::from_vector({2, 2}, {0.1f, 5.0f, 20.0f, 100.0f});
    auto pr = Tensor::from_vector({2, 2}, {1.0f, 6.0f, 20.0f, 90.0f});
    // Only 5.0 and 20.0 fall in [1, 50].
    auto m = error_metrics(pr, gt, 1.0f, 50.0f);
    CHECK(m.mae == Catch::Approx(0.5).margin(1e-9));
    CHECK_THROWS_AS(error_metrics(pr, gt, 200.0f, 300.0f), NumericError);
}

TEST_CASE("losses pass grad_check at 5e-3 on 8x8 inputs") {
    Rng rng(2718);
    const float tol = 5e-3f;

    // Sparse-depth term with respect to the prediction.
    auto z = random_tensor({8, 8}, rng, 0.5f, 3.0f);
    std::vector<float> m(64);
    for (float& v : m) v = rng.uniform() < 0.3f ? 1.0f : 0.0f;
    auto mask = Tensor::from_vector({8, 8}, std::move(m));
    // Keep pred - z away from the |.| kink.
    std::vector<float> pv(64);
    for (size_t i = 0; i < 64; ++i)
        pv[i] = z.data()[i] + (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(0.2f, 0.6f);
    auto pred = Tensor::from_vector({8, 8}, std::move(pv));
    CHECK(grad_check([&](const Tensor& t) { return sparse_consistency_loss(t, z, mask); }, pred) <
          tol);

    // Smoothness with respect to the prediction. The loss is piecewise
    // linear in pred, so a larger eps is exact; a ramp along x only and a
    // monotone-contrast image keep all coordinate gradients well away from
    // zero (edge weights strictly decrease along x).
    std::vector<float> ramp(64);
    std::vector<float> contrast(64 * 3);
    {
        float row_acc[8] = {0};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                ramp[static_cast<size_t>(i) * 8 + j] = 0.4f * j;
                if (j > 0) row_acc[i] += 0.12f * j;
                for (int c = 0; c < 3; ++c)
                    contrast[(static_cast<size_t>(i) * 8 + j) * 3 + c] = row_acc[i];
            }
    }
    auto rampt = Tensor::from_vector({8, 8}, std::move(ramp));
    auto img = Tensor::from_vector({8, 8, 3}, std::move(contrast));
    CHECK(grad_check([&](const Tensor& t) { return smoothness_loss(t, img); }, rampt, 0.03125f) <
          tol);

    // Photometric with respect to the warped image (SSIM + L1 path). Offsets
    // keep every pixel away from the L1 kink.
    Rng prng(2718);
    auto target = random_tensor({8, 8, 3}, prng, 0.3f, 0.7f);
    std::vector<float> wv(target.values());
    for (float& v : wv) {
        const float sign = prng.uniform() < 0.5f ? -1.0f : 1.0f;
        const float mag = protodc::testing::quantize(prng.uniform(0.08f, 0.25f));
        v += sign * mag;
    }
    auto warped0 = Tensor::from_vector({8, 8, 3}, std::move(wv));
    LossWeights lw;
    auto fph = [&](const Tensor& t) {
        return photometric_loss(target, {{t, Tensor::ones({8, 8})}}, lw).loss;
    };
    CHECK(grad_check(fph, warped0, 0.0078125f) < tol);

    // Descriptor with respect to the trained descriptor.
    auto s = protodc::testing::random_tensor_away_from_zero({8}, rng);
    auto rk = protodc::testing::random_tensor_away_from_zero({8}, rng);
    auto r1 = protodc::testing::random_tensor_away_from_zero({8}, rng);
    CHECK(grad_check([&](const Tensor& t) { return descriptor_loss(s, t, {r1}, 1.0f); }, rk) < tol);
}
