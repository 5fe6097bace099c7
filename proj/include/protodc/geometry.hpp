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
#include <cmath>
#include <utility>

#include "protodc/tensor.hpp"

namespace protodc {

struct Vec3 {
    float x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(float s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }

/// Pinhole camera: focal lengths and principal point in pixels.
struct Intrinsics {
    float fx = 1, fy = 1, cx = 0, cy = 0;

    void validate() const {
        if (!(fx > 0.0f) || !(fy > 0.0f))
            throw ContractError("Intrinsics: focal lengths must be positive");
    }
};

/// Rigid transform as rotation matrix (row-major 3x3) plus translation.
struct Pose {
    std::array<float, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<float, 3> translation{0, 0, 0};

    static Pose identity() { return Pose{}; }

    Vec3 apply(Vec3 p) const {
        const auto& r = rotation;
        return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation[0],
                r[3] * p.x + r[4] * p.y + r[5] * p.z + translation[1],
                r[6] * p.x + r[7] * p.y + r[8] * p.z + translation[2]};
    }

    /// Max deviation of R^T R from identity plus |det - 1|.
    float orthonormality_error() const {
        const auto& r = rotation;
        float worst = 0.0f;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                float acc = 0.0f;
                for (int k = 0; k < 3; ++k) acc += r[3 * k + i] * r[3 * k + j];
                worst = std::max(worst, std::fabs(acc - (i == j ? 1.0f : 0.0f)));
            }
        const float det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                          r[2] * (r[3] * r[7] - r[4] * r[6]);
        return std::max(worst, std::fabs(det - 1.0f));
    }

    void validate() const {
        if (orthonormality_error() > 1e-5f)
            throw ContractError("Pose: rotation is not orthonormal within 1e-5");
    }
};

inline Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            float acc = 0.0f;
            for (int k = 0; k < 3; ++k) acc += a.rotation[3 * i + k] * b.rotation[3 * k + j];
            out.rotation[3 * i + j] = acc;
        }
    const Vec3 tb{b.translation[0], b.translation[1], b.translation[2]};
    Pose arot = a;
    arot.translation = {0, 0, 0};
    const Vec3 t = arot.apply(tb);
    out.translation = {t.x + a.translation[0], t.y + a.translation[1], t.z + a.translation[2]};
    return out;
}

inline Pose inverse(const Pose& p) {
    Pose out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.rotation[3 * i + j] = p.rotation[3 * j + i];
    Pose rt = out;
    rt.translation = {0, 0, 0};
    const Vec3 t = rt.apply({p.translation[0], p.translation[1], p.translation[2]});
    out.translation = {-t.x, -t.y, -t.z};
    return out;
}

/// Rotation from XYZ Euler angles in radians.
inline Pose pose_from_euler(float rx, float ry, float rz, Vec3 t) {
    const float cx = std::cos(rx), sx = std::sin(rx);
    const float cy = std::cos(ry), sy = std::sin(ry);
    const float cz = std::cos(rz), sz = std::sin(rz);
    Pose X, Y, Z;
    X.rotation = {1, 0, 0, 0, cx, -sx, 0, sx, cx};
    Y.rotation = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    Z.rotation = {cz, -sz, 0, sz, cz, 0, 0, 0, 1};
    Pose out = compose(Z, compose(Y, X));
    out.translation = {t.x, t.y, t.z};
    return out;
}

/// d * K^-1 * [u, v, 1]^T.
inline Vec3 backproject(float u, float v, float depth, const Intrinsics& K) {
    if (!(depth > 0.0f)) throw NumericError("backproject: nonpositive depth");
    return {(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth};
}

/// Perspective projection; rejects points at or behind the camera plane.
inline std::pair<float, float> project(Vec3 p, const Intrinsics& K) {
    if (p.z <= 1e-6f) throw NumericError("project: point at or behind camera (z <= 1e-6)");
    return {K.fx * p.x / p.z + K.cx, K.fy * p.y / p.z + K.cy};
}

/// Inverse warp: for every target pixel, reproject into the source view via
/// `pose` (target-camera coords -> source-camera coords) and sample the
/// source image bilinearly. Validity is 1 where the reprojection has
/// positive depth and lands strictly inside the source image; elsewhere the
/// output is 0. Differentiable with respect to depth only; the source image
/// is treated as constant.
inline std::pair<Tensor, Tensor> warp_image(const Tensor& src, const Tensor& depth,
                                            const Pose& pose, const Intrinsics& K) {
    if (src.ndim() != 3 || src.extent(2) != 3)
        throw ShapeError("warp_image: source must be [h x w x 3], got " + shape_str(src.shape()));
    if (depth.ndim() != 2 || depth.extent(0) != src.extent(0) || depth.extent(1) != src.extent(1))
        throw ShapeError("warp_image: image " + shape_str(src.shape()) + " vs depth " +
                         shape_str(depth.shape()));
    if (src.requires_grad())
        throw ContractError("warp_image: gradients into the source image are not supported");
    K.validate();
    const int h = src.extent(0), w = src.extent(1);

    struct PixGeom {
        // Constant ray direction r = R K^-1 [u v 1]^T and translation.
        float rx, ry, rz;
    };
    // Precompute rotated rays once; they do not depend on depth.
    std::vector<PixGeom> rays(static_cast<size_t>(h) * w);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const Vec3 dir{(static_cast<float>(u) - K.cx) / K.fx,
                           (static_cast<float>(v) - K.cy) / K.fy, 1.0f};
            Pose r = pose;
            r.translation = {0, 0, 0};
            const Vec3 rr = r.apply(dir);
            rays[static_cast<size_t>(v) * w + u] = {rr.x, rr.y, rr.z};
        }
    const float tx = pose.translation[0], ty = pose.translation[1], tz = pose.translation[2];

    std::vector<float> out(static_cast<size_t>(h) * w * 3, 0.0f);
    std::vector<float> valid(static_cast<size_t>(h) * w, 0.0f);
    const float* pd = depth.data();
    const float* ps = src.data();
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const size_t pix = static_cast<size_t>(v) * w + u;
            const float d = pd[pix];
            if (!(d > 0.0f)) continue;
            const PixGeom& r = rays[pix];
            const float X = d * r.rx + tx, Y = d * r.ry + ty, Z = d * r.rz + tz;
            if (Z <= 1e-6f) continue;
            const float us = K.fx * X / Z + K.cx;
            const float vs = K.fy * Y / Z + K.cy;
            if (!(us > 0.0f && us < static_cast<float>(w - 1) && vs > 0.0f &&
                  vs < static_cast<float>(h - 1)))
                continue;
            valid[pix] = 1.0f;
            const int x0 = static_cast<int>(us), y0 = static_cast<int>(vs);
            const float fx = us - static_cast<float>(x0), fy = vs - static_cast<float>(y0);
            const float* p00 = ps + (static_cast<size_t>(y0) * w + x0) * 3;
            const float* p01 = p00 + 3;
            const float* p10 = p00 + static_cast<size_t>(w) * 3;
            const float* p11 = p10 + 3;
            float* o = out.data() + pix * 3;
            for (int c = 0; c < 3; ++c)
                o[c] = (1 - fy) * ((1 - fx) * p00[c] + fx * p01[c]) +
                       fy * ((1 - fx) * p10[c] + fx * p11[c]);
        }

    Tensor validity = Tensor::from_vector({h, w}, std::move(valid));
    Tensor dc = depth;
    Tensor srcc = src;
    Tensor warped = Tensor::from_op(
        {h, w, 3}, std::move(out), {depth},
        [dc, srcc, rays, tx, ty, tz, K, h, w](const std::vector<float>& g,
                                              const std::vector<float>&) mutable {
            if (!dc.requires_grad()) return;
            float* gd = dc.grad_accum();
            const float* pd = dc.data();
            const float* ps = srcc.data();
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u) {
                    const size_t pix = static_cast<size_t>(v) * w + u;
                    const float d = pd[pix];
                    if (!(d > 0.0f)) continue;
                    const PixGeom& r = rays[pix];
                    const float X = d * r.rx + tx, Y = d * r.ry + ty, Z = d * r.rz + tz;
                    if (Z <= 1e-6f) continue;
                    const float us = K.fx * X / Z + K.cx;
                    const float vs = K.fy * Y / Z + K.cy;
                    if (!(us > 0.0f && us < static_cast<float>(w - 1) && vs > 0.0f &&
                          vs < static_cast<float>(h - 1)))
                        continue;
                    // d(us)/dd and d(vs)/dd by the quotient rule.
                    const float dus = K.fx * (r.rx * Z - X * r.rz) / (Z * Z);
                    const float dvs = K.fy * (r.ry * Z - Y * r.rz) / (Z * Z);
                    const int x0 = static_cast<int>(us), y0 = static_cast<int>(vs);
                    const float fx = us - static_cast<float>(x0), fy = vs - static_cast<float>(y0);
                    const float* p00 = ps + (static_cast<size_t>(y0) * w + x0) * 3;
                    const float* p01 = p00 + 3;
                    const float* p10 = p00 + static_cast<size_t>(w) * 3;
                    const float* p11 = p10 + 3;
                    float acc = 0.0f;
                    for (int c = 0; c < 3; ++c) {
                        const float dI_dus =
                            (1 - fy) * (p01[c] - p00[c]) + fy * (p11[c] - p10[c]);
                        const float dI_dvs =
                            (1 - fx) * (p10[c] - p00[c]) + fx * (p11[c] - p01[c]);
                        acc += g[pix * 3 + c] * (dI_dus * dus + dI_dvs * dvs);
                    }
                    gd[pix] += acc;
                }
        });
    return {warped, validity};
}

}  // namespace protodc
