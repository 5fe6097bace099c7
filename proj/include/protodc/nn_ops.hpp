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

#include "protodc/tensor.hpp"

namespace protodc {

/// Cross-correlation with zero padding on channels-last layout.
/// x: [h x w x c_in], kernels: [k x k x c_in x c_out].
inline Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride = 1, int pad = 0) {
    if (x.ndim() != 3 || kernels.ndim() != 4)
        throw ShapeError("conv2d: expected x[h x w x c_in] and kernels[k x k x c_in x c_out], got " +
                         shape_str(x.shape()) + " and " + shape_str(kernels.shape()));
    const int h = x.extent(0), w = x.extent(1), cin = x.extent(2);
    const int kh = kernels.extent(0), kw = kernels.extent(1);
    if (kh != kw || kh % 2 == 0) throw ContractError("conv2d: kernel must be square with odd size");
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (kernels.extent(2) != cin)
        throw ShapeError("conv2d: input channels " + shape_str(x.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
    const int cout = kernels.extent(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1)
        throw ShapeError("conv2d: degenerate output " + shape_str({ho, wo, cout}) + " from input " +
                         shape_str(x.shape()));

    std::vector<float> y(static_cast<size_t>(ho) * wo * cout, 0.0f);
    const float* px = x.data();
    const float* pk = kernels.data();
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            float* acc = y.data() + (static_cast<size_t>(oy) * wo + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* xin = px + (static_cast<size_t>(iy) * w + ix) * cin;
                    const float* krow = pk + (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const float v = xin[ci];
                        const float* kk = krow + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) acc[co] += v * kk[co];
                    }
                }
            }
        }
    }

    Tensor xc = x, kc = kernels;
    return Tensor::from_op(
        {ho, wo, cout}, std::move(y), {x, kernels},
        [xc, kc, h, w, cin, kh, kw, cout, ho, wo, stride, pad](const std::vector<float>& g,
                                                               const std::vector<float>&) mutable {
            const float* px = xc.data();
            const float* pk = kc.data();
            float* gx = xc.requires_grad() ? xc.grad_accum() : nullptr;
            float* gk = kc.requires_grad() ? kc.grad_accum() : nullptr;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const float* grow = g.data() + (static_cast<size_t>(oy) * wo + ox) * cout;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            const size_t xoff = (static_cast<size_t>(iy) * w + ix) * cin;
                            const size_t koff = (static_cast<size_t>(ky) * kw + kx) * cin * cout;
                            for (int ci = 0; ci < cin; ++ci) {
                                const float* kk = pk + koff + static_cast<size_t>(ci) * cout;
                                if (gx) {
                                    float acc = 0.0f;
                                    for (int co = 0; co < cout; ++co) acc += grow[co] * kk[co];
                                    gx[xoff + ci] += acc;
                                }
                                if (gk) {
                                    const float v = px[xoff + ci];
                                    float* gkk = gk + koff + static_cast<size_t>(ci) * cout;
                                    for (int co = 0; co < cout; ++co) gkk[co] += v * grow[co];
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// 3x3 neighborhood sum per channel; windows shrink at the borders.
/// Self-adjoint, so backward applies the same stencil to the gradient.
inline Tensor box_sum3(const Tensor& x) {
    if (x.ndim() != 3) throw ShapeError("box_sum3: expected [h x w x c], got " + shape_str(x.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    auto stencil = [h, w, c](const float* src, float* dst) {
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                float* out = dst + (static_cast<size_t>(i) * w + j) * c;
                for (int di = -1; di <= 1; ++di) {
                    const int ii = i + di;
                    if (ii < 0 || ii >= h) continue;
                    for (int dj = -1; dj <= 1; ++dj) {
                        const int jj = j + dj;
                        if (jj < 0 || jj >= w) continue;
                        const float* in = src + (static_cast<size_t>(ii) * w + jj) * c;
                        for (int ch = 0; ch < c; ++ch) out[ch] += in[ch];
                    }
                }
            }
    };
    std::vector<float> y(x.values().size(), 0.0f);
    stencil(x.data(), y.data());
    Tensor xc = x;
    return Tensor::from_op(x.shape(), std::move(y), {x},
                           [xc, stencil](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!xc.requires_grad()) return;
                               stencil(g.data(), xc.grad_accum());
                           });
}

/// Number of in-bounds neighbors per pixel for the 3x3 stencil, replicated
/// over channels. Constant companion to box_sum3 for window means.
inline Tensor box_count3(int h, int w, int c) {
    std::vector<float> y(static_cast<size_t>(h) * w * c);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int ni = (i > 0 ? 1 : 0) + 1 + (i < h - 1 ? 1 : 0);
            const int nj = (j > 0 ? 1 : 0) + 1 + (j < w - 1 ? 1 : 0);
            const float cnt = static_cast<float>(ni * nj);
            float* out = y.data() + (static_cast<size_t>(i) * w + j) * c;
            for (int ch = 0; ch < c; ++ch) out[ch] = cnt;
        }
    return Tensor::from_vector({h, w, c}, std::move(y));
}

/// Centered second moment over clamped 3x3 windows: at each pixel p,
/// sum_{q in N(p)} (x_q - mu_p)^2 / n_p with a given mean map mu.
/// Avoids the catastrophic cancellation of the E[x^2] - mu^2 form.
inline Tensor window_var3(const Tensor& x, const Tensor& mu) {
    if (x.ndim() != 3 || x.shape() != mu.shape())
        throw ShapeError("window_var3: x " + shape_str(x.shape()) + " vs mu " + shape_str(mu.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    std::vector<float> y(x.values().size(), 0.0f);
    const float* px = x.data();
    const float* pm = mu.data();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t p = (static_cast<size_t>(i) * w + j) * c;
            int n = 0;
            for (int di = -1; di <= 1; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii >= h) continue;
                for (int dj = -1; dj <= 1; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= w) continue;
                    ++n;
                    const float* q = px + (static_cast<size_t>(ii) * w + jj) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        const float d = q[ch] - pm[p + ch];
                        y[p + ch] += d * d;
                    }
                }
            }
            const float inv = 1.0f / static_cast<float>(n);
            for (int ch = 0; ch < c; ++ch) y[p + ch] *= inv;
        }
    Tensor xc = x, mc = mu;
    return Tensor::from_op(
        x.shape(), std::move(y), {x, mu},
        [xc, mc, h, w, c](const std::vector<float>& g, const std::vector<float>&) mutable {
            const float* px = xc.data();
            const float* pm = mc.data();
            float* gx = xc.requires_grad() ? xc.grad_accum() : nullptr;
            float* gm = mc.requires_grad() ? mc.grad_accum() : nullptr;
            if (!gx && !gm) return;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const size_t p = (static_cast<size_t>(i) * w + j) * c;
                    const int ni = (i > 0 ? 1 : 0) + 1 + (i < h - 1 ? 1 : 0);
                    const int nj = (j > 0 ? 1 : 0) + 1 + (j < w - 1 ? 1 : 0);
                    const float inv = 1.0f / static_cast<float>(ni * nj);
                    for (int di = -1; di <= 1; ++di) {
                        const int ii = i + di;
                        if (ii < 0 || ii >= h) continue;
                        for (int dj = -1; dj <= 1; ++dj) {
                            const int jj = j + dj;
                            if (jj < 0 || jj >= w) continue;
                            const size_t q = (static_cast<size_t>(ii) * w + jj) * c;
                            for (int ch = 0; ch < c; ++ch) {
                                const float d = px[q + ch] - pm[p + ch];
                                const float gv = g[p + ch] * 2.0f * d * inv;
                                if (gx) gx[q + ch] += gv;
                                if (gm) gm[p + ch] -= gv;
                            }
                        }
                    }
                }
        });
}

/// Centered cross moment over clamped 3x3 windows:
/// sum_{q in N(p)} (a_q - mu_a_p)(b_q - mu_b_p) / n_p.
inline Tensor window_cov3(const Tensor& a, const Tensor& mu_a, const Tensor& b,
                          const Tensor& mu_b) {
    if (a.ndim() != 3 || a.shape() != b.shape() || a.shape() != mu_a.shape() ||
        a.shape() != mu_b.shape())
        throw ShapeError("window_cov3: inconsistent shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const int h = a.extent(0), w = a.extent(1), c = a.extent(2);
    std::vector<float> y(a.values().size(), 0.0f);
    const float* pa = a.data();
    const float* pb = b.data();
    const float* pma = mu_a.data();
    const float* pmb = mu_b.data();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t p = (static_cast<size_t>(i) * w + j) * c;
            int n = 0;
            for (int di = -1; di <= 1; ++di) {
                const int ii = i + di;
                if (ii < 0 || ii >= h) continue;
                for (int dj = -1; dj <= 1; ++dj) {
                    const int jj = j + dj;
                    if (jj < 0 || jj >= w) continue;
                    ++n;
                    const size_t q = (static_cast<size_t>(ii) * w + jj) * c;
                    for (int ch = 0; ch < c; ++ch)
                        y[p + ch] += (pa[q + ch] - pma[p + ch]) * (pb[q + ch] - pmb[p + ch]);
                }
            }
            const float inv = 1.0f / static_cast<float>(n);
            for (int ch = 0; ch < c; ++ch) y[p + ch] *= inv;
        }
    Tensor ac = a, bc = b, mac = mu_a, mbc = mu_b;
    return Tensor::from_op(
        a.shape(), std::move(y), {a, mu_a, b, mu_b},
        [ac, bc, mac, mbc, h, w, c](const std::vector<float>& g, const std::vector<float>&) mutable {
            const float* pa = ac.data();
            const float* pb = bc.data();
            const float* pma = mac.data();
            const float* pmb = mbc.data();
            float* ga = ac.requires_grad() ? ac.grad_accum() : nullptr;
            float* gb = bc.requires_grad() ? bc.grad_accum() : nullptr;
            float* gma = mac.requires_grad() ? mac.grad_accum() : nullptr;
            float* gmb = mbc.requires_grad() ? mbc.grad_accum() : nullptr;
            if (!ga && !gb && !gma && !gmb) return;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const size_t p = (static_cast<size_t>(i) * w + j) * c;
                    const int ni = (i > 0 ? 1 : 0) + 1 + (i < h - 1 ? 1 : 0);
                    const int nj = (j > 0 ? 1 : 0) + 1 + (j < w - 1 ? 1 : 0);
                    const float inv = 1.0f / static_cast<float>(ni * nj);
                    for (int di = -1; di <= 1; ++di) {
                        const int ii = i + di;
                        if (ii < 0 || ii >= h) continue;
                        for (int dj = -1; dj <= 1; ++dj) {
                            const int jj = j + dj;
                            if (jj < 0 || jj >= w) continue;
                            const size_t q = (static_cast<size_t>(ii) * w + jj) * c;
                            for (int ch = 0; ch < c; ++ch) {
                                const float da = pa[q + ch] - pma[p + ch];
                                const float db = pb[q + ch] - pmb[p + ch];
                                const float gv = g[p + ch] * inv;
                                if (ga) ga[q + ch] += gv * db;
                                if (gb) gb[q + ch] += gv * da;
                                if (gma) gma[p + ch] -= gv * db;
                                if (gmb) gmb[p + ch] -= gv * da;
                            }
                        }
                    }
                }
        });
}

/// Bilinear x2 upsampling on [h x w x c].
inline Tensor bilinear_upsample2(const Tensor& x) {
    if (x.ndim() != 3)
        throw ShapeError("bilinear_upsample2: expected [h x w x c], got " + shape_str(x.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    const int ho = 2 * h, wo = 2 * w;
    std::vector<float> y(static_cast<size_t>(ho) * wo * c, 0.0f);
    const float* px = x.data();
    auto src_coord = [](int o, int extent) {
        float s = (static_cast<float>(o) + 0.5f) * 0.5f - 0.5f;
        if (s < 0.0f) s = 0.0f;
        const float lim = static_cast<float>(extent - 1);
        if (s > lim) s = lim;
        return s;
    };
    for (int oy = 0; oy < ho; ++oy) {
        const float sy = src_coord(oy, h);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, h - 1);
        const float fy = sy - static_cast<float>(y0);
        for (int ox = 0; ox < wo; ++ox) {
            const float sx = src_coord(ox, w);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, w - 1);
            const float fx = sx - static_cast<float>(x0);
            const float w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
            const float w10 = fy * (1 - fx), w11 = fy * fx;
            const float* p00 = px + (static_cast<size_t>(y0) * w + x0) * c;
            const float* p01 = px + (static_cast<size_t>(y0) * w + x1) * c;
            const float* p10 = px + (static_cast<size_t>(y1) * w + x0) * c;
            const float* p11 = px + (static_cast<size_t>(y1) * w + x1) * c;
            float* out = y.data() + (static_cast<size_t>(oy) * wo + ox) * c;
            for (int ch = 0; ch < c; ++ch)
                out[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
        }
    }
    Tensor xc = x;
    return Tensor::from_op(
        {ho, wo, c}, std::move(y), {x},
        [xc, h, w, c, ho, wo, src_coord](const std::vector<float>& g, const std::vector<float>&) mutable {
            if (!xc.requires_grad()) return;
            float* gx = xc.grad_accum();
            for (int oy = 0; oy < ho; ++oy) {
                const float sy = src_coord(oy, h);
                const int y0 = static_cast<int>(sy);
                const int y1 = std::min(y0 + 1, h - 1);
                const float fy = sy - static_cast<float>(y0);
                for (int ox = 0; ox < wo; ++ox) {
                    const float sx = src_coord(ox, w);
                    const int x0 = static_cast<int>(sx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const float fx = sx - static_cast<float>(x0);
                    const float w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
                    const float w10 = fy * (1 - fx), w11 = fy * fx;
                    const float* grow = g.data() + (static_cast<size_t>(oy) * wo + ox) * c;
                    float* g00 = gx + (static_cast<size_t>(y0) * w + x0) * c;
                    float* g01 = gx + (static_cast<size_t>(y0) * w + x1) * c;
                    float* g10 = gx + (static_cast<size_t>(y1) * w + x0) * c;
                    float* g11 = gx + (static_cast<size_t>(y1) * w + x1) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        g00[ch] += w00 * grow[ch];
                        g01[ch] += w01 * grow[ch];
                        g10[ch] += w10 * grow[ch];
                        g11[ch] += w11 * grow[ch];
                    }
                }
            }
        });
}

/// Forward difference along x on a [h x w] map; the last column is 0.
inline Tensor forward_diff_x(const Tensor& d) {
    if (d.ndim() != 2) throw ShapeError("forward_diff_x: expected [h x w], got " + shape_str(d.shape()));
    const int h = d.extent(0), w = d.extent(1);
    std::vector<float> y(static_cast<size_t>(h) * w, 0.0f);
    const float* pd = d.data();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w - 1; ++j) {
            const size_t off = static_cast<size_t>(i) * w + j;
            y[off] = pd[off + 1] - pd[off];
        }
    Tensor dc = d;
    return Tensor::from_op({h, w}, std::move(y), {d},
                           [dc, h, w](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!dc.requires_grad()) return;
                               float* gd = dc.grad_accum();
                               for (int i = 0; i < h; ++i)
                                   for (int j = 0; j < w - 1; ++j) {
                                       const size_t off = static_cast<size_t>(i) * w + j;
                                       gd[off + 1] += g[off];
                                       gd[off] -= g[off];
                                   }
                           });
}

/// Forward difference along y on a [h x w] map; the last row is 0.
inline Tensor forward_diff_y(const Tensor& d) {
    if (d.ndim() != 2) throw ShapeError("forward_diff_y: expected [h x w], got " + shape_str(d.shape()));
    const int h = d.extent(0), w = d.extent(1);
    std::vector<float> y(static_cast<size_t>(h) * w, 0.0f);
    const float* pd = d.data();
    for (int i = 0; i < h - 1; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t off = static_cast<size_t>(i) * w + j;
            y[off] = pd[off + w] - pd[off];
        }
    Tensor dc = d;
    return Tensor::from_op({h, w}, std::move(y), {d},
                           [dc, h, w](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!dc.requires_grad()) return;
                               float* gd = dc.grad_accum();
                               for (int i = 0; i < h - 1; ++i)
                                   for (int j = 0; j < w; ++j) {
                                       const size_t off = static_cast<size_t>(i) * w + j;
                                       gd[off + w] += g[off];
                                       gd[off] -= g[off];
                                   }
                           });
}

/// Spatial mean per channel: [h x w x c] -> [c].
inline Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 3)
        throw ShapeError("global_avg_pool: expected [h x w x c], got " + shape_str(x.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    const float* px = x.data();
    for (int64_t p = 0; p < hw; ++p)
        for (int ch = 0; ch < c; ++ch) acc[ch] += px[p * c + ch];
    std::vector<float> y(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) y[ch] = static_cast<float>(acc[ch] / static_cast<double>(hw));
    Tensor xc = x;
    return Tensor::from_op({c}, std::move(y), {x},
                           [xc, hw, c](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!xc.requires_grad()) return;
                               float* gx = xc.grad_accum();
                               const float inv = 1.0f / static_cast<float>(hw);
                               for (int64_t p = 0; p < hw; ++p)
                                   for (int ch = 0; ch < c; ++ch) gx[p * c + ch] += g[ch] * inv;
                           });
}

/// Mean over the channel axis: [h x w x c] -> [h x w].
inline Tensor channel_mean(const Tensor& x) {
    if (x.ndim() != 3)
        throw ShapeError("channel_mean: expected [h x w x c], got " + shape_str(x.shape()));
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<float> y(static_cast<size_t>(hw));
    const float* px = x.data();
    const float inv = 1.0f / static_cast<float>(c);
    for (int64_t p = 0; p < hw; ++p) {
        float acc = 0.0f;
        for (int ch = 0; ch < c; ++ch) acc += px[p * c + ch];
        y[static_cast<size_t>(p)] = acc * inv;
    }
    Tensor xc = x;
    return Tensor::from_op({h, w}, std::move(y), {x},
                           [xc, hw, c, inv](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!xc.requires_grad()) return;
                               float* gx = xc.grad_accum();
                               for (int64_t p = 0; p < hw; ++p)
                                   for (int ch = 0; ch < c; ++ch)
                                       gx[p * c + ch] += g[static_cast<size_t>(p)] * inv;
                           });
}

}  // namespace protodc
