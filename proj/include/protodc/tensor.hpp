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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "protodc/errors.hpp"

namespace protodc {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    uint64_t seq = 0;  // recording order; backward replays in reverse
    std::vector<std::shared_ptr<Node>> parents;
    // Receives (grad of this node, data of this node).
    std::function<void(const std::vector<float>&, const std::vector<float>&)> backward_fn;
};

inline uint64_t next_seq() {
    thread_local uint64_t counter = 0;
    return ++counter;
}

}  // namespace detail

/// Dense row-major float32 tensor. Value-semantic handle onto shared storage;
/// ops on grad-requiring inputs record a backward closure, and backward()
/// replays closures in reverse recording order (define-by-run tape).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0f, requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 1.0f, requires_grad);
    }

    static Tensor full(Shape shape, float value, bool requires_grad = false) {
        auto n = std::make_shared<detail::Node>();
        n->data.assign(static_cast<size_t>(shape_numel(shape)), value);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        n->seq = detail::next_seq();
        return Tensor(std::move(n));
    }

    static Tensor from_vector(Shape shape, std::vector<float> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("from_vector: shape " + shape_str(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        n->seq = detail::next_seq();
        return Tensor(std::move(n));
    }

    static Tensor scalar(float v, bool requires_grad = false) {
        return from_vector({1}, {v}, requires_grad);
    }

    /// Internal factory for ops: takes precomputed forward data plus the
    /// backward closure. The closure is only kept if some parent needs grad.
    static Tensor from_op(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                          std::function<void(const std::vector<float>&, const std::vector<float>&)> backward) {
        Tensor out = from_vector(std::move(shape), std::move(data));
        bool needs = false;
        for (const auto& p : parents) needs = needs || p.requires_grad();
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->parents.reserve(parents.size());
            for (auto& p : parents) out.node_->parents.push_back(p.node_);
            out.node_->backward_fn = std::move(backward);
        }
        return out;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int extent(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    const float* data() const { return node_->data.data(); }
    float* data() { return node_->data.data(); }
    const std::vector<float>& values() const { return node_->data; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<float>& grad() const {
        if (node_->grad.empty())
            const_cast<detail::Node*>(node_.get())->grad.assign(node_->data.size(), 0.0f);
        return node_->grad;
    }
    /// Grad buffer for accumulation, allocated (zeroed) on first use.
    float* grad_accum() {
        if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
        return node_->grad.data();
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
    }

    float item() const {
        if (numel() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->data[0];
    }

    float at(int i) const { return node_->data[static_cast<size_t>(i)]; }
    float at(int i, int j) const {
        return node_->data[static_cast<size_t>(i) * node_->shape[1] + j];
    }
    float at(int i, int j, int k) const {
        return node_->data[(static_cast<size_t>(i) * node_->shape[1] + j) * node_->shape[2] + k];
    }

    /// Reverse-mode sweep from a scalar root. Reachable grad-requiring nodes
    /// are replayed strictly in reverse recording order, so repeated runs on
    /// identical inputs accumulate identically (bitwise, single-threaded).
    void backward() {
        if (numel() != 1) throw ContractError("backward: root " + shape_str(shape()) + " is not scalar");
        if (!node_->requires_grad) return;
        std::vector<std::shared_ptr<detail::Node>> order;
        collect(node_, order);
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a->seq > b->seq; });
        if (node_->grad.empty()) node_->grad.assign(1, 0.0f);
        node_->grad[0] += 1.0f;
        for (auto& n : order) {
            if (n->backward_fn) n->backward_fn(n->grad, n->data);
        }
    }

    uint64_t seq_id() const { return node_->seq; }

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

    static void collect(const std::shared_ptr<detail::Node>& root,
                        std::vector<std::shared_ptr<detail::Node>>& out) {
        std::vector<std::shared_ptr<detail::Node>> stack{root};
        std::vector<const detail::Node*> seen;
        while (!stack.empty()) {
            auto n = stack.back();
            stack.pop_back();
            if (std::find(seen.begin(), seen.end(), n.get()) != seen.end()) continue;
            seen.push_back(n.get());
            if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0f);
            out.push_back(n);
            for (auto& p : n->parents)
                if (p->requires_grad) stack.push_back(p);
        }
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<float> y(a.values());
    const float* pb = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] += pb[i];
    Tensor ac = a, bc = b;
    return Tensor::from_op(a.shape(), std::move(y), {a, b},
                           [ac, bc](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (ac.requires_grad()) {
                                   float* ga = ac.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                               }
                               if (bc.requires_grad()) {
                                   float* gb = bc.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                               }
                           });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<float> y(a.values());
    const float* pb = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] -= pb[i];
    Tensor ac = a, bc = b;
    return Tensor::from_op(a.shape(), std::move(y), {a, b},
                           [ac, bc](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (ac.requires_grad()) {
                                   float* ga = ac.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                               }
                               if (bc.requires_grad()) {
                                   float* gb = bc.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                               }
                           });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<float> y(a.values());
    const float* pb = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] *= pb[i];
    Tensor ac = a, bc = b;
    return Tensor::from_op(a.shape(), std::move(y), {a, b},
                           [ac, bc](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (ac.requires_grad()) {
                                   float* ga = ac.grad_accum();
                                   const float* vb = bc.data();
                                   for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                               }
                               if (bc.requires_grad()) {
                                   float* gb = bc.grad_accum();
                                   const float* va = ac.data();
                                   for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                               }
                           });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<float> y(a.values());
    const float* pb = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] /= pb[i];
    Tensor ac = a, bc = b;
    return Tensor::from_op(a.shape(), std::move(y), {a, b},
                           [ac, bc](const std::vector<float>& g, const std::vector<float>&) mutable {
                               const float* va = ac.data();
                               const float* vb = bc.data();
                               if (ac.requires_grad()) {
                                   float* ga = ac.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
                               }
                               if (bc.requires_grad()) {
                                   float* gb = bc.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i)
                                       gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                               }
                           });
}

inline Tensor scale(const Tensor& a, float s) {
    std::vector<float> y(a.values());
    for (float& v : y) v *= s;
    Tensor ac = a;
    return Tensor::from_op(a.shape(), std::move(y), {a},
                           [ac, s](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                           });
}

inline Tensor add_scalar(const Tensor& a, float s) {
    std::vector<float> y(a.values());
    for (float& v : y) v += s;
    Tensor ac = a;
    return Tensor::from_op(a.shape(), std::move(y), {a},
                           [ac](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
}

inline Tensor abs(const Tensor& a) {
    std::vector<float> y(a.values());
    for (float& v : y) v = std::fabs(v);
    Tensor ac = a;
    return Tensor::from_op(a.shape(), std::move(y), {a},
                           [ac](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               const float* va = ac.data();
                               for (size_t i = 0; i < g.size(); ++i) {
                                   float s = (va[i] > 0.0f) ? 1.0f : (va[i] < 0.0f ? -1.0f : 0.0f);
                                   ga[i] += g[i] * s;
                               }
                           });
}

inline Tensor leaky_relu(const Tensor& a, float slope = 0.1f) {
    std::vector<float> y(a.values());
    for (float& v : y)
        if (!(v > 0.0f)) v *= slope;
    Tensor ac = a;
    return Tensor::from_op(a.shape(), std::move(y), {a},
                           [ac, slope](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               const float* va = ac.data();
                               for (size_t i = 0; i < g.size(); ++i)
                                   ga[i] += g[i] * ((va[i] > 0.0f) ? 1.0f : slope);
                           });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<float> y(a.values());
    for (float& v : y) v = 1.0f / (1.0f + std::exp(-v));
    Tensor ac = a;
    return Tensor::from_op(a.shape(), std::move(y), {a},
                           [ac](const std::vector<float>& g, const std::vector<float>& out) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               for (size_t i = 0; i < g.size(); ++i)
                                   ga[i] += g[i] * out[i] * (1.0f - out[i]);
                           });
}

/// Forward identity that records nothing: downstream gradients never reach
/// the input through this view.
inline Tensor detach(const Tensor& a) {
    return Tensor::from_vector(a.shape(), a.values(), false);
}

// ---------------------------------------------------------------------------
// Broadcast over the trailing channel axis: x[..., c] (op) v[c]
// ---------------------------------------------------------------------------

namespace detail {
inline void check_trailing(const Tensor& x, const Tensor& v, const char* op) {
    if (v.ndim() != 1 || x.ndim() < 1 || x.shape().back() != v.extent(0))
        throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(v.shape()) +
                         " over trailing axis of " + shape_str(x.shape()));
}
}  // namespace detail

inline Tensor broadcast_mul(const Tensor& x, const Tensor& v) {
    detail::check_trailing(x, v, "broadcast_mul");
    const int c = v.extent(0);
    std::vector<float> y(x.values());
    const float* pv = v.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] *= pv[i % c];
    Tensor xc = x, vc = v;
    return Tensor::from_op(x.shape(), std::move(y), {x, v},
                           [xc, vc, c](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (xc.requires_grad()) {
                                   float* gx = xc.grad_accum();
                                   const float* pv = vc.data();
                                   for (size_t i = 0; i < g.size(); ++i)
                                       gx[i] += g[i] * pv[i % c];
                               }
                               if (vc.requires_grad()) {
                                   float* gv = vc.grad_accum();
                                   const float* px = xc.data();
                                   for (size_t i = 0; i < g.size(); ++i)
                                       gv[i % c] += g[i] * px[i];
                               }
                           });
}

inline Tensor broadcast_add(const Tensor& x, const Tensor& v) {
    detail::check_trailing(x, v, "broadcast_add");
    const int c = v.extent(0);
    std::vector<float> y(x.values());
    const float* pv = v.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] += pv[i % c];
    Tensor xc = x, vc = v;
    return Tensor::from_op(x.shape(), std::move(y), {x, v},
                           [xc, vc, c](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (xc.requires_grad()) {
                                   float* gx = xc.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                               }
                               if (vc.requires_grad()) {
                                   float* gv = vc.grad_accum();
                                   for (size_t i = 0; i < g.size(); ++i) gv[i % c] += g[i];
                               }
                           });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor ac = a;
    return Tensor::from_op(std::move(new_shape), a.values(), {a},
                           [ac](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
}

inline Tensor flatten(const Tensor& a) {
    return reshape(a, {static_cast<int>(a.numel())});
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
    const int m = a.extent(0), n = a.extent(1);
    std::vector<float> y(static_cast<size_t>(m) * n);
    const float* pa = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) y[static_cast<size_t>(j) * m + i] = pa[static_cast<size_t>(i) * n + j];
    Tensor ac = a;
    return Tensor::from_op({n, m}, std::move(y), {a},
                           [ac, m, n](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < n; ++j)
                                       ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
                           });
}

/// Concatenate along the trailing channel axis. All inputs share leading dims.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    int ctot = 0;
    std::vector<int> cs;
    for (const auto& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw ShapeError("concat_channels: leading dims differ, " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        cs.push_back(p.shape().back());
        ctot += cs.back();
    }
    const int64_t rows = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(ctot);
    std::vector<float> y(static_cast<size_t>(rows) * ctot);
    for (int64_t r = 0; r < rows; ++r) {
        float* dst = y.data() + r * ctot;
        for (size_t p = 0; p < parts.size(); ++p) {
            const float* src = parts[p].data() + r * cs[p];
            std::copy(src, src + cs[p], dst);
            dst += cs[p];
        }
    }
    std::vector<Tensor> pc = parts;
    return Tensor::from_op(out_shape, std::move(y), parts,
                           [pc, cs, ctot, rows](const std::vector<float>& g, const std::vector<float>&) mutable {
                               for (int64_t r = 0; r < rows; ++r) {
                                   const float* src = g.data() + r * ctot;
                                   for (size_t p = 0; p < pc.size(); ++p) {
                                       if (pc[p].requires_grad()) {
                                           float* dst = pc[p].grad_accum() + r * cs[p];
                                           for (int k = 0; k < cs[p]; ++k) dst[k] += src[k];
                                       }
                                       src += cs[p];
                                   }
                               }
                           });
}

// ---------------------------------------------------------------------------
// Matmul and row softmax
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(1) != b.extent(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<float> y(static_cast<size_t>(m) * n, 0.0f);
    const float* pa = a.data();
    const float* pb = b.data();
    for (int i = 0; i < m; ++i) {
        float* yrow = y.data() + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float av = pa[static_cast<size_t>(i) * k + kk];
            const float* brow = pb + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
        }
    }
    Tensor ac = a, bc = b;
    return Tensor::from_op({m, n}, std::move(y), {a, b},
                           [ac, bc, m, k, n](const std::vector<float>& g, const std::vector<float>&) mutable {
                               const float* pa = ac.data();
                               const float* pb = bc.data();
                               if (ac.requires_grad()) {
                                   // a.grad += g . b^T
                                   float* ga = ac.grad_accum();
                                   for (int i = 0; i < m; ++i)
                                       for (int kk = 0; kk < k; ++kk) {
                                           const float* grow = g.data() + static_cast<size_t>(i) * n;
                                           const float* brow = pb + static_cast<size_t>(kk) * n;
                                           float acc = 0.0f;
                                           for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                           ga[static_cast<size_t>(i) * k + kk] += acc;
                                       }
                               }
                               if (bc.requires_grad()) {
                                   // b.grad += a^T . g
                                   float* gb = bc.grad_accum();
                                   for (int kk = 0; kk < k; ++kk)
                                       for (int i = 0; i < m; ++i) {
                                           const float av = pa[static_cast<size_t>(i) * k + kk];
                                           const float* grow = g.data() + static_cast<size_t>(i) * n;
                                           float* gbrow = gb + static_cast<size_t>(kk) * n;
                                           for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                                       }
                               }
                           });
}

/// Row-wise softmax with max subtraction. Rows of the output are nonnegative
/// and sum to 1.
inline Tensor softmax_rows(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("softmax_rows: expected 2-D, got " + shape_str(x.shape()));
    const int m = x.extent(0), n = x.extent(1);
    const float* px = x.data();
    for (int64_t i = 0; i < x.numel(); ++i)
        if (!std::isfinite(px[i])) throw NumericError("softmax_rows: non-finite input");
    std::vector<float> y(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const float* row = px + static_cast<size_t>(i) * n;
        float* yrow = y.data() + static_cast<size_t>(i) * n;
        float mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            yrow[j] = std::exp(row[j] - mx);
            sum += yrow[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int j = 0; j < n; ++j) yrow[j] *= inv;
    }
    Tensor xc = x;
    return Tensor::from_op({m, n}, std::move(y), {x},
                           [xc, m, n](const std::vector<float>& g, const std::vector<float>& out) mutable {
                               if (!xc.requires_grad()) return;
                               float* gx = xc.grad_accum();
                               for (int i = 0; i < m; ++i) {
                                   const float* yrow = out.data() + static_cast<size_t>(i) * n;
                                   const float* grow = g.data() + static_cast<size_t>(i) * n;
                                   double dot = 0.0;
                                   for (int j = 0; j < n; ++j) dot += static_cast<double>(grow[j]) * yrow[j];
                                   for (int j = 0; j < n; ++j)
                                       gx[static_cast<size_t>(i) * n + j] +=
                                           yrow[j] * (grow[j] - static_cast<float>(dot));
                               }
                           });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor reduce_sum(const Tensor& a) {
    double acc = 0.0;
    const float* pa = a.data();
    for (int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
    Tensor ac = a;
    return Tensor::from_op({1}, {static_cast<float>(acc)}, {a},
                           [ac](const std::vector<float>& g, const std::vector<float>&) mutable {
                               if (!ac.requires_grad()) return;
                               float* ga = ac.grad_accum();
                               const float gv = g[0];
                               for (size_t i = 0; i < ac.values().size(); ++i) ga[i] += gv;
                           });
}

inline Tensor reduce_mean(const Tensor& a) {
    const float inv = 1.0f / static_cast<float>(a.numel());
    return scale(reduce_sum(a), inv);
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "dot");
    double acc = 0.0;
    const float* pa = a.data();
    const float* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(pa[i]) * pb[i];
    Tensor ac = a, bc = b;
    return Tensor::from_op({1}, {static_cast<float>(acc)}, {a, b},
                           [ac, bc](const std::vector<float>& g, const std::vector<float>&) mutable {
                               const float gv = g[0];
                               if (ac.requires_grad()) {
                                   float* ga = ac.grad_accum();
                                   const float* vb = bc.data();
                                   for (size_t i = 0; i < ac.values().size(); ++i) ga[i] += gv * vb[i];
                               }
                               if (bc.requires_grad()) {
                                   float* gb = bc.grad_accum();
                                   const float* va = ac.data();
                                   for (size_t i = 0; i < bc.values().size(); ++i) gb[i] += gv * va[i];
                               }
                           });
}

inline Tensor l2_norm(const Tensor& a) {
    double acc = 0.0;
    const float* pa = a.data();
    for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(pa[i]) * pa[i];
    const float norm = static_cast<float>(std::sqrt(acc));
    Tensor ac = a;
    return Tensor::from_op({1}, {norm}, {a},
                           [ac](const std::vector<float>& g, const std::vector<float>& out) mutable {
                               if (!ac.requires_grad()) return;
                               if (out[0] == 0.0f) throw NumericError("l2_norm: gradient at zero vector");
                               float* ga = ac.grad_accum();
                               const float* va = ac.data();
                               const float s = g[0] / out[0];
                               for (size_t i = 0; i < ac.values().size(); ++i) ga[i] += s * va[i];
                           });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker
// ---------------------------------------------------------------------------

/// Max over coordinates of |analytic - central difference| /
/// (|analytic| + |cd| + 1e-8) for a scalar-valued function of x.
/// Default eps is 2^-10 (~1e-3): an exactly representable step keeps the
/// difference quotient clean in 32-bit arithmetic.
inline float grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                        float eps = 0.0009765625f) {
    Tensor probe = Tensor::from_vector(x.shape(), x.values(), true);
    Tensor y = f(probe);
    if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    y.backward();
    const std::vector<float> analytic = probe.grad();

    std::vector<float> base = x.values();
    float worst = 0.0f;
    for (size_t i = 0; i < base.size(); ++i) {
        std::vector<float> vp = base, vm = base;
        vp[i] += eps;
        vm[i] -= eps;
        const float fp = f(Tensor::from_vector(x.shape(), vp)).item();
        const float fm = f(Tensor::from_vector(x.shape(), vm)).item();
        const float cd = (fp - fm) / (2.0f * eps);
        const float rel = std::fabs(analytic[i] - cd) / (std::fabs(analytic[i]) + std::fabs(cd) + 1e-8f);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace protodc
