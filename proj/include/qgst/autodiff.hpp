// Copyright 2026 The qgst Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense float64 tensors with reverse-mode differentiation.
//
// Every op returns a fresh tensor; inputs are never modified. A result keeps
// its parents alive only while some input requires a gradient, so evaluation
// without parameters builds no graph. A graph belongs to one thread.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace qgst::ad {

using Shape = std::vector<int>;

/// Allocator with 64-byte alignment. Eigen's vectorized kernels peel leading
/// elements by runtime alignment, so buffers with varying alignment would give
/// results differing in the last bit between otherwise identical runs.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct Node {
    Shape shape;
    Buffer value;
    Buffer grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values) {
        if (values.size() != numel(shape)) {
            throw std::invalid_argument("tensor of shape " + shape_str(shape) + " needs " +
                                        std::to_string(numel(shape)) + " values, got " + std::to_string(values.size()));
        }
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value.assign(values.begin(), values.end());
        return Tensor(std::move(n));
    }
    static Tensor zeros(Shape shape) {
        const std::size_t n = numel(shape);
        return constant(std::move(shape), std::vector<double>(n, 0.0));
    }
    static Tensor scalar(double v) { return constant({}, {v}); }
    /// A leaf that accumulates gradients.
    static Tensor parameter(Shape shape, std::vector<double> values) {
        Tensor t = constant(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        t.node_->ensure_grad();
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int axis) const {
        if (axis < 0) axis += rank();
        return node_->shape.at(axis);
    }
    std::size_t size() const { return node_->value.size(); }
    std::span<const double> values() const { return node_->value; }
    /// Raw access for optimizers and checkpoint loading on leaves.
    std::span<double> mutable_values() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    double item() const {
        if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }
    double operator[](std::size_t i) const { return node_->value.at(i); }
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    /// Reverse pass from a scalar. Gradients accumulate into leaves.
    void backward() const;

   private:
    std::shared_ptr<Node> node_;
};

/// Builds an op result. `backward` reads the result's grad and accumulates
/// into its parents (which are ensured to have grad buffers).
inline Tensor make_result(Shape shape, Buffer value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (auto& t : inputs) n->parents.push_back(t.node_ptr());
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

inline void Tensor::backward() const {
    if (size() != 1) throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(shape()));
    if (!requires_grad()) return;
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward) continue;
        n->ensure_grad();
        for (auto& p : n->parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        n->backward(*n);
    }
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline std::invalid_argument shape_error(const char* op, const Shape& a, const Shape& b) {
    return std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline int norm_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::invalid_argument(std::string(op) + ": axis out of range");
    return axis;
}

/// outer x axis x inner view of a shape around `axis`.
inline void split_around(const Shape& s, int axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    Buffer out(a.size());
    const auto x = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
    return make_result(a.shape(), std::move(out), {a}, [deriv](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    });
}

enum class BinaryKind { Add, Sub, Mul };

inline Tensor binary(const Tensor& a_in, const Tensor& b_in, BinaryKind kind, const char* name) {
    // Normalize so that b's shape is a suffix of a's (broadcast over a's leading axes).
    Tensor a = a_in, b = b_in;
    bool swapped = false;
    if (!is_suffix(b.shape(), a.shape())) {
        if (is_suffix(a.shape(), b.shape())) {
            std::swap(a, b);
            swapped = true;
        } else if (b.size() != 1 && a.size() != 1) {
            throw shape_error(name, a_in.shape(), b_in.shape());
        } else if (a.size() == 1) {
            std::swap(a, b);
            swapped = true;
        }
    }
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    Buffer out(n);
    const auto x = a.values();
    const auto y = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        const double yi = y[i % m];
        switch (kind) {
            case BinaryKind::Add:
                out[i] = x[i] + yi;
                break;
            case BinaryKind::Sub:
                out[i] = swapped ? yi - x[i] : x[i] - yi;
                break;
            case BinaryKind::Mul:
                out[i] = x[i] * yi;
                break;
        }
    }
    return make_result(a.shape(), std::move(out), {a, b}, [kind, swapped, m](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const std::size_t n = self.grad.size();
        // sign of d out / d a and d out / d b for Add/Sub
        double sa = 1.0, sb = 1.0;
        if (kind == BinaryKind::Sub) {
            if (swapped) sa = -1.0;
            else sb = -1.0;
        }
        if (pa.requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                pa.grad[i] += kind == BinaryKind::Mul ? self.grad[i] * pb.value[i % m] : sa * self.grad[i];
            }
        }
        if (pb.requires_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                pb.grad[i % m] += kind == BinaryKind::Mul ? self.grad[i] * pa.value[i] : sb * self.grad[i];
            }
        }
    });
}

}  // namespace detail

/// Elementwise with broadcasting of a trailing-shape (or single-element) operand.
inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::Add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::Sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::Mul, "mul"); }

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor abs(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::abs(x); },
                         [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
}

inline Tensor silu(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

/// a [..., m, k] @ b [k, n] -> [..., m, n], or batched a [B, m, k] @ b [B, k, n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw detail::shape_error("matmul", a.shape(), b.shape());
    const int k = a.dim(-1);
    if (b.dim(-2) != k) throw detail::shape_error("matmul", a.shape(), b.shape());
    const int n = b.dim(-1);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    if (b.rank() == 2) {
        const int rows = static_cast<int>(a.size() / k);
        Buffer out(static_cast<std::size_t>(rows) * n);
        detail::MapMat(out.data(), rows, n).noalias() =
            detail::CMapMat(a.values().data(), rows, k) * detail::CMapMat(b.values().data(), k, n);
        return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            detail::CMapMat g(self.grad.data(), rows, n);
            if (pa.requires_grad) {
                detail::MapMat(pa.grad.data(), rows, k).noalias() += g * detail::CMapMat(pb.value.data(), k, n).transpose();
            }
            if (pb.requires_grad) {
                detail::MapMat(pb.grad.data(), k, n).noalias() += detail::CMapMat(pa.value.data(), rows, k).transpose() * g;
            }
        });
    }
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) throw detail::shape_error("matmul", a.shape(), b.shape());
    const int batch = a.dim(0);
    const int m = a.dim(1);
    Buffer out(static_cast<std::size_t>(batch) * m * n);
    for (int i = 0; i < batch; ++i) {
        detail::MapMat(out.data() + static_cast<std::size_t>(i) * m * n, m, n).noalias() =
            detail::CMapMat(a.values().data() + static_cast<std::size_t>(i) * m * k, m, k) *
            detail::CMapMat(b.values().data() + static_cast<std::size_t>(i) * k * n, k, n);
    }
    return make_result(std::move(out_shape), std::move(out), {a, b}, [batch, m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int i = 0; i < batch; ++i) {
            detail::CMapMat g(self.grad.data() + static_cast<std::size_t>(i) * m * n, m, n);
            if (pa.requires_grad) {
                detail::MapMat(pa.grad.data() + static_cast<std::size_t>(i) * m * k, m, k).noalias() +=
                    g * detail::CMapMat(pb.value.data() + static_cast<std::size_t>(i) * k * n, k, n).transpose();
            }
            if (pb.requires_grad) {
                detail::MapMat(pb.grad.data() + static_cast<std::size_t>(i) * k * n, k, n).noalias() +=
                    detail::CMapMat(pa.value.data() + static_cast<std::size_t>(i) * m * k, m, k).transpose() * g;
            }
        }
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Buffer out(a.values().begin(), a.values().end());
    return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

/// Swaps two axes.
inline Tensor transpose(const Tensor& a, int axis0 = -2, int axis1 = -1) {
    const int r = a.rank();
    axis0 = detail::norm_axis(axis0, r, "transpose");
    axis1 = detail::norm_axis(axis1, r, "transpose");
    Shape out_shape = a.shape();
    std::swap(out_shape[axis0], out_shape[axis1]);
    // in_strides permuted to output order
    std::vector<std::size_t> in_strides(r);
    std::size_t acc = 1;
    for (int i = r - 1; i >= 0; --i) {
        in_strides[i] = acc;
        acc *= a.shape()[i];
    }
    std::swap(in_strides[axis0], in_strides[axis1]);
    const std::size_t n = a.size();
    std::vector<std::size_t> src(n);
    std::vector<int> idx(r, 0);
    std::size_t offset = 0;
    for (std::size_t o = 0; o < n; ++o) {
        src[o] = offset;
        for (int d = r - 1; d >= 0; --d) {
            ++idx[d];
            offset += in_strides[d];
            if (idx[d] < out_shape[d]) break;
            offset -= in_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Buffer out(n);
    const auto x = a.values();
    for (std::size_t o = 0; o < n; ++o) out[o] = x[src[o]];
    return make_result(std::move(out_shape), std::move(out), {a}, [src = std::move(src)](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < self.grad.size(); ++o) p.grad[src[o]] += self.grad[o];
    });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int r = parts[0].rank();
    axis = detail::norm_axis(axis, r, "concat");
    Shape out_shape = parts[0].shape();
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (static_cast<int>(s.size()) != r) throw detail::shape_error("concat", parts[0].shape(), s);
        for (int i = 0; i < r; ++i) {
            if (i != axis && s[i] != parts[0].shape()[i]) throw detail::shape_error("concat", parts[0].shape(), s);
        }
        out_shape[axis] += s[axis];
    }
    std::size_t outer, len, inner;
    detail::split_around(out_shape, axis, outer, len, inner);
    Buffer out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t plen = p.shape()[axis];
        const auto x = p.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(x.begin() + o * plen * inner, plen * inner, out.begin() + (o * len + off) * inner);
        }
        off += plen;
    }
    std::vector<std::size_t> lens;
    for (const auto& p : parts) lens.push_back(p.shape()[axis]);
    return make_result(std::move(out_shape), std::move(out), parts, [offsets, lens, outer, len, inner](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < lens[k] * inner; ++i) {
                    p.grad[o * lens[k] * inner + i] += self.grad[(o * len + offsets[k]) * inner + i];
                }
            }
        }
    });
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, int axis, int begin, int end) {
    axis = detail::norm_axis(axis, a.rank(), "slice");
    if (begin < 0 || end > a.shape()[axis] || begin >= end) {
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") invalid for shape " + shape_str(a.shape()));
    }
    std::size_t outer, len, inner;
    detail::split_around(a.shape(), axis, outer, len, inner);
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t w = static_cast<std::size_t>(end - begin) * inner;
    Buffer out(outer * w);
    const auto x = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.begin() + (o * len + begin) * inner, w, out.begin() + o * w);
    }
    return make_result(std::move(out_shape), std::move(out), {a}, [outer, len, inner, begin, w](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < w; ++i) p.grad[(o * len + begin) * inner + i] += self.grad[o * w + i];
        }
    });
}

inline Tensor sum(const Tensor& a) {
    const auto x = a.values();
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    return make_result({}, {s}, {a}, [](Node& self) {
        Node& p = *self.parents[0];
        for (double& g : p.grad) g += self.grad[0];
    });
}

/// Sum over one axis, which is removed.
inline Tensor sum(const Tensor& a, int axis) {
    axis = detail::norm_axis(axis, a.rank(), "sum");
    std::size_t outer, len, inner;
    detail::split_around(a.shape(), axis, outer, len, inner);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + axis);
    Buffer out(outer * inner, 0.0);
    const auto x = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t l = 0; l < len; ++l) {
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
        }
    }
    return make_result(std::move(out_shape), std::move(out), {a}, [outer, len, inner](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t l = 0; l < len; ++l) {
                for (std::size_t i = 0; i < inner; ++i) p.grad[(o * len + l) * inner + i] += self.grad[o * inner + i];
            }
        }
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor mean(const Tensor& a, int axis) {
    const int ax = detail::norm_axis(axis, a.rank(), "mean");
    return scale(sum(a, ax), 1.0 / a.shape()[ax]);
}

/// Softmax over the last axis of `scale * a`.
inline Tensor softmax(const Tensor& a, double scale = 1.0) {
    if (a.rank() < 1) throw std::invalid_argument("softmax: scalar input");
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.size() / cols;
    Buffer out(a.size());
    const auto x = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        Eigen::Map<const Eigen::ArrayXd> xr(x.data() + r * cols, cols);
        Eigen::Map<Eigen::ArrayXd> yr(out.data() + r * cols, cols);
        yr = (scale * (xr - xr.maxCoeff())).exp();
        yr /= yr.sum();
    }
    return make_result(a.shape(), std::move(out), {a}, [rows, cols, scale](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += scale * y[c] * (g[c] - dot);
        }
    });
}

/// Normalizes over the last axis; `gamma`/`beta` (shape [last]) are optional.
inline Tensor layer_norm(const Tensor& a, const Tensor& gamma = {}, const Tensor& beta = {}, double eps = 1e-6) {
    if (a.rank() < 1) throw std::invalid_argument("layer_norm: scalar input");
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.size() / cols;
    if (gamma.defined() && gamma.size() != cols) throw detail::shape_error("layer_norm", a.shape(), gamma.shape());
    if (beta.defined() && beta.size() != cols) throw detail::shape_error("layer_norm", a.shape(), beta.shape());
    Buffer xhat(a.size()), out(a.size()), inv_std(rows);
    const auto x = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= cols;
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= cols;
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (xr[c] - mu) * inv_std[r];
            xhat[r * cols + c] = h;
            out[r * cols + c] = h * (gamma.defined() ? gamma[c] : 1.0) + (beta.defined() ? beta[c] : 0.0);
        }
    }
    std::vector<Tensor> inputs{a};
    const bool has_gamma = gamma.defined(), has_beta = beta.defined();
    if (has_gamma) inputs.push_back(gamma);
    if (has_beta) inputs.push_back(beta);
    return make_result(a.shape(), std::move(out), inputs,
                       [rows, cols, has_gamma, has_beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           Node& px = *self.parents[0];
                           Node* pg = has_gamma ? self.parents[1].get() : nullptr;
                           Node* pb = has_beta ? self.parents[has_gamma ? 2 : 1].get() : nullptr;
                           Buffer dxhat(cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* g = self.grad.data() + r * cols;
                               const double* h = xhat.data() + r * cols;
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t c = 0; c < cols; ++c) {
                                   dxhat[c] = g[c] * (pg ? pg->value[c] : 1.0);
                                   s1 += dxhat[c];
                                   s2 += dxhat[c] * h[c];
                                   if (pg && pg->requires_grad) pg->grad[c] += g[c] * h[c];
                                   if (pb && pb->requires_grad) pb->grad[c] += g[c];
                               }
                               if (px.requires_grad) {
                                   const double k = inv_std[r] / static_cast<double>(cols);
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       px.grad[r * cols + c] += k * (cols * dxhat[c] - s1 - h[c] * s2);
                                   }
                               }
                           }
                       });
}

/// Rows of `table` [V, d] picked by `indices` -> [n, d].
inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
    if (table.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
    const int vocab = table.dim(0);
    const int d = table.dim(1);
    Buffer out(indices.size() * d);
    const auto w = table.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= vocab) {
            throw std::invalid_argument("embedding_lookup: index " + std::to_string(indices[i]) +
                                        " outside vocabulary of size " + std::to_string(vocab));
        }
        std::copy_n(w.begin() + static_cast<std::size_t>(indices[i]) * d, d, out.begin() + i * d);
    }
    return make_result({static_cast<int>(indices.size()), d}, std::move(out), {table}, [indices, d](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < indices.size(); ++i) {
            for (int c = 0; c < d; ++c) p.grad[static_cast<std::size_t>(indices[i]) * d + c] += self.grad[i * d + c];
        }
    });
}

/// Keeps large tensor buffers on the heap instead of fresh mmap regions.
/// Graphs allocate and free many multi-megabyte buffers per step; with the
/// default glibc thresholds each one costs a round of page faults.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

// ---------------------------------------------------------------------------
// Parameters, optimizer, checkpoints.

class ParameterStore {
   public:
    Tensor add(const std::string& name, Shape shape, std::vector<double> init) {
        for (const auto& [n, _] : entries_) {
            if (n == name) throw std::invalid_argument("duplicate parameter name " + name);
        }
        Tensor t = Tensor::parameter(std::move(shape), std::move(init));
        entries_.emplace_back(name, t);
        return t;
    }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        for (const auto& [_, t] : entries_) out.push_back(t);
        return out;
    }
    Tensor get(const std::string& name) const {
        for (const auto& [n, t] : entries_) {
            if (n == name) return t;
        }
        throw std::invalid_argument("no parameter named " + name);
    }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.size();
        return n;
    }
    void zero_grad() {
        for (auto& [_, t] : entries_) t.zero_grad();
    }

   private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

inline std::vector<double> uniform_init(std::size_t n, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> out(n);
    for (double& v : out) v = dist(rng);
    return out;
}

inline std::vector<double> normal_init(std::size_t n, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> out(n);
    for (double& v : out) v = dist(rng);
    return out;
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction.
class Adam {
   public:
    Adam(std::vector<Tensor> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void set_lr(double lr) { opts_.lr = lr; }
    double lr() const { return opts_.lr; }
    long step_count() const { return t_; }
    const AdamOptions& options() const { return opts_; }

    void step() {
        for (const auto& p : params_) {
            if (!p.has_grad()) throw std::logic_error("Adam::step: parameter without gradient");
        }
        ++t_;
        const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto w = params_[k].mutable_values();
            const auto g = params_[k].grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
                w[i] -= opts_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

   private:
    std::vector<Tensor> params_;
    AdamOptions opts_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

inline constexpr const char* kCheckpointFormat = "qgst-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Writes `dir/manifest.json` (names, shapes, offsets, plus `extra`) and
/// `dir/params.bin` (little-endian float64, manifest order).
inline void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir,
                            const nlohmann::json& extra = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}};
    nlohmann::json entries = nlohmann::json::array();
    std::size_t offset = 0;
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
    for (const auto& [name, t] : store.entries()) {
        entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        for (double v : t.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            unsigned char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
            bin.write(reinterpret_cast<const char*>(bytes), 8);
        }
        offset += t.size();
    }
    manifest["parameters"] = entries;
    manifest["extra"] = extra;
    std::ofstream js(dir / "manifest.json", std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    js << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
    std::ifstream js(dir / "manifest.json", std::ios::binary);
    if (!js) throw std::runtime_error("checkpoint " + dir.string() + " has no manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("checkpoint manifest is malformed: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != kCheckpointFormat) throw std::invalid_argument("not a qgst checkpoint: " + dir.string());
    if (manifest.value("version", -1) != kCheckpointVersion) {
        throw std::invalid_argument("unsupported checkpoint version in " + dir.string());
    }
    return manifest;
}

/// Loads values into `store`; names and shapes must match the manifest exactly.
inline nlohmann::json load_checkpoint(ParameterStore& store, const std::filesystem::path& dir) {
    const nlohmann::json manifest = read_manifest(dir);
    const auto& entries = manifest.at("parameters");
    if (entries.size() != store.entries().size()) {
        throw std::invalid_argument("checkpoint has " + std::to_string(entries.size()) + " parameters, model expects " +
                                    std::to_string(store.entries().size()));
    }
    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint " + dir.string() + " has no params.bin");
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (raw.size() != store.scalar_count() * 8) throw std::invalid_argument("checkpoint params.bin has the wrong size");
    std::size_t k = 0;
    for (const auto& [name, t_const] : store.entries()) {
        const auto& e = entries[k++];
        if (e.at("name").get<std::string>() != name) {
            throw std::invalid_argument("checkpoint parameter '" + e.at("name").get<std::string>() + "' where model expects '" +
                                        name + "'");
        }
        if (e.at("shape").get<Shape>() != t_const.shape()) {
            throw std::invalid_argument("checkpoint parameter '" + name + "' has shape " +
                                        shape_str(e.at("shape").get<Shape>()) + ", model expects " +
                                        shape_str(t_const.shape()));
        }
        Tensor t = t_const;
        auto w = t.mutable_values();
        const std::size_t offset = e.at("offset").get<std::size_t>();
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[(offset + i) * 8 + b]) << (8 * b);
            std::memcpy(&w[i], &bits, sizeof bits);
        }
    }
    return manifest;
}

}  // namespace qgst::ad
