#pragma once

// Differentiable primitives. Shapes are checked eagerly; a mismatch throws
// ShapeError naming the primitive and both operand shapes.
//
// Conventions: "matrix" means rank 2. Row-wise primitives (gather, scatter,
// segment reductions) also accept rank-1 operands, treated as one column.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gunet/tensor.hpp"

namespace gunet {

namespace detail {

inline void require_matrix(const char* op, const Tensor& t, const Tensor& other) {
    if (t.rank() != 2) throw ShapeError(op, t.shape(), other.shape(), "expected a matrix");
}

inline bool wants_grad(const std::shared_ptr<TensorImpl>& t) { return t->requires_grad; }

/// Shape of a row-wise result with `rows` rows and the inner extents of `like`.
inline Shape with_rows(const Tensor& like, std::size_t rows) {
    Shape s = like.shape();
    if (s.empty()) s.push_back(rows);
    else s[0] = rows;
    return s;
}

}  // namespace detail

/// [n,k] x [k,m] -> [n,m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix("matmul", a, b);
    detail::require_matrix("matmul", b, a);
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape(), "inner extents differ");
    std::vector<double> out(n * m, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
        }
    }
    return detail::make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](detail::TensorImpl& self) {
        auto& ai = self.inputs[0];
        auto& bi = self.inputs[1];
        const double* G = self.grad.data();
        if (detail::wants_grad(ai)) {
            auto& ga = ai->grad_buffer();
            const double* B = bi->data.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = G + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = B + p * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (detail::wants_grad(bi)) {
            auto& gb = bi->grad_buffer();
            const double* A = ai->data.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* grow = G + i * m;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

/// x [n,m] + b broadcast over rows; b is [m] or [1,m].
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    detail::require_matrix("add_bias", x, b);
    const std::size_t n = x.dim(0), m = x.dim(1);
    if (b.numel() != m || b.rank() > 2 || (b.rank() == 2 && b.dim(0) != 1)) {
        throw ShapeError("add_bias", x.shape(), b.shape(), "bias must have one entry per column");
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bd[j];
    return detail::make_result("add_bias", {n, m}, std::move(out), {x, b}, [n, m](detail::TensorImpl& self) {
        if (detail::wants_grad(self.inputs[0])) {
            auto& gx = self.inputs[0]->grad_buffer();
            for (std::size_t i = 0; i < n * m; ++i) gx[i] += self.grad[i];
        }
        if (detail::wants_grad(self.inputs[1])) {
            auto& gb = self.inputs[1]->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) gb[j] += self.grad[i * m + j];
        }
    });
}

/// Concatenate matrices with equal row counts along the last axis.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols", {}, {}, "no operands");
    const std::size_t n = parts.front().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_matrix("concat_cols", p, parts.front());
        if (p.dim(0) != n) throw ShapeError("concat_cols", parts.front().shape(), p.shape(), "row counts differ");
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(n * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto d = parts[k].data();
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(i * w), w, out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
        offset += w;
    }
    return detail::make_result("concat_cols", {n, total}, std::move(out), parts,
                               [n, total, widths](detail::TensorImpl& self) {
                                   std::size_t off = 0;
                                   for (std::size_t k = 0; k < widths.size(); ++k) {
                                       const std::size_t w = widths[k];
                                       if (detail::wants_grad(self.inputs[k])) {
                                           auto& g = self.inputs[k]->grad_buffer();
                                           for (std::size_t i = 0; i < n; ++i)
                                               for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
                                       }
                                       off += w;
                                   }
                               });
}

/// Stack matrices with equal widths along the first axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows", {}, {}, "no operands");
    const std::size_t m = parts.front().cols();
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_matrix("concat_rows", p, parts.front());
        if (p.dim(1) != m) throw ShapeError("concat_rows", parts.front().shape(), p.shape(), "widths differ");
        counts.push_back(p.numel());
        total += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(total * m);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return detail::make_result("concat_rows", {total, m}, std::move(out), parts, [counts](detail::TensorImpl& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (detail::wants_grad(self.inputs[k])) {
                auto& g = self.inputs[k]->grad_buffer();
                for (std::size_t i = 0; i < counts[k]; ++i) g[i] += self.grad[off + i];
            }
            off += counts[k];
        }
    });
}

/// max(x, 0); the subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return detail::make_result("relu", x.shape(), std::move(out), {x}, [](detail::TensorImpl& self) {
        auto& in = self.inputs[0];
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (in->data[i] > 0.0) g[i] += self.grad[i];
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add", a.shape(), b.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        for (auto& in : self.inputs) {
            if (!detail::wants_grad(in)) continue;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("sub", a.shape(), b.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        const double sign[2] = {1.0, -1.0};
        for (std::size_t k = 0; k < 2; ++k) {
            if (!detail::wants_grad(self.inputs[k])) continue;
            auto& g = self.inputs[k]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
        }
    });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul", a.shape(), b.shape());
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::TensorImpl& self) {
        auto& ai = self.inputs[0];
        auto& bi = self.inputs[1];
        if (detail::wants_grad(ai)) {
            auto& g = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bi->data[i];
        }
        if (detail::wants_grad(bi)) {
            auto& g = bi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ai->data[i];
        }
    });
}

inline Tensor scale(const Tensor& x, double s) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= s;
    return detail::make_result("scale", x.shape(), std::move(out), {x}, [s](detail::TensorImpl& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) throw ShapeError("reshape", x.shape(), shape, "element counts differ");
    std::vector<double> out(x.data().begin(), x.data().end());
    return detail::make_result("reshape", std::move(shape), std::move(out), {x}, [](detail::TensorImpl& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// out[s] = sum of rows j with segments[j] == s; negative ids are skipped.
inline Tensor segment_sum(const Tensor& values, const std::vector<Index>& segments, std::size_t num_segments) {
    if (values.rank() == 0 || values.rows() != segments.size()) {
        throw ShapeError("segment_sum", values.shape(), Shape{segments.size()}, "one segment id per row");
    }
    const std::size_t w = values.cols();
    for (auto s : segments)
        if (s >= static_cast<Index>(num_segments)) throw ShapeError("segment_sum", values.shape(), Shape{num_segments}, "segment id out of range");
    std::vector<double> out(num_segments * w, 0.0);
    const auto v = values.data();
    for (std::size_t j = 0; j < segments.size(); ++j) {
        if (segments[j] < 0) continue;
        double* dst = out.data() + static_cast<std::size_t>(segments[j]) * w;
        for (std::size_t c = 0; c < w; ++c) dst[c] += v[j * w + c];
    }
    return detail::make_result("segment_sum", detail::with_rows(values, num_segments), std::move(out), {values},
                               [segments, w](detail::TensorImpl& self) {
                                   auto& g = self.inputs[0]->grad_buffer();
                                   for (std::size_t j = 0; j < segments.size(); ++j) {
                                       if (segments[j] < 0) continue;
                                       const double* src = self.grad.data() + static_cast<std::size_t>(segments[j]) * w;
                                       for (std::size_t c = 0; c < w; ++c) g[j * w + c] += src[c];
                                   }
                               });
}

/// Feature-wise maximum per segment. Empty segments are 0. The gradient of
/// each output entry goes to the first row attaining the maximum.
inline Tensor segment_max(const Tensor& values, const std::vector<Index>& segments, std::size_t num_segments) {
    if (values.rank() == 0 || values.rows() != segments.size()) {
        throw ShapeError("segment_max", values.shape(), Shape{segments.size()}, "one segment id per row");
    }
    const std::size_t w = values.cols();
    std::vector<double> out(num_segments * w, 0.0);
    std::vector<Index> argmax(num_segments * w, -1);
    const auto v = values.data();
    for (std::size_t j = 0; j < segments.size(); ++j) {
        const Index s = segments[j];
        if (s < 0) continue;
        if (s >= static_cast<Index>(num_segments)) throw ShapeError("segment_max", values.shape(), Shape{num_segments}, "segment id out of range");
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t o = static_cast<std::size_t>(s) * w + c;
            const double x = v[j * w + c];
            if (argmax[o] < 0 || x > out[o]) {
                out[o] = x;
                argmax[o] = static_cast<Index>(j);
            }
        }
    }
    return detail::make_result("segment_max", detail::with_rows(values, num_segments), std::move(out), {values},
                               [argmax = std::move(argmax), w](detail::TensorImpl& self) {
                                   auto& g = self.inputs[0]->grad_buffer();
                                   for (std::size_t o = 0; o < argmax.size(); ++o) {
                                       if (argmax[o] < 0) continue;
                                       g[static_cast<std::size_t>(argmax[o]) * w + o % w] += self.grad[o];
                                   }
                               });
}

/// out[j] = x[index[j]]; index -1 yields a zero row.
inline Tensor gather_rows(const Tensor& x, const std::vector<Index>& index) {
    if (x.rank() == 0) throw ShapeError("gather_rows", x.shape(), Shape{index.size()}, "cannot gather from a scalar");
    const std::size_t w = x.cols();
    const std::size_t n = x.rows();
    std::vector<double> out(index.size() * w, 0.0);
    const auto d = x.data();
    for (std::size_t j = 0; j < index.size(); ++j) {
        const Index r = index[j];
        if (r < 0) continue;
        if (static_cast<std::size_t>(r) >= n) throw ShapeError("gather_rows", x.shape(), Shape{index.size()}, "row index out of range");
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(r) * w), w,
                    out.begin() + static_cast<std::ptrdiff_t>(j * w));
    }
    return detail::make_result("gather_rows", detail::with_rows(x, index.size()), std::move(out), {x},
                               [index, w](detail::TensorImpl& self) {
                                   auto& g = self.inputs[0]->grad_buffer();
                                   for (std::size_t j = 0; j < index.size(); ++j) {
                                       if (index[j] < 0) continue;
                                       double* dst = g.data() + static_cast<std::size_t>(index[j]) * w;
                                       for (std::size_t c = 0; c < w; ++c) dst[c] += self.grad[j * w + c];
                                   }
                               });
}

/// out[index[j]] = x[j] into `num_rows` rows; indices must be distinct.
/// Rows not written are zero.
inline Tensor scatter_rows(const Tensor& x, const std::vector<Index>& index, std::size_t num_rows) {
    if (x.rank() == 0 || x.rows() != index.size()) {
        throw ShapeError("scatter_rows", x.shape(), Shape{index.size()}, "one target row per input row");
    }
    std::vector<char> used(num_rows, 0);
    for (auto r : index) {
        if (r < 0 || static_cast<std::size_t>(r) >= num_rows) throw ShapeError("scatter_rows", x.shape(), Shape{num_rows}, "target row out of range");
        if (used[static_cast<std::size_t>(r)]++) throw ShapeError("scatter_rows", x.shape(), Shape{num_rows}, "duplicate target row");
    }
    return segment_sum(x, index, num_rows);
}

/// [n,m] -> [1,m]
inline Tensor sum_rows(const Tensor& x) {
    detail::require_matrix("sum_rows", x, x);
    return segment_sum(x, std::vector<Index>(x.dim(0), 0), 1);
}

/// [1,m] -> [n,m]
inline Tensor tile_rows(const Tensor& x, std::size_t n) {
    detail::require_matrix("tile_rows", x, x);
    if (x.dim(0) != 1) throw ShapeError("tile_rows", x.shape(), Shape{n, x.dim(1)}, "expected a single row");
    return gather_rows(x, std::vector<Index>(n, 0));
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return detail::make_result("sum", {}, {acc}, {x}, [](detail::TensorImpl& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean", x.shape(), {}, "mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// mean((pred - target)^2)
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) throw ShapeError("mse_loss", pred.shape(), target.shape());
    const auto d = sub(pred, target);
    return mean(mul(d, d));
}

/// relu-free affine map x W + b.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

}  // namespace gunet
