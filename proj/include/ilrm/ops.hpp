#pragma once

// Differentiable tensor operations. Every op validates shapes and throws
// DimensionError naming the offending shapes.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ilrm/tensor.hpp"

namespace ilrm {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_rank2(const char* op, const Shape& a) {
    if (a.size() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a));
}

// Generic elementwise unary op: value and derivative as functions of (x, y).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    return make_result<T>(x.shape(), std::move(out), {x}, [df](TensorNode<T>& o) {
        T* gx = grad_of(o, 0);
        if (!gx) return;
        const auto& xd = o.parents[0]->data;
        for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += o.grad[i] * df(xd[i], o.data[i]);
    });
}

} // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& o) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (T* g = detail::grad_of(o, p)) {
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
            }
        }
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("sub", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (T* g = detail::grad_of(o, 1))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    });
}

// Hadamard product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a.shape(), b.shape());
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& o) {
        const auto& ad = o.parents[0]->data;
        const auto& bd = o.parents[1]->data;
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bd[i];
        if (T* g = detail::grad_of(o, 1))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ad[i];
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    return detail::unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
    return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

// Gradient passes only strictly inside (lo, hi).
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    return detail::unary(
        a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
        [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// Exact GELU, x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    return detail::unary(
        a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
        [](T x, T) {
            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        });
}

// ------------------------------------------------------------------ reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = 0;
    for (T v : a.data()) s += v;
    return detail::make_result<T>({1}, {s}, {a}, [](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0)) {
            const std::size_t n = o.parents[0]->data.size();
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[0];
        }
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Mean over the last axis: [..., n] -> [..., 1].
template <class T>
Tensor<T> mean_last(const Tensor<T>& a) {
    const std::size_t n = a.shape().back();
    const std::size_t rows = a.numel() / n;
    std::vector<T> out(rows, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r] += a[r * n + c];
        out[r] /= static_cast<T>(n);
    }
    Shape shape = a.shape();
    shape.back() = 1;
    return detail::make_result<T>(std::move(shape), std::move(out), {a}, [n, rows](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < n; ++c) g[r * n + c] += o.grad[r] / static_cast<T>(n);
    });
}

// Mean squared error between two same-shaped tensors.
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mse", a.shape(), b.shape());
    const std::size_t n = a.numel();
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a[i] - b[i];
        s += d * d;
    }
    return detail::make_result<T>({1}, {s / static_cast<T>(n)}, {a, b}, [n](TensorNode<T>& o) {
        const auto& ad = o.parents[0]->data;
        const auto& bd = o.parents[1]->data;
        const T k = T(2) * o.grad[0] / static_cast<T>(n);
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < n; ++i) g[i] += k * (ad[i] - bd[i]);
        if (T* g = detail::grad_of(o, 1))
            for (std::size_t i = 0; i < n; ++i) g[i] -= k * (ad[i] - bd[i]);
    });
}

// ------------------------------------------------------------- linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2("matmul", a.shape());
    detail::require_rank2("matmul", b.shape());
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    std::vector<T> out(static_cast<std::size_t>(m * n));
    detail::MatMap<T>(out.data(), m, n).noalias() =
        detail::ConstMatMap<T>(a.data().data(), m, k) * detail::ConstMatMap<T>(b.data().data(), k, n);
    return detail::make_result<T>({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](TensorNode<T>& o) {
        const detail::ConstMatMap<T> g(o.grad.data(), m, n);
        if (T* ga = detail::grad_of(o, 0)) {
            detail::MatMap<T>(ga, m, k).noalias() +=
                g * detail::ConstMatMap<T>(o.parents[1]->data.data(), k, n).transpose();
        }
        if (T* gb = detail::grad_of(o, 1)) {
            detail::MatMap<T>(gb, k, n).noalias() +=
                detail::ConstMatMap<T>(o.parents[0]->data.data(), m, k).transpose() * g;
        }
    });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_rank2("transpose", a.shape());
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return detail::make_result<T>({c, r}, std::move(out), {a}, [r, c](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

// ------------------------------------------------------------------ reshaping

// Reinterprets the row-major element sequence under a new shape.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    return detail::make_result<T>(std::move(shape), std::move(out), {a}, [](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
    detail::require_rank2("slice_cols", a.shape());
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (start + count > cols) {
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") out of range for " + shape_str(a.shape()));
    }
    std::vector<T> out(rows * count);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out[r * count + c] = a[r * cols + start + c];
    return detail::make_result<T>({rows, count}, std::move(out), {a}, [rows, cols, start, count](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < count; ++c) g[r * cols + start + c] += o.grad[r * count + c];
    });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].dim(0);
    std::vector<std::size_t> offsets;
    std::size_t cols = 0;
    for (const auto& p : parts) {
        detail::require_rank2("concat_cols", p.shape());
        if (p.dim(0) != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        offsets.push_back(cols);
        cols += p.dim(1);
    }
    std::vector<T> out(rows * cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) out[r * cols + offsets[k] + c] = parts[k][r * w + c];
    }
    return detail::make_result<T>({rows, cols}, std::move(out), parts, [rows, cols, offsets](TensorNode<T>& o) {
        for (std::size_t k = 0; k < o.parents.size(); ++k) {
            T* g = detail::grad_of(o, k);
            if (!g) continue;
            const std::size_t w = o.parents[k]->shape[1];
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < w; ++c) g[r * w + c] += o.grad[r * cols + offsets[k] + c];
        }
    });
}

// Stacks matrices with equal column counts vertically.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        detail::require_rank2("concat_rows", p.shape());
        if (p.dim(1) != cols) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        rows += p.dim(0);
    }
    std::vector<T> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return detail::make_result<T>({rows, cols}, std::move(out), parts, [](TensorNode<T>& o) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < o.parents.size(); ++k) {
            const std::size_t n = o.parents[k]->data.size();
            if (T* g = detail::grad_of(o, k))
                for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[offset + i];
            offset += n;
        }
    });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
    detail::require_rank2("slice_rows", a.shape());
    const std::size_t cols = a.dim(1);
    if (start + count > a.dim(0)) {
        throw DimensionError("slice_rows: rows out of range for " + shape_str(a.shape()));
    }
    std::vector<T> out(a.data().begin() + static_cast<std::ptrdiff_t>(start * cols),
                       a.data().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
    return detail::make_result<T>({count, cols}, std::move(out), {a}, [start, cols](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[start * cols + i] += o.grad[i];
    });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::vector<std::size_t> index) {
    detail::require_rank2("gather_rows", a.shape());
    const std::size_t cols = a.dim(1);
    std::vector<T> out(index.size() * cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.dim(0)) throw DimensionError("gather_rows: index out of range");
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(index[i] * cols), cols, out.begin() + i * cols);
    }
    Shape shape{index.size(), cols};
    return detail::make_result<T>(std::move(shape), std::move(out), {a},
                                  [index = std::move(index), cols](TensorNode<T>& o) {
                                      if (T* g = detail::grad_of(o, 0))
                                          for (std::size_t i = 0; i < index.size(); ++i)
                                              for (std::size_t c = 0; c < cols; ++c)
                                                  g[index[i] * cols + c] += o.grad[i * cols + c];
                                  });
}

// Copy of `base` whose rows `index` are replaced by the rows of `values`.
template <class T>
Tensor<T> scatter_rows(const Tensor<T>& base, std::vector<std::size_t> index, const Tensor<T>& values) {
    detail::require_rank2("scatter_rows", base.shape());
    const std::size_t cols = base.dim(1);
    if (values.rank() != 2 || values.dim(1) != cols || values.dim(0) != index.size()) {
        throw DimensionError("scatter_rows: values " + shape_str(values.shape()) + " incompatible with base " +
                             shape_str(base.shape()));
    }
    std::vector<T> out(base.data().begin(), base.data().end());
    std::vector<char> replaced(base.dim(0), 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= base.dim(0)) throw DimensionError("scatter_rows: index out of range");
        replaced[index[i]] = 1;
        std::copy_n(values.data().begin() + static_cast<std::ptrdiff_t>(i * cols), cols,
                    out.begin() + static_cast<std::ptrdiff_t>(index[i] * cols));
    }
    return detail::make_result<T>(
        base.shape(), std::move(out), {base, values},
        [index = std::move(index), replaced = std::move(replaced), cols](TensorNode<T>& o) {
            if (T* g = detail::grad_of(o, 0))
                for (std::size_t r = 0; r < replaced.size(); ++r)
                    if (!replaced[r])
                        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += o.grad[r * cols + c];
            if (T* g = detail::grad_of(o, 1))
                for (std::size_t i = 0; i < index.size(); ++i)
                    for (std::size_t c = 0; c < cols; ++c) g[i * cols + c] += o.grad[index[i] * cols + c];
        });
}

// Splits an H x W x C map into non-overlapping p x p patches. Rows follow the
// raster order of patches; inside a row, pixels are row-major with their C
// channels contiguous.
template <class T>
Tensor<T> patchify(const Tensor<T>& map, std::size_t p) {
    if (map.rank() != 3) throw DimensionError("patchify: expected HxWxC, got " + shape_str(map.shape()));
    const std::size_t h = map.dim(0), w = map.dim(1), c = map.dim(2);
    if (p == 0 || h % p != 0 || w % p != 0) {
        throw ValidationError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                              " is not divisible by patch size " + std::to_string(p));
    }
    const std::size_t ph = h / p, pw = w / p, row = c * p * p;
    std::vector<std::size_t> src(h * w * c);
    for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px)
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t q = 0; q < p; ++q)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        src[(py * pw + px) * row + (r * p + q) * c + ch] = ((py * p + r) * w + px * p + q) * c + ch;
    std::vector<T> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = map[src[i]];
    return detail::make_result<T>({ph * pw, row}, std::move(out), {map}, [src = std::move(src)](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o.grad[i];
    });
}

// Inverse of patchify: (h/p * w/p) x (c p^2) -> h x w x c.
template <class T>
Tensor<T> unpatchify(const Tensor<T>& patches, std::size_t h, std::size_t w, std::size_t p) {
    detail::require_rank2("unpatchify", patches.shape());
    if (p == 0 || h % p != 0 || w % p != 0) throw ValidationError("unpatchify: size not divisible by patch");
    const std::size_t ph = h / p, pw = w / p;
    if (patches.dim(0) != ph * pw || patches.dim(1) % (p * p) != 0) {
        throw DimensionError("unpatchify: " + shape_str(patches.shape()) + " does not tile " + std::to_string(h) +
                             "x" + std::to_string(w) + " with p=" + std::to_string(p));
    }
    const std::size_t c = patches.dim(1) / (p * p), row = c * p * p;
    std::vector<std::size_t> dst(h * w * c);
    for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px)
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t q = 0; q < p; ++q)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        dst[(py * pw + px) * row + (r * p + q) * c + ch] = ((py * p + r) * w + px * p + q) * c + ch;
    std::vector<T> out(dst.size());
    for (std::size_t i = 0; i < dst.size(); ++i) out[dst[i]] = patches[i];
    return detail::make_result<T>({h, w, c}, std::move(out), {patches}, [dst = std::move(dst)](TensorNode<T>& o) {
        if (T* g = detail::grad_of(o, 0))
            for (std::size_t i = 0; i < dst.size(); ++i) g[i] += o.grad[dst[i]];
    });
}

// ------------------------------------------------------------- normalization

// Row-wise LayerNorm over the last axis with a learned scale and no bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& weight, T eps = T(1e-5)) {
    const std::size_t d = x.rank() ? x.shape().back() : 0;
    if (d == 0) throw DimensionError("layer_norm: last dimension is zero in " + shape_str(x.shape()));
    if (weight.numel() != d) {
        throw DimensionError("layer_norm: scale " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel()), xhat(x.numel()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data().data() + r * d;
        T mu = 0;
        for (std::size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<T>(d);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            xhat[r * d + i] = (xr[i] - mu) * inv_std[r];
            out[r * d + i] = xhat[r * d + i] * weight[i];
        }
    }
    return detail::make_result<T>(
        x.shape(), std::move(out), {x, weight},
        [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& o) {
            const auto& wd = o.parents[1]->data;
            T* gx = detail::grad_of(o, 0);
            T* gw = detail::grad_of(o, 1);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* g = o.grad.data() + r * d;
                const T* xh = xhat.data() + r * d;
                if (gw)
                    for (std::size_t i = 0; i < d; ++i) gw[i] += g[i] * xh[i];
                if (!gx) continue;
                T mean_gy = 0, mean_gy_xh = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    const T gy = g[i] * wd[i];
                    mean_gy += gy;
                    mean_gy_xh += gy * xh[i];
                }
                mean_gy /= static_cast<T>(d);
                mean_gy_xh /= static_cast<T>(d);
                for (std::size_t i = 0; i < d; ++i)
                    gx[r * d + i] += inv_std[r] * (g[i] * wd[i] - mean_gy - xh[i] * mean_gy_xh);
            }
        });
}

// Row-wise RMSNorm over the last axis with a learned scale.
template <class T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& weight, T eps = T(1e-6)) {
    const std::size_t h = x.rank() ? x.shape().back() : 0;
    if (h == 0) throw DimensionError("rms_norm: last dimension is zero in " + shape_str(x.shape()));
    if (weight.numel() != h) {
        throw DimensionError("rms_norm: scale " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / h;
    std::vector<T> out(x.numel()), inv_rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data().data() + r * h;
        T ms = 0;
        for (std::size_t i = 0; i < h; ++i) ms += xr[i] * xr[i];
        ms /= static_cast<T>(h);
        inv_rms[r] = T(1) / std::sqrt(ms + eps);
        for (std::size_t i = 0; i < h; ++i) out[r * h + i] = xr[i] * inv_rms[r] * weight[i];
    }
    return detail::make_result<T>(x.shape(), std::move(out), {x, weight},
                                  [h, rows, inv_rms = std::move(inv_rms)](TensorNode<T>& o) {
                                      const auto& xd = o.parents[0]->data;
                                      const auto& wd = o.parents[1]->data;
                                      T* gx = detail::grad_of(o, 0);
                                      T* gw = detail::grad_of(o, 1);
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          const T* g = o.grad.data() + r * h;
                                          const T* xr = xd.data() + r * h;
                                          const T s = inv_rms[r];
                                          if (gw)
                                              for (std::size_t i = 0; i < h; ++i) gw[i] += g[i] * xr[i] * s;
                                          if (!gx) continue;
                                          T dot = 0;
                                          for (std::size_t i = 0; i < h; ++i) dot += g[i] * wd[i] * xr[i];
                                          const T k = dot * s * s * s / static_cast<T>(h);
                                          for (std::size_t i = 0; i < h; ++i)
                                              gx[r * h + i] += g[i] * wd[i] * s - xr[i] * k;
                                      }
                                  });
}

// Softmax over the last axis with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    std::vector<T> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data().data() + r * n;
        T* yr = out.data() + r * n;
        const T mx = *std::max_element(xr, xr + n);
        T s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            s += yr[i];
        }
        for (std::size_t i = 0; i < n; ++i) yr[i] /= s;
    }
    return detail::make_result<T>(x.shape(), std::move(out), {x}, [n, rows](TensorNode<T>& o) {
        T* gx = detail::grad_of(o, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = o.data.data() + r * n;
            const T* g = o.grad.data() + r * n;
            T dot = 0;
            for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
            for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[i] * (g[i] - dot);
        }
    });
}

// Normalizes each row to unit L2 length. Rows with norm below `guard` map to
// `fallback` (which must have the row length) and receive no gradient.
template <class T>
Tensor<T> normalize_rows(const Tensor<T>& x, std::vector<T> fallback, T guard = T(1e-8)) {
    detail::require_rank2("normalize_rows", x.shape());
    const std::size_t rows = x.dim(0), n = x.dim(1);
    if (fallback.size() != n) throw DimensionError("normalize_rows: fallback length mismatch");
    std::vector<T> out(x.numel()), norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        T s = 0;
        for (std::size_t i = 0; i < n; ++i) s += x[r * n + i] * x[r * n + i];
        norms[r] = std::sqrt(s);
        for (std::size_t i = 0; i < n; ++i)
            out[r * n + i] = norms[r] < guard ? fallback[i] : x[r * n + i] / norms[r];
    }
    return detail::make_result<T>(x.shape(), std::move(out), {x},
                                  [rows, n, guard, norms = std::move(norms)](TensorNode<T>& o) {
                                      T* gx = detail::grad_of(o, 0);
                                      if (!gx) return;
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          if (norms[r] < guard) continue;
                                          const T* y = o.data.data() + r * n;
                                          const T* g = o.grad.data() + r * n;
                                          T dot = 0;
                                          for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
                                          for (std::size_t i = 0; i < n; ++i)
                                              gx[r * n + i] += (g[i] - y[i] * dot) / norms[r];
                                      }
                                  });
}

} // namespace ilrm
