#pragma once

#include "matxfer/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace matxfer::ad {

namespace detail {

template <typename Scalar>
MatX<Scalar> broadcast(const MatX<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
    if (a.rows() == rows && a.cols() == cols) return a;
    if (a.rows() == 1 && a.cols() == 1) return MatX<Scalar>::Constant(rows, cols, a(0, 0));
    if (a.rows() == 1 && a.cols() == cols) return a.replicate(rows, 1);
    if (a.cols() == 1 && a.rows() == rows) return a.replicate(1, cols);
    throw ShapeError("cannot broadcast " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " to " +
                     std::to_string(rows) + "x" + std::to_string(cols));
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename Scalar>
MatX<Scalar> reduce_to(const MatX<Scalar>& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return MatX<Scalar>::Constant(1, 1, g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
}

inline Eigen::Index bdim(Eigen::Index a, Eigen::Index b) {
    if (a == b || b == 1) return a;
    if (a == 1) return b;
    throw ShapeError("incompatible broadcast dimensions " + std::to_string(a) + " and " + std::to_string(b));
}

// Deterministic pairwise summation over a contiguous range.
template <typename Scalar>
Scalar pairwise_sum(const Scalar* x, Eigen::Index n) {
    if (n <= 16) {
        Scalar s = 0;
        for (Eigen::Index i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const Eigen::Index h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

template <typename Scalar, typename Fwd, typename Deriv>
Var<Scalar> unary(Var<Scalar> x, Fwd fwd, Deriv deriv) {
    Tape<Scalar>& t = *x.tape;
    MatX<Scalar> y = x.value().unaryExpr(fwd);
    const int xi = x.id;
    return t.record(std::move(y), {xi}, [xi, deriv](Tape<Scalar>& tp, int self) {
        const auto& xv = tp.value(xi);
        const auto& yv = tp.value(self);
        MatX<Scalar> g = tp.grad(self);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] *= deriv(xv.data()[i], yv.data()[i]);
        tp.accumulate(xi, g);
    });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
    const auto r = detail::bdim(a.rows(), b.rows()), c = detail::bdim(a.cols(), b.cols());
    MatX<Scalar> y = detail::broadcast(a.value(), r, c) + detail::broadcast(b.value(), r, c);
    const int ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ai)) t.accumulate(ai, detail::reduce_to(g, t.value(ai).rows(), t.value(ai).cols()));
        if (t.needs_grad(bi)) t.accumulate(bi, detail::reduce_to(g, t.value(bi).rows(), t.value(bi).cols()));
    });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
    const auto r = detail::bdim(a.rows(), b.rows()), c = detail::bdim(a.cols(), b.cols());
    MatX<Scalar> y = detail::broadcast(a.value(), r, c) - detail::broadcast(b.value(), r, c);
    const int ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ai)) t.accumulate(ai, detail::reduce_to(g, t.value(ai).rows(), t.value(ai).cols()));
        if (t.needs_grad(bi))
            t.accumulate(bi, detail::reduce_to<Scalar>(-g, t.value(bi).rows(), t.value(bi).cols()));
    });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
    const auto r = detail::bdim(a.rows(), b.rows()), c = detail::bdim(a.cols(), b.cols());
    MatX<Scalar> av = detail::broadcast(a.value(), r, c);
    MatX<Scalar> bv = detail::broadcast(b.value(), r, c);
    MatX<Scalar> y = av.cwiseProduct(bv);
    const int ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi, r, c](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ai)) {
            MatX<Scalar> ga = g.cwiseProduct(detail::broadcast(t.value(bi), r, c));
            t.accumulate(ai, detail::reduce_to(ga, t.value(ai).rows(), t.value(ai).cols()));
        }
        if (t.needs_grad(bi)) {
            MatX<Scalar> gb = g.cwiseProduct(detail::broadcast(t.value(ai), r, c));
            t.accumulate(bi, detail::reduce_to(gb, t.value(bi).rows(), t.value(bi).cols()));
        }
    });
}

template <typename Scalar>
Var<Scalar> div(Var<Scalar> a, Var<Scalar> b) {
    const auto r = detail::bdim(a.rows(), b.rows()), c = detail::bdim(a.cols(), b.cols());
    MatX<Scalar> y = detail::broadcast(a.value(), r, c).cwiseQuotient(detail::broadcast(b.value(), r, c));
    const int ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), {ai, bi}, [ai, bi, r, c](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        MatX<Scalar> bv = detail::broadcast(t.value(bi), r, c);
        if (t.needs_grad(ai)) {
            MatX<Scalar> ga = g.cwiseQuotient(bv);
            t.accumulate(ai, detail::reduce_to(ga, t.value(ai).rows(), t.value(ai).cols()));
        }
        if (t.needs_grad(bi)) {
            MatX<Scalar> gb = -g.cwiseProduct(t.value(self)).cwiseQuotient(bv);
            t.accumulate(bi, detail::reduce_to(gb, t.value(bi).rows(), t.value(bi).cols()));
        }
    });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
    return detail::unary(x, [factor](Scalar v) { return v * factor; }, [factor](Scalar, Scalar) { return factor; });
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> x, Scalar c) {
    return detail::unary(x, [c](Scalar v) { return v + c; }, [](Scalar, Scalar) { return Scalar(1); });
}

template <typename Scalar>
Var<Scalar> neg(Var<Scalar> x) {
    return scale(x, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> x) {
    return detail::unary(x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

template <typename Scalar>
Var<Scalar> sqrt(Var<Scalar> x) {
    return detail::unary(
        x, [](Scalar v) { return std::sqrt(v); }, [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> x) {
    return detail::unary(x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

template <typename Scalar>
Var<Scalar> powi(Var<Scalar> x, int n) {
    return detail::unary(
        x, [n](Scalar v) { return static_cast<Scalar>(std::pow(v, n)); },
        [n](Scalar v, Scalar) { return static_cast<Scalar>(n * std::pow(v, n - 1)); });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
    return detail::unary(
        x, [](Scalar v) { return v > 0 ? v : Scalar(0); }, [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar v) {
    return v >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
}

template <typename Scalar>
Scalar softplus_scalar(Scalar v) {
    return v > Scalar(20) ? v : std::log1p(std::exp(v));
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
    return detail::unary(x, [](Scalar v) { return sigmoid_scalar(v); }, [](Scalar, Scalar y) { return y * (1 - y); });
}

/// softplus(x + shift)
template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> x, Scalar shift = 0) {
    return detail::unary(
        x, [shift](Scalar v) { return softplus_scalar(v + shift); },
        [shift](Scalar v, Scalar) { return sigmoid_scalar(v + shift); });
}

template <typename Scalar>
Var<Scalar> clamp_min(Var<Scalar> x, Scalar lo) {
    return detail::unary(
        x, [lo](Scalar v) { return v > lo ? v : lo; }, [lo](Scalar v, Scalar) { return v > lo ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> x, Scalar lo, Scalar hi) {
    return detail::unary(
        x, [lo, hi](Scalar v) { return std::clamp(v, lo, hi); },
        [lo, hi](Scalar v, Scalar) { return (v > lo && v < hi) ? Scalar(1) : Scalar(0); });
}

/// Forward identity; backward multiplies the incoming gradient by `factor`.
template <typename Scalar>
Var<Scalar> grad_scale(Var<Scalar> x, Scalar factor) {
    if (!(factor >= 0) || !std::isfinite(static_cast<double>(factor)))
        throw ContractError("grad_scale factor must be finite and non-negative");
    MatX<Scalar> y = x.value();
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, factor](Tape<Scalar>& t, int self) {
        t.accumulate(xi, factor * t.grad(self));
    });
}

template <typename Scalar>
Var<Scalar> detach(Var<Scalar> x) {
    return x.tape->constant(x.value());
}

/// Sum of all entries (pairwise order) as a 1x1 node.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
    MatX<Scalar> y(1, 1);
    y(0, 0) = detail::pairwise_sum(x.value().data(), x.value().size());
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi](Tape<Scalar>& t, int self) {
        const Scalar g = t.grad(self)(0, 0);
        t.grad(xi).array() += g;
    });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
    const auto n = x.value().size();
    return scale(sum(x), n > 0 ? Scalar(1) / static_cast<Scalar>(n) : Scalar(0));
}

/// Per-row sum: N x k -> N x 1.
template <typename Scalar>
Var<Scalar> row_sum(Var<Scalar> x) {
    MatX<Scalar> y = x.value().rowwise().sum();
    const int xi = x.id;
    const auto k = x.cols();
    return x.tape->record(std::move(y), {xi}, [xi, k](Tape<Scalar>& t, int self) {
        t.accumulate(xi, t.grad(self).replicate(1, k));
    });
}

template <typename Scalar>
Var<Scalar> dot_rows(Var<Scalar> a, Var<Scalar> b) {
    return row_sum(mul(a, b));
}

/// Normalizes each row to unit length; rows with norm below `eps` are
/// divided by eps instead.
template <typename Scalar>
Var<Scalar> normalize_rows(Var<Scalar> x, Scalar eps = Scalar(1e-12)) {
    const auto& xv = x.value();
    MatX<Scalar> norms = xv.rowwise().norm().cwiseMax(eps);
    MatX<Scalar> y = xv.array().colwise() / norms.col(0).array();
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, norms, eps](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self);
        MatX<Scalar> gx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const Scalar n = norms(i, 0);
            if (n > eps) {
                const Scalar d = g.row(i).dot(y.row(i));
                gx.row(i) = (g.row(i) - d * y.row(i)) / n;
            } else {
                gx.row(i) = g.row(i) / n;
            }
        }
        t.accumulate(xi, gx);
    });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
    if (parts.empty()) throw ShapeError("concat of zero parts");
    const auto rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
        cols += p.cols();
    }
    MatX<Scalar> y(rows, cols);
    std::vector<int> ids;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        y.middleCols(off, p.cols()) = p.value();
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.cols();
    }
    auto parents = ids;
    return parts.front().tape->record(std::move(y), std::move(parents), [ids, offsets](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (t.needs_grad(ids[i])) t.accumulate(ids[i], g.middleCols(offsets[i], t.value(ids[i]).cols()));
    });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts) {
    std::vector<Var<Scalar>> v(parts);
    return concat_cols(std::span<const Var<Scalar>>(v));
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || start + count > x.cols()) throw ShapeError("slice_cols out of range");
    MatX<Scalar> y = x.value().middleCols(start, count);
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, start, count](Tape<Scalar>& t, int self) {
        t.grad(xi).middleCols(start, count) += t.grad(self);
    });
}

/// Reinterprets the row-major buffer with a new shape.
template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != x.value().size()) throw ShapeError("reshape size mismatch");
    MatX<Scalar> y = Eigen::Map<const MatX<Scalar>>(x.value().data(), rows, cols);
    const int xi = x.id;
    const auto r0 = x.rows(), c0 = x.cols();
    return x.tape->record(std::move(y), {xi}, [xi, r0, c0](Tape<Scalar>& t, int self) {
        t.accumulate(xi, Eigen::Map<const MatX<Scalar>>(t.grad(self).data(), r0, c0));
    });
}

/// x (N x k) * w.middleRows(row_offset, k) (k x m). With row_offset = 0 and
/// k = w.rows() this is a plain matmul; the offset form lets a layer consume
/// concatenated inputs piecewise.
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> x, Var<Scalar> w, Eigen::Index row_offset = 0) {
    const auto k = x.cols();
    if (row_offset + k > w.rows()) throw ShapeError("matmul inner dimension mismatch");
    MatX<Scalar> y = x.value() * w.value().middleRows(row_offset, k);
    const int xi = x.id, wi = w.id;
    return x.tape->record(std::move(y), {xi, wi}, [xi, wi, row_offset, k](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(xi)) t.accumulate(xi, g * t.value(wi).middleRows(row_offset, k).transpose());
        if (t.needs_grad(wi)) t.grad(wi).middleRows(row_offset, k).noalias() += t.value(xi).transpose() * g;
    });
}

/// Row r*k + j of the result is row r of x (each row repeated k times).
template <typename Scalar>
Var<Scalar> repeat_rows(Var<Scalar> x, Eigen::Index k) {
    const Eigen::Index n = x.rows(), c = x.cols();
    MatX<Scalar> y(n * k, c);
    for (Eigen::Index r = 0; r < n; ++r) y.middleRows(r * k, k) = x.value().row(r).replicate(k, 1);
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, n, k](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(xi);
        for (Eigen::Index r = 0; r < n; ++r) gx.row(r) += g.middleRows(r * k, k).colwise().sum();
    });
}

/// Row r*n + j of the result is row j of x (the whole block stacked k times).
template <typename Scalar>
Var<Scalar> tile_rows(Var<Scalar> x, Eigen::Index k) {
    const Eigen::Index n = x.rows();
    MatX<Scalar> y = x.value().replicate(k, 1);
    const int xi = x.id;
    return x.tape->record(std::move(y), {xi}, [xi, n, k](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(xi);
        for (Eigen::Index r = 0; r < k; ++r) gx += g.middleRows(r * n, n);
    });
}

/// Per-ray weighted sum of sample rows: w (N x S), values (N*S x C) -> N x C.
template <typename Scalar>
Var<Scalar> weighted_sum(Var<Scalar> w, Var<Scalar> values) {
    const Eigen::Index n = w.rows(), s = w.cols(), c = values.cols();
    if (values.rows() != n * s) throw ShapeError("weighted_sum row mismatch");
    const auto& wv = w.value();
    const auto& vv = values.value();
    MatX<Scalar> y = MatX<Scalar>::Zero(n, c);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index k = 0; k < s; ++k) y.row(r) += wv(r, k) * vv.row(r * s + k);
    const int wi = w.id, vi = values.id;
    return w.tape->record(std::move(y), {wi, vi}, [wi, vi, n, s](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(wi)) {
            const auto& vv = t.value(vi);
            auto& gw = t.grad(wi);
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index k = 0; k < s; ++k) gw(r, k) += g.row(r).dot(vv.row(r * s + k));
        }
        if (t.needs_grad(vi)) {
            const auto& wv = t.value(wi);
            auto& gv = t.grad(vi);
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index k = 0; k < s; ++k) gv.row(r * s + k) += wv(r, k) * g.row(r);
        }
    });
}

// Expression sugar.
template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }
template <typename S> Var<S> operator/(Var<S> a, Var<S> b) { return div(a, b); }
template <typename S> Var<S> operator-(Var<S> a) { return neg(a); }
template <typename S> Var<S> operator*(Var<S> a, S c) { return scale(a, c); }
template <typename S> Var<S> operator*(S c, Var<S> a) { return scale(a, c); }
template <typename S> Var<S> operator+(Var<S> a, S c) { return add_scalar(a, c); }
template <typename S> Var<S> operator+(S c, Var<S> a) { return add_scalar(a, c); }
template <typename S> Var<S> operator-(S c, Var<S> a) { return add_scalar(neg(a), c); }
template <typename S> Var<S> operator-(Var<S> a, S c) { return add_scalar(a, -c); }

}  // namespace matxfer::ad
