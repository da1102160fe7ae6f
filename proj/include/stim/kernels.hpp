#pragma once

// Numeric kernels shared by the merging modules. All functions are pure and
// accept arbitrary Eigen vector expressions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "stim/error.hpp"

namespace stim {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;
using Matrix = MatrixX<double>;

// Cosine of the angle between a and b. A zero-norm operand yields 0 so that
// degenerate features never look similar to anything.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>);
    if (a.size() != b.size()) {
        throw Error("cosine_similarity: length mismatch");
    }
    const Scalar na = a.norm();
    const Scalar nb = b.norm();
    if (na == Scalar(0) || nb == Scalar(0)) {
        return Scalar(0);
    }
    Scalar dot = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += a(i) * b(i);
    }
    return std::clamp(dot / (na * nb), Scalar(-1), Scalar(1));
}

// Numerically stable softmax of a row of logits.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax_row(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    if (logits.size() == 0) {
        throw Error("empty attention row");
    }
    const Scalar shift = logits.maxCoeff();
    VectorX<Scalar> out(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        out(i) = std::exp(logits(i) - shift);
    }
    out /= out.sum();
    return out;
}

// Sum of p ln p with 0 ln 0 := 0. Lies in [-ln n, 0] for a distribution of length n.
template <typename Derived>
typename Derived::Scalar negative_entropy(const Eigen::MatrixBase<Derived>& p) {
    using Scalar = typename Derived::Scalar;
    Scalar total = 0;
    Scalar h = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const Scalar v = p(i);
        if (!(v >= Scalar(0))) {
            throw Error("invalid distribution");
        }
        total += v;
        if (v > Scalar(0)) {
            h += v * std::log(v);
        }
    }
    if (std::abs(total - Scalar(1)) > Scalar(1e-6)) {
        throw Error("invalid distribution");
    }
    return std::min(h, Scalar(0));
}

// Affine map of values onto [0, 1]. Constant input maps to 0.5 everywhere.
template <typename Derived>
VectorX<typename Derived::Scalar> minmax_scale(const Eigen::MatrixBase<Derived>& values) {
    using Scalar = typename Derived::Scalar;
    if (values.size() == 0) {
        throw Error("minmax_scale: empty input");
    }
    const Scalar lo = values.minCoeff();
    const Scalar hi = values.maxCoeff();
    const Scalar range = hi - lo;
    if (range <= Scalar(1e-12)) {
        return VectorX<Scalar>::Constant(values.size(), Scalar(0.5));
    }
    VectorX<Scalar> out(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        out(i) = (values(i) - lo) / range;
    }
    // Exact endpoints: argmin and argmax must land on 0 and 1.
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) == lo) out(i) = Scalar(0);
        if (values(i) == hi) out(i) = Scalar(1);
    }
    return out;
}

}  // namespace stim
