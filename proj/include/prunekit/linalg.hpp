#pragma once

// Dense primitives shared by every stage of the pruning pipeline. All math runs
// in double precision; values are row-major so token i is row i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prunekit/error.hpp"

namespace prunekit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

/// Ridge least squares: argmin_W ||A W - B||_F^2 + lambda ||W||_F^2.
///
/// Solved through the normal equations with a Cholesky factorization. When
/// A has fewer rows than columns and lambda > 0 the equivalent kernel form
/// W = A^T (A A^T + lambda I)^{-1} B is factored instead; it is the same
/// minimizer but the SPD system is N x N rather than p x p.
inline Matrix ridge_lsq(const Matrix& A, const Matrix& B, double lambda) {
    if (A.rows() != B.rows()) {
        throw DataError("ridge_lsq: row mismatch, A is " + shape_str(A.rows(), A.cols()) +
                        ", B is " + shape_str(B.rows(), B.cols()));
    }
    if (A.rows() == 0 || A.cols() == 0) throw DataError("ridge_lsq: empty design matrix");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw DataError("ridge_lsq: lambda must be finite and nonnegative");
    }
    require_finite(A, "ridge_lsq: A");
    require_finite(B, "ridge_lsq: B");

    const bool kernel_form = lambda > 0.0 && A.rows() < A.cols();
    Eigen::MatrixXd gram;
    if (kernel_form) {
        gram = A * A.transpose();
    } else {
        gram = A.transpose() * A;
    }
    const double scale = std::max(gram.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    gram.diagonal().array() += lambda;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw NumericError("ridge_lsq: normal matrix is not positive definite (lambda = " +
                           std::to_string(lambda) + ")");
    }
    if (lambda == 0.0) {
        // LLT only rejects non-positive pivots; a rank-deficient Gram matrix can
        // slip through with round-off sized pivots.
        const Eigen::MatrixXd L = llt.matrixL();
        const double min_pivot = L.diagonal().minCoeff();
        if (min_pivot * min_pivot < 1e-12 * scale) {
            throw NumericError("ridge_lsq: A^T A is singular and lambda = 0");
        }
    }

    Matrix W;
    if (kernel_form) {
        const Eigen::MatrixXd alpha = llt.solve(Eigen::MatrixXd(B));
        W = A.transpose() * alpha;
    } else {
        W = llt.solve(Eigen::MatrixXd(A.transpose() * B));
    }
    require_finite(W, "ridge_lsq: solution");
    return W;
}

/// Objective value ||A W - B||_F^2 + lambda ||W||_F^2.
inline double ridge_objective(const Matrix& A, const Matrix& B, const Matrix& W, double lambda) {
    return (A * W - B).squaredNorm() + lambda * W.squaredNorm();
}

inline Vector softmax(const Vector& v) {
    if (v.size() == 0) throw DataError("softmax: empty vector");
    require_finite(v, "softmax");
    const double m = v.maxCoeff();
    Vector e = (v.array() - m).exp();
    e /= e.sum();
    return e;
}

/// Indices of the k largest scores, ties to the smaller index, returned in
/// ascending index order.
inline IndexList top_k(const Vector& scores, std::size_t k) {
    const auto n = static_cast<std::size_t>(scores.size());
    if (k < 1 || k > n) {
        throw UsageError("top_k: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    require_finite(scores, "top_k");
    IndexList idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        const double sa = scores[static_cast<Eigen::Index>(a)];
        const double sb = scores[static_cast<Eigen::Index>(b)];
        return sa > sb || (sa == sb && a < b);
    };
    if (k < n) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
        // nth_element leaves [0, k-1) before the k-th element but unordered.
        idx.resize(k);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Affine rescale to [0, 1]. A constant vector maps to all zeros.
inline Vector minmax_normalize(const Vector& v) {
    if (v.size() == 0) throw DataError("minmax_normalize: empty vector");
    require_finite(v, "minmax_normalize");
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if (hi == lo) return Vector::Zero(v.size());
    Vector out = (v.array() - lo) / (hi - lo);
    return out;
}

/// Per-index variance across samples with divisor T (population form).
inline Vector population_variance(std::span<const Vector> samples) {
    if (samples.size() < 2) throw DataError("population_variance: need at least 2 samples");
    const Eigen::Index n = samples.front().size();
    // shifted by the first sample so identical samples give exactly zero
    const Vector& shift = samples.front();
    Vector mean = Vector::Zero(n);
    for (const auto& s : samples) {
        if (s.size() != n) throw DataError("population_variance: sample length mismatch");
        require_finite(s, "population_variance");
        mean += s - shift;
    }
    const double t = static_cast<double>(samples.size());
    mean /= t;
    Vector var = Vector::Zero(n);
    for (const auto& s : samples) var.array() += (s - shift - mean).array().square();
    var /= t;
    return var;
}

}  // namespace prunekit
