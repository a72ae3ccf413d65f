#pragma once

// Correlation matrices: the unconstrained parameterisation the sampler moves
// in, LKJ densities, and small positive-definiteness utilities.
//
// Unconstrained layout: one real per off-diagonal pair, ordered row-wise over
// the strict lower triangle, (1,0), (2,0), (2,1), (3,0), ... Each value maps
// through tanh to a canonical partial correlation z_ij in (-1, 1), and the
// Cholesky factor is built row by row:
//
//   L[i][j] = z_ij * sqrt(1 - sum_{m<j} L[i][m]^2)      (j < i)
//   L[i][i] = sqrt(1 - sum_{m<i} L[i][m]^2)
//
// The same ordering is used for the constrained off-diagonal entries
// (S[0][1], S[0][2], S[1][2], S[0][3], ...), i.e. upper triangle by column.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "lap/errors.hpp"

namespace lap::math {

inline std::size_t corr_free_dim(std::size_t k) { return k * (k - 1) / 2; }

/// Pair (row, col), row < col, of the n-th off-diagonal entry.
inline std::pair<std::size_t, std::size_t> corr_pair(std::size_t n) {
    std::size_t col = 1;
    while (n >= col) {
        n -= col;
        ++col;
    }
    return {n, col};
}

inline std::size_t corr_index(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return j * (j - 1) / 2 + i;
}

struct CorrTransform {
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd cholesky;
    double log_jacobian = 0.0;
};

inline CorrTransform corr_transform(std::span<const double> v, std::size_t k) {
    if (k < 2) throw domain_error("correlation matrix needs dimension >= 2");
    if (v.size() != corr_free_dim(k)) throw domain_error("corr_transform: wrong vector length");

    CorrTransform out;
    Eigen::MatrixXd& L = out.cholesky;
    L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    L(0, 0) = 1.0;
    double lj = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 1; i < k; ++i) {
        double used = 0.0;
        for (std::size_t j = 0; j < i; ++j, ++c) {
            if (!std::isfinite(v[c])) throw domain_error("corr_transform: non-finite input");
            const double z = std::tanh(v[c]);
            const double rem = 1.0 - used;
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            L(ii, jj) = z * std::sqrt(rem);
            // d tanh / dy = 1 - z^2 ; d L_ij / d z_ij = sqrt(rem)
            lj += std::log1p(-z * z) + 0.5 * std::log(rem);
            used += L(ii, jj) * L(ii, jj);
        }
        L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = std::sqrt(std::max(1.0 - used, 0.0));
    }
    // Jacobian of L -> L L^T on the strict lower entries is block triangular
    // with diagonal entries L[j][j], repeated once per later row.
    for (std::size_t j = 0; j + 1 < k; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        lj += static_cast<double>(k - 1 - j) * std::log(L(jj, jj));
    }
    out.matrix = L * L.transpose();
    out.matrix.diagonal().setOnes();
    out.log_jacobian = lj;
    return out;
}

inline void check_square_unit_diagonal(const Eigen::MatrixXd& S) {
    if (S.rows() != S.cols() || S.rows() < 2) throw domain_error("correlation matrix must be square, k >= 2");
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        if (std::fabs(S(i, i) - 1.0) > 1e-10) throw domain_error("correlation matrix must have unit diagonal");
        for (Eigen::Index j = 0; j < i; ++j) {
            if (std::fabs(S(i, j) - S(j, i)) > 1e-12) throw domain_error("correlation matrix must be symmetric");
            if (!(std::fabs(S(i, j)) <= 1.0)) throw domain_error("correlation entries must lie in [-1, 1]");
        }
    }
}

inline bool is_positive_definite(const Eigen::MatrixXd& S) {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return false;
    return llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0;
}

inline double min_eigenvalue(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline Error not_pd_error(const std::string& what) { return {ErrorKind::not_positive_definite, what}; }

inline std::vector<double> corr_inverse(const Eigen::MatrixXd& S) {
    check_square_unit_diagonal(S);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw not_pd_error("corr_inverse: matrix is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    const auto k = static_cast<std::size_t>(S.rows());
    std::vector<double> v;
    v.reserve(corr_free_dim(k));
    for (std::size_t i = 1; i < k; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (!(L(ii, ii) > 0.0)) throw not_pd_error("corr_inverse: matrix is not positive definite");
        double used = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double z = L(ii, jj) / std::sqrt(1.0 - used);
            v.push_back(std::atanh(z));
            used += L(ii, jj) * L(ii, jj);
        }
    }
    return v;
}

/// Off-diagonal entries in canonical order.
inline std::vector<double> corr_entries(const Eigen::MatrixXd& S) {
    const auto k = static_cast<std::size_t>(S.rows());
    std::vector<double> out(corr_free_dim(k));
    for (std::size_t n = 0; n < out.size(); ++n) {
        auto [i, j] = corr_pair(n);
        out[n] = S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return out;
}

inline Eigen::MatrixXd corr_from_entries(std::span<const double> r, std::size_t k) {
    if (r.size() != corr_free_dim(k)) throw domain_error("corr_from_entries: wrong number of entries");
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t n = 0; n < r.size(); ++n) {
        auto [i, j] = corr_pair(n);
        S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[n];
        S(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = r[n];
    }
    return S;
}

// ---------------------------------------------------------------------------
// LKJ

/// Unnormalised LKJ(eta) log density: (eta - 1) log det S.
inline double lkj_log_density(const Eigen::MatrixXd& S, double eta) {
    if (!(eta > 0.0)) throw domain_error("lkj: eta must be positive");
    check_square_unit_diagonal(S);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw not_pd_error("lkj_log_density: matrix is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
        if (!(L(i, i) > 0.0)) throw not_pd_error("lkj_log_density: matrix is not positive definite");
        log_det += 2.0 * std::log(L(i, i));
    }
    return eta == 1.0 ? 0.0 : (eta - 1.0) * log_det;
}

/// Shape of the symmetric Beta that each off-diagonal entry of an LKJ(eta)
/// matrix of dimension k follows after mapping (-1, 1) onto (0, 1).
inline double lkj_marginal_shape(double eta, std::size_t k) {
    return eta - 1.0 + 0.5 * static_cast<double>(k);
}

inline double lkj_marginal_log_density(double r, double eta, std::size_t k) {
    const double a = lkj_marginal_shape(eta, k);
    if (!(a > 0.0)) throw domain_error("lkj marginal: Beta shape eta - 1 + k/2 must be positive");
    if (!(std::fabs(r) < 1.0)) return -std::numeric_limits<double>::infinity();
    const double u = 0.5 * (r + 1.0);
    const double log_beta_fn = 2.0 * std::lgamma(a) - std::lgamma(2.0 * a);
    return (a - 1.0) * (std::log(u) + std::log1p(-u)) - log_beta_fn - std::numbers::ln2;
}

}  // namespace lap::math
