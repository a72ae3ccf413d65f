#pragma once

// Positive-definiteness check for elicited correlations. For each pair the
// other entries are held fixed and the entry is moved along a line; the
// smallest eigenvalue is concave along that line, so the PD set is an
// interval. Its endpoints are located by bisection.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lap/errors.hpp"
#include "lap/math/correlation.hpp"
#include "lap/math/special.hpp"

namespace lap::elicit {

struct CoherencyReport {
    std::size_t i = 0;  // zero-based, i < j
    std::size_t j = 0;
    double r = 0.0;
    double lo = -1.0;
    double hi = 1.0;
    bool in_interval = true;
    double p = 0.5;  // elicited concordance
    double p_lo = 0.0;
    double p_hi = 1.0;
};

namespace detail {

inline double min_eig_at(Eigen::MatrixXd S, std::size_t i, std::size_t j, double r) {
    S(i, j) = S(j, i) = r;
    return math::min_eigenvalue(S);
}

inline std::vector<std::size_t> without(std::size_t k, std::size_t drop) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < k; ++a)
        if (a != drop) out.push_back(a);
    return out;
}

inline Eigen::MatrixXd principal(const Eigen::MatrixXd& S, const std::vector<std::size_t>& idx) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) out(a, b) = S(idx[a], idx[b]);
    return out;
}

inline std::string index_list(const std::vector<std::size_t>& idx) {
    std::string s = "{";
    for (std::size_t a = 0; a < idx.size(); ++a) s += (a ? "," : "") + std::to_string(idx[a] + 1);
    return s + "}";
}

}  // namespace detail

/// Feasible interval for entry (i, j) with every other entry of R fixed.
inline CoherencyReport coherency_interval(const Eigen::MatrixXd& R, std::size_t i, std::size_t j) {
    const std::size_t k = static_cast<std::size_t>(R.rows());
    if (i == j || i >= k || j >= k) throw domain_error("coherency: invalid pair");
    if (i > j) std::swap(i, j);

    // entry (i, j) only appears in minors containing both i and j
    std::vector<std::string> bad;
    for (std::size_t drop : {i, j}) {
        const auto idx = detail::without(k, drop);
        if (idx.size() >= 2 && !math::is_positive_definite(detail::principal(R, idx)))
            bad.push_back(detail::index_list(idx));
    }
    if (!bad.empty()) {
        std::string msg = "coherency: the elicited correlations not involving pair (" + std::to_string(i + 1) +
                          "," + std::to_string(j + 1) + ") are already non-PD; offending minors:";
        for (const auto& b : bad) msg += " " + b;
        throw Error(ErrorKind::infeasible, msg);
    }

    CoherencyReport rep;
    rep.i = i;
    rep.j = j;
    rep.r = R(i, j);
    rep.p = math::correlation_to_concordance(rep.r);
    if (k == 2) {
        rep.in_interval = std::fabs(rep.r) < 1.0;
        return rep;
    }

    // interior point: maximise the concave smallest eigenvalue by golden section
    auto f = [&](double r) { return detail::min_eig_at(R, i, j, r); };
    double a = -1.0, b = 1.0;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    if (!(f(mid) > 0.0)) throw numerical_error("coherency: no positive-definite completion found for the pair");

    auto bisect = [&](double inside, double outside) {
        if (f(outside) > 0.0) return outside;
        for (int it = 0; it < 200 && std::fabs(outside - inside) > 1e-13; ++it) {
            const double m = 0.5 * (inside + outside);
            (f(m) > 0.0 ? inside : outside) = m;
        }
        return 0.5 * (inside + outside);
    };
    rep.lo = bisect(mid, -1.0);
    rep.hi = bisect(mid, 1.0);
    rep.in_interval = rep.r > rep.lo && rep.r < rep.hi;
    rep.p_lo = math::correlation_to_concordance(rep.lo);
    rep.p_hi = math::correlation_to_concordance(rep.hi);
    return rep;
}

/// Reports for the requested pairs, or every pair when `pairs` is empty.
inline std::vector<CoherencyReport> coherency_intervals(const Eigen::MatrixXd& R,
                                                        std::vector<std::pair<std::size_t, std::size_t>> pairs = {}) {
    math::check_square_unit_diagonal(R);
    const std::size_t k = static_cast<std::size_t>(R.rows());
    if (k < 2) throw domain_error("coherency: k must be >= 2");
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            if (!(std::fabs(R(a, b)) < 1.0)) throw domain_error("coherency: all correlations must satisfy |r| < 1");
            if (R(a, b) != R(b, a)) throw domain_error("coherency: matrix must be symmetric");
        }
    if (pairs.empty())
        for (std::size_t n = 0; n < math::corr_free_dim(k); ++n) pairs.push_back(math::corr_pair(n));
    std::vector<CoherencyReport> out;
    out.reserve(pairs.size());
    for (auto [i, j] : pairs) out.push_back(coherency_interval(R, i, j));
    return out;
}

/// Same, starting from a matrix of concordance probabilities (diagonal ignored).
inline std::vector<CoherencyReport> coherency_intervals_from_concordance(const Eigen::MatrixXd& P) {
    const auto k = P.rows();
    if (P.cols() != k) throw domain_error("coherency: concordance matrix must be square");
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            if (a != b) R(a, b) = math::concordance_to_correlation(P(a, b));
    return coherency_intervals(R);
}

}  // namespace lap::elicit
