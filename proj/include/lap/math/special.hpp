#pragma once

// Scalar building blocks: Lomax prior predictive, location-scale Student-t,
// concordance <-> correlation, Fisher z.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "lap/errors.hpp"

namespace lap::math {

inline constexpr double kLn2 = std::numbers::ln2;

// ---------------------------------------------------------------------------
// Lomax (Pareto II) -- prior predictive of exponential data under a gamma prior

inline void check_lomax(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw domain_error("lomax: shape and scale must be positive (alpha=" + std::to_string(alpha) +
                           ", beta=" + std::to_string(beta) + ")");
}

/// F(x) = 1 - (beta / (x + beta))^alpha
inline double lomax_cdf(double x, double alpha, double beta) {
    check_lomax(alpha, beta);
    if (x <= 0.0) return 0.0;
    // -expm1(alpha * log(beta / (x + beta))) keeps precision when x << beta
    return -std::expm1(-alpha * std::log1p(x / beta));
}

inline double lomax_quantile(double p, double alpha, double beta) {
    check_lomax(alpha, beta);
    if (!(p >= 0.0 && p < 1.0)) throw domain_error("lomax_quantile: p must lie in [0, 1)");
    return beta * std::expm1(-std::log1p(-p) / alpha);
}

inline double lomax_log_pdf(double x, double alpha, double beta) {
    check_lomax(alpha, beta);
    if (x < 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(alpha / beta) - (alpha + 1.0) * std::log1p(x / beta);
}

// ---------------------------------------------------------------------------
// Location-scale Student-t. `scale_sq` is the squared scale, so that
// quantile(p) = mu + t_df(p) * sqrt(scale_sq).

class StudentT {
public:
    StudentT(double mu, double scale_sq, double df) : mu_(mu), scale_(0.0), df_(df) {
        if (!(scale_sq > 0.0) || !std::isfinite(scale_sq))
            throw domain_error("student_t: scale_sq must be positive");
        if (!(df > 0.0)) throw domain_error("student_t: df must be positive");
        scale_ = std::sqrt(scale_sq);
    }

    double mu() const noexcept { return mu_; }
    double scale() const noexcept { return scale_; }
    double scale_sq() const noexcept { return scale_ * scale_; }
    double df() const noexcept { return df_; }

    double log_pdf(double x) const {
        const double z = (x - mu_) / scale_;
        return std::lgamma(0.5 * (df_ + 1.0)) - std::lgamma(0.5 * df_) -
               0.5 * std::log(df_ * std::numbers::pi) - std::log(scale_) -
               0.5 * (df_ + 1.0) * std::log1p(z * z / df_);
    }
    double pdf(double x) const { return std::exp(log_pdf(x)); }

    double cdf(double x) const {
        return boost::math::cdf(standard(), (x - mu_) / scale_);
    }

    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw domain_error("student_t quantile: p must lie in (0, 1)");
        return mu_ + scale_ * boost::math::quantile(standard(), p);
    }

private:
    boost::math::students_t_distribution<double> standard() const {
        return boost::math::students_t_distribution<double>(df_);
    }

    double mu_;
    double scale_;
    double df_;
};

// ---------------------------------------------------------------------------
// Concordance probability P(both above or both below their means) of a
// bivariate normal pair: p = 1/2 + asin(r) / pi.

inline double concordance_to_correlation(double p) {
    if (!(p > 0.0 && p < 1.0)) throw domain_error("concordance must lie in (0, 1)");
    return std::sin(std::numbers::pi * (p - 0.5));
}

inline double correlation_to_concordance(double r) {
    if (!(r >= -1.0 && r <= 1.0)) throw domain_error("correlation must lie in [-1, 1]");
    return 0.5 + std::asin(r) / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Fisher z

inline double fisher_z(double r) {
    if (!(std::fabs(r) < 1.0)) throw domain_error("fisher_z: |r| must be < 1");
    return std::atanh(r);
}

inline double fisher_z_inverse(double z) { return std::tanh(z); }

/// Standard error of artanh(r) estimated from n observations: 1/sqrt(n-3).
inline double fisher_se(double n) {
    if (!(n > 3.0)) throw domain_error("fisher_se: effective sample size must exceed 3");
    return 1.0 / std::sqrt(n - 3.0);
}

}  // namespace lap::math
