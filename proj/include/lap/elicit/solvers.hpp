#pragma once

// Closed-form and one-dimensional solvers that turn an expert's answers
// (quantiles, survival probabilities, sample sizes) into hyperparameters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "lap/errors.hpp"
#include "lap/math/roots.hpp"
#include "lap/math/special.hpp"

namespace lap::elicit {

inline Error infeasible_error(const std::string& what) { return {ErrorKind::infeasible, what}; }

// ---------------------------------------------------------------------------
// Lomax tertiles

struct TertileAnswer {
    double q13 = 0.0;  // Q(1/3)
    double q23 = 0.0;  // Q(2/3)
};

struct LomaxParams {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Lower bound of Q(2/3)/Q(1/3) over all Lomax distributions (the alpha -> inf limit).
inline double lomax_tertile_ratio_bound() { return std::log(3.0) / std::log(1.5); }

namespace detail {
// Q(2/3)/Q(1/3) as a function of s = 1/alpha; increasing in s.
inline double tertile_ratio(double s) {
    return std::expm1(s * std::log(3.0)) / std::expm1(s * std::log(1.5));
}
}  // namespace detail

inline LomaxParams solve_lomax_tertiles(const TertileAnswer& ans) {
    if (!(ans.q13 > 0.0) || !(ans.q23 > 0.0)) throw domain_error("tertiles must be positive");
    if (!(ans.q23 > ans.q13)) throw domain_error("tertiles must satisfy Q(2/3) > Q(1/3)");
    const double ratio = ans.q23 / ans.q13;
    const double bound = lomax_tertile_ratio_bound();
    if (!(ratio > bound))
        throw infeasible_error("tertile ratio Q(2/3)/Q(1/3) = " + std::to_string(ratio) +
                               " must exceed ln 3 / ln 1.5 = " + std::to_string(bound) +
                               " for a Lomax prior predictive");
    auto f = [&](double s) { return detail::tertile_ratio(s) - ratio; };
    // s -> 0 gives the bound; grow the upper end until the ratio is exceeded
    double lo = 1e-12, hi = 1.0;
    while (f(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e4) throw numerical_error("solve_lomax_tertiles: ratio too large to bracket");
    }
    const double s = math::find_root(f, lo, hi, 1e-15);
    LomaxParams out;
    out.alpha = 1.0 / s;
    out.beta = ans.q13 / std::expm1(s * std::log(1.5));
    return out;
}

/// Tertiles of the Lomax with shape `alpha` whose median equals `median`.
inline TertileAnswer ess_to_tertiles(double alpha, double median) {
    if (!(alpha > 0.0) || !(median > 0.0)) throw domain_error("ess_to_tertiles: alpha and median must be positive");
    const double beta = median / std::expm1(std::log(2.0) / alpha);
    return {beta * std::expm1(std::log(1.5) / alpha), beta * std::expm1(std::log(3.0) / alpha)};
}

// ---------------------------------------------------------------------------
// Inverse-gamma data augmentation prior on mean survival psi ~ IG(alpha, alpha*ytilde)

struct SurvivalProbAnswer {
    double t = 0.0;      // time
    double gamma = 0.0;  // survival fraction threshold
    double tau = 0.0;    // Pr(S(t) > gamma)
    std::optional<double> alpha;  // fixed ESS (one-answer mode)
};

struct DapParams {
    double alpha = 0.0;
    double ytilde = 0.0;
};

inline void check_dap(double alpha, double ytilde) {
    if (!(alpha > 0.0) || !(ytilde > 0.0)) throw domain_error("DAP: alpha and ytilde must be positive");
}

/// Pr(exp(-t/psi) > gamma) = GammaCDF(-alpha*ytilde*log(gamma)/t; alpha, 1).
inline double dap_survival_prob(double alpha, double ytilde, double t, double gamma) {
    check_dap(alpha, ytilde);
    if (!(t > 0.0)) throw domain_error("dap_survival_prob: t must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw domain_error("dap_survival_prob: gamma must lie in (0, 1)");
    return boost::math::gamma_p(alpha, -alpha * ytilde * std::log(gamma) / t);
}

inline void check_answer(const SurvivalProbAnswer& a) {
    if (!(a.t > 0.0)) throw domain_error("survival answer: t must be positive");
    if (!(a.gamma > 0.0 && a.gamma < 1.0)) throw domain_error("survival answer: gamma must lie in (0, 1)");
    if (!(a.tau > 0.0 && a.tau < 1.0)) throw domain_error("survival answer: tau must lie in (0, 1)");
}

inline DapParams solve_dap(const std::vector<SurvivalProbAnswer>& answers) {
    if (answers.empty() || answers.size() > 2) throw domain_error("solve_dap: supply one or two answers");
    for (const auto& a : answers) check_answer(a);

    // threshold c_i = -log(gamma_i)/t_i, so that tau_i = P(alpha, alpha*ytilde*c_i)
    auto c_of = [](const SurvivalProbAnswer& a) { return -std::log(a.gamma) / a.t; };

    if (answers.size() == 1) {
        const auto& a = answers.front();
        if (!a.alpha || !(*a.alpha > 0.0))
            throw domain_error("solve_dap: a single answer needs a fixed positive alpha (ESS)");
        const double x = boost::math::gamma_p_inv(*a.alpha, a.tau);
        return {*a.alpha, x / (*a.alpha * c_of(a))};
    }

    const auto& a1 = answers[0];
    const auto& a2 = answers[1];
    const double c1 = c_of(a1), c2 = c_of(a2);
    // alpha*ytilde = x_i(alpha)/c_i for both answers; solve in log alpha
    auto f = [&](double log_alpha) {
        const double al = std::exp(log_alpha);
        return std::log(boost::math::gamma_p_inv(al, a1.tau) / c1) - std::log(boost::math::gamma_p_inv(al, a2.tau) / c2);
    };
    const double lo = std::log(1e-2), hi = std::log(1e6);
    double flo = 0.0, fhi = 0.0;
    try {
        flo = f(lo);
        fhi = f(hi);
    } catch (const std::exception&) {
        throw numerical_error("solve_dap: gamma quantile evaluation failed");
    }
    if (!std::isfinite(flo) || !std::isfinite(fhi) || std::signbit(flo) == std::signbit(fhi)) {
        throw infeasible_error("solve_dap: answers are inconsistent, no (alpha, ytilde) > 0 reproduces both "
                               "(log-scale residual " + std::to_string(flo) + " at alpha=0.01, " +
                               std::to_string(fhi) + " at alpha=1e6)");
    }
    const double la = math::find_root(f, lo, hi, 1e-14);
    const double alpha = std::exp(la);
    const double ytilde = boost::math::gamma_p_inv(alpha, a1.tau) / (alpha * c1);
    const DapParams out{alpha, ytilde};
    for (const auto* a : {&a1, &a2}) {
        const double resid = dap_survival_prob(alpha, ytilde, a->t, a->gamma) - a->tau;
        if (std::fabs(resid) > 1e-6)
            throw infeasible_error("solve_dap: residual " + std::to_string(resid) + " exceeds 1e-6");
    }
    return out;
}

/// p-quantile of median survival log(2)*psi under psi ~ IG(alpha, alpha*ytilde).
inline double dap_median_survival_quantile(double alpha, double ytilde, double p) {
    check_dap(alpha, ytilde);
    if (!(p > 0.0 && p < 1.0)) throw domain_error("dap_median_survival_quantile: p must lie in (0, 1)");
    return math::kLn2 * alpha * ytilde / boost::math::gamma_p_inv(alpha, 1.0 - p);
}

struct LognormalParams {
    double mu = 0.0;
    double sigma = 0.0;
};

/// Lognormal with the mean and variance of median survival under the IG prior.
inline LognormalParams lognormal_from_ig_median_survival(double alpha, double ytilde) {
    check_dap(alpha, ytilde);
    if (!(alpha > 2.0)) throw domain_error("lognormal_from_ig_median_survival: alpha must exceed 2 for finite variance");
    const double b = alpha * ytilde;
    const double m = math::kLn2 * b / (alpha - 1.0);
    const double v = math::kLn2 * math::kLn2 * b * b / ((alpha - 1.0) * (alpha - 1.0) * (alpha - 2.0));
    const double s2 = std::log1p(v / (m * m));
    return {std::log(m) - 0.5 * s2, std::sqrt(s2)};
}

// ---------------------------------------------------------------------------
// NormalGamma hyperparameters from prior-predictive quantiles

struct NormalGammaHyper {
    double mu0 = 0.0;
    double gamma = 0.0;  // pseudo-observations for the mean
    double alpha = 0.0;  // shape of the precision
    double beta = 0.0;   // rate of the precision

    /// Prior predictive St(mu0, beta(gamma+1)/(alpha*gamma), 2 alpha).
    math::StudentT predictive() const {
        return {mu0, beta * (gamma + 1.0) / (alpha * gamma), 2.0 * alpha};
    }
};

/// mu0 = q50, gamma = n_e, alpha = n_e/2, beta such that the predictive
/// 0.75-quantile equals q75. With mu0 pinned to the median the squared-error
/// fit of the two quantiles is exact, so beta has a closed form.
inline NormalGammaHyper fit_student_t_hyperparams(double q50, double q75, double n_e) {
    if (!(q75 > q50)) throw domain_error("fit_student_t_hyperparams: q75 must exceed q50");
    if (!(n_e > 0.0)) throw domain_error("fit_student_t_hyperparams: n_e must be positive");
    NormalGammaHyper h;
    h.mu0 = q50;
    h.gamma = n_e;
    h.alpha = 0.5 * n_e;
    const double t75 = math::StudentT(0.0, 1.0, 2.0 * h.alpha).quantile(0.75);
    const double scale = (q75 - q50) / t75;
    h.beta = scale * scale * h.alpha * h.gamma / (h.gamma + 1.0);
    return h;
}

// ---------------------------------------------------------------------------
// ESS of a rate posterior by a gamma fit to its quantiles

struct QuantilePair {
    double p = 0.0;
    double value = 0.0;
};

struct GammaFit {
    double shape = 0.0;  // read as the ESS
    double rate = 0.0;
    double residual = 0.0;  // root sum of squared quantile errors
};

inline GammaFit estimate_ess_gamma(std::vector<QuantilePair> pairs) {
    if (pairs.size() < 2) throw domain_error("estimate_ess_gamma: need at least two (p, value) pairs");
    std::sort(pairs.begin(), pairs.end(), [](auto& a, auto& b) { return a.p < b.p; });
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!(pairs[i].p > 0.0 && pairs[i].p < 1.0)) throw domain_error("estimate_ess_gamma: p must lie in (0, 1)");
        if (!(pairs[i].value > 0.0)) throw domain_error("estimate_ess_gamma: values must be positive");
        if (i > 0 && !(pairs[i].p > pairs[i - 1].p && pairs[i].value > pairs[i - 1].value))
            throw domain_error("estimate_ess_gamma: pairs must be strictly increasing in both p and value");
    }
    // For fixed shape the best 1/rate is linear least squares; profile it out.
    auto profile = [&](double log_shape, double* scale_out) {
        const double a = std::exp(log_shape);
        double qv = 0.0, qq = 0.0;
        std::vector<double> q(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            q[i] = boost::math::gamma_p_inv(a, pairs[i].p);
            qv += q[i] * pairs[i].value;
            qq += q[i] * q[i];
        }
        const double scale = qv / qq;
        double ss = 0.0;
        for (std::size_t i = 0; i < pairs.size(); ++i) ss += std::pow(scale * q[i] - pairs[i].value, 2);
        if (scale_out) *scale_out = scale;
        return ss;
    };
    // coarse scan over log shape, then golden-section refinement
    const double lo = std::log(1e-2), hi = std::log(1e5);
    const int n_grid = 200;
    double best = lo, best_ss = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n_grid; ++i) {
        const double x = lo + (hi - lo) * i / n_grid;
        const double ss = profile(x, nullptr);
        if (ss < best_ss) {
            best_ss = ss;
            best = x;
        }
    }
    const double step = (hi - lo) / n_grid;
    double a = std::max(lo, best - step), b = std::min(hi, best + step);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = profile(c, nullptr), fd = profile(d, nullptr);
    for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile(c, nullptr);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile(d, nullptr);
        }
    }
    const double x = 0.5 * (a + b);
    double scale = 0.0;
    const double ss = profile(x, &scale);
    return {std::exp(x), 1.0 / scale, std::sqrt(ss)};
}

// ---------------------------------------------------------------------------

/// Expert-equivalent sample size from posterior spreads:
/// sd_post * sqrt(n_data) = sd_expert * sqrt(n_expert).
inline double regression_ess_heuristic(double sd_post_data, double n_data, double sd_expert) {
    if (!(sd_post_data > 0.0) || !(n_data > 0.0) || !(sd_expert > 0.0))
        throw domain_error("regression_ess_heuristic: arguments must be positive");
    const double r = sd_post_data / sd_expert;
    return n_data * r * r;
}

/// Number of answers needed for a k-dimensional normal: pairwise
/// concordances, two quantiles per margin, and the sample size.
inline long elicitation_count(long k) {
    if (k < 2) throw domain_error("elicitation_count: k must be >= 2");
    return k * (k - 1) / 2 + 2 * k + 1;
}

}  // namespace lap::elicit
