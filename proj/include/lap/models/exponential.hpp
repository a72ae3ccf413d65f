#pragma once

// Exponential survival model with rate lambda and median survival
// t_med = log(2) / lambda. The sampled parameter is either t_med or lambda,
// with a uniform prior on (a, b), or lambda with a gamma prior.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "lap/errors.hpp"
#include "lap/loss/target.hpp"
#include "lap/math/distribution.hpp"
#include "lap/math/special.hpp"

namespace lap::models {

enum class ExpParameterization { median_direct, rate_with_correction, rate_uncorrected };

inline std::string_view parameterization_name(ExpParameterization p) {
    switch (p) {
    case ExpParameterization::median_direct: return "median_direct";
    case ExpParameterization::rate_with_correction: return "rate_with_correction";
    case ExpParameterization::rate_uncorrected: return "rate_uncorrected";
    }
    return "?";
}

inline ExpParameterization parse_parameterization(std::string_view s) {
    for (auto p : {ExpParameterization::median_direct, ExpParameterization::rate_with_correction,
                   ExpParameterization::rate_uncorrected})
        if (parameterization_name(p) == s) return p;
    throw config_error("unknown exponential parameterization '" + std::string(s) + "'");
}

/// Survival times with event indicators (true = death observed, false = censored).
struct SurvivalData {
    std::vector<double> time;
    std::vector<bool> event;

    void validate() const {
        if (time.size() != event.size()) throw Error(ErrorKind::ingestion, "survival data: time/event length mismatch");
        for (std::size_t i = 0; i < time.size(); ++i)
            if (!(time[i] >= 0.0) || !std::isfinite(time[i]))
                throw Error(ErrorKind::ingestion,
                            "survival data row " + std::to_string(i + 1) + ": time must be finite and >= 0");
    }
    std::size_t events() const {
        std::size_t n = 0;
        for (bool e : event) n += e;
        return n;
    }
    double total_time() const {
        double s = 0.0;
        for (double t : time) s += t;
        return s;
    }
};

struct GammaRatePrior {
    double shape = 1.0;
    double rate = 1.0;
};

struct ExponentialModel {
    ExpParameterization parameterization = ExpParameterization::median_direct;
    double a = 0.001;  // uniform prior interval for the sampled parameter
    double b = 10.0;
    std::optional<GammaRatePrior> gamma_prior;  // replaces the uniform prior on lambda
    std::optional<SurvivalData> data;

    bool samples_median() const { return parameterization == ExpParameterization::median_direct; }

    void validate() const {
        if (gamma_prior) {
            if (samples_median()) throw config_error("exponential: a gamma prior applies to the rate parameterizations");
            if (!(gamma_prior->shape > 0.0) || !(gamma_prior->rate > 0.0))
                throw config_error("exponential: gamma prior shape and rate must be positive");
        } else if (!(a > 0.0 && b > a)) {
            throw config_error("exponential: prior interval needs 0 < a < b");
        }
        if (data) data->validate();
    }
};

/// Density of median survival log(2)*psi for psi ~ IG(alpha, beta).
inline double dap_density_median_survival(double alpha, double beta, double t_med) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw domain_error("dap_density_median_survival: alpha and beta must be positive");
    if (!(t_med > 0.0)) throw domain_error("dap_density_median_survival: t_med must be positive");
    const double psi = t_med / math::kLn2;
    const double log_f = alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * std::log(psi) - beta / psi;
    return std::exp(log_f) / math::kLn2;
}

/// Exponential log likelihood: events add log(lambda) - lambda t, censored add -lambda t.
inline double exponential_log_likelihood(double lambda, const SurvivalData& d) {
    return static_cast<double>(d.events()) * std::log(lambda) - lambda * d.total_time();
}

/// Target over the model's parameter. Beliefs may refer to "t_med" or "lambda".
/// Under rate_with_correction a belief on t_med gets -log(lambda^2 / ((b-a) log 2)),
/// which removes the density the uniform prior on lambda induces on t_med.
inline TargetDensity exponential_target(const ExponentialModel& m, const std::vector<ExpertBelief>& beliefs) {
    m.validate();
    TargetDensity t;
    const bool direct = m.samples_median();
    const Constraint c = m.gamma_prior ? Constraint::positive() : Constraint::interval(m.a, m.b);
    t.space.add(direct ? "t_med" : "lambda", 1, c);

    auto lambda_of = [direct](const ParameterValues& x) { return direct ? math::kLn2 / x.scalar(0) : x.scalar(0); };
    t.observables.push_back({"t_med", [lambda_of](const ParameterValues& x) { return math::kLn2 / lambda_of(x); }, !direct});
    t.observables.push_back({"lambda", lambda_of, direct});

    if (m.gamma_prior) {
        const auto g = math::DistributionSpec::gamma(m.gamma_prior->shape, m.gamma_prior->rate);
        t.log_prior = [g](const ParameterValues& x) { return g.log_pdf(x.scalar(0)); };
        t.prior_sampler = [g](Rng& rng) { return std::vector<double>{rng.gamma(g.param("shape")) / g.param("rate")}; };
    } else {
        const double lw = std::log(m.b - m.a);
        t.log_prior = [lw](const ParameterValues&) { return -lw; };
        t.prior_sampler = [a = m.a, b = m.b](Rng& rng) { return std::vector<double>{a + (b - a) * rng.uniform()}; };
    }
    if (m.data) {
        t.log_likelihood = [d = *m.data, lambda_of](const ParameterValues& x) {
            return exponential_log_likelihood(lambda_of(x), d);
        };
    }

    // range of t_med implied by the prior
    const double t_lo = m.gamma_prior ? 0.0 : (direct ? m.a : math::kLn2 / m.b);
    const double t_hi = m.gamma_prior ? std::numeric_limits<double>::infinity() : (direct ? m.b : math::kLn2 / m.a);
    for (const auto& belief : beliefs) {
        LogTerm correction;
        if (belief.observable == "t_med") {
            const auto sup = belief.spec.support();
            if (!(sup.hi > t_lo && sup.lo < t_hi) || !(belief.spec.cdf(t_hi) - belief.spec.cdf(t_lo) > 0.0))
                throw config_error("exponential: belief on t_med has no mass inside the prior range of t_med");
            if (m.parameterization == ExpParameterization::rate_with_correction) {
                if (m.gamma_prior)
                    throw config_error("exponential: the t_med correction is defined for the uniform prior on lambda");
                correction = [a = m.a, b = m.b](const ParameterValues& x) {
                    const double c = jacobian_correction_exponential_lambda(x.scalar(0), a, b);
                    return std::isfinite(c) ? -c : -std::numeric_limits<double>::infinity();
                };
            }
        }
        t.add_belief(belief, correction);
        t.check_conflict(t.loss_terms.back());
    }
    return t;
}

/// Loss-only target with a single belief on t_med.
inline TargetDensity exponential_loss_only_target(const ExpertBelief& belief, ExpParameterization p, double a = 0.001,
                                                  double b = 10.0) {
    ExponentialModel m;
    m.parameterization = p;
    m.a = a;
    m.b = b;
    return exponential_target(m, {belief});
}

/// Conjugate posterior of lambda under a gamma prior: Gamma(shape + events, rate + total time).
inline math::DistributionSpec exponential_conjugate_posterior(const GammaRatePrior& prior, const SurvivalData& d) {
    return math::DistributionSpec::gamma(prior.shape + static_cast<double>(d.events()), prior.rate + d.total_time());
}

}  // namespace lap::models
