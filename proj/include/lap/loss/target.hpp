#pragma once

// Loss-adjusted target densities.
//
//   log target(u) = log prior(x) + log lik(x) + sum_l [log belief_l(g_l(x)) + corr_l(x)]
//                   + sum_f flattening_f(x) + log |d x / d u|,        x = constrain(u)
//
// Each loss term contributes the belief's log density at the observable it
// is attached to, i.e. the negative loss. Terms on the same observable are
// simply summed.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lap/errors.hpp"
#include "lap/loss/parameter_space.hpp"
#include "lap/math/distribution.hpp"
#include "lap/math/special.hpp"
#include "lap/sampler/rng.hpp"

namespace lap {

using LogTerm = std::function<double(const ParameterValues&)>;

struct ObservableFunctional {
    std::string name;
    std::function<double(const ParameterValues&)> evaluate;
    bool traced = true;  // false when the value is already a parameter column
};

struct ExpertBelief {
    std::string observable;
    math::DistributionSpec spec;
    std::string description;
};

struct LossTerm {
    ObservableFunctional functional;
    ExpertBelief belief;
    LogTerm correction;  // optional closed-form log-density correction
};

struct NamedTerm {
    std::string name;
    LogTerm evaluate;
};

/// log pdf of the belief at the functional's value, plus the correction.
inline double loss_contribution(const LossTerm& term, const ParameterValues& x) {
    const double g = term.functional.evaluate(x);
    double lp = term.belief.spec.log_pdf(g);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    if (term.correction) lp += term.correction(x);
    return lp;
}

/// Second term of the rate-parameterised exponential loss: the log density a
/// U(a, b) prior on lambda induces on median survival log(2)/lambda,
///   log( lambda^2 / ((b - a) log 2) ).
/// The loss enters the target negated, so the target subtracts this.
inline double jacobian_correction_exponential_lambda(double lambda, double a, double b) {
    if (!(lambda > a && lambda < b)) return -std::numeric_limits<double>::infinity();
    return 2.0 * std::log(lambda) - std::log(b - a) - std::log(math::kLn2);
}

struct TargetBreakdown {
    double prior = 0.0;
    double likelihood = 0.0;
    double loss = 0.0;
    double flattening = 0.0;
    double jacobian = 0.0;
    double total = 0.0;
};

class TargetDensity {
public:
    ParameterSpace space;
    LogTerm log_prior;
    LogTerm log_likelihood;  // empty in loss-only mode
    std::vector<LossTerm> loss_terms;
    std::vector<NamedTerm> flattening_terms;
    std::vector<ObservableFunctional> observables;  // functionals beliefs may attach to
    std::function<std::vector<double>(Rng&)> prior_sampler;  // constrained flat values, optional
    std::vector<std::string> warnings;

    TargetBreakdown evaluate(std::span<const double> u) const {
        TargetBreakdown b;
        const ParameterValues x = space.constrain(u);
        b.jacobian = x.log_jacobian();
        b.prior = log_prior ? log_prior(x) : 0.0;
        if (log_likelihood && std::isfinite(b.prior)) b.likelihood = log_likelihood(x);
        for (const auto& t : loss_terms) b.loss += loss_contribution(t, x);
        for (const auto& f : flattening_terms) b.flattening += f.evaluate(x);
        b.total = b.prior + b.likelihood + b.loss + b.flattening + b.jacobian;
        if (std::isnan(b.total)) b.total = -std::numeric_limits<double>::infinity();
        return b;
    }

    double log_density(std::span<const double> u) const { return evaluate(u).total; }

    /// Same sum without the transform Jacobian, i.e. the density with respect
    /// to the constrained parameters.
    double log_density_constrained(std::span<const double> u) const {
        const auto b = evaluate(u);
        return b.total - b.jacobian;
    }

    /// Functionals recorded alongside the parameter draws.
    std::vector<const ObservableFunctional*> traced_observables() const {
        std::vector<const ObservableFunctional*> out;
        for (const auto& o : observables)
            if (o.traced) out.push_back(&o);
        return out;
    }

    std::vector<std::string> observable_names() const {
        std::vector<std::string> out;
        for (const auto* o : traced_observables()) out.push_back(o->name);
        return out;
    }

    const ObservableFunctional* find_observable(const std::string& name) const {
        for (const auto& o : observables)
            if (o.name == name) return &o;
        return nullptr;
    }

    /// Attach a belief to a traced observable.
    void add_belief(ExpertBelief belief, LogTerm correction = {}) {
        const ObservableFunctional* f = find_observable(belief.observable);
        if (!f) throw config_error("no observable named '" + belief.observable + "' in this model");
        loss_terms.push_back({*f, std::move(belief), std::move(correction)});
    }

    /// Warn when a belief's central 99% interval misses the range the
    /// observable takes over prior draws.
    void check_conflict(const LossTerm& term, std::size_t n_draws = 1000, std::uint64_t seed = 20240101) {
        if (!prior_sampler) return;
        Rng rng(seed);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < n_draws; ++i) {
            const auto flat = prior_sampler(rng);
            const auto x = space.constrain(space.unconstrain(flat));
            const double g = term.functional.evaluate(x);
            if (!std::isfinite(g)) continue;
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
        const double b_lo = term.belief.spec.quantile(0.005);
        const double b_hi = term.belief.spec.quantile(0.995);
        if (b_hi < lo || b_lo > hi) {
            warnings.push_back("belief on '" + term.belief.observable + "' (99% interval [" + std::to_string(b_lo) +
                               ", " + std::to_string(b_hi) + "]) does not overlap the prior range [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }
};

}  // namespace lap
