#pragma once

// Multivariate normal with a NormalGamma prior on each (mu_m, tau_m), an
// LKJ(eta) prior on the correlation matrix, and Fisher-z losses on the
// elicited concordance probabilities. Covariance is D Sigma D with
// D = diag(1 / sqrt(tau)).

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lap/elicit/coherency.hpp"
#include "lap/elicit/solvers.hpp"
#include "lap/errors.hpp"
#include "lap/loss/target.hpp"
#include "lap/math/correlation.hpp"
#include "lap/math/distribution.hpp"
#include "lap/math/special.hpp"
#include "lap/sampler/rng.hpp"

namespace lap::models {

// marginal_beta divides each entry's LKJ marginal out of the joint; fisher_z
// additionally removes the tanh Jacobian, so the prior induced on every
// artanh(r_ij) is flat and a lone Fisher loss is reproduced exactly.
enum class Flattening { marginal_beta, joint_lkj, fisher_z, none };

inline std::string_view flattening_name(Flattening f) {
    switch (f) {
    case Flattening::marginal_beta: return "marginal_beta";
    case Flattening::joint_lkj: return "joint_lkj";
    case Flattening::fisher_z: return "fisher_z";
    case Flattening::none: return "none";
    }
    return "?";
}

inline Flattening parse_flattening(std::string_view s) {
    for (auto f : {Flattening::marginal_beta, Flattening::joint_lkj, Flattening::fisher_z, Flattening::none})
        if (flattening_name(f) == s) return f;
    throw config_error("unknown flattening '" + std::string(s) + "'");
}

/// Median concordance for pair (i, j), zero-based, with its own sample size.
struct ConcordanceBelief {
    std::size_t i = 0;
    std::size_t j = 1;
    double p = 0.5;
    double n_e = 10.0;
};

struct MvnModel {
    std::size_t k = 2;
    std::vector<elicit::NormalGammaHyper> hypers;  // one per component
    double eta = 1.0;
    std::vector<ConcordanceBelief> concordances;
    Flattening flattening = Flattening::marginal_beta;
    std::optional<Eigen::MatrixXd> data;  // n x k

    void validate() const {
        if (k < 2) throw config_error("mvn: k must be >= 2");
        if (hypers.size() != k) throw config_error("mvn: need one NormalGamma hyperparameter set per component");
        for (const auto& h : hypers)
            if (!(h.gamma > 0.0 && h.alpha > 0.0 && h.beta > 0.0) || !std::isfinite(h.mu0))
                throw config_error("mvn: NormalGamma gamma, alpha, beta must be positive");
        if (!(eta > 0.0)) throw config_error("mvn: eta must be positive");
        if ((flattening == Flattening::marginal_beta || flattening == Flattening::fisher_z) && !(math::lkj_marginal_shape(eta, k) > 0.0))
            throw config_error("mvn: marginal flattening needs eta - 1 + k/2 > 0");
        std::vector<bool> seen(math::corr_free_dim(k), false);
        for (const auto& c : concordances) {
            if (c.i == c.j || c.i >= k || c.j >= k) throw config_error("mvn: concordance pair out of range");
            if (!(c.p > 0.0 && c.p < 1.0)) throw config_error("mvn: concordance probability must lie in (0, 1)");
            if (!(c.n_e > 3.0)) throw config_error("mvn: concordance sample size must exceed 3");
            const auto idx = math::corr_index(c.i, c.j);
            if (seen[idx]) throw config_error("mvn: duplicate concordance for one pair");
            seen[idx] = true;
        }
        if (data) {
            if (static_cast<std::size_t>(data->cols()) != k)
                throw Error(ErrorKind::ingestion, "mvn data: expected " + std::to_string(k) + " columns");
            if (!data->allFinite()) throw Error(ErrorKind::ingestion, "mvn data: non-finite value");
        }
    }
};

/// LKJ(eta) draw via partial correlations: the partial correlation of (i, j)
/// given the first l < i variables is 2 Beta(b, b) - 1 with b = eta + (k - 2 - l) / 2.
inline Eigen::MatrixXd lkj_sample(Rng& rng, std::size_t k, double eta) {
    const auto n = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n);
    double b = eta + 0.5 * static_cast<double>(k - 1);
    for (Eigen::Index l = 0; l + 1 < n; ++l) {
        b -= 0.5;
        for (Eigen::Index i = l + 1; i < n; ++i) {
            P(l, i) = 2.0 * rng.beta(b, b) - 1.0;
            double r = P(l, i);
            for (Eigen::Index m = l - 1; m >= 0; --m)
                r = r * std::sqrt((1.0 - P(m, i) * P(m, i)) * (1.0 - P(m, l) * P(m, l))) + P(m, i) * P(m, l);
            S(l, i) = S(i, l) = r;
        }
    }
    return S;
}

/// Summary of the data needed by the likelihood.
struct MvnSufficient {
    double n = 0.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd scatter;  // sum (y - mean)(y - mean)^T
};

inline MvnSufficient mvn_sufficient(const Eigen::MatrixXd& y) {
    MvnSufficient s;
    s.n = static_cast<double>(y.rows());
    s.mean = y.colwise().mean().transpose();
    const Eigen::MatrixXd c = y.rowwise() - s.mean.transpose();
    s.scatter = c.transpose() * c;
    return s;
}

inline double mvn_log_likelihood(const MvnSufficient& s, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const Eigen::VectorXd d = s.mean - mu;
    const double quad = (llt.solve(s.scatter)).trace() + s.n * d.dot(llt.solve(d));
    const double k = static_cast<double>(mu.size());
    return -0.5 * s.n * (k * std::log(2.0 * std::numbers::pi) + log_det) - 0.5 * quad;
}

inline std::string pair_label(std::size_t i, std::size_t j) {
    return "[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]";
}

// The Cholesky transform can round a far-out draw onto the PD boundary; such
// points are rejected like any other zero-density proposal.
inline double lkj_log_density_or_reject(const Eigen::MatrixXd& S, double eta) {
    try {
        return math::lkj_log_density(S, eta);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::not_positive_definite) throw;
        return -std::numeric_limits<double>::infinity();
    }
}

inline TargetDensity mvn_target(const MvnModel& m) {
    m.validate();
    const std::size_t k = m.k;
    TargetDensity t;
    const std::size_t b_mu = t.space.add("mu", k, Constraint::real());
    const std::size_t b_tau = t.space.add("tau", k, Constraint::positive());
    const std::size_t b_sig = t.space.add("Sigma", 0, Constraint::correlation(k));

    const auto hypers = m.hypers;
    const double eta = m.eta;
    t.log_prior = [=](const ParameterValues& x) {
        const auto mu = x.block(b_mu);
        const auto tau = x.block(b_tau);
        double lp = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const auto& h = hypers[c];
            const double prec = h.gamma * tau[c];
            const double d = mu[c] - h.mu0;
            lp += 0.5 * std::log(prec / (2.0 * std::numbers::pi)) - 0.5 * prec * d * d;
            lp += h.alpha * std::log(h.beta) - std::lgamma(h.alpha) + (h.alpha - 1.0) * std::log(tau[c]) - h.beta * tau[c];
        }
        return lp + lkj_log_density_or_reject(x.corr(b_sig), eta);
    };
    t.prior_sampler = [=](Rng& rng) {
        std::vector<double> flat;
        std::vector<double> tau(k);
        for (std::size_t c = 0; c < k; ++c) tau[c] = rng.gamma(hypers[c].alpha) / hypers[c].beta;
        for (std::size_t c = 0; c < k; ++c)
            flat.push_back(hypers[c].mu0 + rng.normal() / std::sqrt(hypers[c].gamma * tau[c]));
        flat.insert(flat.end(), tau.begin(), tau.end());
        const auto r = math::corr_entries(lkj_sample(rng, k, eta));
        flat.insert(flat.end(), r.begin(), r.end());
        return flat;
    };

    switch (m.flattening) {
    case Flattening::marginal_beta:
        t.flattening_terms.push_back({"marginal_beta", [=](const ParameterValues& x) {
                                          double s = 0.0;
                                          for (double r : x.block(b_sig)) s -= math::lkj_marginal_log_density(r, eta, k);
                                          return s;
                                      }});
        break;
    case Flattening::fisher_z:
        t.flattening_terms.push_back({"fisher_z", [=](const ParameterValues& x) {
                                          double s = 0.0;
                                          for (double r : x.block(b_sig))
                                              s -= math::lkj_marginal_log_density(r, eta, k) + std::log1p(-r * r);
                                          return s;
                                      }});
        break;
    case Flattening::joint_lkj:
        t.flattening_terms.push_back(
            {"joint_lkj", [=](const ParameterValues& x) {
                 const double d = lkj_log_density_or_reject(x.corr(b_sig), eta);
                 return std::isfinite(d) ? -d : d;
             }});
        break;
    case Flattening::none:
        break;
    }

    if (m.data) {
        t.log_likelihood = [s = mvn_sufficient(*m.data), b_mu, b_tau, b_sig, k](const ParameterValues& x) {
            const auto mu_s = x.block(b_mu);
            const auto tau = x.block(b_tau);
            Eigen::VectorXd mu(static_cast<Eigen::Index>(k));
            Eigen::VectorXd sd(static_cast<Eigen::Index>(k));
            for (std::size_t c = 0; c < k; ++c) {
                mu(static_cast<Eigen::Index>(c)) = mu_s[c];
                sd(static_cast<Eigen::Index>(c)) = 1.0 / std::sqrt(tau[c]);
            }
            const Eigen::MatrixXd cov = sd.asDiagonal() * x.corr(b_sig) * sd.asDiagonal();
            return mvn_log_likelihood(s, mu, cov);
        };
    }

    // observables: concordance per pair (traced) and its Fisher z (loss scale)
    for (std::size_t n = 0; n < math::corr_free_dim(k); ++n) {
        const auto [i, j] = math::corr_pair(n);
        t.observables.push_back({"concordance" + pair_label(i, j), [=](const ParameterValues& x) {
                                     return math::correlation_to_concordance(x.block(b_sig)[n]);
                                 }});
    }
    for (std::size_t n = 0; n < math::corr_free_dim(k); ++n) {
        const auto [i, j] = math::corr_pair(n);
        t.observables.push_back(
            {"z" + pair_label(i, j), [=](const ParameterValues& x) { return std::atanh(x.block(b_sig)[n]); }, false});
    }

    for (const auto& c : m.concordances) {
        const auto i = std::min(c.i, c.j), j = std::max(c.i, c.j);
        const double r = math::concordance_to_correlation(c.p);
        ExpertBelief b{"z" + pair_label(i, j), math::DistributionSpec::normal(math::fisher_z(r), math::fisher_se(c.n_e)),
                       "concordance " + std::to_string(c.p)};
        t.add_belief(std::move(b));
    }

    // coherency of the elicited medians, reported as warnings
    if (m.concordances.size() == math::corr_free_dim(k)) {
        Eigen::MatrixXd R = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        for (const auto& c : m.concordances) {
            const double r = math::concordance_to_correlation(c.p);
            R(static_cast<Eigen::Index>(c.i), static_cast<Eigen::Index>(c.j)) = r;
            R(static_cast<Eigen::Index>(c.j), static_cast<Eigen::Index>(c.i)) = r;
        }
        if (!math::is_positive_definite(R)) {
            try {
                for (const auto& rep : elicit::coherency_intervals(R))
                    if (!rep.in_interval)
                        t.warnings.push_back("elicited concordances are not positive definite: pair " +
                                             pair_label(rep.i, rep.j) + " concordance " + std::to_string(rep.p) +
                                             " outside [" + std::to_string(rep.p_lo) + ", " +
                                             std::to_string(rep.p_hi) + "]");
            } catch (const Error& e) {
                t.warnings.push_back(std::string("elicited concordances are not positive definite: ") + e.what());
            }
        }
    }
    return t;
}

/// Hyperparameters from (q50, q75) per component with a shared n_e.
inline std::vector<elicit::NormalGammaHyper> mvn_hypers_from_quantiles(const std::vector<std::pair<double, double>>& q,
                                                                       double n_e) {
    std::vector<elicit::NormalGammaHyper> out;
    for (const auto& [q50, q75] : q) out.push_back(elicit::fit_student_t_hyperparams(q50, q75, n_e));
    return out;
}

}  // namespace lap::models
