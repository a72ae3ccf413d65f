#pragma once

// Adaptive random-walk Metropolis over the unconstrained space.
//
// Warmup adapts the proposal scale by Robbins-Monro throughout. The proposal
// shape starts as the identity and is replaced by the regularized empirical
// covariance at the end of each of a sequence of doubling windows. Proposal
// scale and shape are frozen at the end of warmup, so recorded draws come
// from a fixed Metropolis kernel.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lap/errors.hpp"
#include "lap/loss/target.hpp"
#include "lap/sampler/rng.hpp"

namespace lap {

struct SamplerConfig {
    std::size_t n_chains = 4;
    std::size_t warmup = 2000;
    std::size_t samples = 5000;  // recorded draws per chain
    std::size_t thin = 1;        // iterations per recorded draw
    std::uint64_t seed = 1;
    double target_acceptance = 0.234;
    double init_jitter = 1.0;
    bool adapt = true;
    bool parallel = true;

    void validate() const {
        if (n_chains < 1) throw config_error("sampler: n_chains must be >= 1");
        if (samples < 1) throw config_error("sampler: samples must be >= 1");
        if (thin < 1) throw config_error("sampler: thin must be >= 1");
        if (adapt && warmup < 100) throw config_error("sampler: warmup must be >= 100 when adaptation is enabled");
        if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
            throw config_error("sampler: target_acceptance must lie in (0, 1)");
        if (!(init_jitter > 0.0)) throw config_error("sampler: init_jitter must be positive");
    }
};

/// Draws on the constrained scale. Each chain stores `n_samples` rows of
/// `columns().size()` values: parameters first, then traced observables.
class SampleBatch {
public:
    std::vector<std::string> parameter_names;
    std::vector<std::string> observable_names;
    std::size_t n_samples = 0;
    std::vector<std::vector<double>> chains;
    std::vector<double> acceptance_rate;
    std::vector<double> proposal_scale;
    std::vector<std::string> flags;

    std::size_t n_chains() const noexcept { return chains.size(); }
    std::size_t width() const noexcept { return parameter_names.size() + observable_names.size(); }

    std::vector<std::string> columns() const {
        auto out = parameter_names;
        out.insert(out.end(), observable_names.begin(), observable_names.end());
        return out;
    }

    std::size_t column_index(const std::string& name) const {
        const auto cols = columns();
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return i;
        throw config_error("no column named '" + name + "' in sample batch");
    }

    double at(std::size_t chain, std::size_t iter, std::size_t col) const {
        return chains[chain][iter * width() + col];
    }

    std::vector<std::vector<double>> column_by_chain(std::size_t col) const {
        std::vector<std::vector<double>> out(n_chains());
        for (std::size_t c = 0; c < n_chains(); ++c) {
            out[c].reserve(n_samples);
            for (std::size_t i = 0; i < n_samples; ++i) out[c].push_back(at(c, i, col));
        }
        return out;
    }

    std::vector<double> column(std::size_t col) const {
        std::vector<double> out;
        out.reserve(n_samples * n_chains());
        for (std::size_t c = 0; c < n_chains(); ++c)
            for (std::size_t i = 0; i < n_samples; ++i) out.push_back(at(c, i, col));
        return out;
    }
    std::vector<double> column(const std::string& name) const { return column(column_index(name)); }
};

using ProgressFn = std::function<void(double)>;

namespace detail {

struct Welford {
    Eigen::VectorXd mean;
    Eigen::MatrixXd m2;
    std::size_t n = 0;

    explicit Welford(Eigen::Index d) : mean(Eigen::VectorXd::Zero(d)), m2(Eigen::MatrixXd::Zero(d, d)) {}

    void add(const Eigen::VectorXd& x) {
        ++n;
        const Eigen::VectorXd delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2.noalias() += delta * (x - mean).transpose();
    }
    void reset() {
        mean.setZero();
        m2.setZero();
        n = 0;
    }
    Eigen::MatrixXd covariance() const { return m2 / static_cast<double>(n > 1 ? n - 1 : 1); }
};

struct ChainOutput {
    std::vector<double> draws;
    double acceptance = 0.0;
    double scale = 0.0;
};

/// Covariance windows [begin, end) inside warmup: an initial buffer with
/// scale-only adaptation, doubling windows, and a terminal scale-only buffer.
inline std::vector<std::pair<std::size_t, std::size_t>> adaptation_windows(std::size_t warmup) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (warmup < 100) return out;
    const std::size_t init = warmup * 15 / 100, term = warmup / 10;
    const std::size_t end = warmup - term;
    std::size_t size = std::max<std::size_t>(25, warmup / 40);
    std::size_t start = init;
    while (start < end) {
        std::size_t stop = start + size;
        // fold a short remainder into the last window
        if (stop + 2 * size > end) stop = end;
        out.emplace_back(start, stop);
        start = stop;
        size *= 2;
    }
    return out;
}

inline ChainOutput run_one_chain(const TargetDensity& target, const SamplerConfig& cfg, std::size_t chain,
                                 std::atomic<std::size_t>* done, std::size_t total, const ProgressFn& progress) {
    Rng rng = Rng(cfg.seed).split(chain);
    const auto d = static_cast<Eigen::Index>(target.space.dim());
    const std::size_t n_params = target.space.dim();
    const auto traced = target.traced_observables();
    const std::size_t width = n_params + traced.size();

    Eigen::VectorXd u(d);
    double lp = -std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
        for (Eigen::Index i = 0; i < d; ++i) u(i) = cfg.init_jitter * rng.normal();
        lp = target.log_density({u.data(), n_params});
    }
    if (!std::isfinite(lp))
        throw Error(ErrorKind::initialization,
                    "sampler: no finite initial point found in 100 jittered attempts (chain " +
                        std::to_string(chain) + ")");

    Eigen::MatrixXd shape = Eigen::MatrixXd::Identity(d, d);
    double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
    Welford stats(d);
    std::size_t since_reset = 0;
    std::size_t accepted = 0;

    Eigen::VectorXd z(d), prop(d);
    auto step = [&]() -> double {
        for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
        prop.noalias() = shape.triangularView<Eigen::Lower>() * z;
        prop = u + std::exp(log_scale) * prop;
        const double lp_prop = target.log_density({prop.data(), n_params});
        const double log_ratio = lp_prop - lp;
        const double alpha = std::isfinite(lp_prop) ? (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio)) : 0.0;
        if (alpha > 0.0 && rng.uniform() < alpha) {
            u = prop;
            lp = lp_prop;
            ++accepted;
        }
        return alpha;
    };

    auto tick = [&](std::size_t n) {
        if (!done) return;
        const std::size_t now = done->fetch_add(n) + n;
        if (progress) progress(static_cast<double>(now) / static_cast<double>(total));
    };

    auto refresh_shape = [&]() {
        // shrink toward a small multiple of the identity, as in windowed HMC adaptation
        const double n = static_cast<double>(stats.n);
        Eigen::MatrixXd cov = (n / (n + 5.0)) * stats.covariance();
        cov.diagonal().array() += 1e-3 * (5.0 / (n + 5.0)) + 1e-6;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) shape = llt.matrixL();
    };

    const std::size_t warmup = cfg.adapt ? cfg.warmup : 0;
    const auto windows = detail::adaptation_windows(warmup);
    std::size_t next_window = 0;
    for (std::size_t t = 0; t < warmup; ++t) {
        const double alpha = step();
        ++since_reset;
        log_scale += (alpha - cfg.target_acceptance) / std::pow(static_cast<double>(since_reset), 0.6);
        log_scale = std::clamp(log_scale, -30.0, 10.0);
        if (next_window < windows.size() && t >= windows[next_window].first) {
            stats.add(u);
            if (t + 1 == windows[next_window].second) {
                refresh_shape();
                stats.reset();
                log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
                since_reset = 0;
                ++next_window;
            }
        }
        if ((t + 1) % 1000 == 0) tick(1000);
    }
    if (warmup > 0 && accepted == 0)
        throw Error(ErrorKind::adaptation, "sampler: every warmup proposal was rejected (chain " +
                                               std::to_string(chain) + ")");
    if (warmup % 1000) tick(warmup % 1000);

    ChainOutput out;
    out.draws.resize(cfg.samples * width);
    accepted = 0;
    const std::size_t iters = cfg.samples * cfg.thin;
    for (std::size_t it = 0, rec = 0; it < iters; ++it) {
        step();
        if ((it + 1) % cfg.thin == 0) {
            const ParameterValues x = target.space.constrain({u.data(), n_params});
            double* row = out.draws.data() + rec * width;
            std::copy(x.flat().begin(), x.flat().end(), row);
            for (std::size_t o = 0; o < traced.size(); ++o) row[n_params + o] = traced[o]->evaluate(x);
            ++rec;
        }
        if ((it + 1) % 1000 == 0) tick(1000);
    }
    if (iters % 1000) tick(iters % 1000);
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(iters);
    out.scale = std::exp(log_scale);
    return out;
}

}  // namespace detail

inline SampleBatch run_chains(const TargetDensity& target, const SamplerConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    if (target.space.dim() == 0) throw config_error("sampler: target has no parameters");

    std::vector<detail::ChainOutput> outs(cfg.n_chains);
    std::vector<std::exception_ptr> errors(cfg.n_chains);
    std::atomic<std::size_t> done{0};
    const std::size_t total = cfg.n_chains * ((cfg.adapt ? cfg.warmup : 0) + cfg.samples * cfg.thin);

    auto work = [&](std::size_t c) {
        try {
            outs[c] = detail::run_one_chain(target, cfg, c, &done, total, progress);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (cfg.parallel && cfg.n_chains > 1) {
        std::vector<std::thread> pool;
        for (std::size_t c = 0; c < cfg.n_chains; ++c) pool.emplace_back(work, c);
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t c = 0; c < cfg.n_chains; ++c) work(c);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    SampleBatch batch;
    batch.parameter_names = target.space.names();
    batch.observable_names = target.observable_names();
    batch.n_samples = cfg.samples;
    for (std::size_t c = 0; c < cfg.n_chains; ++c) {
        batch.chains.push_back(std::move(outs[c].draws));
        batch.acceptance_rate.push_back(outs[c].acceptance);
        batch.proposal_scale.push_back(outs[c].scale);
        if (outs[c].acceptance < 0.1 || outs[c].acceptance > 0.5)
            batch.flags.push_back("chain " + std::to_string(c) + ": acceptance rate " +
                                  std::to_string(outs[c].acceptance) + " outside [0.1, 0.5]");
    }
    return batch;
}

}  // namespace lap
