#pragma once

// Convergence diagnostics (rank-normalised split R-hat, bulk ESS) and the
// distribution-matching helpers used by acceptance tests: empirical
// quantiles, quantile_match, Kolmogorov-Smirnov distance and KDE grids.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "lap/errors.hpp"
#include "lap/math/distribution.hpp"
#include "lap/sampler/mcmc.hpp"

namespace lap {

/// Linear-interpolation sample quantile (type 7). `sorted` must be ascending.
inline double sorted_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw domain_error("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double empirical_quantile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    return sorted_quantile(x, p);
}

inline double sample_mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_sd(std::span<const double> x) {
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// R-hat / ESS

namespace detail {

/// Replace draws by normal scores of their pooled ranks (average ranks for ties).
inline std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
    std::vector<std::pair<double, std::size_t>> pooled;
    std::size_t total = 0;
    for (const auto& c : chains) total += c.size();
    pooled.reserve(total);
    for (std::size_t ci = 0, k = 0; ci < chains.size(); ++ci)
        for (double v : chains[ci]) pooled.emplace_back(v, k++);
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> rank(total);
    for (std::size_t i = 0; i < total;) {
        std::size_t j = i;
        while (j + 1 < total && pooled[j + 1].first == pooled[i].first) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t m = i; m <= j; ++m) rank[pooled[m].second] = r;
        i = j + 1;
    }
    const boost::math::normal_distribution<double> std_normal;
    std::vector<std::vector<double>> out(chains.size());
    for (std::size_t ci = 0, k = 0; ci < chains.size(); ++ci) {
        out[ci].reserve(chains[ci].size());
        for (std::size_t i = 0; i < chains[ci].size(); ++i, ++k) {
            const double p = (rank[k] - 0.375) / (static_cast<double>(total) + 0.25);
            out[ci].push_back(boost::math::quantile(std_normal, p));
        }
    }
    return out;
}

inline std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
    }
    return out;
}

inline bool is_constant(const std::vector<std::vector<double>>& chains) {
    for (const auto& c : chains)
        for (double v : c)
            if (v != chains.front().front()) return false;
    return true;
}

inline double classic_rhat(const std::vector<std::vector<double>>& chains) {
    const auto m = static_cast<double>(chains.size());
    const auto n = static_cast<double>(chains.front().size());
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        means.push_back(sample_mean(c));
        vars.push_back(sample_sd(c) * sample_sd(c));
    }
    const double grand = sample_mean(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= n / (m - 1.0);
    const double w = sample_mean(vars);
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

}  // namespace detail

/// Rank-normalised split R-hat. Empty when fewer than two chains, fewer than
/// four draws per chain, or all draws are identical (degenerate).
inline std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2 || chains.front().size() < 4) return std::nullopt;
    if (detail::is_constant(chains)) return std::nullopt;
    const auto z = detail::rank_normalize(detail::split_halves(chains));
    const double r = detail::classic_rhat(z);
    if (!std::isfinite(r)) return std::nullopt;
    return r;
}

/// Bulk effective sample size (rank-normalised, Geyer initial monotone sequence).
inline double ess_bulk(const std::vector<std::vector<double>>& chains) {
    if (chains.empty() || chains.front().size() < 4) return 0.0;
    if (detail::is_constant(chains)) return 0.0;
    const auto z = detail::rank_normalize(detail::split_halves(chains));
    const std::size_t m = z.size();
    const std::size_t n = z.front().size();

    std::vector<double> means(m), var0(m);
    for (std::size_t c = 0; c < m; ++c) means[c] = sample_mean(z[c]);
    auto acov_mean = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double a = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) a += (z[c][i] - means[c]) * (z[c][i + lag] - means[c]);
            s += a / static_cast<double>(n);
        }
        return s / static_cast<double>(m);
    };
    const double mean_var = acov_mean(0) * static_cast<double>(n) / static_cast<double>(n - 1);
    double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
    if (m > 1) {
        const double g = sample_mean(means);
        double b = 0.0;
        for (double mu : means) b += (mu - g) * (mu - g);
        var_plus += b / static_cast<double>(m - 1);
    }
    auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - acov_mean(lag)) / var_plus; };

    // Geyer: sum consecutive pairs while positive, forcing monotone decrease.
    double sum = 1.0;  // rho(0)
    double prev_pair = std::numeric_limits<double>::infinity();
    double rho_odd = rho(1);
    double pair = 1.0 + rho_odd;
    sum += rho_odd;
    prev_pair = pair;
    for (std::size_t t = 2; t + 1 < n; t += 2) {
        const double even = rho(t), odd = rho(t + 1);
        double p = even + odd;
        if (p < 0.0) break;
        p = std::min(p, prev_pair);
        sum += p;
        prev_pair = p;
    }
    const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(m * n)));
    return static_cast<double>(m * n) / tau;
}

struct ColumnDiagnostics {
    std::string name;
    std::optional<double> rhat;
    double ess = 0.0;
    bool degenerate = false;
    bool rhat_flag = false;  // R-hat > 1.01
};

struct DiagnosticsReport {
    std::vector<ColumnDiagnostics> columns;
    std::vector<double> acceptance_rate;
    std::vector<std::string> flags;
    bool rhat_available = true;

    const ColumnDiagnostics& find(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return c;
        throw config_error("no diagnostics for column '" + name + "'");
    }
};

inline DiagnosticsReport diagnostics(const SampleBatch& batch) {
    DiagnosticsReport rep;
    rep.acceptance_rate = batch.acceptance_rate;
    rep.flags = batch.flags;
    rep.rhat_available = batch.n_chains() >= 2;
    if (!rep.rhat_available) rep.flags.push_back("R-hat unavailable: single chain");
    if (batch.n_samples < 100) rep.flags.push_back("fewer than 100 post-warmup draws per chain");
    const auto cols = batch.columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        ColumnDiagnostics cd;
        cd.name = cols[i];
        const auto chains = batch.column_by_chain(i);
        cd.degenerate = detail::is_constant(chains);
        if (rep.rhat_available) cd.rhat = split_rhat(chains);
        cd.ess = ess_bulk(chains);
        cd.rhat_flag = cd.rhat && *cd.rhat > 1.01;
        if (cd.degenerate) rep.flags.push_back(cd.name + ": constant draws, R-hat undefined");
        if (cd.rhat_flag) rep.flags.push_back(cd.name + ": R-hat " + std::to_string(*cd.rhat) + " > 1.01");
        rep.columns.push_back(std::move(cd));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Distribution matching

struct QuantileDeviation {
    double p = 0.0;
    double empirical = 0.0;
    double reference = 0.0;
    double deviation = 0.0;
    bool absolute = false;  // reference quantile was zero
};

struct QuantileMatch {
    double max_deviation = 0.0;
    std::vector<QuantileDeviation> entries;
    std::vector<std::string> notes;
};

inline QuantileMatch quantile_match(std::vector<double> draws, const math::DistributionSpec& ref,
                                    const std::vector<double>& probs = {0.1, 0.25, 0.5, 0.75, 0.9}) {
    if (draws.size() < 1000) throw domain_error("quantile_match: need at least 1000 draws");
    std::sort(draws.begin(), draws.end());
    QuantileMatch out;
    for (double p : probs) {
        QuantileDeviation q;
        q.p = p;
        q.empirical = sorted_quantile(draws, p);
        q.reference = ref.quantile(p);
        if (q.reference == 0.0) {
            q.absolute = true;
            q.deviation = std::fabs(q.empirical);
            out.notes.push_back("p=" + std::to_string(p) + ": reference quantile is zero, absolute deviation used");
        } else {
            q.deviation = std::fabs(q.empirical - q.reference) / std::fabs(q.reference);
        }
        out.max_deviation = std::max(out.max_deviation, q.deviation);
        out.entries.push_back(q);
    }
    return out;
}

/// sup |F_n(x) - F(x)| over the sample.
inline double ks_statistic(std::vector<double> draws, const std::function<double(double)>& cdf) {
    std::sort(draws.begin(), draws.end());
    const auto n = static_cast<double>(draws.size());
    double d = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double f = cdf(draws[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

struct DensityGrid {
    std::vector<double> x;
    std::vector<double> pdf;
    double bandwidth = 0.0;
};

inline double silverman_bandwidth(const std::vector<double>& sorted) {
    const auto n = static_cast<double>(sorted.size());
    const double sd = sample_sd(sorted);
    const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
    return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian KDE of `sorted` draws with bandwidth h at the points `x`.
inline std::vector<double> kde_eval(const std::vector<double>& sorted, double h, std::span<const double> x) {
    const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        // only draws within 8 bandwidths contribute measurably
        auto first = std::lower_bound(sorted.begin(), sorted.end(), x[i] - 8.0 * h);
        auto last = std::upper_bound(sorted.begin(), sorted.end(), x[i] + 8.0 * h);
        double s = 0.0;
        for (auto it = first; it != last; ++it) {
            const double z = (x[i] - *it) / h;
            s += std::exp(-0.5 * z * z);
        }
        out[i] = s * norm;
    }
    return out;
}

/// KDE with Silverman's rule-of-thumb bandwidth at caller-chosen points.
inline std::vector<double> kde_at(std::vector<double> draws, std::span<const double> x) {
    if (draws.size() < 2) throw domain_error("kde: need at least two draws");
    std::sort(draws.begin(), draws.end());
    return kde_eval(draws, silverman_bandwidth(draws), x);
}

/// Gaussian KDE on an evenly spaced grid, Silverman's rule-of-thumb bandwidth.
inline DensityGrid kde_grid(std::vector<double> draws, std::size_t points = 512) {
    if (draws.size() < 2) throw domain_error("kde: need at least two draws");
    if (points < 2) throw domain_error("kde: need at least two grid points");
    std::sort(draws.begin(), draws.end());
    DensityGrid g;
    g.bandwidth = silverman_bandwidth(draws);
    const double lo = draws.front() - 3.0 * g.bandwidth;
    const double hi = draws.back() + 3.0 * g.bandwidth;
    const double step = (hi - lo) / static_cast<double>(points - 1);
    g.x.resize(points);
    for (std::size_t i = 0; i < points; ++i) g.x[i] = lo + step * static_cast<double>(i);
    g.pdf = kde_eval(draws, g.bandwidth, g.x);
    return g;
}

/// Quantile of a density grid through its trapezoid-rule CDF.
inline double grid_quantile(const DensityGrid& g, double p) {
    std::vector<double> cdf(g.x.size(), 0.0);
    for (std::size_t i = 1; i < g.x.size(); ++i)
        cdf[i] = cdf[i - 1] + 0.5 * (g.pdf[i] + g.pdf[i - 1]) * (g.x[i] - g.x[i - 1]);
    const double total = cdf.back();
    const double target = p * total;
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        if (cdf[i] >= target) {
            const double f = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
            return g.x[i - 1] + f * (g.x[i] - g.x[i - 1]);
        }
    }
    return g.x.back();
}

}  // namespace lap
