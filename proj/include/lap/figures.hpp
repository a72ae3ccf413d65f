#pragma once

// Plot-ready datasets: one or more CSV tables per figure plus a JSON
// manifest naming the axes and series.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lap/elicit/solvers.hpp"
#include "lap/errors.hpp"
#include "lap/math/correlation.hpp"
#include "lap/math/distribution.hpp"
#include "lap/models/exponential.hpp"
#include "lap/models/mvn.hpp"
#include "lap/models/repeated_measures.hpp"
#include "lap/sampler/diagnostics.hpp"
#include "lap/sampler/io.hpp"
#include "lap/sampler/mcmc.hpp"

namespace lap::figures {

struct Table {
    std::string name;  // file stem
    std::string x_label, y_label;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;  // one vector per column

    void add(std::string col, std::vector<double> v) {
        if (!data.empty() && v.size() != data.front().size())
            throw numerical_error("figure table '" + name + "': column '" + col + "' has the wrong length");
        columns.push_back(std::move(col));
        data.push_back(std::move(v));
    }
    std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
};

struct Figure {
    int id = 0;
    std::string title;
    std::vector<Table> tables;
    nlohmann::json notes = nlohmann::json::object();
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return x;
}

inline void write_table(std::ostream& out, const Table& t) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << format_number(t.data[c][r]);
        out << '\n';
    }
}

/// Writes figN_<table>.csv for each table and figN.json; returns the written paths.
inline std::vector<std::filesystem::path> write_figure(const Figure& f, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    nlohmann::json manifest{{"figure", f.id}, {"title", f.title}, {"notes", f.notes}};
    manifest["files"] = nlohmann::json::array();
    for (const auto& t : f.tables) {
        const auto path = dir / ("fig" + std::to_string(f.id) + "_" + t.name + ".csv");
        std::ofstream o(path, std::ios::binary);
        if (!o) throw config_error("cannot write '" + path.string() + "'");
        write_table(o, t);
        out.push_back(path);
        manifest["files"].push_back({{"file", path.filename().string()},
                                     {"x", t.columns.front()},
                                     {"series", std::vector<std::string>(t.columns.begin() + 1, t.columns.end())},
                                     {"x_label", t.x_label},
                                     {"y_label", t.y_label}});
    }
    const auto mpath = dir / ("fig" + std::to_string(f.id) + ".json");
    std::ofstream m(mpath, std::ios::binary);
    m << manifest.dump(2) << '\n';
    out.push_back(mpath);
    return out;
}

// ---------------------------------------------------------------------------

inline Figure figure1(double median = 1.0) {
    Figure f{1, "Lomax prior-predictive tertiles for several ESS values with a common median", {}, {}};
    Table t{"tertiles", "ESS", "time", {}, {}};
    std::vector<double> ess{1, 10, 25, 100}, beta, med, q13, q23;
    for (double a : ess) {
        const auto q = elicit::ess_to_tertiles(a, median);
        beta.push_back(median / std::expm1(std::log(2.0) / a));
        med.push_back(median);
        q13.push_back(q.q13);
        q23.push_back(q.q23);
    }
    t.add("ess", ess);
    t.add("beta", beta);
    t.add("median", med);
    t.add("q13", q13);
    t.add("q23", q23);
    f.tables.push_back(std::move(t));
    return f;
}

inline Figure figure2(double alpha = 10.0, double ytilde = 1.0, double t_time = 1.0) {
    Figure f{2, "Probability that survival at t exceeds gamma under the inverse-gamma DAP", {}, {}};
    Table t{"tau", "gamma", "tau", {}, {}};
    const auto g = linspace(0.01, 0.99, 99);
    std::vector<double> tau;
    for (double x : g) tau.push_back(elicit::dap_survival_prob(alpha, ytilde, t_time, x));
    t.add("gamma", g);
    t.add("tau", tau);
    f.tables.push_back(std::move(t));
    f.notes = {{"alpha", alpha}, {"ytilde", ytilde}, {"t", t_time}};
    return f;
}

inline Figure figure3(double alpha = 10.0, double ytilde = 1.0) {
    Figure f{3, "Median survival under the inverse-gamma DAP", {}, {}};
    Table d{"density", "median survival", "density", {}, {}};
    const auto x = linspace(0.01, 2.0, 400);
    std::vector<double> pdf;
    for (double v : x) pdf.push_back(models::dap_density_median_survival(alpha, alpha * ytilde, v));
    d.add("t_med", x);
    d.add("density", pdf);
    Table q{"quantiles", "p", "median survival", {}, {}};
    const auto p = linspace(0.01, 0.99, 99);
    std::vector<double> qs;
    for (double v : p) qs.push_back(elicit::dap_median_survival_quantile(alpha, ytilde, v));
    q.add("p", p);
    q.add("t_med", qs);
    f.tables = {std::move(d), std::move(q)};
    f.notes = {{"alpha", alpha}, {"ytilde", ytilde}, {"median", elicit::dap_median_survival_quantile(alpha, ytilde, 0.5)}};
    return f;
}

inline std::vector<double> kde_on(const std::vector<double>& draws, const std::vector<double>& x) {
    return kde_at(draws, x);
}

inline Figure figure4(std::uint64_t seed = 1) {
    Figure f{4, "Marginal density of one correlation, k = 4, eta = 1, with and without flattening", {}, {}};
    const auto x = linspace(-0.99, 0.99, 199);
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.warmup = 5000;
    cfg.samples = 5000;
    cfg.thin = 4;
    std::vector<std::vector<double>> series;
    for (auto fl : {models::Flattening::none, models::Flattening::marginal_beta}) {
        models::MvnModel m;
        m.k = 4;
        m.hypers.assign(4, elicit::NormalGammaHyper{0.0, 10.0, 5.0, 5.0});
        m.flattening = fl;
        const auto b = run_chains(models::mvn_target(m), cfg);
        series.push_back(kde_on(b.column("Sigma[1,2]"), x));
    }
    std::vector<double> beta22;
    for (double v : x) beta22.push_back(std::exp(math::lkj_marginal_log_density(v, 1.0, 4)));
    Table t{"marginal", "r_12", "density", {}, {}};
    t.add("r", x);
    t.add("beta22_analytic", beta22);
    t.add("standard_sampled", series[0]);
    t.add("flattened_sampled", series[1]);
    f.tables.push_back(std::move(t));
    f.notes = {{"seed", seed}};
    return f;
}

struct Figure5Result {
    Figure figure;
    double max_gap = 0.0;
};

inline Figure5Result figure5(std::uint64_t seed = 1) {
    Figure f{5, "Posterior of median survival induced by the lognormal loss", {}, {}};
    const ExpertBelief b{"t_med", math::DistributionSpec::lognormal(-0.32, 0.34), "expert"};
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.thin = 10;
    const auto batch = run_chains(models::exponential_loss_only_target(b, models::ExpParameterization::median_direct), cfg);
    const auto g = kde_grid(batch.column("t_med"), 512);
    Table t{"t_med", "median survival", "density", {}, {}};
    std::vector<double> ln;
    double gap = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        ln.push_back(b.spec.pdf(g.x[i]));
        gap = std::max(gap, std::fabs(ln.back() - g.pdf[i]));
    }
    t.add("t_med", g.x);
    t.add("posterior_kde", g.pdf);
    t.add("lognormal_pdf", ln);
    f.tables.push_back(std::move(t));
    f.notes = {{"seed", seed}, {"max_pointwise_gap", gap}};
    return {std::move(f), gap};
}

inline models::MvnModel expert_concordance_model() {
    models::MvnModel m;
    m.k = 4;
    m.hypers = models::mvn_hypers_from_quantiles({{5.0, 6.35}, {2.0, 2.67}, {1.0, 1.34}, {3.0, 5.02}}, 10.0);
    const double p[] = {0.60, 0.25, 0.40, 0.50, 0.50, 0.50};
    for (std::size_t n = 0; n < 6; ++n) {
        const auto [i, j] = math::corr_pair(n);
        m.concordances.push_back({i, j, p[n], 10.0});
    }
    return m;
}

inline Figure figure6(std::uint64_t seed = 1) {
    Figure f{6, "Concordance (a) and correlation (b) posteriors under the Fisher losses", {}, {}};
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.warmup = 10000;
    cfg.samples = 10000;
    cfg.thin = 10;
    const auto b = run_chains(models::mvn_target(expert_concordance_model()), cfg);
    const auto xp = linspace(0.005, 0.995, 199);
    const auto xr = linspace(-0.99, 0.99, 199);
    Table a{"concordance", "concordance probability", "density", {}, {}};
    Table r{"correlation", "correlation", "density", {}, {}};
    a.add("p", xp);
    r.add("r", xr);
    nlohmann::json medians = nlohmann::json::object();
    for (std::size_t n = 0; n < 6; ++n) {
        const auto [i, j] = math::corr_pair(n);
        const auto lbl = models::pair_label(i, j);
        const auto cp = b.column("concordance" + lbl);
        a.add("p" + lbl, kde_on(cp, xp));
        r.add("r" + lbl, kde_on(b.column("Sigma" + lbl), xr));
        medians[lbl] = empirical_quantile(cp, 0.5);
    }
    f.tables = {std::move(a), std::move(r)};
    f.notes = {{"seed", seed}, {"posterior_median_concordance", medians}};
    return f;
}

struct RegressionRuns {
    SampleBatch data_only;
    SampleBatch with_belief;
    models::RepeatedMeasuresModel layout;
};

inline RegressionRuns regression_runs(std::uint64_t seed = 1, std::size_t thin = 20) {
    const auto data = models::generate_repeated_measures({});
    const auto m = models::repeated_measures_layout(data);
    SamplerConfig cfg;
    cfg.seed = seed;
    cfg.warmup = 10000;
    cfg.thin = thin;
    const ExpertBelief b{"xi", math::DistributionSpec::normal(2.5, 1.5), "expert change from baseline"};
    return {run_chains(models::repeated_measures_target(m, data, std::nullopt), cfg),
            run_chains(models::repeated_measures_target(m, data, b), cfg), m};
}

inline Figure figure7(const RegressionRuns& runs) {
    Figure f{7, "Reference-group fixed-effects trajectory with and without the expert loss (synthetic data)", {}, {}};
    const auto& m = runs.layout;
    const auto P = m.contrasts();
    Table t{"trajectory", "time", "expected response", {}, {}};
    std::vector<double> without, with;
    for (std::size_t ti = 0; ti < m.times.size(); ++ti) {
        const Eigen::RowVectorXd x = m.design_row(0, ti, P);
        for (auto* pair : {&without, &with}) {
            const auto& b = pair == &without ? runs.data_only : runs.with_belief;
            double s = 0.0;
            for (Eigen::Index c = 0; c < x.size(); ++c)
                s += x(c) * sample_mean(b.column("beta[" + std::to_string(c + 1) + "]"));
            pair->push_back(s);
        }
    }
    t.add("time", m.times);
    t.add("data_only", without);
    t.add("data_and_belief", with);
    f.tables.push_back(std::move(t));
    f.notes = {{"data", "synthetic stand-in generated by generate_repeated_measures"}};
    return f;
}

inline Figure figure8(const RegressionRuns& runs) {
    Figure f{8, "Change from baseline in the reference group: data only, with expert loss, expert belief", {}, {}};
    const auto x = linspace(-3.0, 7.0, 401);
    const auto belief = math::DistributionSpec::normal(2.5, 1.5);
    std::vector<double> bp;
    for (double v : x) bp.push_back(belief.pdf(v));
    Table t{"xi", "change from baseline", "density", {}, {}};
    const auto xd = runs.data_only.column("xi"), xb = runs.with_belief.column("xi");
    t.add("xi", x);
    t.add("data_only", kde_on(xd, x));
    t.add("data_and_belief", kde_on(xb, x));
    t.add("belief", bp);
    f.tables.push_back(std::move(t));
    f.notes = {{"data_only_mean", sample_mean(xd)},   {"data_only_sd", sample_sd(xd)},
               {"with_belief_mean", sample_mean(xb)}, {"with_belief_sd", sample_sd(xb)},
               {"ess_heuristic", elicit::regression_ess_heuristic(sample_sd(xd), 13.0, 1.5)}};
    return f;
}

inline std::vector<Figure> make_figure(int id, std::uint64_t seed) {
    switch (id) {
    case 1: return {figure1()};
    case 2: return {figure2()};
    case 3: return {figure3()};
    case 4: return {figure4(seed)};
    case 5: return {figure5(seed).figure};
    case 6: return {figure6(seed)};
    case 7:
    case 8: {
        const auto runs = regression_runs(seed);
        return {id == 7 ? figure7(runs) : figure8(runs)};
    }
    default: throw domain_error("figure id must be between 1 and 8");
    }
}

}  // namespace lap::figures
