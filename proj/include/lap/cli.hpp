#pragma once

// Command table for the `lap` executable. run_cli() is the whole program;
// main() only forwards argv and the standard streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lap/elicit/coherency.hpp"
#include "lap/elicit/solvers.hpp"
#include "lap/errors.hpp"
#include "lap/figures.hpp"
#include "lap/math/special.hpp"
#include "lap/models/assemble.hpp"
#include "lap/sampler/io.hpp"
#include "lap/sampler/mcmc.hpp"
#include "lap/service/server.hpp"

namespace lap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Ordered command output, printed either as `key value` lines (tables as
/// CSV) or as one JSON object. Both paths share format_number.
class Report {
public:
    void num(std::string key, double v) { fields_.push_back({std::move(key), v}); }
    void text(std::string key, std::string v) { fields_.push_back({std::move(key), std::move(v)}); }
    void table(std::string key, figures::Table t) { fields_.push_back({std::move(key), std::move(t)}); }

    void print(std::ostream& out, bool as_json) const {
        if (as_json) print_json(out);
        else print_plain(out);
    }

private:
    struct Field {
        std::string key;
        std::variant<double, std::string, figures::Table> value;
    };
    std::vector<Field> fields_;

    static std::string json_number(double v) { return std::isfinite(v) ? format_number(v) : "null"; }
    static std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

    void print_plain(std::ostream& out) const {
        for (std::size_t n = 0; n < fields_.size(); ++n) {
            const auto& f = fields_[n];
            if (const auto* d = std::get_if<double>(&f.value)) out << f.key << ' ' << format_number(*d) << '\n';
            else if (const auto* s = std::get_if<std::string>(&f.value)) out << f.key << ' ' << *s << '\n';
            else {
                if (n > 0) out << '\n';
                figures::write_table(out, std::get<figures::Table>(f.value));
            }
        }
    }

    void print_json(std::ostream& out) const {
        out << '{';
        for (std::size_t n = 0; n < fields_.size(); ++n) {
            const auto& f = fields_[n];
            out << (n ? "," : "") << json_string(f.key) << ':';
            if (const auto* d = std::get_if<double>(&f.value)) out << json_number(*d);
            else if (const auto* s = std::get_if<std::string>(&f.value)) out << json_string(*s);
            else {
                const auto& t = std::get<figures::Table>(f.value);
                out << "{\"columns\":[";
                for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << json_string(t.columns[c]);
                out << "],\"rows\":[";
                for (std::size_t r = 0; r < t.rows(); ++r) {
                    out << (r ? ",[" : "[");
                    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << json_number(t.data[c][r]);
                    out << ']';
                }
                out << "]}";
            }
        }
        out << "}\n";
    }
};

namespace detail {

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot read '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline nlohmann::json read_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(slurp(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ingestion, "'" + path + "' is not valid JSON: " + e.what());
    }
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows, const std::string& what) {
    if (!rows.is_array() || rows.empty()) throw config_error(what + ": expected a non-empty array of rows");
    const auto k = rows.size();
    Eigen::MatrixXd M(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < k; ++r) {
        if (!rows[r].is_array() || rows[r].size() != k) throw config_error(what + ": matrix must be square");
        for (std::size_t c = 0; c < k; ++c) {
            if (!rows[r][c].is_number()) throw config_error(what + ": entries must be numbers");
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
        }
    }
    return M;
}

/// `{"correlation": [[..]]}`, `{"concordance": [[..]]}` or a bare correlation array.
inline std::vector<elicit::CoherencyReport> coherency_from_file(const std::string& path) {
    const auto doc = read_json_file(path);
    if (doc.is_array()) return elicit::coherency_intervals(matrix_from_json(doc, path));
    if (doc.contains("concordance"))
        return elicit::coherency_intervals_from_concordance(matrix_from_json(doc.at("concordance"), path));
    if (doc.contains("correlation")) return elicit::coherency_intervals(matrix_from_json(doc.at("correlation"), path));
    throw config_error(path + ": expected 'correlation' or 'concordance'");
}

/// JSON `[[p, value], ...]` / `[{"p":..,"value":..}]`, or CSV with an optional `p,value` header.
inline std::vector<elicit::QuantilePair> pairs_from_file(const std::string& path) {
    const auto text = slurp(path);
    std::vector<elicit::QuantilePair> out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::ingestion, "'" + path + "' is not valid JSON: " + e.what());
        }
        if (doc.is_object() && doc.contains("pairs")) doc = doc.at("pairs");
        for (const auto& e : doc) {
            if (e.is_array() && e.size() == 2) out.push_back({e[0].get<double>(), e[1].get<double>()});
            else if (e.is_object()) out.push_back({e.at("p").get<double>(), e.at("value").get<double>()});
            else throw config_error(path + ": each pair must be [p, value] or {p, value}");
        }
        return out;
    }
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = models::detail::split_csv_line(line);
        if (row == 1 && cells.size() == 2 && cells[0] == "p") continue;
        if (cells.size() != 2) throw Error(ErrorKind::ingestion, path + ": row " + std::to_string(row) + ": expected p,value");
        out.push_back({models::detail::parse_number(cells[0], row, "p"),
                       models::detail::parse_number(cells[1], row, "value")});
    }
    return out;
}

inline std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw config_error("'" + tok + "' is not a number");
        }
    }
    if (out.empty()) throw config_error("empty list");
    return out;
}

inline figures::Table coherency_table(const std::vector<elicit::CoherencyReport>& reps) {
    figures::Table t{"coherency", "", "", {}, {}};
    std::vector<double> i, j, r, lo, hi, in, p, plo, phi;
    for (const auto& x : reps) {
        i.push_back(static_cast<double>(x.i + 1));
        j.push_back(static_cast<double>(x.j + 1));
        r.push_back(x.r);
        lo.push_back(x.lo);
        hi.push_back(x.hi);
        in.push_back(x.in_interval ? 1.0 : 0.0);
        p.push_back(x.p);
        plo.push_back(x.p_lo);
        phi.push_back(x.p_hi);
    }
    t.add("i", i);
    t.add("j", j);
    t.add("r", r);
    t.add("lo", lo);
    t.add("hi", hi);
    t.add("in_interval", in);
    t.add("p", p);
    t.add("p_lo", plo);
    t.add("p_hi", phi);
    return t;
}

}  // namespace detail

/// Runs one command. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Loss-adjusted posterior elicitation engine", "lap"};
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "print numeric output as JSON");
    app.set_version_flag("--version", std::string(kEngineVersion));

    Report report;
    std::function<void()> action;

    // solve-lomax
    double q13 = 0, q23 = 0;
    auto* c = app.add_subcommand("solve-lomax", "Lomax (alpha, beta) from prior-predictive tertiles");
    c->add_option("--q13", q13, "Q(1/3)")->required();
    c->add_option("--q23", q23, "Q(2/3)")->required();
    c->callback([&] {
        action = [&] {
            const auto r = elicit::solve_lomax_tertiles({q13, q23});
            report.num("alpha", r.alpha);
            report.num("beta", r.beta);
        };
    });

    // lomax-tertiles
    std::string ess_list;
    double median = 1.0;
    c = app.add_subcommand("lomax-tertiles", "tertiles of Lomax predictives with a common median");
    c->add_option("--ess", ess_list, "comma-separated ESS values (Lomax alpha)")->required();
    c->add_option("--median", median, "common median")->required();
    c->callback([&] {
        action = [&] {
            figures::Table t{"tertiles", "ESS", "time", {}, {}};
            std::vector<double> ess = detail::parse_list(ess_list), beta, a, b;
            for (double e : ess) {
                const auto q = elicit::ess_to_tertiles(e, median);
                beta.push_back(median / std::expm1(math::kLn2 / e));
                a.push_back(q.q13);
                b.push_back(q.q23);
            }
            t.add("ess", ess);
            t.add("beta", beta);
            t.add("q13", a);
            t.add("q23", b);
            report.table("tertiles", std::move(t));
        };
    });

    // dap-tau
    double alpha = 0, ytilde = 0, t_time = 0, gamma = 0;
    bool grid = false;
    c = app.add_subcommand("dap-tau", "Pr(S(t) > gamma) under the inverse-gamma DAP");
    c->add_option("--alpha", alpha)->required();
    c->add_option("--ytilde", ytilde)->required();
    c->add_option("--t", t_time)->required();
    c->add_option("--gamma", gamma, "survival threshold (ignored with --grid)");
    c->add_flag("--grid", grid, "tabulate tau over gamma in (0, 1)");
    c->callback([&] {
        action = [&] {
            if (grid) {
                report.table("tau", figures::figure2(alpha, ytilde, t_time).tables.front());
                return;
            }
            report.num("tau", elicit::dap_survival_prob(alpha, ytilde, t_time, gamma));
        };
    });

    // dap-median
    double p_level = 0.5;
    c = app.add_subcommand("dap-median", "quantile of median survival under the DAP");
    c->add_option("--alpha", alpha)->required();
    c->add_option("--ytilde", ytilde)->required();
    c->add_option("--p", p_level, "probability level");
    c->add_flag("--grid", grid, "density and quantile tables");
    c->callback([&] {
        action = [&] {
            if (grid) {
                const auto f = figures::figure3(alpha, ytilde);
                for (const auto& t : f.tables) report.table(t.name, t);
                return;
            }
            report.num("t_med", elicit::dap_median_survival_quantile(alpha, ytilde, p_level));
        };
    });

    // moment-match-ln
    c = app.add_subcommand("moment-match-ln", "lognormal matching the DAP median-survival moments");
    c->add_option("--alpha", alpha)->required();
    c->add_option("--ytilde", ytilde)->required();
    c->callback([&] {
        action = [&] {
            const auto r = elicit::lognormal_from_ig_median_survival(alpha, ytilde);
            report.num("mu", r.mu);
            report.num("sigma", r.sigma);
        };
    });

    // fit-t
    double q50 = 0, q75 = 0, n_e = 0;
    c = app.add_subcommand("fit-t", "NormalGamma hyperparameters from a median, upper quartile and ESS");
    c->add_option("--q50", q50)->required();
    c->add_option("--q75", q75)->required();
    c->add_option("--ess", n_e)->required();
    c->callback([&] {
        action = [&] {
            const auto h = elicit::fit_student_t_hyperparams(q50, q75, n_e);
            report.num("mu0", h.mu0);
            report.num("gamma", h.gamma);
            report.num("alpha", h.alpha);
            report.num("beta", h.beta);
        };
    });

    // concord
    std::optional<double> conc_p, conc_r;
    c = app.add_subcommand("concord", "convert between concordance probability and correlation");
    auto* op = c->add_option("--p", conc_p, "concordance probability");
    auto* orr = c->add_option("--r", conc_r, "correlation");
    op->excludes(orr);
    c->callback([&] {
        action = [&] {
            if (conc_p) report.num("r", math::concordance_to_correlation(*conc_p));
            else if (conc_r) report.num("p", math::correlation_to_concordance(*conc_r));
            else throw config_error("concord: give --p or --r");
        };
    });

    // coherency
    std::string matrix_path;
    c = app.add_subcommand("coherency", "feasible interval for each off-diagonal entry");
    c->add_option("--matrix", matrix_path, "JSON file: correlation or concordance matrix")->required();
    c->callback([&] { action = [&] { report.table("coherency", detail::coherency_table(detail::coherency_from_file(matrix_path))); }; });

    // fit-ess-gamma
    std::string pairs_path;
    c = app.add_subcommand("fit-ess-gamma", "gamma (shape = ESS, rate) fitted to (p, quantile) pairs");
    c->add_option("--pairs", pairs_path, "CSV (p,value) or JSON pairs")->required();
    c->callback([&] {
        action = [&] {
            const auto g = elicit::estimate_ess_gamma(detail::pairs_from_file(pairs_path));
            report.num("shape", g.shape);
            report.num("rate", g.rate);
            report.num("residual", g.residual);
        };
    });

    // ess-heuristic
    double sd_post = 0, n_data = 0, sd_expert = 0;
    c = app.add_subcommand("ess-heuristic", "expert-equivalent sample size from posterior spreads");
    c->add_option("--sd-post", sd_post)->required();
    c->add_option("--n", n_data)->required();
    c->add_option("--sd-expert", sd_expert)->required();
    c->callback([&] { action = [&] { report.num("n_expert", elicit::regression_ess_heuristic(sd_post, n_data, sd_expert)); }; });

    // sample
    std::string model_path, data_path, out_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> chains, warmup, samples, thin;
    c = app.add_subcommand("sample", "run the sampler on a model document");
    c->add_option("--model", model_path, "model JSON")->required();
    c->add_option("--data", data_path, "data CSV (overrides the document)");
    c->add_option("--out", out_path, "draws CSV; diagnostics go to <out>.diagnostics.json")->required();
    c->add_option("--seed", seed);
    c->add_option("--chains", chains);
    c->add_option("--warmup", warmup);
    c->add_option("--samples", samples);
    c->add_option("--thin", thin);
    c->callback([&] {
        action = [&] {
            const auto doc = detail::read_json_file(model_path);
            const auto base = std::filesystem::path(model_path).parent_path();
            auto m = models::assemble_target(doc, base, data_path.empty() ? std::nullopt : std::optional(data_path));
            if (seed) m.sampler.seed = *seed;
            if (chains) m.sampler.n_chains = *chains;
            if (warmup) m.sampler.warmup = *warmup;
            if (samples) m.sampler.samples = *samples;
            if (thin) m.sampler.thin = *thin;
            m.sampler.validate();
            for (const auto& w : m.target.warnings) err << "warning: " << w << '\n';
            const auto batch = run_chains(m.target, m.sampler);
            write_draws(out_path, batch,
                        {{"engine_version", kEngineVersion}, {"family", m.family}, {"seed", m.sampler.seed},
                         {"chains", m.sampler.n_chains}, {"warmup", m.sampler.warmup}, {"samples", m.sampler.samples},
                         {"thin", m.sampler.thin}});
            for (const auto& f : diagnostics(batch).flags) err << "warning: " << f << '\n';
            report.text("draws", out_path);
            report.num("rows", static_cast<double>(batch.n_chains() * batch.n_samples));
        };
    });

    // plot-data
    int figure_id = 0;
    std::string out_dir;
    std::uint64_t fig_seed = 1;
    c = app.add_subcommand("plot-data", "write CSV datasets for one figure");
    c->add_option("--figure", figure_id, "figure id")->required()->check(CLI::Range(1, 8));
    c->add_option("--out", out_dir, "output directory")->required();
    c->add_option("--seed", fig_seed);
    c->callback([&] {
        action = [&] {
            for (const auto& f : figures::make_figure(figure_id, fig_seed))
                for (const auto& path : figures::write_figure(f, out_dir)) report.text("file", path.string());
        };
    });

    // serve
    std::optional<int> port;
    std::optional<std::string> data_dir;
    std::optional<std::size_t> workers;
    c = app.add_subcommand("serve", "run the HTTP session service");
    c->add_option("--port", port, "listen port (default LAP_PORT or 8080)");
    c->add_option("--data-dir", data_dir, "session storage (default LAP_DATA_DIR or ./lap-data)");
    c->add_option("--workers", workers, "sampling workers (default LAP_WORKERS or 1)");
    c->callback([&] {
        action = [&] {
            auto cfg = service::ServiceConfig::from_env();
            if (port) cfg.port = *port;
            if (data_dir) cfg.data_dir = *data_dir;
            if (workers) cfg.workers = *workers;
            service::Service svc(cfg);
            err << "listening on 127.0.0.1:" << cfg.port << '\n';
            if (!svc.listen()) throw config_error("cannot listen on port " + std::to_string(cfg.port));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitInput;
    }
    try {
        action();
        report.print(out, as_json);
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.is_input_error() ? kExitInput : kExitNumerical;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace lap::cli
