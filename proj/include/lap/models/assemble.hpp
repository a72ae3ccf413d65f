#pragma once

// Model + belief documents:
//   {"model": {"family": "exponential" | "mvn" | "repeated_measures", ...},
//    "beliefs": [{"observable": "...", "family": "...", "params": {...}}],
//    "data": inline value or a CSV path (relative paths resolve against base_dir),
//    "sampler": {"chains", "warmup", "samples", "thin", "seed"}}

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "lap/errors.hpp"
#include "lap/loss/target.hpp"
#include "lap/math/distribution.hpp"
#include "lap/models/exponential.hpp"
#include "lap/models/mvn.hpp"
#include "lap/models/repeated_measures.hpp"
#include "lap/sampler/mcmc.hpp"

namespace lap::models {

using nlohmann::json;

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(std::string("field '") + key + "' has the wrong type");
    }
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw config_error(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(where + ": field '" + key + "' has the wrong type");
    }
}

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
    std::filesystem::path p(path);
    return p.is_absolute() || base.empty() ? p.string() : (base / p).string();
}

inline std::vector<std::vector<std::string>> read_csv_cells(const std::string& path, std::vector<std::string>& header) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::ingestion, "cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw Error(ErrorKind::ingestion, "data file '" + path + "' is empty");
    header = split_csv_line(line);
    std::vector<std::vector<std::string>> rows;
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw Error(ErrorKind::ingestion, path + " row " + std::to_string(row) + ": expected " +
                                                  std::to_string(header.size()) + " fields, found " +
                                                  std::to_string(cells.size()));
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace detail

inline std::vector<ExpertBelief> beliefs_from_json(const json& doc) {
    std::vector<ExpertBelief> out;
    if (!doc.contains("beliefs")) return out;
    const auto& arr = doc.at("beliefs");
    if (!arr.is_array()) throw config_error("'beliefs' must be an array");
    for (const auto& b : arr) {
        ExpertBelief e{detail::require<std::string>(b, "observable", "belief"), math::distribution_from_json(b),
                       detail::get_or<std::string>(b, "description", "")};
        out.push_back(std::move(e));
    }
    return out;
}

inline SamplerConfig sampler_from_json(const json& doc) {
    SamplerConfig c;
    if (!doc.contains("sampler")) return c;
    const auto& s = doc.at("sampler");
    c.n_chains = detail::get_or<std::size_t>(s, "chains", c.n_chains);
    c.warmup = detail::get_or<std::size_t>(s, "warmup", c.warmup);
    c.samples = detail::get_or<std::size_t>(s, "samples", c.samples);
    c.thin = detail::get_or<std::size_t>(s, "thin", c.thin);
    c.seed = detail::get_or<std::uint64_t>(s, "seed", c.seed);
    c.target_acceptance = detail::get_or<double>(s, "target_acceptance", c.target_acceptance);
    c.init_jitter = detail::get_or<double>(s, "init_jitter", c.init_jitter);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

inline SurvivalData survival_data_from_json(const json& d, const std::filesystem::path& base) {
    SurvivalData s;
    if (d.is_string()) {
        std::vector<std::string> header;
        const auto path = detail::resolve(d.get<std::string>(), base);
        const auto rows = detail::read_csv_cells(path, header);
        const auto t = std::find(header.begin(), header.end(), "time");
        const auto e = std::find(header.begin(), header.end(), "event");
        if (t == header.end() || e == header.end())
            throw Error(ErrorKind::ingestion, path + " row 1: survival CSV needs 'time' and 'event' columns");
        std::size_t row = 1;
        for (const auto& r : rows) {
            ++row;
            s.time.push_back(detail::parse_number(r[static_cast<std::size_t>(t - header.begin())], row, "time"));
            const double ev = detail::parse_number(r[static_cast<std::size_t>(e - header.begin())], row, "event");
            if (ev != 0.0 && ev != 1.0)
                throw Error(ErrorKind::ingestion, path + " row " + std::to_string(row) + ": event must be 0 or 1");
            s.event.push_back(ev == 1.0);
        }
    } else {
        s.time = detail::require<std::vector<double>>(d, "time", "survival data");
        if (d.contains("event")) {
            for (const auto& e : d.at("event")) s.event.push_back(e.is_boolean() ? e.get<bool>() : e.get<int>() != 0);
        } else {
            s.event.assign(s.time.size(), true);
        }
    }
    s.validate();
    return s;
}

inline Eigen::MatrixXd mvn_data_from_json(const json& d, std::size_t k, const std::filesystem::path& base) {
    std::vector<std::vector<double>> rows;
    if (d.is_string()) {
        std::vector<std::string> header;
        const auto path = detail::resolve(d.get<std::string>(), base);
        std::size_t row = 1;
        for (const auto& r : detail::read_csv_cells(path, header)) {
            ++row;
            std::vector<double> v;
            for (std::size_t c = 0; c < r.size(); ++c) v.push_back(detail::parse_number(r[c], row, header[c]));
            rows.push_back(std::move(v));
        }
    } else {
        rows = d.get<std::vector<std::vector<double>>>();
    }
    Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != k)
            throw Error(ErrorKind::ingestion, "mvn data row " + std::to_string(i + 1) + ": expected " +
                                                  std::to_string(k) + " values");
        for (std::size_t c = 0; c < k; ++c) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    return y;
}

inline RmData rm_data_from_json(const json& d, const std::filesystem::path& base) {
    if (d.is_string()) return read_repeated_measures_csv(detail::resolve(d.get<std::string>(), base));
    if (d.is_object() && d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        RmGeneratorConfig g;
        g.seed = detail::get_or<std::uint64_t>(s, "seed", g.seed);
        g.xi = detail::get_or<double>(s, "xi", g.xi);
        g.subjects_per_group = detail::get_or<std::size_t>(s, "subjects_per_group", g.subjects_per_group);
        return generate_repeated_measures(g);
    }
    RmData out;
    for (const auto& r : d) {
        out.rows.push_back({r.at("id").is_string() ? r.at("id").get<std::string>() : r.at("id").dump(),
                            r.at("group").get<std::string>(), r.at("time").get<double>(), r.at("response").get<double>()});
    }
    return out;
}

// ---------------------------------------------------------------------------

inline MvnModel mvn_model_from_json(const json& m) {
    MvnModel out;
    out.k = detail::require<std::size_t>(m, "k", "mvn model");
    out.eta = detail::get_or<double>(m, "eta", 1.0);
    out.flattening = parse_flattening(detail::get_or<std::string>(m, "flattening", "marginal_beta"));
    const double n_e = detail::get_or<double>(m, "n_e", 10.0);
    if (m.contains("hypers")) {
        for (const auto& h : m.at("hypers"))
            out.hypers.push_back({detail::require<double>(h, "mu0", "hypers"), detail::require<double>(h, "gamma", "hypers"),
                                  detail::require<double>(h, "alpha", "hypers"), detail::require<double>(h, "beta", "hypers")});
    } else if (m.contains("marginals")) {
        for (const auto& q : m.at("marginals"))
            out.hypers.push_back(elicit::fit_student_t_hyperparams(detail::require<double>(q, "q50", "marginal"),
                                                                   detail::require<double>(q, "q75", "marginal"), n_e));
    } else {
        throw config_error("mvn model: supply 'marginals' (q50/q75) or 'hypers'");
    }
    if (m.contains("concordances")) {
        for (const auto& c : m.at("concordances")) {
            const auto i = detail::require<std::size_t>(c, "i", "concordance");
            const auto j = detail::require<std::size_t>(c, "j", "concordance");
            if (i < 1 || j < 1) throw config_error("concordance indices are 1-based");
            out.concordances.push_back({i - 1, j - 1, detail::require<double>(c, "p", "concordance"),
                                        detail::get_or<double>(c, "n_e", n_e)});
        }
    }
    return out;
}

struct AssembledModel {
    TargetDensity target;
    SamplerConfig sampler;
    std::string family;
};

/// Build the target described by `doc`. `data_override` replaces doc["data"].
inline AssembledModel assemble_target(const json& doc, const std::filesystem::path& base_dir = {},
                                      const std::optional<std::string>& data_override = std::nullopt) {
    if (!doc.is_object() || !doc.contains("model")) throw config_error("model document: missing 'model'");
    const auto& m = doc.at("model");
    const auto family = detail::require<std::string>(m, "family", "model");
    const auto beliefs = beliefs_from_json(doc);
    std::optional<json> data;
    if (data_override) data = json(*data_override);
    else if (doc.contains("data") && !doc.at("data").is_null()) data = doc.at("data");

    AssembledModel out;
    out.family = family;
    out.sampler = sampler_from_json(doc);
    if (family == "exponential") {
        ExponentialModel em;
        em.parameterization = parse_parameterization(detail::get_or<std::string>(m, "parameterization", "median_direct"));
        if (m.contains("prior")) {
            const auto& p = m.at("prior");
            if (detail::get_or<std::string>(p, "family", "uniform") == "gamma") {
                em.gamma_prior = GammaRatePrior{detail::require<double>(p, "shape", "gamma prior"),
                                                detail::require<double>(p, "rate", "gamma prior")};
            } else {
                em.a = detail::get_or<double>(p, "a", em.a);
                em.b = detail::get_or<double>(p, "b", em.b);
            }
        }
        if (data) em.data = survival_data_from_json(*data, base_dir);
        out.target = exponential_target(em, beliefs);
    } else if (family == "mvn") {
        auto mm = mvn_model_from_json(m);
        if (data) mm.data = mvn_data_from_json(*data, mm.k, base_dir);
        out.target = mvn_target(mm);
        for (auto& b : beliefs) {
            out.target.add_belief(b);
            out.target.check_conflict(out.target.loss_terms.back());
        }
    } else if (family == "repeated_measures") {
        const auto ref = detail::get_or<std::string>(m, "reference_group", "WI");
        std::optional<RmData> rd;
        if (data) rd = rm_data_from_json(*data, base_dir);
        RepeatedMeasuresModel rm =
            rd ? repeated_measures_layout(*rd, ref)
               : repeated_measures_layout(detail::require<std::vector<std::string>>(m, "groups", "repeated_measures model"),
                                          detail::require<std::vector<double>>(m, "times", "repeated_measures model"), ref);
        rm.fixed_prior_sd = detail::get_or<double>(m, "fixed_prior_sd", rm.fixed_prior_sd);
        rm.scale_prior_sd = detail::get_or<double>(m, "scale_prior_sd", rm.scale_prior_sd);
        if (beliefs.size() > 1) throw config_error("repeated measures: at most one belief (on 'xi')");
        out.target = repeated_measures_target(rm, rd, beliefs.empty() ? std::nullopt : std::optional(beliefs.front()));
    } else {
        throw config_error("unknown model family '" + family + "'");
    }
    return out;
}

}  // namespace lap::models
