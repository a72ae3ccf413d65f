#pragma once

// Repeated-measures regression: quadratic time trend in orthogonal
// polynomial contrasts, group main effects and group x time interactions,
// with independent subject-level intercept, slope and quadratic effects.
// The random effects are integrated out, so each subject's response vector is
//   y_i ~ N(X_i beta, Z_i diag(sd_re^2) Z_i^T + sigma^2 I).
// The reference group (default "WI") carries no group coefficients, and
//   xi = E[y | ref, last time] - E[y | ref, first time].

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "lap/errors.hpp"
#include "lap/loss/target.hpp"
#include "lap/sampler/rng.hpp"

namespace lap::models {

/// Columns are Gram-Schmidt orthonormalised centred powers of `times`:
/// zero mean, unit norm, mutually orthogonal, positive leading coefficient.
inline Eigen::MatrixXd orthogonal_poly(const std::vector<double>& times, std::size_t degree) {
    std::set<double> distinct(times.begin(), times.end());
    if (degree < 1) throw domain_error("orthogonal_poly: degree must be >= 1");
    if (distinct.size() < degree + 1)
        throw domain_error("orthogonal_poly: need at least " + std::to_string(degree + 1) +
                           " distinct time values for degree " + std::to_string(degree));
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t(i) = times[static_cast<std::size_t>(i)];
    const double scale = (t.maxCoeff() - t.minCoeff());
    t = (t.array() - t.mean()) / scale;

    Eigen::MatrixXd Q(n, static_cast<Eigen::Index>(degree + 1));
    Q.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    for (Eigen::Index d = 1; d <= static_cast<Eigen::Index>(degree); ++d) {
        Eigen::VectorXd v = t.array().pow(static_cast<double>(d));
        // two passes of modified Gram-Schmidt
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index c = 0; c < d; ++c) v -= Q.col(c).dot(v) * Q.col(c);
        const double norm = v.norm();
        if (!(norm > 1e-10)) throw domain_error("orthogonal_poly: time values are rank deficient");
        Q.col(d) = v / norm;
    }
    return Q.rightCols(static_cast<Eigen::Index>(degree));
}

struct RmObservation {
    std::string id;
    std::string group;
    double time = 0.0;
    double response = 0.0;
};

struct RmData {
    std::vector<RmObservation> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::ingestion,
                    "row " + std::to_string(row) + ": column '" + col + "' is not a finite number ('" + s + "')");
    }
}

}  // namespace detail

/// CSV with header containing id, group, time, response (any order).
/// Row numbers in errors count the header as row 1.
inline RmData read_repeated_measures_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ingestion, "repeated-measures CSV is empty");
    const auto header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
    for (const char* need : {"id", "group", "time", "response"})
        if (!col.count(need))
            throw Error(ErrorKind::ingestion, std::string("row 1: missing required column '") + need + "'");
    RmData d;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": expected " +
                                                  std::to_string(header.size()) + " fields, found " +
                                                  std::to_string(cells.size()));
        RmObservation o;
        o.id = cells[col["id"]];
        o.group = cells[col["group"]];
        if (o.id.empty() || o.group.empty())
            throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": id and group must be non-empty");
        o.time = detail::parse_number(cells[col["time"]], row, "time");
        o.response = detail::parse_number(cells[col["response"]], row, "response");
        d.rows.push_back(std::move(o));
    }
    if (d.rows.empty()) throw Error(ErrorKind::ingestion, "repeated-measures CSV has no data rows");
    return d;
}

inline RmData read_repeated_measures_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::ingestion, "cannot open data file '" + path + "'");
    return read_repeated_measures_csv(f);
}

inline void write_repeated_measures_csv(std::ostream& out, const RmData& d) {
    out << "id,group,time,response\n";
    out.precision(17);
    for (const auto& r : d.rows) out << r.id << ',' << r.group << ',' << r.time << ',' << r.response << '\n';
}

struct RepeatedMeasuresModel {
    std::string reference_group = "WI";
    std::vector<std::string> groups;  // all groups, reference first
    std::vector<double> times;        // distinct, sorted
    double fixed_prior_sd = 10.0;
    double scale_prior_sd = 5.0;  // half-normal on random-effect and residual sds

    std::size_t degree() const { return std::min<std::size_t>(2, times.size() - 1); }
    std::size_t n_groups() const { return groups.size(); }
    std::size_t n_fixed() const { return 1 + (n_groups() - 1) * (1 + degree()) + degree(); }

    /// Fixed-effect names in design order.
    std::vector<std::string> fixed_names() const {
        std::vector<std::string> out{"intercept"};
        for (std::size_t g = 1; g < n_groups(); ++g) out.push_back("group_" + groups[g]);
        const char* poly[] = {"time_lin", "time_quad"};
        for (std::size_t d = 0; d < degree(); ++d) out.push_back(poly[d]);
        for (std::size_t g = 1; g < n_groups(); ++g)
            for (std::size_t d = 0; d < degree(); ++d) out.push_back(std::string(poly[d]) + ":group_" + groups[g]);
        return out;
    }

    /// Contrast values at each distinct time (rows) for the linear/quadratic terms.
    Eigen::MatrixXd contrasts() const { return orthogonal_poly(times, degree()); }

    Eigen::RowVectorXd design_row(std::size_t group, std::size_t time_index, const Eigen::MatrixXd& P) const {
        Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n_fixed()));
        x(0) = 1.0;
        Eigen::Index c = 1;
        for (std::size_t g = 1; g < n_groups(); ++g, ++c) x(c) = group == g ? 1.0 : 0.0;
        const auto ti = static_cast<Eigen::Index>(time_index);
        for (std::size_t d = 0; d < degree(); ++d, ++c) x(c) = P(ti, static_cast<Eigen::Index>(d));
        for (std::size_t g = 1; g < n_groups(); ++g)
            for (std::size_t d = 0; d < degree(); ++d, ++c)
                x(c) = group == g ? P(ti, static_cast<Eigen::Index>(d)) : 0.0;
        return x;
    }

    /// xi as a linear functional of the fixed effects.
    Eigen::VectorXd xi_weights() const {
        const auto P = contrasts();
        return (design_row(0, times.size() - 1, P) - design_row(0, 0, P)).transpose();
    }
};

/// Model layout inferred from data (groups sorted, reference first).
inline RepeatedMeasuresModel repeated_measures_layout(const RmData& d, const std::string& reference = "WI") {
    RepeatedMeasuresModel m;
    m.reference_group = reference;
    std::set<std::string> groups;
    std::set<double> times;
    for (const auto& r : d.rows) {
        groups.insert(r.group);
        times.insert(r.time);
    }
    if (!groups.count(reference))
        throw Error(ErrorKind::ingestion, "repeated-measures data has no subjects in reference group '" + reference + "'");
    if (times.size() < 2) throw Error(ErrorKind::ingestion, "repeated-measures data needs >= 2 distinct time points");
    m.groups.push_back(reference);
    for (const auto& g : groups)
        if (g != reference) m.groups.push_back(g);
    m.times.assign(times.begin(), times.end());
    return m;
}

/// Layout for prior/loss-only use without data.
inline RepeatedMeasuresModel repeated_measures_layout(std::vector<std::string> groups, std::vector<double> times,
                                                      const std::string& reference = "WI") {
    RepeatedMeasuresModel m;
    m.reference_group = reference;
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (times.size() < 2) throw config_error("repeated measures: need >= 2 distinct time points");
    if (std::find(groups.begin(), groups.end(), reference) == groups.end())
        throw config_error("repeated measures: reference group '" + reference + "' not among the groups");
    m.groups.push_back(reference);
    std::sort(groups.begin(), groups.end());
    for (const auto& g : groups)
        if (g != reference && std::find(m.groups.begin(), m.groups.end(), g) == m.groups.end()) m.groups.push_back(g);
    m.times = std::move(times);
    return m;
}

namespace detail {

struct RmSubject {
    std::size_t group = 0;
    std::vector<std::size_t> time_index;
    Eigen::VectorXd y;
};

inline std::vector<RmSubject> rm_subjects(const RepeatedMeasuresModel& m, const RmData& d) {
    std::map<std::string, std::size_t> index;
    std::vector<RmSubject> out;
    std::size_t row = 1;
    std::vector<std::vector<double>> ys;
    for (const auto& r : d.rows) {
        ++row;
        const auto g = std::find(m.groups.begin(), m.groups.end(), r.group);
        if (g == m.groups.end())
            throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": unknown group '" + r.group + "'");
        const auto t = std::find(m.times.begin(), m.times.end(), r.time);
        if (t == m.times.end())
            throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": unknown time " + std::to_string(r.time));
        auto [it, fresh] = index.emplace(r.id, out.size());
        if (fresh) {
            out.push_back({static_cast<std::size_t>(g - m.groups.begin()), {}, {}});
            ys.emplace_back();
        }
        auto& s = out[it->second];
        if (s.group != static_cast<std::size_t>(g - m.groups.begin()))
            throw Error(ErrorKind::ingestion, "row " + std::to_string(row) + ": subject '" + r.id + "' changes group");
        const auto ti = static_cast<std::size_t>(t - m.times.begin());
        if (std::find(s.time_index.begin(), s.time_index.end(), ti) != s.time_index.end())
            throw Error(ErrorKind::ingestion,
                        "row " + std::to_string(row) + ": duplicate time for subject '" + r.id + "'");
        s.time_index.push_back(ti);
        ys[it->second].push_back(r.response);
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i].y = Eigen::Map<const Eigen::VectorXd>(ys[i].data(), static_cast<Eigen::Index>(ys[i].size()));
    return out;
}

}  // namespace detail

/// Target over (beta, sd_re, sigma). `data` may be empty (loss/prior only).
inline TargetDensity repeated_measures_target(const RepeatedMeasuresModel& m, const std::optional<RmData>& data,
                                              const std::optional<ExpertBelief>& belief) {
    if (m.groups.empty() || m.times.size() < 2) throw config_error("repeated measures: layout needs groups and >= 2 times");
    if (!(m.fixed_prior_sd > 0.0) || !(m.scale_prior_sd > 0.0))
        throw config_error("repeated measures: prior scales must be positive");
    const std::size_t p = m.n_fixed(), q = m.degree() + 1;
    TargetDensity t;
    const std::size_t b_beta = t.space.add("beta", p, Constraint::real());
    const std::size_t b_re = t.space.add("sd_re", q, Constraint::positive());
    const std::size_t b_sig = t.space.add("sigma", 1, Constraint::positive());

    const double fsd = m.fixed_prior_sd, ssd = m.scale_prior_sd;
    t.log_prior = [=](const ParameterValues& x) {
        double lp = 0.0;
        const double cf = -std::log(fsd) - 0.5 * std::log(2.0 * std::numbers::pi);
        for (double b : x.block(b_beta)) lp += cf - 0.5 * (b / fsd) * (b / fsd);
        const double ch = std::log(2.0) - std::log(ssd) - 0.5 * std::log(2.0 * std::numbers::pi);
        for (double s : x.block(b_re)) lp += ch - 0.5 * (s / ssd) * (s / ssd);
        const double s = x.scalar(b_sig);
        return lp + ch - 0.5 * (s / ssd) * (s / ssd);
    };
    t.prior_sampler = [=](Rng& rng) {
        std::vector<double> flat;
        for (std::size_t i = 0; i < p; ++i) flat.push_back(fsd * rng.normal());
        for (std::size_t i = 0; i < q + 1; ++i) flat.push_back(std::fabs(ssd * rng.normal()));
        return flat;
    };

    const Eigen::VectorXd w = m.xi_weights();
    t.observables.push_back({"xi", [w, b_beta](const ParameterValues& x) {
                                 const auto b = x.block(b_beta);
                                 return Eigen::Map<const Eigen::VectorXd>(b.data(), w.size()).dot(w);
                             }});

    if (data) {
        const Eigen::MatrixXd P = m.contrasts();
        const auto subjects = detail::rm_subjects(m, *data);
        bool has_ref = false;
        for (const auto& s : subjects) has_ref |= s.group == 0;
        if (!has_ref) throw Error(ErrorKind::ingestion, "repeated-measures data has no reference-group subject");
        // per subject: fixed design and random-effect design
        struct Prepared {
            Eigen::MatrixXd X, Z;
            Eigen::VectorXd y;
        };
        std::vector<Prepared> prep;
        for (const auto& s : subjects) {
            const auto n = static_cast<Eigen::Index>(s.time_index.size());
            Prepared pr{Eigen::MatrixXd(n, static_cast<Eigen::Index>(p)), Eigen::MatrixXd(n, static_cast<Eigen::Index>(q)),
                        s.y};
            for (Eigen::Index r = 0; r < n; ++r) {
                const std::size_t ti = s.time_index[static_cast<std::size_t>(r)];
                pr.X.row(r) = m.design_row(s.group, ti, P);
                pr.Z(r, 0) = 1.0;
                for (std::size_t d = 1; d < q; ++d)
                    pr.Z(r, static_cast<Eigen::Index>(d)) = P(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(d - 1));
            }
            prep.push_back(std::move(pr));
        }
        t.log_likelihood = [prep = std::move(prep), b_beta, b_re, b_sig, p, q](const ParameterValues& x) {
            const auto bb = x.block(b_beta);
            const Eigen::Map<const Eigen::VectorXd> beta(bb.data(), static_cast<Eigen::Index>(p));
            const auto re = x.block(b_re);
            Eigen::VectorXd dvar(static_cast<Eigen::Index>(q));
            for (std::size_t d = 0; d < q; ++d) dvar(static_cast<Eigen::Index>(d)) = re[d] * re[d];
            const double s2 = x.scalar(b_sig) * x.scalar(b_sig);
            double ll = 0.0;
            for (const auto& pr : prep) {
                Eigen::MatrixXd V = pr.Z * dvar.asDiagonal() * pr.Z.transpose();
                V.diagonal().array() += s2;
                Eigen::LLT<Eigen::MatrixXd> llt(V);
                if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
                const Eigen::VectorXd r = pr.y - pr.X * beta;
                const Eigen::MatrixXd L = llt.matrixL();
                const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(r);
                ll += -0.5 * z.squaredNorm() - L.diagonal().array().log().sum() -
                      0.5 * static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi);
            }
            return ll;
        };
    }
    if (belief) {
        if (belief->observable != "xi") throw config_error("repeated measures: beliefs are supported on 'xi' only");
        t.add_belief(*belief);
        t.check_conflict(t.loss_terms.back());
    }
    return t;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct RmGeneratorConfig {
    std::vector<std::string> groups{"WI", "RI", "CONT"};
    std::size_t subjects_per_group = 13;
    std::vector<double> times{2, 4, 6, 8, 10, 12, 14};
    double intercept = 80.0;
    double group_shift = 1.0;  // added per non-reference group index
    double xi = 0.5;           // true change from first to last time in the reference group
    double quad = -0.5;        // quadratic coefficient (contrast scale)
    double sd_intercept = 3.0;
    double sd_slope = 1.88;
    double sd_quad = 0.5;
    double sigma = 1.0;
    std::uint64_t seed = 2024;
};

/// Data with known xi. Linear/quadratic coefficients are on the contrast
/// scale of the fitted model, so xi_true is exactly the model's xi.
inline RmData generate_repeated_measures(const RmGeneratorConfig& c) {
    const auto m = repeated_measures_layout(c.groups, c.times, c.groups.front());
    const Eigen::MatrixXd P = m.contrasts();
    const auto nt = static_cast<Eigen::Index>(m.times.size());
    const double lin_span = P(nt - 1, 0) - P(0, 0);
    const double b_lin = c.xi / lin_span;
    Rng rng(c.seed);
    RmData d;
    for (std::size_t g = 0; g < m.groups.size(); ++g) {
        for (std::size_t s = 0; s < c.subjects_per_group; ++s) {
            const std::string id = m.groups[g] + "-" + std::to_string(s + 1);
            const double u0 = c.sd_intercept * rng.normal();
            const double u1 = c.sd_slope * rng.normal();
            const double u2 = c.sd_quad * rng.normal();
            for (Eigen::Index ti = 0; ti < nt; ++ti) {
                const double lin = P(ti, 0), quad = m.degree() > 1 ? P(ti, 1) : 0.0;
                const double mean = c.intercept + c.group_shift * static_cast<double>(g) + (b_lin + u1) * lin +
                                    (c.quad + u2) * quad + u0;
                d.rows.push_back({id, m.groups[g], m.times[static_cast<std::size_t>(ti)], mean + c.sigma * rng.normal()});
            }
        }
    }
    return d;
}

}  // namespace lap::models
