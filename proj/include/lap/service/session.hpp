#pragma once

// Elicitation sessions. Every change is an appended revision (an input
// snapshot); the derived state (hyperparameters, coherency reports) is
// recomputed from the revisions, so replaying them reproduces the session.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "lap/elicit/coherency.hpp"
#include "lap/elicit/solvers.hpp"
#include "lap/errors.hpp"
#include "lap/math/correlation.hpp"
#include "lap/math/special.hpp"

namespace lap::service {

using nlohmann::json;

/// Input fault tied to a request field; surfaces as 422 with details.
class FieldError : public Error {
public:
    FieldError(std::string field, const std::string& what) : Error(ErrorKind::config, what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string random_id(const char* prefix) {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
    return std::string(prefix) + buf;
}

struct Revision {
    int number = 0;
    std::string timestamp;
    std::string kind;  // create | marginals | concordances | model
    json input;
};

struct Session {
    std::string id;
    std::string created;
    std::string updated;
    std::vector<Revision> revisions;
    std::vector<std::string> jobs;

    // derived by replay
    std::string family;
    std::size_t k = 0;
    double n_e = 0.0;
    json marginals = json::array();
    std::vector<elicit::NormalGammaHyper> hypers;
    json concordances = json::array();
    std::vector<elicit::CoherencyReport> coherency;
    std::string coherency_error;
    json model = nullptr;  // model document for exponential / repeated_measures sessions

    int revision() const { return revisions.empty() ? 0 : revisions.back().number; }
};

// ---------------------------------------------------------------------------
// Applying revisions

namespace detail {

inline double number_field(const json& j, const char* key, const std::string& field) {
    if (!j.is_object() || !j.contains(key)) throw FieldError(field + "." + key, "missing field '" + std::string(key) + "'");
    if (!j.at(key).is_number()) throw FieldError(field + "." + key, "field '" + std::string(key) + "' must be a number");
    return j.at(key).get<double>();
}

inline void apply_create(Session& s, const json& in) {
    s.family = in.value("family", std::string("mvn"));
    if (s.family != "mvn" && s.family != "exponential" && s.family != "repeated_measures")
        throw FieldError("family", "family must be one of mvn, exponential, repeated_measures");
    if (s.family == "mvn") {
        const double k = number_field(in, "k", "body");
        if (!(k >= 2.0) || k != std::floor(k)) throw FieldError("k", "k must be an integer >= 2");
        s.k = static_cast<std::size_t>(k);
        s.n_e = number_field(in, "n_e", "body");
        if (!(s.n_e > 3.0)) throw FieldError("n_e", "n_e must exceed 3 (Fisher standard error 1/sqrt(n_e - 3))");
    }
    if (in.contains("model")) s.model = in.at("model");
}

inline void apply_marginals(Session& s, const json& in) {
    if (s.family != "mvn") throw FieldError("marginals", "marginal quantiles apply to mvn sessions");
    if (!in.contains("marginals") || !in.at("marginals").is_array())
        throw FieldError("marginals", "body must contain a 'marginals' array");
    const auto& arr = in.at("marginals");
    if (arr.size() != s.k)
        throw FieldError("marginals", "expected " + std::to_string(s.k) + " entries, got " + std::to_string(arr.size()));
    std::vector<elicit::NormalGammaHyper> h;
    for (std::size_t c = 0; c < arr.size(); ++c) {
        const std::string f = "marginals[" + std::to_string(c) + "]";
        const double q50 = number_field(arr[c], "q50", f), q75 = number_field(arr[c], "q75", f);
        try {
            h.push_back(elicit::fit_student_t_hyperparams(q50, q75, s.n_e));
        } catch (const Error& e) {
            throw FieldError(f, e.what());
        }
    }
    s.marginals = arr;
    s.hypers = std::move(h);
}

inline void apply_concordances(Session& s, const json& in) {
    if (s.family != "mvn") throw FieldError("concordances", "concordances apply to mvn sessions");
    if (!in.contains("concordances") || !in.at("concordances").is_array())
        throw FieldError("concordances", "body must contain a 'concordances' array");
    const auto& arr = in.at("concordances");
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(s.k), static_cast<Eigen::Index>(s.k));
    std::vector<bool> seen(math::corr_free_dim(s.k), false);
    for (std::size_t n = 0; n < arr.size(); ++n) {
        const std::string f = "concordances[" + std::to_string(n) + "]";
        const double i = number_field(arr[n], "i", f), j = number_field(arr[n], "j", f), p = number_field(arr[n], "p", f);
        if (i < 1 || j < 1 || i > static_cast<double>(s.k) || j > static_cast<double>(s.k) || i == j ||
            i != std::floor(i) || j != std::floor(j))
            throw FieldError(f, "i and j must be distinct 1-based component indices");
        if (!(p > 0.0 && p < 1.0)) throw FieldError(f + ".p", "concordance probability must lie in (0, 1)");
        const auto a = static_cast<std::size_t>(i) - 1, b = static_cast<std::size_t>(j) - 1;
        const auto slot = math::corr_index(a, b);
        if (seen[slot]) throw FieldError(f, "duplicate pair");
        seen[slot] = true;
        const double r = math::concordance_to_correlation(p);
        R(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = r;
        R(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = r;
    }
    s.concordances = arr;
    s.coherency.clear();
    s.coherency_error.clear();
    if (arr.size() != math::corr_free_dim(s.k)) {
        s.coherency_error = "coherency needs all " + std::to_string(math::corr_free_dim(s.k)) + " pairs";
        return;
    }
    try {
        s.coherency = elicit::coherency_intervals(R);
    } catch (const Error& e) {
        s.coherency_error = e.what();
    }
}

}  // namespace detail

inline void apply_revision(Session& s, const Revision& r) {
    if (r.kind == "create") detail::apply_create(s, r.input);
    else if (r.kind == "marginals") detail::apply_marginals(s, r.input);
    else if (r.kind == "concordances") detail::apply_concordances(s, r.input);
    else if (r.kind == "model") s.model = r.input.at("model");
    else throw config_error("unknown revision kind '" + r.kind + "'");
}

/// Validates and appends a revision; the session is untouched if it fails.
inline void append_revision(Session& s, const std::string& kind, const json& input) {
    Session next = s;
    Revision r{s.revision() + 1, utc_now(), kind, input};
    apply_revision(next, r);
    next.revisions.push_back(std::move(r));
    next.updated = next.revisions.back().timestamp;
    s = std::move(next);
}

inline Session replay(const Session& s) {
    Session out;
    out.id = s.id;
    out.created = s.created;
    out.jobs = s.jobs;
    for (const auto& r : s.revisions) {
        apply_revision(out, r);
        out.revisions.push_back(r);
        out.updated = r.timestamp;
    }
    return out;
}

inline Session new_session(const json& body) {
    Session s;
    s.id = random_id("s");
    s.created = utc_now();
    append_revision(s, "create", body);
    return s;
}

// ---------------------------------------------------------------------------
// JSON

inline json coherency_json(const elicit::CoherencyReport& r) {
    return {{"i", r.i + 1},       {"j", r.j + 1},         {"r", r.r},         {"lo", r.lo},
            {"hi", r.hi},         {"in_interval", r.in_interval}, {"p", r.p}, {"p_lo", r.p_lo},
            {"p_hi", r.p_hi}};
}

inline json hyper_json(const elicit::NormalGammaHyper& h) {
    return {{"mu0", h.mu0}, {"gamma", h.gamma}, {"alpha", h.alpha}, {"beta", h.beta}};
}

inline json to_json(const Session& s) {
    json j;
    j["id"] = s.id;
    j["created"] = s.created;
    j["updated"] = s.updated;
    j["revision"] = s.revision();
    j["family"] = s.family;
    if (s.family == "mvn") {
        j["k"] = s.k;
        j["n_e"] = s.n_e;
    }
    j["marginals"] = s.marginals;
    j["hypers"] = json::array();
    for (const auto& h : s.hypers) j["hypers"].push_back(hyper_json(h));
    j["concordances"] = s.concordances;
    j["coherency"] = json::array();
    for (const auto& r : s.coherency) j["coherency"].push_back(coherency_json(r));
    j["coherency_error"] = s.coherency_error.empty() ? json(nullptr) : json(s.coherency_error);
    j["model"] = s.model;
    j["jobs"] = s.jobs;
    j["revisions"] = json::array();
    for (const auto& r : s.revisions)
        j["revisions"].push_back({{"number", r.number}, {"timestamp", r.timestamp}, {"kind", r.kind}, {"input", r.input}});
    return j;
}

/// Rebuild from the persisted form: only id, timestamps, jobs and revisions
/// are read; everything else is replayed.
inline Session session_from_json(const json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.created = j.at("created").get<std::string>();
    s.jobs = j.value("jobs", std::vector<std::string>{});
    for (const auto& r : j.at("revisions"))
        s.revisions.push_back({r.at("number").get<int>(), r.at("timestamp").get<std::string>(),
                               r.at("kind").get<std::string>(), r.at("input")});
    return replay(s);
}

// ---------------------------------------------------------------------------
// Persistence

/// Write to a temp file in the same directory, then rename over `path`.
/// `before_rename` lets tests inject a failure between the two steps.
inline void atomic_write(const std::filesystem::path& path, const std::string& content,
                         const std::function<void()>& before_rename = {}) {
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp-" + random_id("");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw config_error("cannot write '" + tmp + "'");
        f << content;
        f.flush();
        if (!f) throw config_error("write failed for '" + tmp + "'");
    }
    try {
        if (before_rename) before_rename();
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::not_found, "no such file '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!std::isalnum(static_cast<unsigned char>(c))) return false;
    return true;
}

class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_ / "sessions");
    }

    std::filesystem::path path_for(const std::string& id) const { return dir_ / "sessions" / (id + ".json"); }

    void persist(const Session& s, const std::function<void()>& before_rename = {}) const {
        atomic_write(path_for(s.id), to_json(s).dump(2) + "\n", before_rename);
    }

    Session load(const std::string& id) const {
        if (!valid_id(id)) throw Error(ErrorKind::not_found, "unknown session '" + id + "'");
        const auto p = path_for(id);
        if (!std::filesystem::exists(p)) throw Error(ErrorKind::not_found, "unknown session '" + id + "'");
        try {
            return session_from_json(json::parse(read_file(p)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ingestion, "corrupt session file '" + p.string() + "': " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::not_found) throw;
            throw Error(ErrorKind::ingestion, "corrupt session file '" + p.string() + "': " + e.what());
        }
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
};

}  // namespace lap::service
