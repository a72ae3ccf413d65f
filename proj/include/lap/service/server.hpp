#pragma once

// HTTP API over sessions and sampling jobs. Jobs run FIFO on a fixed worker
// pool, off the request path; each session is mutated under its own lock.

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "lap/errors.hpp"
#include "lap/math/special.hpp"
#include "lap/models/assemble.hpp"
#include "lap/sampler/diagnostics.hpp"
#include "lap/sampler/io.hpp"
#include "lap/sampler/mcmc.hpp"
#include "lap/service/session.hpp"
#include "lap/version.hpp"

// after Eigen: <resolv.h> defines a `_res` macro
#include "httplib.h"

namespace lap::service {

struct ServiceConfig {
    std::filesystem::path data_dir = "lap-data";
    int port = 8080;
    std::size_t workers = 1;

    /// LAP_DATA_DIR, LAP_PORT, LAP_WORKERS override the defaults.
    static ServiceConfig from_env() {
        ServiceConfig c;
        if (const char* d = std::getenv("LAP_DATA_DIR")) c.data_dir = d;
        try {
            if (const char* p = std::getenv("LAP_PORT")) c.port = std::stoi(p);
            if (const char* w = std::getenv("LAP_WORKERS")) c.workers = static_cast<std::size_t>(std::stoul(w));
        } catch (const std::exception&) {
            throw config_error("LAP_PORT and LAP_WORKERS must be integers");
        }
        if (c.workers < 1) throw config_error("LAP_WORKERS must be >= 1");
        return c;
    }
};

enum class JobStatus { queued, running, done, failed };

inline const char* status_name(JobStatus s) {
    switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    }
    return "?";
}

struct Job {
    std::string id;
    std::string session_id;
    int session_revision = 0;
    json config;
    json input;  // model document snapshot
    std::atomic<JobStatus> status{JobStatus::queued};
    std::atomic<double> progress{0.0};
    std::string message;
    json summary;
    std::optional<SampleBatch> batch;
};

/// Posterior summary per column: mean, sd, quantiles, ESS, R-hat.
inline json summarize(const SampleBatch& b) {
    const auto diag = diagnostics(b);
    json cols = json::array();
    static const double probs[] = {0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975};
    const auto names = b.columns();
    for (std::size_t c = 0; c < names.size(); ++c) {
        auto x = b.column(c);
        json q = json::object();
        std::sort(x.begin(), x.end());
        for (double p : probs) q[format_number(p)] = sorted_quantile(x, p);
        const auto& d = diag.columns[c];
        cols.push_back({{"name", names[c]},
                        {"mean", sample_mean(x)},
                        {"sd", sample_sd(x)},
                        {"quantiles", q},
                        {"ess", d.ess},
                        {"rhat", d.rhat ? json(*d.rhat) : json(nullptr)}});
    }
    return {{"columns", cols}, {"acceptance_rate", b.acceptance_rate}, {"flags", diag.flags},
            {"n_chains", b.n_chains()}, {"n_samples", b.n_samples}};
}

class Service {
public:
    explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.data_dir) {
        std::filesystem::create_directories(cfg_.data_dir / "jobs");
        for (std::size_t i = 0; i < cfg_.workers; ++i) pool_.emplace_back([this] { worker(); });
        routes();
    }

    ~Service() { stop(); }
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Bind and serve on cfg.port (0 = any free port); blocks.
    bool listen(const std::string& host = "127.0.0.1") {
        if (cfg_.port == 0) {
            port_ = server_.bind_to_any_port(host);
            return port_ > 0 && server_.listen_after_bind();
        }
        port_ = cfg_.port;
        return server_.listen(host, cfg_.port);
    }

    /// Bind to a free port and serve from a background thread.
    int start_background(const std::string& host = "127.0.0.1") {
        port_ = server_.bind_to_any_port(host);
        if (port_ <= 0) throw config_error("service: could not bind a port");
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        server_.stop();
        if (listener_.joinable()) listener_.join();
        {
            std::lock_guard lk(queue_mu_);
            stopping_ = true;
        }
        queue_cv_.notify_all();
        for (auto& t : pool_)
            if (t.joinable()) t.join();
        pool_.clear();
    }

    int port() const noexcept { return port_; }
    SessionStore& store() noexcept { return store_; }

private:
    ServiceConfig cfg_;
    SessionStore store_;
    httplib::Server server_;
    std::thread listener_;
    int port_ = 0;

    std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;

    std::mutex jobs_mu_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<std::shared_ptr<Job>> queue_;
    bool stopping_ = false;
    std::vector<std::thread> pool_;

    // -----------------------------------------------------------------------

    std::shared_ptr<std::mutex> lock_for(const std::string& id) {
        std::lock_guard lk(sessions_mu_);
        auto& m = session_locks_[id];
        if (!m) m = std::make_shared<std::mutex>();
        return m;
    }

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                           json details = json::object()) {
        send_json(res, status, {{"code", code}, {"message", message}, {"details", std::move(details)}});
    }

    template <class F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const FieldError& e) {
            send_error(res, 422, "invalid_input", e.what(), {{"field", e.field()}});
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::not_found) send_error(res, 404, "not_found", e.what());
            else if (e.kind() == ErrorKind::ingestion) send_error(res, 500, "storage_error", e.what());
            else if (e.is_input_error()) send_error(res, 422, "invalid_input", e.what());
            else send_error(res, 500, "numerical_failure", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "malformed_json", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal_error", e.what());
        }
    }

    static json parse_body(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        return json::parse(req.body);
    }

    template <class F>
    json mutate(const std::string& id, F&& f) {
        auto mu = lock_for(id);
        std::lock_guard lk(*mu);
        Session s = store_.load(id);
        f(s);
        store_.persist(s);
        return to_json(s);
    }

    std::shared_ptr<Job> find_job(const std::string& id) {
        std::lock_guard lk(jobs_mu_);
        auto it = jobs_.find(id);
        if (it != jobs_.end()) return it->second;
        // jobs finished before a restart are reloaded from disk
        const auto p = cfg_.data_dir / "jobs" / (id + ".json");
        if (!valid_id(id) || !std::filesystem::exists(p)) throw Error(ErrorKind::not_found, "unknown job '" + id + "'");
        json j;
        try {
            j = json::parse(read_file(p));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ingestion, "corrupt job file '" + p.string() + "': " + e.what());
        }
        auto job = std::make_shared<Job>();
        job->id = id;
        job->session_id = j.value("session_id", "");
        job->session_revision = j.value("session_revision", 0);
        job->config = j.value("config", json::object());
        job->input = j.value("input", json::object());
        const auto st = j.value("status", std::string("failed"));
        job->status = st == "done" ? JobStatus::done : JobStatus::failed;
        job->progress = j.value("progress", 1.0);
        job->message = j.value("message", st == "done" ? "" : "interrupted before completion");
        job->summary = j.value("summary", json(nullptr));
        jobs_[id] = job;
        return job;
    }

    json job_json(const Job& j) {
        json out{{"id", j.id},
                 {"session_id", j.session_id},
                 {"session_revision", j.session_revision},
                 {"status", status_name(j.status.load())},
                 {"progress", j.progress.load()},
                 {"config", j.config},
                 {"engine_version", kEngineVersion}};
        if (!j.message.empty()) out["message"] = j.message;
        return out;
    }

    void persist_job(const Job& j) {
        json out = job_json(j);
        out["input"] = j.input;
        out["summary"] = j.summary;
        atomic_write(cfg_.data_dir / "jobs" / (j.id + ".json"), out.dump(2) + "\n");
    }

    static json model_document(const Session& s) {
        if (s.family == "mvn") {
            if (s.hypers.size() != s.k) throw FieldError("marginals", "solve the marginals before sampling");
            json m{{"family", "mvn"}, {"k", s.k}, {"n_e", s.n_e}};
            m["hypers"] = json::array();
            for (const auto& h : s.hypers) m["hypers"].push_back(hyper_json(h));
            m["concordances"] = s.concordances;
            if (s.model.is_object()) {
                for (const char* key : {"eta", "flattening"})
                    if (s.model.contains(key)) m[key] = s.model.at(key);
            }
            return {{"model", m}};
        }
        if (!s.model.is_object()) throw FieldError("model", "this session has no model document");
        return s.model.contains("model") ? s.model : json{{"model", s.model}};
    }

    static SamplerConfig job_sampler(const json& body) {
        SamplerConfig c;
        c.n_chains = body.value("chains", c.n_chains);
        c.warmup = body.value("warmup", c.warmup);
        c.samples = body.value("samples", c.samples);
        c.thin = body.value("thin", c.thin);
        c.seed = body.value("seed", c.seed);
        c.parallel = false;  // the worker pool bounds concurrency
        try {
            c.validate();
        } catch (const Error& e) {
            throw FieldError("config", e.what());
        }
        return c;
    }

    void worker() {
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lk(queue_mu_);
                queue_cv_.wait(lk, [this] { return stopping_ || !queue_.empty(); });
                if (stopping_) return;
                job = queue_.front();
                queue_.pop_front();
            }
            job->status = JobStatus::running;
            try {
                auto model = models::assemble_target(job->input);
                const auto cfg = job_sampler(job->config);
                auto batch = run_chains(model.target, cfg, [&](double p) { job->progress = p; });
                job->summary = summarize(batch);
                job->summary["warnings"] = model.target.warnings;
                write_draws(cfg_.data_dir / "jobs" / (job->id + ".csv"), batch);
                job->batch = std::move(batch);
                job->progress = 1.0;
                job->status = JobStatus::done;
            } catch (const std::exception& e) {
                job->message = e.what();
                job->status = JobStatus::failed;
            }
            try {
                persist_job(*job);
            } catch (const std::exception&) {
            }
        }
    }

    const SampleBatch& job_batch(Job& job) {
        if (job.status.load() != JobStatus::done) throw FieldError("job", "job has not finished");
        if (!job.batch) {
            std::lock_guard lk(jobs_mu_);
            if (!job.batch) job.batch = read_draws_csv(cfg_.data_dir / "jobs" / (job.id + ".csv"));
        }
        return *job.batch;
    }

    static SampleBatch read_draws_csv(const std::filesystem::path& p) {
        std::istringstream in(read_file(p));
        std::string line;
        std::getline(in, line);
        auto header = models::detail::split_csv_line(line);
        SampleBatch b;
        b.parameter_names.assign(header.begin() + 2, header.end());
        while (std::getline(in, line)) {
            const auto cells = models::detail::split_csv_line(line);
            const auto chain = static_cast<std::size_t>(std::stoul(cells[0])) - 1;
            if (chain >= b.chains.size()) b.chains.resize(chain + 1);
            for (std::size_t c = 2; c < cells.size(); ++c) b.chains[chain].push_back(std::stod(cells[c]));
        }
        b.n_samples = b.chains.empty() ? 0 : b.chains.front().size() / b.parameter_names.size();
        return b;
    }

    // -----------------------------------------------------------------------

    void routes() {
        server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                Session s = new_session(parse_body(req));
                store_.persist(s);
                send_json(res, 201, to_json(s));
            });
        });
        server_.Get(R"(/sessions/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, to_json(store_.load(req.matches[1]))); });
        });
        server_.Put(R"(/sessions/([A-Za-z0-9]+)/marginals)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                send_json(res, 200, mutate(req.matches[1], [&](Session& s) { append_revision(s, "marginals", body); }));
            });
        });
        server_.Put(R"(/sessions/([A-Za-z0-9]+)/concordances)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        guarded(res, [&] {
                            const auto body = parse_body(req);
                            send_json(res, 200, mutate(req.matches[1], [&](Session& s) {
                                          append_revision(s, "concordances", body);
                                      }));
                        });
                    });
        server_.Put(R"(/sessions/([A-Za-z0-9]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                if (!body.contains("model")) throw FieldError("model", "body must contain 'model'");
                send_json(res, 200, mutate(req.matches[1], [&](Session& s) { append_revision(s, "model", body); }));
            });
        });
        server_.Get(R"(/sessions/([A-Za-z0-9]+)/coherency)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.load(req.matches[1]);
                json reps = json::array();
                for (const auto& r : s.coherency) reps.push_back(coherency_json(r));
                send_json(res, 200,
                          {{"reports", reps},
                           {"error", s.coherency_error.empty() ? json(nullptr) : json(s.coherency_error)},
                           {"revision", s.revision()}});
            });
        });
        server_.Get(R"(/sessions/([A-Za-z0-9]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.load(req.matches[1]);
                if (!req.has_param("component")) throw FieldError("component", "query parameter 'component' is required");
                std::size_t c = 0;
                try {
                    c = std::stoul(req.get_param_value("component"));
                } catch (const std::exception&) {
                    throw FieldError("component", "component must be a 1-based integer");
                }
                if (c < 1 || c > s.hypers.size())
                    throw FieldError("component", "component must lie in 1.." + std::to_string(s.hypers.size()) +
                                                      " (solve marginals first)");
                const auto t = s.hypers[c - 1].predictive();
                const double lo = t.quantile(0.001), hi = t.quantile(0.999);
                json x = json::array(), pdf = json::array();
                for (int i = 0; i < 512; ++i) {
                    const double v = lo + (hi - lo) * i / 511.0;
                    x.push_back(v);
                    pdf.push_back(t.pdf(v));
                }
                send_json(res, 200, {{"component", c}, {"x", x}, {"pdf", pdf}, {"hypers", hyper_json(s.hypers[c - 1])}});
            });
        });
        server_.Post(R"(/sessions/([A-Za-z0-9]+)/jobs)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string sid = req.matches[1];
                const auto body = parse_body(req);
                (void)job_sampler(body);
                auto job = std::make_shared<Job>();
                job->id = random_id("j");
                job->session_id = sid;
                job->config = body;
                mutate(sid, [&](Session& s) {
                    job->input = model_document(s);
                    job->session_revision = s.revision();
                    s.jobs.push_back(job->id);
                });
                {
                    std::lock_guard lk(jobs_mu_);
                    jobs_[job->id] = job;
                }
                {
                    std::lock_guard lk(queue_mu_);
                    queue_.push_back(job);
                }
                queue_cv_.notify_one();
                send_json(res, 202, job_json(*job));
            });
        });
        server_.Get(R"(/jobs/([A-Za-z0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto job = find_job(req.matches[1]);
                json out = job_json(*job);
                // stale when the session has moved on since the job was queued
                try {
                    out["stale"] = store_.load(job->session_id).revision() != job->session_revision;
                } catch (const Error&) {
                    out["stale"] = nullptr;
                }
                send_json(res, 200, out);
            });
        });
        server_.Get(R"(/jobs/([A-Za-z0-9]+)/results/summary)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto job = find_job(req.matches[1]);
                if (job->status.load() != JobStatus::done) throw FieldError("job", "job has not finished");
                send_json(res, 200,
                          {{"job", job->id},
                           {"summary", job->summary},
                           {"provenance", {{"engine_version", kEngineVersion}, {"input", job->input}, {"config", job->config},
                                           {"session_id", job->session_id}, {"session_revision", job->session_revision}}}});
            });
        });
        server_.Get(R"(/jobs/([A-Za-z0-9]+)/results/density)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto job = find_job(req.matches[1]);
                if (!req.has_param("name")) throw FieldError("name", "query parameter 'name' is required");
                const auto& b = job_batch(*job);
                const auto name = req.get_param_value("name");
                const auto cols = b.columns();
                if (std::find(cols.begin(), cols.end(), name) == cols.end())
                    throw FieldError("name", "no column named '" + name + "'");
                const auto g = kde_grid(b.column(name), 512);
                send_json(res, 200, {{"name", name}, {"x", g.x}, {"pdf", g.pdf}, {"bandwidth", g.bandwidth}});
            });
        });
        server_.Get("/api/schema", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, api_schema()); });
    }

public:
    static json api_schema() {
        auto route = [](const char* method, const char* path, const char* summary, json body = nullptr) {
            json r{{"method", method}, {"path", path}, {"summary", summary}};
            if (!body.is_null()) r["body"] = std::move(body);
            return r;
        };
        return {
            {"title", "LAP elicitation service"},
            {"version", kEngineVersion},
            {"errors", {{"shape", {{"code", "string"}, {"message", "string"}, {"details", "object"}}},
                        {"statuses", {{"404", "unknown session or job"}, {"422", "invalid input, details.field names it"},
                                      {"400", "malformed JSON"}}}}},
            {"routes",
             json::array({
                 route("POST", "/sessions", "create a session",
                       {{"family", "mvn|exponential|repeated_measures"}, {"k", "integer >= 2 (mvn)"}, {"n_e", "number > 3 (mvn)"},
                        {"model", "model document (other families)"}}),
                 route("GET", "/sessions/{id}", "session state and revision history"),
                 route("PUT", "/sessions/{id}/marginals", "quantile answers, solves NormalGamma hyperparameters",
                       {{"marginals", "[{q50, q75}] one per component"}}),
                 route("PUT", "/sessions/{id}/concordances", "concordance answers, returns coherency reports",
                       {{"concordances", "[{i, j, p}] 1-based pairs"}}),
                 route("PUT", "/sessions/{id}/model", "replace the model document", {{"model", "object"}}),
                 route("GET", "/sessions/{id}/coherency", "coherency reports for the latest concordances"),
                 route("GET", "/sessions/{id}/preview?component=c", "prior-predictive Student-t density grid (512 points)"),
                 route("POST", "/sessions/{id}/jobs", "queue a sampling job",
                       {{"seed", "integer"}, {"chains", "integer"}, {"warmup", "integer"}, {"samples", "integer"},
                        {"thin", "integer"}}),
                 route("GET", "/jobs/{id}", "job status and progress"),
                 route("GET", "/jobs/{id}/results/summary", "posterior quantiles per column, with provenance"),
                 route("GET", "/jobs/{id}/results/density?name=col", "kernel density grid {x[], pdf[]} (512 points)"),
                 route("GET", "/api/schema", "this description"),
             })}};
    }
};

}  // namespace lap::service
