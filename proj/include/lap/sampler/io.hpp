#pragma once

// Draw CSV ("chain,iter,<params>,<observables>") and the diagnostics sidecar.
// Numbers are written with 17 significant digits so they round-trip exactly.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "lap/errors.hpp"
#include "lap/sampler/diagnostics.hpp"
#include "lap/sampler/mcmc.hpp"

namespace lap {

inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return {buf, res.ptr};
}

inline void write_draws_csv(std::ostream& out, const SampleBatch& b) {
    out << "chain,iter";
    for (const auto& c : b.columns()) out << ',' << c;
    out << '\n';
    const std::size_t w = b.width();
    for (std::size_t c = 0; c < b.n_chains(); ++c) {
        for (std::size_t i = 0; i < b.n_samples; ++i) {
            out << c + 1 << ',' << i + 1;
            for (std::size_t k = 0; k < w; ++k) out << ',' << format_number(b.at(c, i, k));
            out << '\n';
        }
    }
}

inline nlohmann::json diagnostics_json(const DiagnosticsReport& r) {
    nlohmann::json j;
    j["rhat_available"] = r.rhat_available;
    j["acceptance_rate"] = r.acceptance_rate;
    j["flags"] = r.flags;
    auto& cols = j["columns"] = nlohmann::json::array();
    for (const auto& c : r.columns) {
        nlohmann::json e{{"name", c.name}, {"ess", c.ess}, {"degenerate", c.degenerate}, {"rhat_flag", c.rhat_flag}};
        e["rhat"] = c.rhat ? nlohmann::json(*c.rhat) : nlohmann::json(nullptr);
        cols.push_back(std::move(e));
    }
    return j;
}

/// Writes `path` and `path` + ".diagnostics.json".
inline void write_draws(const std::filesystem::path& path, const SampleBatch& b, const nlohmann::json& extra = {}) {
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw config_error("cannot write draws to '" + path.string() + "'");
        write_draws_csv(f, b);
    }
    nlohmann::json d = diagnostics_json(diagnostics(b));
    if (!extra.is_null()) d["run"] = extra;
    std::ofstream f(path.string() + ".diagnostics.json", std::ios::binary);
    if (!f) throw config_error("cannot write diagnostics next to '" + path.string() + "'");
    f << d.dump(2) << '\n';
}

}  // namespace lap
