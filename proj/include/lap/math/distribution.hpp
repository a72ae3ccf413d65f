#pragma once

// DistributionSpec: the value type for every expert belief and every
// reference distribution the tests compare draws against. A spec is a family,
// named parameters and a support interval; a support narrower than the
// family's natural support truncates (and renormalises) the distribution.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>

#include "json.hpp"
#include "lap/errors.hpp"
#include "lap/math/special.hpp"

namespace lap::math {

enum class Family { lognormal, normal, gamma, inverse_gamma, lomax, student_t, beta, histogram };

inline std::string_view family_name(Family f) {
    switch (f) {
    case Family::lognormal: return "lognormal";
    case Family::normal: return "normal";
    case Family::gamma: return "gamma";
    case Family::inverse_gamma: return "inverse-gamma";
    case Family::lomax: return "lomax";
    case Family::student_t: return "student-t";
    case Family::beta: return "beta";
    case Family::histogram: return "histogram";
    }
    return "?";
}

inline Family parse_family(std::string_view name) {
    for (Family f : {Family::lognormal, Family::normal, Family::gamma, Family::inverse_gamma,
                     Family::lomax, Family::student_t, Family::beta, Family::histogram}) {
        if (family_name(f) == name) return f;
    }
    if (name == "inverse_gamma") return Family::inverse_gamma;
    if (name == "student_t" || name == "t") return Family::student_t;
    throw config_error("unknown distribution family '" + std::string(name) + "'");
}

struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct Evaluation {
    double log_pdf;
    double cdf;
};

class DistributionSpec {
public:
    using Params = std::map<std::string, double>;

    static DistributionSpec lognormal(double mu, double sigma) {
        return DistributionSpec(Family::lognormal, {{"mu", mu}, {"sigma", sigma}});
    }
    static DistributionSpec normal(double mean, double sd) {
        return DistributionSpec(Family::normal, {{"mean", mean}, {"sd", sd}});
    }
    static DistributionSpec gamma(double shape, double rate) {
        return DistributionSpec(Family::gamma, {{"shape", shape}, {"rate", rate}});
    }
    static DistributionSpec inverse_gamma(double shape, double scale) {
        return DistributionSpec(Family::inverse_gamma, {{"shape", shape}, {"scale", scale}});
    }
    static DistributionSpec lomax(double alpha, double beta) {
        return DistributionSpec(Family::lomax, {{"alpha", alpha}, {"beta", beta}});
    }
    static DistributionSpec student_t(double mu, double scale_sq, double df) {
        return DistributionSpec(Family::student_t, {{"mu", mu}, {"scale_sq", scale_sq}, {"df", df}});
    }
    static DistributionSpec beta(double a, double b) {
        return DistributionSpec(Family::beta, {{"a", a}, {"b", b}});
    }
    static DistributionSpec histogram(std::vector<double> edges, std::vector<double> weights) {
        DistributionSpec d;
        d.family_ = Family::histogram;
        d.edges_ = std::move(edges);
        d.weights_ = std::move(weights);
        d.support_ = d.natural_support();
        d.validate();
        return d;
    }

    /// Generic constructor used by the JSON decoder.
    DistributionSpec(Family family, Params params, std::optional<Interval> support = std::nullopt)
        : family_(family), params_(std::move(params)) {
        validate();
        support_ = natural_support();
        if (support) set_support(*support);
    }

    /// Copy restricted to [lo, hi] intersected with the natural support.
    DistributionSpec truncated(double lo, double hi) const {
        DistributionSpec d = *this;
        d.set_support({lo, hi});
        return d;
    }

    Family family() const noexcept { return family_; }
    const Params& params() const noexcept { return params_; }
    const Interval& support() const noexcept { return support_; }
    const std::vector<double>& edges() const noexcept { return edges_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    bool is_truncated() const noexcept { return lo_mass_ > 0.0 || hi_mass_ < 1.0; }

    double param(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end())
            throw config_error(std::string(family_name(family_)) + ": missing parameter '" + name + "'");
        return it->second;
    }

    Interval natural_support() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        switch (family_) {
        case Family::normal:
        case Family::student_t: return {-inf, inf};
        case Family::lognormal:
        case Family::gamma:
        case Family::inverse_gamma:
        case Family::lomax: return {0.0, inf};
        case Family::beta: return {0.0, 1.0};
        case Family::histogram: return {edges_.front(), edges_.back()};
        }
        return {-inf, inf};
    }

    double log_pdf(double x) const {
        if (!support_.contains(x)) return -std::numeric_limits<double>::infinity();
        return base_log_pdf(x) - log_mass_;
    }
    double pdf(double x) const { return std::exp(log_pdf(x)); }

    double cdf(double x) const {
        if (x <= support_.lo) return 0.0;
        if (x >= support_.hi) return 1.0;
        return std::clamp((base_cdf(x) - lo_mass_) / (hi_mass_ - lo_mass_), 0.0, 1.0);
    }

    Evaluation eval(double x) const { return {log_pdf(x), cdf(x)}; }

    double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) throw domain_error("quantile: p must lie in (0, 1)");
        const double q = base_quantile(lo_mass_ + p * (hi_mass_ - lo_mass_));
        return std::clamp(q, support_.lo, support_.hi);
    }

    double mean() const {
        switch (family_) {
        case Family::lognormal: return std::exp(param("mu") + 0.5 * std::pow(param("sigma"), 2));
        case Family::normal: return param("mean");
        case Family::gamma: return param("shape") / param("rate");
        case Family::student_t: return param("mu");
        case Family::beta: return param("a") / (param("a") + param("b"));
        default: break;
        }
        throw domain_error("mean: not available in closed form for this family");
    }

private:
    DistributionSpec() = default;

    void set_support(Interval s) {
        const Interval nat = natural_support();
        s.lo = std::max(s.lo, nat.lo);
        s.hi = std::min(s.hi, nat.hi);
        if (!(s.lo < s.hi)) throw domain_error("support interval is empty");
        support_ = s;
        lo_mass_ = s.lo > nat.lo ? base_cdf(s.lo) : 0.0;
        hi_mass_ = s.hi < nat.hi ? base_cdf(s.hi) : 1.0;
        if (!(hi_mass_ > lo_mass_)) throw domain_error("support interval carries no probability mass");
        log_mass_ = std::log(hi_mass_ - lo_mass_);
    }

    void require_positive(const char* name) const {
        if (!(param(name) > 0.0) || !std::isfinite(param(name)))
            throw domain_error(std::string(family_name(family_)) + ": parameter '" + name + "' must be positive");
    }

    void validate() const {
        switch (family_) {
        case Family::lognormal: (void)param("mu"); require_positive("sigma"); break;
        case Family::normal: (void)param("mean"); require_positive("sd"); break;
        case Family::gamma: require_positive("shape"); require_positive("rate"); break;
        case Family::inverse_gamma: require_positive("shape"); require_positive("scale"); break;
        case Family::lomax: require_positive("alpha"); require_positive("beta"); break;
        case Family::student_t: (void)param("mu"); require_positive("scale_sq"); require_positive("df"); break;
        case Family::beta: require_positive("a"); require_positive("b"); break;
        case Family::histogram: {
            if (edges_.size() < 2 || weights_.size() + 1 != edges_.size())
                throw domain_error("histogram: need n+1 edges for n weights");
            for (std::size_t i = 1; i < edges_.size(); ++i)
                if (!(edges_[i] > edges_[i - 1])) throw domain_error("histogram: edges must be strictly increasing");
            double total = 0.0;
            for (double w : weights_) {
                if (!(w >= 0.0)) throw domain_error("histogram: weights must be nonnegative");
                total += w;
            }
            if (std::fabs(total - 1.0) > 1e-12) throw domain_error("histogram: weights must sum to 1");
            break;
        }
        }
    }

    double base_log_pdf(double x) const {
        constexpr double ninf = -std::numeric_limits<double>::infinity();
        constexpr double half_log_2pi = 0.91893853320467274178;
        switch (family_) {
        case Family::lognormal: {
            if (x <= 0.0) return ninf;
            const double s = param("sigma");
            const double z = (std::log(x) - param("mu")) / s;
            return -half_log_2pi - std::log(s) - std::log(x) - 0.5 * z * z;
        }
        case Family::normal: {
            const double s = param("sd");
            const double z = (x - param("mean")) / s;
            return -half_log_2pi - std::log(s) - 0.5 * z * z;
        }
        case Family::gamma: {
            if (x <= 0.0) return ninf;
            const double a = param("shape"), r = param("rate");
            return a * std::log(r) - std::lgamma(a) + (a - 1.0) * std::log(x) - r * x;
        }
        case Family::inverse_gamma: {
            if (x <= 0.0) return ninf;
            const double a = param("shape"), b = param("scale");
            return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
        }
        case Family::lomax: return lomax_log_pdf(x, param("alpha"), param("beta"));
        case Family::student_t: return StudentT(param("mu"), param("scale_sq"), param("df")).log_pdf(x);
        case Family::beta: {
            if (x <= 0.0 || x >= 1.0) return ninf;
            const double a = param("a"), b = param("b");
            return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
                   (b - 1.0) * std::log1p(-x);
        }
        case Family::histogram: {
            if (x < edges_.front() || x > edges_.back()) return ninf;
            const std::size_t i = bin_of(x);
            return std::log(weights_[i] / (edges_[i + 1] - edges_[i]));
        }
        }
        return ninf;
    }

    double base_cdf(double x) const {
        namespace bm = boost::math;
        switch (family_) {
        case Family::lognormal:
            return x <= 0.0 ? 0.0 : bm::cdf(bm::lognormal_distribution<double>(param("mu"), param("sigma")), x);
        case Family::normal: return bm::cdf(bm::normal_distribution<double>(param("mean"), param("sd")), x);
        case Family::gamma:
            return x <= 0.0 ? 0.0 : bm::cdf(bm::gamma_distribution<double>(param("shape"), 1.0 / param("rate")), x);
        case Family::inverse_gamma:
            return x <= 0.0 ? 0.0
                            : bm::cdf(bm::inverse_gamma_distribution<double>(param("shape"), param("scale")), x);
        case Family::lomax: return lomax_cdf(x, param("alpha"), param("beta"));
        case Family::student_t: return StudentT(param("mu"), param("scale_sq"), param("df")).cdf(x);
        case Family::beta:
            return x <= 0.0 ? 0.0 : x >= 1.0 ? 1.0 : bm::cdf(bm::beta_distribution<double>(param("a"), param("b")), x);
        case Family::histogram: {
            if (x <= edges_.front()) return 0.0;
            if (x >= edges_.back()) return 1.0;
            const std::size_t i = bin_of(x);
            double c = 0.0;
            for (std::size_t j = 0; j < i; ++j) c += weights_[j];
            return c + weights_[i] * (x - edges_[i]) / (edges_[i + 1] - edges_[i]);
        }
        }
        return 0.0;
    }

    double base_quantile(double p) const {
        namespace bm = boost::math;
        switch (family_) {
        case Family::lognormal:
            return bm::quantile(bm::lognormal_distribution<double>(param("mu"), param("sigma")), p);
        case Family::normal: return bm::quantile(bm::normal_distribution<double>(param("mean"), param("sd")), p);
        case Family::gamma:
            return bm::quantile(bm::gamma_distribution<double>(param("shape"), 1.0 / param("rate")), p);
        case Family::inverse_gamma:
            return bm::quantile(bm::inverse_gamma_distribution<double>(param("shape"), param("scale")), p);
        case Family::lomax: return lomax_quantile(p, param("alpha"), param("beta"));
        case Family::student_t: return StudentT(param("mu"), param("scale_sq"), param("df")).quantile(p);
        case Family::beta: return bm::quantile(bm::beta_distribution<double>(param("a"), param("b")), p);
        case Family::histogram: {
            double c = 0.0;
            for (std::size_t i = 0; i < weights_.size(); ++i) {
                if (weights_[i] > 0.0 && c + weights_[i] >= p)
                    return edges_[i] + (p - c) / weights_[i] * (edges_[i + 1] - edges_[i]);
                c += weights_[i];
            }
            return edges_.back();
        }
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    std::size_t bin_of(double x) const {
        auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        std::size_t i = static_cast<std::size_t>(it - edges_.begin());
        if (i == 0) return 0;
        return std::min(i - 1, weights_.size() - 1);
    }

    Family family_ = Family::normal;
    Params params_;
    std::vector<double> edges_;
    std::vector<double> weights_;
    Interval support_;
    double lo_mass_ = 0.0;
    double hi_mass_ = 1.0;
    double log_mass_ = 0.0;
};

// ---------------------------------------------------------------------------
// JSON: {"family": s, "params": {name: x}, "support": [lo, hi]}
// histogram: {"family": "histogram", "edges": [...], "weights": [...]}

inline nlohmann::json to_json_value(double x) {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : "-inf";
}

inline double from_json_value(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
        if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
        throw config_error("expected a number, got '" + s + "'");
    }
    if (!j.is_number()) throw config_error("expected a number");
    return j.get<double>();
}

inline nlohmann::json to_json(const DistributionSpec& d) {
    nlohmann::json j;
    j["family"] = std::string(family_name(d.family()));
    if (d.family() == Family::histogram) {
        j["edges"] = d.edges();
        j["weights"] = d.weights();
    } else {
        j["params"] = d.params();
    }
    j["support"] = {to_json_value(d.support().lo), to_json_value(d.support().hi)};
    return j;
}

inline DistributionSpec distribution_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("family")) throw config_error("distribution: missing 'family'");
    const Family fam = parse_family(j.at("family").get<std::string>());
    std::optional<Interval> support;
    if (j.contains("support") && !j.at("support").is_null()) {
        const auto& s = j.at("support");
        if (!s.is_array() || s.size() != 2) throw config_error("distribution: 'support' must be [lo, hi]");
        support = Interval{from_json_value(s[0]), from_json_value(s[1])};
    }
    if (fam == Family::histogram) {
        const auto& src = j.contains("edges") ? j : j.value("params", nlohmann::json::object());
        if (!src.contains("edges") || !src.contains("weights"))
            throw config_error("histogram: 'edges' and 'weights' are required");
        auto d = DistributionSpec::histogram(src.at("edges").get<std::vector<double>>(),
                                             src.at("weights").get<std::vector<double>>());
        if (support) d = d.truncated(support->lo, support->hi);
        return d;
    }
    DistributionSpec::Params params;
    if (j.contains("params")) {
        for (const auto& [k, v] : j.at("params").items()) params[k] = from_json_value(v);
    }
    return DistributionSpec(fam, std::move(params), support);
}

}  // namespace lap::math
