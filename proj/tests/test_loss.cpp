#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "lap/loss/parameter_space.hpp"
#include "lap/loss/target.hpp"
#include "lap/models/assemble.hpp"
#include "lap/models/exponential.hpp"
#include "lap/models/mvn.hpp"
#include "lap/sampler/diagnostics.hpp"
#include "lap/sampler/mcmc.hpp"
#include "test_util.hpp"

using namespace lap;
using Catch::Approx;
using models::ExpParameterization;

namespace {

const ExpertBelief kMedianBelief{"t_med", math::DistributionSpec::lognormal(-0.32, 0.34), "expert"};

// log target density over t_med, whichever parameter the model samples
double log_target_over_tmed(const TargetDensity& t, ExpParameterization p, double tm) {
    const bool direct = p == ExpParameterization::median_direct;
    const std::vector<double> x{direct ? tm : math::kLn2 / tm};
    if (!t.space.satisfies_constraints(x) || x[0] <= 0.001 || x[0] >= 10.0) return -std::numeric_limits<double>::infinity();
    const double ld = t.log_density_constrained(t.space.unconstrain(x));
    return direct ? ld : ld + std::log(math::kLn2 / (tm * tm));
}

// normalise exp(log f) on (lo, hi) by quadrature
double log_normaliser(const std::function<double(double)>& logf, double lo, double hi) {
    boost::math::quadrature::tanh_sinh<double> q;
    return std::log(q.integrate([&](double x) { return std::exp(logf(x)); }, lo, hi));
}

}  // namespace

TEST_CASE("parameter space layout and names", "[loss]") {
    ParameterSpace s;
    s.add("t_med", 1, Constraint::interval(0.001, 10.0));
    s.add("mu", 3, Constraint::real());
    s.add("tau", 2, Constraint::positive());
    s.add("Sigma", 0, Constraint::correlation(3));
    CHECK(s.dim() == 1 + 3 + 2 + 3);
    const std::vector<std::string> expect{"t_med", "mu[1]", "mu[2]", "mu[3]", "tau[1]", "tau[2]",
                                          "Sigma[1,2]", "Sigma[1,3]", "Sigma[2,3]"};
    CHECK(s.names() == expect);
    CHECK_THROWS_AS(s.add("mu", 1, Constraint::real()), Error);
    CHECK_THROWS_AS(Constraint::interval(1.0, 1.0), Error);
}

TEST_CASE("constrain and unconstrain are inverse with exact log-jacobian", "[loss][property]") {
    ParameterSpace s;
    s.add("a", 1, Constraint::interval(0.001, 10.0));
    s.add("b", 2, Constraint::real());
    s.add("c", 2, Constraint::positive());
    s.add("R", 0, Constraint::correlation(3));
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> u(s.dim());
        for (auto& v : u) v = n01(gen);
        const auto x = s.constrain(u);
        REQUIRE(s.satisfies_constraints(x.flat()));
        const auto back = s.unconstrain(x.flat());
        for (std::size_t i = 0; i < u.size(); ++i) REQUIRE(back[i] == Approx(u[i]).margin(1e-9));
        const auto J = test::jacobian([&](const std::vector<double>& v) { return s.constrain(v).flat(); }, u);
        CHECK(x.log_jacobian() == Approx(std::log(std::fabs(J.determinant()))).margin(1e-6));
    }
    std::vector<double> bad{20.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    CHECK_FALSE(s.satisfies_constraints(bad));
    CHECK_THROWS_AS(s.unconstrain(bad), Error);
}

TEST_CASE("loss contributions", "[loss]") {
    // t_med functional of an exponential model sampled in t_med
    auto t = models::exponential_loss_only_target(kMedianBelief, ExpParameterization::median_direct);
    const double psi = 0.7261 / math::kLn2;
    const std::vector<double> x{math::kLn2 * psi};
    const auto pv = t.space.constrain(t.space.unconstrain(x));
    CHECK(loss_contribution(t.loss_terms.front(), pv) ==
          Approx(kMedianBelief.spec.log_pdf(0.7261)).epsilon(1e-12));

    ParameterSpace s;
    s.add("g", 1, Constraint::real());
    const ObservableFunctional g{"g", [](const ParameterValues& v) { return v.scalar(0); }};
    const std::vector<double> two{2.0}, mean{2.5};
    const LossTerm hist{g, {"g", math::DistributionSpec::histogram({0.0, 1.0}, {1.0}), ""}, {}};
    CHECK(loss_contribution(hist, s.constrain(two)) == -std::numeric_limits<double>::infinity());
    const LossTerm normal{g, {"g", math::DistributionSpec::normal(2.5, 1.5), ""}, {}};
    CHECK(loss_contribution(normal, s.constrain(mean)) ==
          Approx(-std::log(1.5 * std::sqrt(2.0 * std::numbers::pi))).epsilon(1e-14));
}

TEST_CASE("exponential rate correction term", "[loss]") {
    CHECK(jacobian_correction_exponential_lambda(1.0, 0.001, 10.0) ==
          Approx(std::log(1.0 / (9.999 * math::kLn2))).epsilon(1e-14));
    CHECK(jacobian_correction_exponential_lambda(1.0, 0.001, 10.0) == Approx(-1.9367).margin(1e-3));
    CHECK(jacobian_correction_exponential_lambda(std::sqrt(math::kLn2 * 9.999), 0.001, 10.0) ==
          Approx(0.0).margin(1e-14));
    for (double l : {0.01, 0.3, 2.0, 4.9})
        CHECK(jacobian_correction_exponential_lambda(2.0 * l, 0.001, 10.0) -
                  jacobian_correction_exponential_lambda(l, 0.001, 10.0) ==
              Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(jacobian_correction_exponential_lambda(20.0, 0.001, 10.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("loss-only exponential targets over t_med", "[loss]") {
    const double a = 0.001, b = 10.0;
    const auto truncated = kMedianBelief.spec.truncated(a, b);
    for (auto p : {ExpParameterization::median_direct, ExpParameterization::rate_with_correction}) {
        INFO(models::parameterization_name(p));
        const auto t = models::exponential_loss_only_target(kMedianBelief, p, a, b);
        auto logf = [&](double tm) { return log_target_over_tmed(t, p, tm); };
        const double lo = p == ExpParameterization::median_direct ? a : math::kLn2 / b;
        const double hi = p == ExpParameterization::median_direct ? b : math::kLn2 / a;
        const double c = log_normaliser(logf, lo, std::min(hi, 30.0));
        for (int i = 1; i < 200; ++i) {
            const double tm = 0.05 * i;
            CHECK(std::exp(logf(tm) - c) == Approx(truncated.pdf(tm)).margin(1e-10));
        }
    }
    // without the correction the density picks up the 1/t_med^2 the uniform rate prior induces
    const auto t = models::exponential_loss_only_target(kMedianBelief, ExpParameterization::rate_uncorrected, a, b);
    auto logf = [&](double tm) { return log_target_over_tmed(t, ExpParameterization::rate_uncorrected, tm); };
    auto oracle = [&](double tm) {
        if (tm <= math::kLn2 / b || tm >= math::kLn2 / a) return -std::numeric_limits<double>::infinity();
        return kMedianBelief.spec.log_pdf(tm) - 2.0 * std::log(tm);
    };
    const double c1 = log_normaliser(logf, math::kLn2 / b, 30.0);
    const double c2 = log_normaliser(oracle, math::kLn2 / b, 30.0);
    for (int i = 1; i < 200; ++i) {
        const double tm = 0.05 * i;
        CHECK(std::exp(logf(tm) - c1) == Approx(std::exp(oracle(tm) - c2)).margin(1e-10));
    }
}

TEST_CASE("beliefs on the same observable multiply", "[loss]") {
    models::ExponentialModel m;
    const ExpertBelief second{"t_med", math::DistributionSpec::normal(0.8, 0.3), "second expert"};
    const auto both = models::exponential_target(m, {kMedianBelief, second});
    const auto one = models::exponential_target(m, {kMedianBelief});
    for (double tm : {0.3, 0.7, 1.5}) {
        const std::vector<double> x{tm};
        const auto u = one.space.unconstrain(x);
        CHECK(both.log_density(u) == Approx(one.log_density(u) + second.spec.log_pdf(tm)).epsilon(1e-13));
    }
}

TEST_CASE("beliefs must name a model observable", "[loss]") {
    models::ExponentialModel m;
    CHECK_THROWS_AS(models::exponential_target(m, {{"survival", math::DistributionSpec::normal(0, 1), ""}}), Error);
    // no mass inside the prior range of t_med
    CHECK_THROWS_AS(models::exponential_target(
                        m, {{"t_med", math::DistributionSpec::histogram({20.0, 30.0}, {1.0}), ""}}),
                    Error);
}

TEST_CASE("conflict between belief and prior range is a warning", "[loss]") {
    models::ExponentialModel m;
    m.parameterization = ExpParameterization::rate_uncorrected;
    m.gamma_prior = models::GammaRatePrior{100.0, 100.0};
    const auto far = models::exponential_target(m, {{"t_med", math::DistributionSpec::lognormal(std::log(5.0), 0.05), ""}});
    REQUIRE(far.warnings.size() == 1);
    CHECK(far.warnings.front().find("does not overlap") != std::string::npos);
    const auto near = models::exponential_target(m, {{"t_med", math::DistributionSpec::lognormal(std::log(0.7), 0.2), ""}});
    CHECK(near.warnings.empty());
}

TEST_CASE("assemble_target is deterministic", "[loss]") {
    const auto doc = nlohmann::json::parse(R"({
      "model": {"family": "mvn", "k": 3, "n_e": 10,
                "marginals": [{"q50": 5, "q75": 6.35}, {"q50": 2, "q75": 2.67}, {"q50": 1, "q75": 1.34}],
                "concordances": [{"i": 1, "j": 2, "p": 0.6}, {"i": 1, "j": 3, "p": 0.25}]}
    })");
    const auto a = models::assemble_target(doc);
    const auto b = models::assemble_target(doc);
    std::mt19937_64 gen(1);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> u(a.target.space.dim());
        for (auto& v : u) v = n01(gen);
        REQUIRE(a.target.log_density(u) == b.target.log_density(u));
    }
}

TEST_CASE("with no loss and no data the sampler reproduces the prior", "[loss][sampling]") {
    SamplerConfig cfg;
    cfg.seed = 3;
    cfg.thin = 5;
    const std::vector<double> probs{0.1, 0.5, 0.9};

    models::ExponentialModel em;
    em.parameterization = ExpParameterization::rate_uncorrected;
    em.gamma_prior = models::GammaRatePrior{4.0, 2.0};
    const auto eb = run_chains(models::exponential_target(em, {}), cfg);
    CHECK(quantile_match(eb.column("lambda"), math::DistributionSpec::gamma(4.0, 2.0), probs).max_deviation < 0.03);

    // NormalGamma mean marginal: Student-t(mu0, beta/(alpha gamma), 2 alpha)
    models::MvnModel mm;
    mm.k = 2;
    mm.hypers = {{5.0, 10.0, 5.0, 16.9}, {2.0, 10.0, 5.0, 4.2}};
    mm.flattening = models::Flattening::none;
    const auto mb = run_chains(models::mvn_target(mm), cfg);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& h = mm.hypers[c];
        const auto ref = math::DistributionSpec::student_t(h.mu0, h.beta / (h.alpha * h.gamma), 2.0 * h.alpha);
        CHECK(quantile_match(mb.column("mu[" + std::to_string(c + 1) + "]"), ref, probs).max_deviation < 0.03);
        const auto tau = math::DistributionSpec::gamma(h.alpha, h.beta);
        CHECK(quantile_match(mb.column("tau[" + std::to_string(c + 1) + "]"), tau, probs).max_deviation < 0.03);
    }
}
