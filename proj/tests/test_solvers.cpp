#include <catch_amalgamated.hpp>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>

#include "lap/elicit/solvers.hpp"
#include "test_util.hpp"

using namespace lap;
using namespace lap::elicit;
using Catch::Approx;

namespace {

double lomax_q(double alpha, double beta, double p) { return beta * (std::pow(1.0 - p, -1.0 / alpha) - 1.0); }
double lomax_cdf(double alpha, double beta, double x) { return 1.0 - std::pow(1.0 + x / beta, -alpha); }

// inverse-gamma IG(alpha, b) density of mean survival psi
double ig_pdf(double alpha, double b, double psi) {
    return std::exp(alpha * std::log(b) - std::lgamma(alpha) - (alpha + 1.0) * std::log(psi) - b / psi);
}

// Pr(exp(-t/psi) > gamma) = Pr(psi > t / -log gamma), by quadrature of the IG density
double survival_prob_oracle(double alpha, double ytilde, double t, double gamma) {
    const double c = t / -std::log(gamma);
    boost::math::quadrature::exp_sinh<double> q;
    return q.integrate([&](double s) { return ig_pdf(alpha, alpha * ytilde, c + s); }, 0.0,
                       std::numeric_limits<double>::infinity());
}

double ig_cdf_oracle(double alpha, double b, double x) {
    boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate([&](double s) { return s > 0.0 ? ig_pdf(alpha, b, s) : 0.0; }, 0.0, x);
}

// moments of log(2) psi by quadrature
std::pair<double, double> median_survival_moments(double alpha, double ytilde) {
    boost::math::quadrature::exp_sinh<double> q;
    const double b = alpha * ytilde;
    const double m1 = q.integrate([&](double s) { return math::kLn2 * s * ig_pdf(alpha, b, s); }, 0.0,
                                  std::numeric_limits<double>::infinity());
    const double m2 = q.integrate([&](double s) { return std::pow(math::kLn2 * s, 2) * ig_pdf(alpha, b, s); }, 0.0,
                                  std::numeric_limits<double>::infinity());
    return {m1, m2 - m1 * m1};
}

std::vector<QuantilePair> gamma_pairs(double shape, double rate, std::vector<double> probs) {
    const boost::math::gamma_distribution<double> g(shape, 1.0 / rate);
    std::vector<QuantilePair> out;
    for (double p : probs) out.push_back({p, boost::math::quantile(g, p)});
    return out;
}

}  // namespace

TEST_CASE("lomax tertile solve", "[solvers][lomax]") {
    const auto p = solve_lomax_tertiles({1.0, 4.0});
    CHECK(p.alpha == Approx(1.0).epsilon(1e-9));
    CHECK(p.beta == Approx(2.0).epsilon(1e-9));
    CHECK(lomax_q(1.0, 2.0, 1.0 / 3.0) == Approx(1.0).epsilon(1e-12));

    const auto r = solve_lomax_tertiles({lomax_q(10.0, 5.0, 1.0 / 3.0), lomax_q(10.0, 5.0, 2.0 / 3.0)});
    CHECK(r.alpha == Approx(10.0).margin(1e-6));
    CHECK(r.beta == Approx(5.0).margin(1e-6));

    try {
        solve_lomax_tertiles({1.0, 2.5});
        FAIL("expected infeasibility");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::infeasible);
    }
    CHECK(lomax_tertile_ratio_bound() == Approx(2.7095).margin(1e-4));
    CHECK_THROWS_AS(solve_lomax_tertiles({2.0, 1.0}), Error);
    CHECK_THROWS_AS(solve_lomax_tertiles({0.0, 1.0}), Error);
}

TEST_CASE("lomax feasibility bound is tight", "[solvers][lomax]") {
    const double bound = lomax_tertile_ratio_bound();
    const auto p = solve_lomax_tertiles({1.0, bound + 1e-3});
    CHECK(p.alpha > 100.0);
    CHECK(lomax_cdf(p.alpha, p.beta, 1.0) == Approx(1.0 / 3.0).margin(1e-9));
    CHECK(lomax_cdf(p.alpha, p.beta, bound + 1e-3) == Approx(2.0 / 3.0).margin(1e-9));
    CHECK_THROWS_AS(solve_lomax_tertiles({1.0, bound - 1e-3}), Error);
}

TEST_CASE("lomax round trip over random parameters", "[solvers][lomax][property]") {
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> la(std::log(0.2), std::log(50.0)), lb(std::log(0.05), std::log(20.0));
    for (int i = 0; i < 200; ++i) {
        const double alpha = std::exp(la(gen)), beta = std::exp(lb(gen));
        const TertileAnswer ans{lomax_q(alpha, beta, 1.0 / 3.0), lomax_q(alpha, beta, 2.0 / 3.0)};
        const auto r = solve_lomax_tertiles(ans);
        INFO("alpha " << alpha << " beta " << beta);
        CHECK(r.alpha == Approx(alpha).epsilon(1e-6));
        CHECK(r.beta == Approx(beta).epsilon(1e-6));
        CHECK(lomax_cdf(r.alpha, r.beta, ans.q13) == Approx(1.0 / 3.0).margin(1e-9));
        CHECK(lomax_cdf(r.alpha, r.beta, ans.q23) == Approx(2.0 / 3.0).margin(1e-9));
    }
}

TEST_CASE("ESS to tertiles", "[solvers][lomax]") {
    const auto t = ess_to_tertiles(1.0, 1.0);
    CHECK(t.q13 == Approx(0.5).epsilon(1e-12));
    CHECK(t.q23 == Approx(2.0).epsilon(1e-12));
    const auto big = ess_to_tertiles(10000.0, 1.0);
    CHECK(big.q23 / big.q13 == Approx(2.7095).margin(0.01));
    const auto ten = ess_to_tertiles(10.0, 1.0);
    CHECK(ten.q23 / ten.q13 > lomax_tertile_ratio_bound());
    CHECK(ten.q23 / ten.q13 < 4.0);
    // the tertiles belong to a Lomax with shape alpha and median 1
    const auto back = solve_lomax_tertiles(ten);
    CHECK(back.alpha == Approx(10.0).epsilon(1e-6));
    CHECK(lomax_q(back.alpha, back.beta, 0.5) == Approx(1.0).epsilon(1e-6));
    double prev = 0.0;
    for (double a : {0.5, 1.0, 3.0, 10.0, 100.0}) {
        const auto x = ess_to_tertiles(a, 2.0);
        const double ratio = x.q23 / x.q13;
        if (prev > 0.0) CHECK(ratio < prev);
        prev = ratio;
    }
}

TEST_CASE("DAP survival probability", "[solvers][dap]") {
    CHECK(dap_survival_prob(10.0, 1.0, 1.0, 0.5) == Approx(0.163).margin(0.005));
    CHECK(dap_survival_prob(10.0, 1.0, 1.0, 0.5) == Approx(survival_prob_oracle(10.0, 1.0, 1.0, 0.5)).epsilon(1e-8));
    for (double g : {0.05, 0.3, 0.7, 0.95})
        for (double t : {0.5, 2.0})
            CHECK(dap_survival_prob(4.0, 1.7, t, g) == Approx(survival_prob_oracle(4.0, 1.7, t, g)).epsilon(1e-8));
    CHECK(dap_survival_prob(10.0, 1.0, 1.0, 1.0 - 1e-9) < 1e-6);
    CHECK(dap_survival_prob(10.0, 1.0, 1.0, 1e-300) > 1.0 - 1e-6);
    CHECK_THROWS_AS(dap_survival_prob(10.0, 1.0, 1.0, 1.0), Error);
    CHECK_THROWS_AS(dap_survival_prob(-1.0, 1.0, 1.0, 0.5), Error);
}

TEST_CASE("DAP solve", "[solvers][dap]") {
    const auto one = solve_dap({{1.0, 0.5, 0.163, 10.0}});
    CHECK(one.alpha == 10.0);
    CHECK(one.ytilde == Approx(1.0).margin(1e-3));

    const double tau1 = dap_survival_prob(10.0, 1.0, 1.0, 0.5), tau2 = dap_survival_prob(10.0, 1.0, 2.0, 0.5);
    const auto two = solve_dap({{1.0, 0.5, tau1, {}}, {2.0, 0.5, tau2, {}}});
    CHECK(two.alpha == Approx(10.0).epsilon(1e-6));
    CHECK(two.ytilde == Approx(1.0).epsilon(1e-6));

    // survival past a later time cannot be more likely
    try {
        solve_dap({{1.0, 0.5, 0.2, {}}, {2.0, 0.5, 0.4, {}}});
        FAIL("expected an inconsistency error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::infeasible);
    }
    CHECK_THROWS_AS(solve_dap({{1.0, 0.5, 0.2, {}}}), Error);
    CHECK_THROWS_AS(solve_dap({}), Error);
}

TEST_CASE("DAP round trip over random parameters", "[solvers][dap][property]") {
    std::mt19937_64 gen(202);
    std::uniform_real_distribution<double> la(std::log(0.5), std::log(100.0)), ly(std::log(0.2), std::log(5.0)),
        u(0.0, 1.0);
    int done = 0;
    while (done < 200) {
        const double alpha = std::exp(la(gen)), ytilde = std::exp(ly(gen));
        const double g1 = 0.2 + 0.6 * u(gen), g2 = 0.2 + 0.6 * u(gen);
        const double t1 = ytilde * (0.2 + u(gen)), t2 = t1 * (1.5 + 2.0 * u(gen));
        const double tau1 = dap_survival_prob(alpha, ytilde, t1, g1), tau2 = dap_survival_prob(alpha, ytilde, t2, g2);
        // keep answers an expert could state to two decimals
        if (tau1 < 0.02 || tau1 > 0.98 || tau2 < 0.02 || tau2 > 0.98 || std::fabs(tau1 - tau2) < 0.05) continue;
        ++done;
        INFO("alpha " << alpha << " ytilde " << ytilde);
        const auto r = solve_dap({{t1, g1, tau1, {}}, {t2, g2, tau2, {}}});
        CHECK(r.alpha == Approx(alpha).epsilon(1e-5));
        CHECK(r.ytilde == Approx(ytilde).epsilon(1e-5));
        const auto s = solve_dap({{t1, g1, tau1, alpha}});
        CHECK(s.ytilde == Approx(ytilde).epsilon(1e-9));
    }
}

TEST_CASE("DAP median survival quantile", "[solvers][dap]") {
    CHECK(dap_median_survival_quantile(10.0, 1.0, 0.5) == Approx(0.717).margin(0.005));
    for (double p : {0.05, 0.5, 0.9}) {
        const double q = dap_median_survival_quantile(3.0, 2.0, p);
        // Pr(log 2 psi <= q) = IG cdf at q / log 2
        CHECK(ig_cdf_oracle(3.0, 6.0, q / math::kLn2) == Approx(p).margin(1e-9));
    }
    CHECK(dap_median_survival_quantile(1e7, 1.3, 0.5) == Approx(math::kLn2 * 1.3).epsilon(1e-6));
    double prev = 0.0;
    for (int i = 1; i < 100; ++i) {
        const double q = dap_median_survival_quantile(4.0, 1.0, i / 100.0);
        CHECK(q > prev);
        prev = q;
    }
}

TEST_CASE("lognormal from IG median survival", "[solvers][dap]") {
    const auto ln = lognormal_from_ig_median_survival(10.0, 1.0);
    CHECK(ln.mu == Approx(-0.32).margin(0.005));
    CHECK(ln.sigma == Approx(0.34).margin(0.005));
    for (auto [a, y] : {std::pair{10.0, 1.0}, {3.5, 0.4}, {50.0, 7.0}}) {
        const auto [m, v] = median_survival_moments(a, y);
        const auto r = lognormal_from_ig_median_survival(a, y);
        CHECK(std::exp(r.mu + 0.5 * r.sigma * r.sigma) == Approx(m).epsilon(1e-8));
        CHECK((std::exp(r.sigma * r.sigma) - 1.0) * std::exp(2.0 * r.mu + r.sigma * r.sigma) == Approx(v).epsilon(1e-6));
    }
    const auto tight = lognormal_from_ig_median_survival(1e9, 1.0);
    CHECK(tight.sigma < 1e-4);
    CHECK(tight.mu == Approx(std::log(math::kLn2)).margin(1e-6));
    const auto scaled = lognormal_from_ig_median_survival(10.0, 3.0);
    CHECK(scaled.mu - ln.mu == Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(scaled.sigma == Approx(ln.sigma).epsilon(1e-12));
    CHECK_THROWS_AS(lognormal_from_ig_median_survival(2.0, 1.0), Error);
}

TEST_CASE("student-t hyperparameters reproduce the elicited quantiles", "[solvers][t]") {
    for (auto [q50, q75, ne] : {std::tuple{5.0, 6.35, 10.0}, {0.0, 0.1, 3.0}, {-4.0, 1.0, 40.0}}) {
        const auto h = fit_student_t_hyperparams(q50, q75, ne);
        CHECK(h.mu0 == q50);
        CHECK(h.gamma == ne);
        CHECK(h.alpha == ne / 2.0);
        // predictive St(mu0, beta (gamma + 1) / (alpha gamma), 2 alpha)
        const boost::math::students_t_distribution<double> t(2.0 * h.alpha);
        const double scale = std::sqrt(h.beta * (h.gamma + 1.0) / (h.alpha * h.gamma));
        CHECK(h.mu0 + scale * boost::math::quantile(t, 0.75) == Approx(q75).epsilon(1e-12));
        CHECK(h.mu0 + scale * boost::math::quantile(t, 0.5) == Approx(q50).margin(1e-12));
    }
    CHECK_THROWS_AS(fit_student_t_hyperparams(5.0, 4.0, 10.0), Error);
    CHECK_THROWS_AS(fit_student_t_hyperparams(5.0, 6.0, 0.0), Error);
}

TEST_CASE("student-t hyperparameter round trip", "[solvers][t][property]") {
    std::mt19937_64 gen(303);
    std::uniform_real_distribution<double> mu(-50.0, 50.0), lb(std::log(0.01), std::log(100.0)), ln(std::log(2.0), std::log(200.0));
    for (int i = 0; i < 200; ++i) {
        const double mu0 = mu(gen), beta = std::exp(lb(gen)), ne = std::exp(ln(gen));
        const boost::math::students_t_distribution<double> t(ne);
        const double scale = std::sqrt(beta * (ne + 1.0) / (0.5 * ne * ne));
        const auto h = fit_student_t_hyperparams(mu0, mu0 + scale * boost::math::quantile(t, 0.75), ne);
        CHECK(h.mu0 == mu0);
        CHECK(h.beta == Approx(beta).epsilon(1e-9));
    }
}

TEST_CASE("student-t hyperparameters for the four tabulated margins", "[tabulated]") {
    struct Row {
        double q50, q75, beta, abs_tol;
    };
    const Row rows[] = {{5.0, 6.35, 16.89, 0.1}, {2.0, 2.67, 4.22, 0.05}, {1.0, 1.34, 1.06, 0.05}, {3.0, 5.02, 38.0, 0.3}};
    for (const auto& r : rows) {
        const auto h = fit_student_t_hyperparams(r.q50, r.q75, 10.0);
        INFO("q50 " << r.q50 << " q75 " << r.q75 << " beta " << h.beta);
        CHECK(h.mu0 == r.q50);
        CHECK(h.beta == Approx(r.beta).margin(r.abs_tol));
        CHECK(test::relative_gap(h.beta, r.beta) < 0.01);
    }
}

TEST_CASE("gamma ESS fit", "[solvers][ess]") {
    const auto a = estimate_ess_gamma(gamma_pairs(10.0, 7.0, {0.1, 0.25, 0.5, 0.75, 0.9}));
    CHECK(a.shape == Approx(10.0).margin(0.1));
    CHECK(a.rate == Approx(7.0).epsilon(1e-3));
    CHECK(a.residual < 1e-6);
    const auto b = estimate_ess_gamma(gamma_pairs(1.0, 1.0, {0.1, 0.25, 0.5, 0.75, 0.9}));
    CHECK(b.shape == Approx(1.0).margin(0.05));
    const auto c = estimate_ess_gamma(gamma_pairs(25.0, 3.0, {0.25, 0.75}));
    CHECK(c.shape == Approx(25.0).margin(0.5));
    CHECK_THROWS_AS(estimate_ess_gamma({{0.5, 1.0}}), Error);
    CHECK_THROWS_AS(estimate_ess_gamma({{0.25, 2.0}, {0.75, 1.0}}), Error);
    CHECK_THROWS_AS(estimate_ess_gamma({{0.0, 1.0}, {0.75, 2.0}}), Error);
}

TEST_CASE("gamma ESS round trip", "[solvers][ess][property]") {
    std::mt19937_64 gen(404);
    std::uniform_real_distribution<double> ls(std::log(0.5), std::log(500.0)), lr(std::log(0.1), std::log(10.0));
    for (int i = 0; i < 200; ++i) {
        const double shape = std::exp(ls(gen)), rate = std::exp(lr(gen));
        const auto f = estimate_ess_gamma(gamma_pairs(shape, rate, {0.1, 0.25, 0.5, 0.75, 0.9}));
        INFO("shape " << shape << " rate " << rate);
        CHECK(f.shape == Approx(shape).epsilon(1e-4));
        CHECK(f.rate == Approx(rate).epsilon(1e-4));
    }
}

TEST_CASE("regression ESS heuristic and elicitation count", "[solvers]") {
    CHECK(regression_ess_heuristic(0.67, 13.0, 1.5) == Approx(2.59).margin(0.01));
    CHECK(regression_ess_heuristic(1.2, 13.0, 1.2) == Approx(13.0).epsilon(1e-14));
    CHECK(regression_ess_heuristic(0.67, 13.0, 1e8) < 1e-10);
    CHECK_THROWS_AS(regression_ess_heuristic(0.0, 13.0, 1.0), Error);
    CHECK(elicitation_count(4) == 15);
    CHECK(elicitation_count(2) == 6);
    CHECK(elicitation_count(3) == 10);
    CHECK_THROWS_AS(elicitation_count(1), Error);
}
