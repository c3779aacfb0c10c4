#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "trulr/portfolio.hpp"

using namespace trulr;
using namespace trulr::portfolio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// m = 1e7 plain Monte Carlo under the default target parameters, seed 2024
struct Fixture {
    double price, se;
};
constexpr Fixture kReference[3] = {{11.6741931971, 3.354e-03}, {10.2454408698, 1.321e-03}, {3.1740578891, 1.492e-03}};

// Gaussian log density through an explicit inverse and determinant
double log_density_direct(const MvNormalParams& p, const Eigen::VectorXd& x) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(p.cov);
    const Eigen::VectorXd d = x - p.mean;
    const double q = d.dot(lu.inverse() * d);
    return -0.5 * q - 0.5 * std::log(lu.determinant()) - 0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi);
}

PortfolioConfig one_option(std::pair<double, double> week, std::pair<double, double> target, int weeks, double alpha) {
    PortfolioConfig c;
    OptionSpec o;
    o.K = 100;
    o.theta_weeks.assign(static_cast<std::size_t>(weeks), week);
    o.theta_target = target;
    o.alphas.assign(static_cast<std::size_t>(weeks), alpha);
    c.options = {o};
    return c;
}

}  // namespace

TEST_CASE("input model") {
    MarketParams m;
    m.M = 3;
    const auto p = input_model(100, 0.2, m);
    Eigen::Matrix3d A;
    A << 1, 1, 1, 1, 2, 2, 1, 2, 3;
    CHECK(p.cov.isApprox(0.04 * m.dt() * A, 1e-15));
    for (int k = 0; k < 3; ++k)
        CHECK_THAT(p.mean(k), WithinRel(std::log(100.0) + (0.05 - 0.02) * m.dt() * (k + 1), 1e-15));

    m.M = 1;
    const auto q = input_model(50, 0.3, m);
    CHECK(q.mean.size() == 1);
    CHECK_THAT(q.cov(0, 0), WithinRel(0.09 * 0.25, 1e-15));

    // martingale: E[e^{X_M}] = S0 e^{rT}
    const MarketParams d;
    const MvNormal g(input_model(100, 0.18, d));
    RandomStream rs(1, 1);
    const Eigen::MatrixXd X = g.sample(rs, 1000000);
    const Eigen::ArrayXd last = X.row(12).array().exp();
    const double mean = last.mean();
    const double se = std::sqrt((last - mean).square().sum() / (last.size() - 1.0) / static_cast<double>(last.size()));
    CHECK(std::abs(mean - 100 * std::exp(0.05 * 0.25)) <= 4 * se);

    CHECK_THROWS_AS(input_model(-1, 0.2, d), std::invalid_argument);
    CHECK_THROWS_AS(input_model(100, 0.0, d), std::invalid_argument);
}

TEST_CASE("payoffs") {
    MarketParams m;
    Eigen::VectorXd atm = Eigen::VectorXd::Constant(13, std::log(100.0));
    CHECK(asian_payoff(atm, 100, m) == 0.0);
    CHECK(surrogate_payoff(atm, 100, m).value == 0.0);
    CHECK(asian_payoff(Eigen::VectorXd::Constant(13, std::log(50.0)), 100, m) == 0.0);

    MarketParams one;
    one.M = 1;
    one.r = 0.0;
    CHECK_THAT(asian_payoff(Eigen::VectorXd::Constant(1, std::log(101.0)), 100, one), WithinRel(1.0, 1e-13));

    const double eps = 1e-4;
    const Eigen::VectorXd up = Eigen::VectorXd::Constant(13, std::log(100.0) + eps);
    const double a = asian_payoff(up, 100, m), s = surrogate_payoff(up, 100, m).value;
    CHECK(std::abs(a - s) <= 1e-3 * a);
    CHECK_THROWS_AS(asian_payoff(Eigen::VectorXd::Zero(4), 100, m), std::invalid_argument);
}

TEST_CASE("config round trip and validation") {
    const auto c = default_portfolio_config();
    REQUIRE(c.options.size() == 3);
    CHECK(c.options[1].K == 45);
    CHECK(c.options[0].theta_weeks[2] == std::pair<double, double>{105, 0.24});
    CHECK(c.options[2].alphas[0] == 1.1);
    const auto text = portfolio_config_to_json(c);
    CHECK(portfolio_config_to_json(parse_portfolio_config(text)) == text);
    CHECK_THROWS_WITH(parse_portfolio_config(R"({"r":0.05,"T":0.25,"M":13,"options":[],"bogus":1})"),
                      ContainsSubstring("bogus"));

    auto bad = c;
    bad.options[0].alphas[0] = 30.0;  // (1 - alpha) 0.36^2 + alpha 0.18^2 < 0
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    auto short_alpha = c;
    short_alpha.options[0].alphas.pop_back();
    CHECK_THROWS_AS(short_alpha.validate(), std::invalid_argument);
}

TEST_CASE("history moments") {
    const auto c = default_portfolio_config();
    RandomStream rs(4, 4);
    const auto h = generate_history(c, 100000, rs);
    REQUIRE(h.paths.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(h.paths[i].size() == 4);
        for (std::size_t j = 0; j < 4; ++j) {
            const auto& X = h.paths[i][j];
            REQUIRE(X.rows() == 13);
            REQUIRE(X.cols() == 100000);
            const auto p = input_model(c.options[i].theta_weeks[j].first, c.options[i].theta_weeks[j].second, c.market);
            const Eigen::VectorXd mean = X.rowwise().mean();
            for (int k = 0; k < 13; ++k) CHECK(std::abs(mean(k) - p.mean(k)) <= 4 * std::sqrt(p.cov(k, k) / 1e5));
        }
    }
    RandomStream a(4, 4), b(4, 4);
    CHECK(generate_history(c, 50, a).paths[2][3] == generate_history(c, 50, b).paths[2][3]);
}

TEST_CASE("weights agree with an independent density evaluation") {
    const MarketParams m;
    const auto pw = input_model(100, 0.18, m), pt = input_model(110, 0.36, m);
    const MvNormal w(pw), t(pt);
    RandomStream rs(6, 6);
    const Eigen::MatrixXd X = w.sample(rs, 1000);
    const Eigen::VectorXd lw = log_density_columns(w, X), lt = log_density_columns(t, X);
    for (Eigen::Index s = 0; s < 1000; ++s) {
        const double direct = log_density_direct(pt, X.col(s)) - log_density_direct(pw, X.col(s));
        // relative error of the ratio is the absolute error of its log
        CHECK_THAT(lt(s) - lw(s), WithinAbs(direct, 1e-9));
        CHECK_THAT(lw(s), WithinAbs(w.log_density(X.col(s)), 1e-10));
    }
}

TEST_CASE("equal parameters give plain Monte Carlo") {
    const auto c = one_option({100, 0.2}, {100, 0.2}, 2, 1.5);
    RandomStream rs(7, 7);
    const auto h = generate_history(c, 3000, rs);
    double s = 0;
    for (const auto& X : h.paths[0])
        for (Eigen::Index k = 0; k < X.cols(); ++k) s += asian_payoff(X.col(k), 100, c.market);
    for (auto rule : {PricingRule::lr, PricingRule::trulr_m, PricingRule::trulr_s}) {
        const auto p = price_portfolio(c, h, rule, 0.01);
        CHECK_THAT(p.total, WithinRel(s / 6000, 1e-12));
        CHECK(p.per_option[0].max_weight == 1.0);
    }
}

TEST_CASE("pooled weeks equal the concatenated batch") {
    const auto c4 = one_option({100, 0.18}, {105, 0.24}, 4, 1.2);
    const auto c1 = one_option({100, 0.18}, {105, 0.24}, 1, 1.2);
    RandomStream rs(8, 8);
    const auto h4 = generate_history(c4, 500, rs);
    HistoryBatch h1;
    h1.n = 2000;
    Eigen::MatrixXd all(13, 2000);
    for (int j = 0; j < 4; ++j) all.middleCols(500 * j, 500) = h4.paths[0][static_cast<std::size_t>(j)];
    h1.paths = {{all}};
    CHECK_THAT(price_portfolio(c4, h4, PricingRule::lr, 0.01).total,
               WithinRel(price_portfolio(c1, h1, PricingRule::lr, 0.01).total, 1e-12));
}

TEST_CASE("portfolio pricing") {
    const auto c = default_portfolio_config();
    RandomStream rs(9, 9);
    const auto h = generate_history(c, 2000, rs);
    const auto lr = price_portfolio(c, h, PricingRule::lr, 0.01);
    const auto m = price_portfolio(c, h, PricingRule::trulr_m, 0.01);
    const auto s = price_portfolio(c, h, PricingRule::trulr_s, 0.01);
    REQUIRE(m.taus.size() == 3);
    double total = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(lr.per_option[i].estimate >= 0.0);
        CHECK(m.per_option[i].estimate >= 0.0);
        CHECK(m.per_option[i].estimate <= lr.per_option[i].estimate);
        total += m.per_option[i].estimate;
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::isinf(lr.taus[i][j]));
            CHECK(m.taus[i][j] > 0.0);
            CHECK(s.taus[i][j] > 0.0);
        }
    }
    CHECK_THAT(m.total, WithinRel(total, 1e-14));
    CHECK_THROWS_AS(parse_pricing_rule("trulr_x"), std::invalid_argument);
    CHECK(parse_pricing_rule(to_string(PricingRule::trulr_s)) == PricingRule::trulr_s);

    auto bad = c;
    bad.options[1].alphas[2] = 3.0;
    bad.options[1].theta_target.second = 0.9;  // (1 - 3) 0.81 + 3 0.49 < 0
    try {
        (void)price_portfolio(bad, h, PricingRule::trulr_m, 0.01);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK_THAT(std::string(e.what()), ContainsSubstring("option 2, week 3"));
    }
}

TEST_CASE("reference prices") {
    const auto c = default_portfolio_config();
    RandomStream a(77, 1);
    const auto r1 = reference_price(c, 1000000, a);
    RandomStream b(77, 2);
    const auto r2 = reference_price(c, 2000000, b);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK_THAT(r1[i].std_error / r2[i].std_error, WithinRel(std::sqrt(2.0), 0.1));
        CHECK(std::abs(r1[i].price - kReference[i].price) <= 4 * std::hypot(r1[i].std_error, kReference[i].se));
    }
    RandomStream z(77, 3);
    CHECK_THROWS_AS(reference_price(c, 999999, z), std::invalid_argument);

    // sigma -> 0 with the average in the money: the payoff is linear in the prices
    auto d = one_option({100, 1e-4}, {100, 1e-4}, 1, 1.5);
    d.options[0].K = 90;
    RandomStream s(77, 4);
    const auto r = reference_price(d, 1000000, s);
    double avg = 0;
    for (int k = 1; k <= 13; ++k) avg += 100 * std::exp(0.05 * k * d.market.dt());
    const double limit = std::exp(-0.05 * 0.25) * (avg / 13 - 90);
    CHECK(std::abs(r[0].price - limit) <= 3 * r[0].std_error);
}

TEST_CASE("portfolio sweep is independent of the worker count") {
    const auto c = default_portfolio_config();
    const std::vector<PricingRule> rules = {PricingRule::lr, PricingRule::trulr_m, PricingRule::trulr_s};
    const auto a = run_portfolio_sweep(c, 200, 12, 0.01, 5, 25.09, rules, 1);
    const auto b = run_portfolio_sweep(c, 200, 12, 0.01, 5, 25.09, rules, 5);
    CHECK(mse_csv(a) == mse_csv(b));
    REQUIRE(a.size() == 3);
    CHECK(a[0].estimator_label == "lr");
    CHECK(a[0].scenario_id == "portfolio");
}
