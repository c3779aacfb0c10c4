#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "trulr/estimators.hpp"
#include "trulr/harness.hpp"
#include "trulr/io.hpp"

using namespace trulr;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const char* kBetaConfig = R"({
  "scenario_id": "beta_i",
  "family": "beta",
  "behavior": [90, 120],
  "target": [16, 21],
  "estimators": [
    {"label": "LR", "rule": "lr"},
    {"label": "TruLR-O", "rule": "inf_optimal"},
    {"label": "TruLR-S", "rule": "inf_simple"}
  ],
  "alpha": 1.2,
  "n_grid": [200, 2000],
  "delta": 0.01,
  "reps": 300,
  "seed": 17
})";

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("trulr_harness_" + name);
    std::filesystem::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("replicate hands out one stream per rep") {
    const auto ids = replicate([](RandomStream& rs) { return static_cast<double>(rs.stream_id()); }, 100, 5, 4);
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == static_cast<double>(i));

    auto task = [](RandomStream& rs) { return rs.normal(); };
    const auto a = replicate(task, 1000, 9, 1), b = replicate(task, 1000, 9, 8);
    CHECK(a == b);
    CHECK(a != replicate(task, 1000, 10, 8));
}

TEST_CASE("replicate reports the failing rep") {
    try {
        replicate([](RandomStream& rs) -> double {
            if (rs.stream_id() == 37) throw std::runtime_error("boom");
            return 0.0;
        }, 100, 1, 4);
        FAIL("expected ReplicationError");
    } catch (const ReplicationError& e) {
        CHECK(e.rep == 37);
        CHECK_THAT(std::string(e.what()), ContainsSubstring("boom"));
    }
}

TEST_CASE("config round trip and strict keys") {
    const auto c = parse_config(kBetaConfig);
    CHECK(c.scenario_id == "beta_i");
    CHECK(c.estimators.size() == 3);
    CHECK(c.estimators[0].spec.tau_fixed == kInfinity);
    CHECK(c.estimators[1].spec.rule == BoundaryRule::inf_optimal);
    CHECK(c.n_grid == std::vector<std::size_t>{200, 2000});
    const auto text = config_to_json(c);
    CHECK(config_to_json(parse_config(text)) == text);

    const std::string bad_key = std::string(kBetaConfig).replace(1, 0, "\"extra\": 1,");
    CHECK_THROWS_WITH(parse_config(bad_key), ContainsSubstring("extra"));
    std::string no_alpha = kBetaConfig;
    no_alpha.replace(no_alpha.find("\"alpha\": 1.2,"), 13, "");
    CHECK_THROWS_WITH(parse_config(no_alpha), ContainsSubstring("alpha"));
    std::string wrong_type = kBetaConfig;
    wrong_type.replace(wrong_type.find("\"reps\": 300"), 11, "\"reps\": \"many\"");
    CHECK_THROWS_AS(parse_config(wrong_type), std::invalid_argument);
    std::string empty_grid = kBetaConfig;
    empty_grid.replace(empty_grid.find("[200, 2000]"), 11, "[]");
    CHECK_THROWS_AS(parse_config(empty_grid), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::exception);
}

TEST_CASE("order statistic quantile") {
    std::vector<double> e;
    for (int i = 1; i <= 100; ++i) e.push_back(i);
    CHECK(order_statistic_quantile(e, 0.5) == 50.0);
    CHECK(order_statistic_quantile(e, 0.1) == 90.0);
    CHECK(order_statistic_quantile(e, 0.015) == 99.0);  // ceil(98.5)
    CHECK(order_statistic_quantile(std::vector<double>(10, 0.0), 0.1) == 0.0);
    CHECK_THROWS_AS(order_statistic_quantile({}, 0.1), std::invalid_argument);
}

TEST_CASE("summary statistics") {
    const std::vector<double> est = {1.0, 2.0, 4.0};
    const auto r = summarize_estimates("s", "LR", 10, est, 2.0, 3.0, 0.25, 7);
    CHECK_THAT(r.bias, WithinAbs(1.0 / 3.0, 1e-15));
    CHECK_THAT(r.mse, WithinRel(5.0 / 3.0, 1e-15));
    CHECK_THAT(r.mse, WithinRel(r.bias * r.bias + r.variance, 1e-12));
    // squared errors (1, 0, 4): sample variance 13/3
    CHECK_THAT(*r.mse_stderr, WithinRel(std::sqrt(13.0 / 3.0) / std::sqrt(3.0), 1e-12));
    const auto one = summarize_estimates("s", "LR", 10, {2.5}, 2.0, 3.0, 0.0, 7);
    CHECK(one.mse == 0.25);
    CHECK(!one.mse_stderr);
    CHECK(mse_csv({one}).find(",0.25,,") != std::string::npos);
}

TEST_CASE("CSV layout") {
    const auto rows = std::vector<SweepResult>{summarize_estimates("a,b", "LR", 10, {0.1, 0.3}, 0.2, kInfinity, 0, 3)};
    const auto lines = split_lines(mse_csv(rows));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "scenario_id,estimator,n,reps,mse,mse_stderr,bias,variance,mean_tau,frac_truncated,seed");
    CHECK(lines[1].rfind("\"a,b\",LR,10,2,", 0) == 0);
    CHECK(lines[1].find(",inf,") != std::string::npos);
    const auto q = split_lines(quantile_csv({QuantileResult{"s", "LR", 0.01, 0.123, 1000, 4}}));
    CHECK(q[0] == "scenario_id,estimator,delta,quantile_abs_error,reps,seed");
    CHECK(q[1] == "s,LR,0.01,0.123,1000,4");
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("MSE sweep with equal measures is plain Monte Carlo") {
    auto c = parse_config(kBetaConfig);
    c.target_params = c.behavior_params;
    c.estimators.resize(1);
    c.n_grid = {500};
    c.reps = 4000;
    const auto rows = run_mse_sweep(c, 4);
    REQUIRE(rows.size() == 1);
    const double var = 90.0 * 120.0 / (210.0 * 210.0 * 211.0);
    CHECK(std::abs(rows[0].mse - var / 500) <= 4 * *rows[0].mse_stderr);
    CHECK(rows[0].frac_truncated == 0.0);
}

TEST_CASE("MSE sweep on beta (90,120) -> (16,21)") {
    const auto c = parse_config(kBetaConfig);
    const auto r1 = run_mse_sweep(c, 1);
    const auto r8 = run_mse_sweep(c, 8);
    CHECK(mse_csv(r1) == mse_csv(r8));
    CHECK(mse_csv(r1) == mse_csv(run_mse_sweep(c, 4)));
    REQUIRE(r1.size() == 6);
    for (const auto& r : r1) {
        CHECK(r.mse >= 0.0);
        CHECK_THAT(r.mse, WithinRel(r.bias * r.bias + r.variance, 1e-9));
        CHECK(r.seed == 17);
        CHECK(r.reps == 300);
    }
    // nonincreasing along n for each estimator, up to two standard errors
    for (const auto& a : r1)
        for (const auto& b : r1)
            if (a.estimator_label == b.estimator_label && a.n < b.n) CHECK(b.mse <= a.mse + 2 * (*a.mse_stderr + *b.mse_stderr));

    auto c2 = c;
    c2.seed = 18;
    CHECK(mse_csv(run_mse_sweep(c2, 4)) != mse_csv(r1));
}

TEST_CASE("quantile sweep") {
    auto c = parse_config(kBetaConfig);
    c.n_grid = {500};
    c.delta_grid = {0.5, 0.1, 0.01};
    c.reps = 1000;
    const auto q = run_quantile_sweep(c, 4);
    CHECK(quantile_csv(q) == quantile_csv(run_quantile_sweep(c, 1)));
    REQUIRE(q.size() == 9);
    for (const auto& lab : {"LR", "TruLR-O", "TruLR-S"}) {
        std::vector<double> v;
        for (const auto& r : q)
            if (r.estimator_label == lab) v.push_back(r.quantile_abs_error);
        REQUIRE(v.size() == 3);
        CHECK(v[0] <= v[1]);
        CHECK(v[1] <= v[2]);
    }
    c.reps = 999;
    CHECK_THROWS_WITH(run_quantile_sweep(c, 4), ContainsSubstring("too small"));
    c.reps = 1000;
    c.n_grid = {100, 200};
    CHECK_THROWS_AS(run_quantile_sweep(c, 4), std::invalid_argument);
}

TEST_CASE("quantile of symmetric errors at one half is the median") {
    auto c = parse_config(kBetaConfig);
    c.target_params = c.behavior_params;
    c.estimators.resize(1);
    c.n_grid = {1};
    c.delta_grid = {0.5};
    c.reps = 20001;
    const auto q = run_quantile_sweep(c, 4);
    // single draws from the behavior measure: |X - mean| median, estimated independently
    std::vector<double> e = replicate([](RandomStream& rs) { return std::abs(sample(Beta(90, 120), rs) - 90.0 / 210.0); }, 200000, 99, 4);
    std::nth_element(e.begin(), e.begin() + 100000, e.end());
    CHECK_THAT(q[0].quantile_abs_error, WithinRel(e[100000], 0.03));
}

TEST_CASE("output files") {
    auto c = parse_config(kBetaConfig);
    c.reps = 20;
    const auto dir = temp_dir("out");
    c.out_dir = dir.string();
    const auto rows = run_mse_sweep(c, 2);
    write_mse_outputs(c, rows);
    CHECK(read_file(dir / "mse_sweep.csv") == mse_csv(rows));
    CHECK(config_to_json(parse_config(read_file(dir / "manifest.json"))) == config_to_json(c));
    std::filesystem::remove_all(dir);
}

TEST_CASE("scenario resolution") {
    auto c = parse_config(kBetaConfig);
    const auto s = resolve_scenario(c);
    CHECK_THAT(s.truth, WithinRel(16.0 / 37.0, 1e-15));
    CHECK(s.h_inf_norm == 1.0);
    CHECK(s.divergence >= 1.0);
    c.alpha = 1.5;  // a_alpha < 0
    CHECK_THROWS(resolve_scenario(c));
    CHECK_THROWS_AS(make_distribution("gamma", {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(make_distribution("beta", {1}), std::invalid_argument);
    CHECK_THAT(identity_p_norm(Normal(0, 1), 2.0), WithinRel(1.0, 1e-10));
    CHECK_THAT(identity_p_norm(ChiSquared(3), 1.0), WithinRel(3.0, 1e-10));
    CHECK(!identity_inf_norm(Normal(0, 1)));
}
