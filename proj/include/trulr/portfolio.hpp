#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trulr/distributions.hpp"
#include "trulr/estimators.hpp"
#include "trulr/harness.hpp"
#include "trulr/random.hpp"

namespace trulr::portfolio {

struct MarketParams {
    double r = 0.05;
    double T = 0.25;
    int M = 13;
    double dt() const { return T / M; }
    void validate() const;
};

struct OptionSpec {
    double K = 100.0;
    std::vector<std::pair<double, double>> theta_weeks;  // (S0, sigma) per past week
    std::pair<double, double> theta_target{100.0, 0.2};
    std::vector<double> alphas;  // one per week
    void validate() const;
};

struct PortfolioConfig {
    MarketParams market;
    std::vector<OptionSpec> options;
    double p = 40.0;  // norm order for the p-norm boundary rules
    void validate() const;
};

// Three options, four past weeks, r = 0.05, T = 0.25, M = 13.
PortfolioConfig default_portfolio_config();

PortfolioConfig parse_portfolio_config(const std::string& json_text);
std::string portfolio_config_to_json(const PortfolioConfig& config);

// Log-price path of GBM at t_m = m dt: mean ln S0 + (r - sigma^2/2) dt m,
// covariance sigma^2 dt min(m, k).
MvNormalParams input_model(double S0, double sigma, const MarketParams& market);

double asian_payoff(const Eigen::Ref<const Eigen::VectorXd>& x, double K, const MarketParams& market);

// Second-order expansion of the payoff around ln K. Only used to size the
// truncation boundary, so it gets its own type.
struct SurrogateValue {
    double value;
};
SurrogateValue surrogate_payoff(const Eigen::Ref<const Eigen::VectorXd>& x, double K, const MarketParams& market);

// paths[option][week] is M x n, one path per column.
struct HistoryBatch {
    std::vector<std::vector<Eigen::MatrixXd>> paths;
    std::size_t n = 0;
};

HistoryBatch generate_history(const PortfolioConfig& config, std::size_t n, RandomStream& stream);

enum class PricingRule { lr, trulr_m, trulr_s };
PricingRule parse_pricing_rule(const std::string& s);
std::string to_string(PricingRule r);

struct PortfolioPrice {
    std::vector<EstimateReport> per_option;
    std::vector<std::vector<double>> taus;  // [option][week]
    double total = 0.0;
};

PortfolioPrice price_portfolio(const PortfolioConfig& config, const HistoryBatch& history, PricingRule rule,
                               double delta);

struct ReferencePrice {
    double price = 0.0;
    double std_error = 0.0;
};

// Plain Monte Carlo under each option's target parameters, m paths each.
std::vector<ReferencePrice> reference_price(const PortfolioConfig& config, std::size_t m, RandomStream& stream);

// One row per rule. Each replication draws a fresh history on stream (seed, rep)
// and prices it with every rule.
std::vector<SweepResult> run_portfolio_sweep(const PortfolioConfig& config, std::size_t n, std::size_t reps,
                                             double delta, std::uint64_t seed, double truth,
                                             const std::vector<PricingRule>& rules, unsigned threads = 0);

// log density of each column of X under d.
Eigen::VectorXd log_density_columns(const MvNormal& d, const Eigen::MatrixXd& X);

}  // namespace trulr::portfolio
