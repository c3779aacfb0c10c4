#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trulr/boundaries.hpp"
#include "trulr/distributions.hpp"
#include "trulr/parallel.hpp"

namespace trulr {

// One estimator column of a sweep. LR is a fixed rule with tau = +inf.
struct EstimatorConfig {
    std::string label;
    BoundarySpec spec;
    // Bernstein rule only: b_h for h under the behavior measure, converted to
    // the normalized b; estimate_b_h pulls it from a pilot sample instead.
    std::optional<double> b_h;
    bool estimate_b_h = false;
};

struct ExperimentConfig {
    std::string scenario_id;
    std::string family;  // beta | normal | chi_squared
    std::vector<double> behavior_params;
    std::vector<double> target_params;
    std::string h = "identity";
    std::vector<EstimatorConfig> estimators;
    double alpha = 2.0;
    std::optional<double> p;
    std::vector<std::size_t> n_grid;
    double delta = 0.01;
    std::vector<double> delta_grid;
    std::size_t reps = 1;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::optional<double> h_inf_norm;
    std::optional<double> h_p_norm;

    void validate() const;
};

// Strict parsing: unknown keys, missing required keys and wrong types throw
// std::invalid_argument.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON form; parse_config(config_to_json(c)) == c.
std::string config_to_json(const ExperimentConfig& config);

ScalarDistribution make_distribution(const std::string& family, const std::vector<double>& params);

// ||h||_p = (E|X|^p)^{1/p} under dist for h(x) = x, from closed-form absolute moments.
double identity_p_norm(const ScalarDistribution& dist, double p);
// sup |x| over the support, when finite.
std::optional<double> identity_inf_norm(const ScalarDistribution& dist);

// Everything about a config that is fixed before sampling starts.
struct ResolvedScenario {
    ScalarDistribution behavior;
    ScalarDistribution target;
    double truth = 0.0;
    double divergence = 1.0;
    std::optional<double> h_inf_norm;
    std::optional<double> h_p_norm;
    // per estimator: spec with normalized b filled in
    std::vector<BoundarySpec> specs;
};

ResolvedScenario resolve_scenario(const ExperimentConfig& config);
ProblemConstants problem_constants(const ExperimentConfig& config, const ResolvedScenario& s, std::size_t n,
                                   std::optional<double> p = {});

struct SweepResult {
    std::string scenario_id;
    std::string estimator_label;
    std::size_t n = 0;
    std::size_t reps = 0;
    double mse = 0.0;
    std::optional<double> mse_stderr;  // empty when reps == 1
    double bias = 0.0;
    double variance = 0.0;  // population variance of the estimates
    double mean_tau = 0.0;
    double frac_truncated = 0.0;
    std::uint64_t seed = 0;
};

struct QuantileResult {
    std::string scenario_id;
    std::string estimator_label;
    double delta = 0.0;
    double quantile_abs_error = 0.0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
};

// result[i] = task(RandomStream(seed, i)).
std::vector<double> replicate(const std::function<double(RandomStream&)>& task, std::size_t reps, std::uint64_t seed,
                              unsigned threads = 0);

// Error summary of per-replication estimates against a known truth.
SweepResult summarize_estimates(const std::string& scenario_id, const std::string& label, std::size_t n,
                                const std::vector<double>& estimates, double truth, double mean_tau,
                                double frac_truncated, std::uint64_t seed);

// Higher order statistic at 1-based index ceil((1 - delta) reps) of sorted |errors|.
double order_statistic_quantile(std::vector<double> abs_errors, double delta);

// Streams are (seed, (n_index << 32) | rep), shared by all estimators of a rep.
std::vector<SweepResult> run_mse_sweep(const ExperimentConfig& config, unsigned threads = 0);
// Requires exactly one n in n_grid; tau comes from config.delta.
std::vector<QuantileResult> run_quantile_sweep(const ExperimentConfig& config, unsigned threads = 0);

std::string mse_csv(const std::vector<SweepResult>& rows);
std::string quantile_csv(const std::vector<QuantileResult>& rows);

// <out_dir>/mse_sweep.csv (or quantile_sweep.csv) plus <out_dir>/manifest.json.
void write_mse_outputs(const ExperimentConfig& config, const std::vector<SweepResult>& rows);
void write_quantile_outputs(const ExperimentConfig& config, const std::vector<QuantileResult>& rows);

}  // namespace trulr
