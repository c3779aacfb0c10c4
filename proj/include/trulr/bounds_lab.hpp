#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "trulr/boundaries.hpp"
#include "trulr/distributions.hpp"
#include "trulr/estimators.hpp"

namespace trulr {

enum class BoundId {
    lr_conc_inf,
    lr_conc_p,
    lr_var_p,
    trulr_bias_inf,
    trulr_var_inf,
    trulr_bias_p,
    trulr_var_p,
    trulr_conc_inf_full,
    trulr_conc_mgf_full,
    trulr_conc_bernstein_full,
};

std::string to_string(BoundId id);
BoundId parse_bound_id(const std::string& name);

// b is the normalized Bernstein constant, only read by trulr_conc_bernstein_full.
double evaluate_bound(BoundId id, const ProblemConstants& constants, std::optional<double> tau = {},
                      std::optional<MgfParams> mgf = {}, std::optional<double> b = {});

class ConstructionInfeasible : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// (delta/n)(1 - e*delta/n)^{-(n-1)}
double counterexample_theta0(std::size_t n, double delta);

// Three-point construction on {-a, 0, a} with h(x) = x.
struct DiscreteCounterexample {
    double a = 1.0;
    double alpha = 1.5;
    std::size_t n = 1;
    double delta = 0.05;
    double theta0 = 0.0;
    double theta = 0.0;
    double xi = 0.0;        // I_alpha(theta, theta0) - 1
    double eps_star = 0.0;  // a theta / (n theta0)

    FiniteDiscrete behavior() const;
    FiniteDiscrete target() const;
    // a (xi / (delta n^{alpha-1}))^{1/alpha} (1 - e delta/n)^{(n-1)/alpha}
    double eps_star_closed() const;
    // theta - theta0^{(alpha-1)/alpha} xi^{1/alpha}
    double self_consistency_residual() const;
};

DiscreteCounterexample build_discrete_counterexample(double a, double alpha, std::size_t n, double delta);

// Uniform-Laplace construction with h(x) = x 1{|x| >= a}.
struct ContinuousCounterexample {
    double a = 1.0;
    double alpha = 6.0;
    double p = 3.0;
    std::size_t n = 1;
    double delta = 0.05;
    double theta0 = 0.0;
    double theta = 0.0;
    double eps = 0.0;  // a theta / (n theta0)
    // |a^p - theta0 e^a Gamma(p+1, a)| / a^p; zero when a = ||h||_p under the behavior measure
    double norm_gap = 0.0;

    UniformLaplaceMixture behavior() const { return {a, theta0}; }
    UniformLaplaceMixture target() const { return {a, theta}; }
    double h(double x) const { return std::abs(x) >= a ? x : 0.0; }
};

// Solves theta = theta0^{1/2} I_alpha(theta, theta0)^{1/alpha}; throws
// ConstructionInfeasible when no root exists in (0, 1].
ContinuousCounterexample build_continuous_counterexample(double a, double alpha, double p, std::size_t n, double delta);
// Same construction with a caller-chosen target theta.
ContinuousCounterexample build_continuous_counterexample(double a, double alpha, double p, std::size_t n, double delta,
                                                         double theta);

struct TailFrequency {
    double frequency = 0.0;
    double binomial_se = 0.0;
    std::size_t reps = 0;
};

// Fraction of reps with |estimate| >= eps, estimate = TruLR with tau (+inf: LR).
TailFrequency empirical_tail_probability(const DiscreteCounterexample& c, std::size_t reps, std::uint64_t seed,
                                         double tau = kInfinity, unsigned threads = 0);
TailFrequency empirical_tail_probability(const ContinuousCounterexample& c, std::size_t reps, std::uint64_t seed,
                                         double tau = kInfinity, unsigned threads = 0);

struct CoverageResult {
    double empirical_coverage = 0.0;
    double bound = 0.0;
    double tau = 0.0;
    double truth = 0.0;
    std::size_t reps = 0;
};

// h(x) = x. Fraction of reps with |estimate - mean(target)| <= bound(id).
CoverageResult coverage_check(const ScalarDistribution& target, const ScalarDistribution& behavior,
                              const BoundarySpec& spec, const ProblemConstants& constants, BoundId bound,
                              std::size_t reps, std::uint64_t seed, std::optional<MgfParams> mgf = {},
                              unsigned threads = 0);

}  // namespace trulr
