#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trulr {

enum class BoundaryRule { inf_simple, inf_optimal, pnorm_simple, pnorm_mgf_optimal, pnorm_bernstein, fixed };

std::string to_string(BoundaryRule rule);
// Accepts "inf_optimal" and "inf-optimal" spellings.
BoundaryRule parse_boundary_rule(const std::string& name);

struct BoundarySpec {
    BoundaryRule rule = BoundaryRule::fixed;
    std::optional<double> p;          // pnorm rules
    std::optional<double> b;          // bernstein rule, normalized b
    std::optional<double> tau_fixed;  // fixed rule; +inf encodes the LR estimator

    static BoundarySpec lr();
    static BoundarySpec fixed(double tau);
    static BoundarySpec inf_simple() { return {BoundaryRule::inf_simple, {}, {}, {}}; }
    static BoundarySpec inf_optimal() { return {BoundaryRule::inf_optimal, {}, {}, {}}; }
    static BoundarySpec pnorm_simple(double p) { return {BoundaryRule::pnorm_simple, p, {}, {}}; }
    static BoundarySpec pnorm_mgf_optimal(double p) { return {BoundaryRule::pnorm_mgf_optimal, p, {}, {}}; }
    static BoundarySpec pnorm_bernstein(double p, double b) { return {BoundaryRule::pnorm_bernstein, p, b, {}}; }
};

struct ProblemConstants {
    double alpha = 2.0;
    double divergence = 1.0;  // I_alpha
    std::size_t n = 1;
    double delta = 0.05;
    std::optional<double> h_inf_norm;
    std::optional<double> h_p_norm;
    std::optional<double> p;

    void validate() const;
};

struct MgfParams {
    double sigma_sq = 0.0;
    double lambda_cap = 0.0;
};

bool is_inf_rule(BoundaryRule rule);
bool is_pnorm_rule(BoundaryRule rule);

// Throws std::invalid_argument naming the violated constraint.
void check_rule_constraints(BoundaryRule rule, double alpha, std::optional<double> p, std::optional<double> b);

double x_star(BoundaryRule rule, double alpha, std::optional<double> p = {}, std::optional<double> b = {});
double x_star(const BoundarySpec& spec, double alpha);

// With tau = x^{2/alpha} (n I / L)^{1/alpha}, L = ln(2/delta), each full bound is
// a scale free of x times g(x) = sum_j c_j x^{e_j}. g and its first two
// derivatives in x:
double objective(BoundaryRule rule, double x, double alpha, std::optional<double> p = {}, std::optional<double> b = {});
double objective_d1(BoundaryRule rule, double x, double alpha, std::optional<double> p = {}, std::optional<double> b = {});
double objective_d2(BoundaryRule rule, double x, double alpha, std::optional<double> p = {}, std::optional<double> b = {});

// |g'(x*)| relative to the sum of the magnitudes of its terms.
double stationarity_residual(BoundaryRule rule, double alpha, std::optional<double> p = {}, std::optional<double> b = {});

double bound_constant(const BoundarySpec& spec, double alpha);

double truncation_boundary(const BoundarySpec& spec, const ProblemConstants& constants);

struct BoundaryResolution {
    double tau = 0.0;
    double x_star = 0.0;
    double constant = 0.0;
    std::vector<std::string> warnings;
};

BoundaryResolution resolve_boundary(const BoundarySpec& spec, const ProblemConstants& constants);

// b from a sample of Y: multiplier * max_{k<=max_k} k^{-1} (mean |Y|^k)^{1/k}.
double bernstein_constant_estimate(std::span<const double> sample, std::size_t max_k = 10, double multiplier = 2.0);

// b_h I^{1/p} / ||h||_p, the scale-free b entering x* for the Bernstein rule.
double normalized_bernstein_b(double b_h, double divergence, double h_p_norm, double p);

enum class MgfKind { bounded, normal, exponential };
MgfParams mgf_params_catalog(MgfKind kind, double parameter);

// (mean |h|^p)^{1/p} over a pilot sample.
double plug_in_p_norm(std::span<const double> h, double p);
// max |h| over a pilot sample; a hint only.
double empirical_max_norm(std::span<const double> h);

}  // namespace trulr
