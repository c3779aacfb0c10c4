#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include "trulr/distributions.hpp"
#include "trulr/random.hpp"

namespace trulr {

enum class DivergenceMethod { closed_form, monte_carlo };

// I_alpha = E_behavior[l^alpha].
struct AlphaDivergenceResult {
    double alpha = 0.0;
    double value = 1.0;
    DivergenceMethod method = DivergenceMethod::closed_form;
    std::optional<double> std_error;
    std::optional<std::size_t> sample_size;
};

class DivergenceUndefined : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DivergenceOverflow : public std::overflow_error {
public:
    DivergenceOverflow(const std::string& what, double max_log_weight)
        : std::overflow_error(what), max_log_weight(max_log_weight) {}
    double max_log_weight;
};

// Natural log of I_alpha; the closed forms are assembled in log space.
double log_alpha_divergence(const ScalarDistribution& target, const ScalarDistribution& behavior, double alpha);
double log_alpha_divergence(const MvNormal& target, const MvNormal& behavior, double alpha);

AlphaDivergenceResult alpha_divergence_closed(const ScalarDistribution& target, const ScalarDistribution& behavior, double alpha);
AlphaDivergenceResult alpha_divergence_closed(const MvNormal& target, const MvNormal& behavior, double alpha);

// Sample mean of l^alpha over m behavior draws, with a max-shift so the
// accumulation never sees raw overflowing weights.
AlphaDivergenceResult alpha_divergence_mc(const ScalarDistribution& target, const ScalarDistribution& behavior,
                                          double alpha, std::size_t m, RandomStream& stream);
AlphaDivergenceResult alpha_divergence_mc(const MvNormal& target, const MvNormal& behavior,
                                          double alpha, std::size_t m, RandomStream& stream);

struct DivergenceValidation {
    double closed = 0.0;
    double mc = 0.0;
    double std_error = 0.0;
    double z_score = 0.0;
    bool flagged = false;  // |z| > 3
};

DivergenceValidation validate_divergence(const ScalarDistribution& target, const ScalarDistribution& behavior,
                                         double alpha, std::size_t m, RandomStream& stream);
DivergenceValidation validate_divergence(const MvNormal& target, const MvNormal& behavior,
                                         double alpha, std::size_t m, RandomStream& stream);

}  // namespace trulr
