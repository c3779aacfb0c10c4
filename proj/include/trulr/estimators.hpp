#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace trulr {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// h(x_i) paired with l(x_i) for draws x_i from the behavior measure.
struct WeightedSample {
    std::vector<double> h_values;
    std::vector<double> weights;

    std::size_t size() const { return h_values.size(); }
    // throws std::invalid_argument on unequal lengths, empty input, NaN, or negative weights
    void validate() const;
};

struct EstimateReport {
    double estimate = 0.0;
    std::size_t n = 0;
    double tau = kInfinity;
    double fraction_truncated = 0.0;
    double max_weight = 0.0;
    // weights that overflowed to +inf; always counted as truncated
    std::size_t overflow_count = 0;
};

// Pairwise (tree) summation of f(0) + ... + f(n-1).
template <class F>
double pairwise_sum(std::size_t n, F&& f, std::size_t offset = 0) {
    if (n <= 64) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += f(offset + i);
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(half, f, offset) + pairwise_sum(n - half, f, offset + half);
}

double pairwise_sum(std::span<const double> xs);

EstimateReport lr_estimate(const WeightedSample& ws);
EstimateReport trulr_estimate(const WeightedSample& ws, double tau);

// Unchecked fast paths over raw arrays; tau = +inf gives the LR estimate.
EstimateReport trulr_estimate(std::span<const double> h, std::span<const double> w, double tau);

// Equal-weight average of per-batch estimates.
EstimateReport multi_batch_estimate(const std::vector<WeightedSample>& batches, const std::vector<double>& taus);

}  // namespace trulr
