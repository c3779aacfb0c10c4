#include "trulr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trulr {

void WeightedSample::validate() const {
    if (h_values.empty()) throw std::invalid_argument("WeightedSample: empty sample");
    if (h_values.size() != weights.size()) throw std::invalid_argument("WeightedSample: h_values and weights differ in length");
    for (double h : h_values)
        if (!std::isfinite(h)) throw std::invalid_argument("WeightedSample: non-finite h value");
    for (double w : weights)
        if (std::isnan(w) || w < 0.0) throw std::invalid_argument("WeightedSample: weights must be nonnegative");
}

double pairwise_sum(std::span<const double> xs) {
    return pairwise_sum(xs.size(), [&](std::size_t i) { return xs[i]; });
}

EstimateReport trulr_estimate(std::span<const double> h, std::span<const double> w, double tau) {
    EstimateReport r;
    r.n = h.size();
    r.tau = tau;
    std::size_t truncated = 0;
    for (double x : w) {
        if (x > tau) ++truncated;
        if (x == kInfinity) ++r.overflow_count;
        r.max_weight = std::max(r.max_weight, x);
    }
    if (tau == kInfinity) {
        r.estimate = pairwise_sum(h.size(), [&](std::size_t i) { return h[i] * w[i]; }) / static_cast<double>(r.n);
    } else {
        r.estimate = pairwise_sum(h.size(), [&](std::size_t i) { return h[i] * std::min(w[i], tau); }) /
                     static_cast<double>(r.n);
    }
    r.fraction_truncated = static_cast<double>(truncated) / static_cast<double>(r.n);
    return r;
}

EstimateReport lr_estimate(const WeightedSample& ws) {
    ws.validate();
    return trulr_estimate(ws.h_values, ws.weights, kInfinity);
}

EstimateReport trulr_estimate(const WeightedSample& ws, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("trulr_estimate: tau must be positive");
    ws.validate();
    return trulr_estimate(ws.h_values, ws.weights, tau);
}

EstimateReport multi_batch_estimate(const std::vector<WeightedSample>& batches, const std::vector<double>& taus) {
    if (batches.empty()) throw std::invalid_argument("multi_batch_estimate: no batches");
    if (batches.size() != taus.size()) throw std::invalid_argument("multi_batch_estimate: one tau per batch required");
    EstimateReport out;
    out.tau = 0.0;
    std::vector<double> estimates;
    double truncated = 0.0;
    for (std::size_t j = 0; j < batches.size(); ++j) {
        const EstimateReport r = trulr_estimate(batches[j], taus[j]);
        estimates.push_back(r.estimate);
        out.n += r.n;
        out.tau = std::max(out.tau, r.tau);
        out.max_weight = std::max(out.max_weight, r.max_weight);
        out.overflow_count += r.overflow_count;
        truncated += r.fraction_truncated * static_cast<double>(r.n);
    }
    out.estimate = pairwise_sum(estimates) / static_cast<double>(batches.size());
    out.fraction_truncated = std::round(truncated) / static_cast<double>(out.n);
    return out;
}

}  // namespace trulr
