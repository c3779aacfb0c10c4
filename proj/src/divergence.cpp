#include "trulr/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace trulr {

namespace {

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void check_alpha(double alpha) {
    if (!(alpha > 1.0) || !std::isfinite(alpha))
        throw std::invalid_argument("alpha divergence: alpha must be > 1");
}

[[noreturn]] void undefined(const std::string& condition, double alpha) {
    std::ostringstream os;
    os << "divergence undefined for this alpha (" << alpha << "): " << condition;
    throw DivergenceUndefined(os.str());
}

double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Rounding can put the log of an identity-measure divergence a hair below 0.
double clamp_jensen(double log_value) {
    return (log_value < 0.0 && log_value > -1e-10) ? 0.0 : log_value;
}

AlphaDivergenceResult closed_result(double alpha, double log_value) {
    AlphaDivergenceResult r;
    r.alpha = alpha;
    r.value = std::exp(clamp_jensen(log_value));
    r.method = DivergenceMethod::closed_form;
    return r;
}

// Two passes over identical draws: the first finds the largest alpha*log l,
// the second accumulates shifted terms with Welford's recurrence.
template <class LogWeight>
AlphaDivergenceResult mc_shifted(double alpha, std::size_t m, RandomStream& stream, LogWeight&& log_weight) {
    check_alpha(alpha);
    if (m < 2) throw std::invalid_argument("alpha_divergence_mc: m must be at least 2");
    RandomStream replay = stream;
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) shift = std::max(shift, alpha * log_weight(stream));
    if (std::isnan(shift) || shift == std::numeric_limits<double>::infinity())
        throw DivergenceOverflow("alpha_divergence_mc: non-finite log weight", shift);
    if (shift == -std::numeric_limits<double>::infinity()) shift = 0.0;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double y = std::exp(alpha * log_weight(replay) - shift);
        const double d = y - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (y - mean);
    }
    const double sd = std::sqrt(m2 / static_cast<double>(m - 1));
    const double log_scale = shift;
    if (log_scale + std::log(std::max(mean, sd) + 1e-300) > std::log(std::numeric_limits<double>::max())) {
        std::ostringstream os;
        os << "alpha_divergence_mc: estimate overflows double range (max log-weight " << shift / alpha << ")";
        throw DivergenceOverflow(os.str(), shift / alpha);
    }
    const double scale = std::exp(log_scale);
    AlphaDivergenceResult r;
    r.alpha = alpha;
    r.value = mean * scale;
    r.method = DivergenceMethod::monte_carlo;
    r.std_error = sd * scale / std::sqrt(static_cast<double>(m));
    r.sample_size = m;
    return r;
}

}  // namespace

double log_alpha_divergence(const ScalarDistribution& target, const ScalarDistribution& behavior, double alpha) {
    check_alpha(alpha);
    if (target.index() != behavior.index())
        throw UnsupportedError("alpha divergence: target and behavior must be from the same family");

    if (auto* t = std::get_if<Beta>(&target)) {
        const auto& b = std::get<Beta>(behavior);
        const double aa = alpha * t->a() + (1.0 - alpha) * b.a();
        const double ba = alpha * t->b() + (1.0 - alpha) * b.b();
        if (!(aa > 0.0)) undefined("a_alpha = alpha*a + (1-alpha)*a0 must be > 0", alpha);
        if (!(ba > 0.0)) undefined("b_alpha = alpha*b + (1-alpha)*b0 must be > 0", alpha);
        const double lt = lbeta(t->a(), t->b());
        return (alpha - 1.0) * (lbeta(b.a(), b.b()) - lt) + lbeta(aa, ba) - lt;
    }
    if (auto* t = std::get_if<Normal>(&target)) {
        const auto& b = std::get<Normal>(behavior);
        const double s2 = t->sigma() * t->sigma();
        const double s02 = b.sigma() * b.sigma();
        const double sa2 = (1.0 - alpha) * s2 + alpha * s02;
        if (!(sa2 > 0.0)) undefined("sigma_alpha^2 = (1-alpha)*sigma^2 + alpha*sigma0^2 must be > 0", alpha);
        const double dm = b.mu() - t->mu();
        return alpha * (alpha - 1.0) * dm * dm / (2.0 * sa2) + (1.0 - alpha) * std::log(t->sigma()) +
               alpha * std::log(b.sigma()) - 0.5 * std::log(sa2);
    }
    if (auto* t = std::get_if<ChiSquared>(&target)) {
        const auto& b = std::get<ChiSquared>(behavior);
        const double ka = (1.0 - alpha) * b.k() + alpha * t->k();
        if (!(ka > 0.0)) undefined("k_alpha = (1-alpha)*k0 + alpha*k must be > 0", alpha);
        const double lg = std::lgamma(0.5 * t->k());
        return (alpha - 1.0) * (std::lgamma(0.5 * b.k()) - lg) + std::lgamma(0.5 * ka) - lg;
    }
    if (auto* t = std::get_if<FiniteDiscrete>(&target)) {
        const auto& b = std::get<FiniteDiscrete>(behavior);
        std::vector<double> terms;
        for (std::size_t i = 0; i < t->support().size(); ++i) {
            const double p = t->probs()[i];
            if (p == 0.0) continue;
            const double lq = b.log_density(t->support()[i]);
            if (lq == -std::numeric_limits<double>::infinity())
                undefined("behavior mass must be positive wherever target mass is positive", alpha);
            terms.push_back(alpha * std::log(p) + (1.0 - alpha) * lq);
        }
        return log_sum_exp(terms);
    }
    const auto& t = std::get<UniformLaplaceMixture>(target);
    const auto& b = std::get<UniformLaplaceMixture>(behavior);
    if (t.a() != b.a()) throw UnsupportedError("alpha divergence: uniform-Laplace mixtures need equal a");
    std::vector<double> terms;
    if (t.theta() > 0.0) {
        if (b.theta() == 0.0) undefined("behavior tail mass must be positive when target tail mass is", alpha);
        terms.push_back(alpha * std::log(t.theta()) + (1.0 - alpha) * std::log(b.theta()));
    }
    if (t.theta() < 1.0) {
        if (b.theta() == 1.0) undefined("behavior central mass must be positive when target central mass is", alpha);
        terms.push_back(alpha * std::log1p(-t.theta()) + (1.0 - alpha) * std::log1p(-b.theta()));
    }
    return log_sum_exp(terms);
}

double log_alpha_divergence(const MvNormal& target, const MvNormal& behavior, double alpha) {
    check_alpha(alpha);
    if (target.dim() != behavior.dim()) throw std::invalid_argument("alpha divergence: dimension mismatch");
    const Eigen::MatrixXd sa = (1.0 - alpha) * target.cov() + alpha * behavior.cov();
    Eigen::LLT<Eigen::MatrixXd> llt(sa);
    if (llt.info() != Eigen::Success || (Eigen::MatrixXd(llt.matrixL()).diagonal().array() <= 0.0).any())
        undefined("Sigma_alpha = (1-alpha)*Sigma + alpha*Sigma_j must be positive definite", alpha);
    const Eigen::MatrixXd lower = llt.matrixL();
    const double log_det_a = 2.0 * lower.diagonal().array().log().sum();
    const Eigen::VectorXd d = target.mean() - behavior.mean();
    const double quad = lower.triangularView<Eigen::Lower>().solve(d).squaredNorm();
    return 0.5 * alpha * (alpha - 1.0) * quad + 0.5 * (1.0 - alpha) * target.log_det() +
           0.5 * alpha * behavior.log_det() - 0.5 * log_det_a;
}

AlphaDivergenceResult alpha_divergence_closed(const ScalarDistribution& target, const ScalarDistribution& behavior, double alpha) {
    return closed_result(alpha, log_alpha_divergence(target, behavior, alpha));
}

AlphaDivergenceResult alpha_divergence_closed(const MvNormal& target, const MvNormal& behavior, double alpha) {
    return closed_result(alpha, log_alpha_divergence(target, behavior, alpha));
}

AlphaDivergenceResult alpha_divergence_mc(const ScalarDistribution& target, const ScalarDistribution& behavior,
                                          double alpha, std::size_t m, RandomStream& stream) {
    const LogRatio log_ratio(target, behavior);
    return mc_shifted(alpha, m, stream, [&](RandomStream& rs) { return log_ratio(sample(behavior, rs)); });
}

AlphaDivergenceResult alpha_divergence_mc(const MvNormal& target, const MvNormal& behavior,
                                          double alpha, std::size_t m, RandomStream& stream) {
    return mc_shifted(alpha, m, stream, [&](RandomStream& rs) {
        const Eigen::VectorXd x = behavior.sample(rs);
        return target.log_density(x) - behavior.log_density(x);
    });
}

namespace {

DivergenceValidation compare(double closed, const AlphaDivergenceResult& mc) {
    DivergenceValidation v;
    v.closed = closed;
    v.mc = mc.value;
    v.std_error = mc.std_error.value_or(0.0);
    const double diff = closed - mc.value;
    if (v.std_error > 0.0) v.z_score = diff / v.std_error;
    else v.z_score = std::abs(diff) <= 1e-12 * std::abs(closed) ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    v.flagged = std::abs(v.z_score) > 3.0;
    return v;
}

}  // namespace

DivergenceValidation validate_divergence(const ScalarDistribution& target, const ScalarDistribution& behavior,
                                         double alpha, std::size_t m, RandomStream& stream) {
    const double closed = alpha_divergence_closed(target, behavior, alpha).value;
    return compare(closed, alpha_divergence_mc(target, behavior, alpha, m, stream));
}

DivergenceValidation validate_divergence(const MvNormal& target, const MvNormal& behavior,
                                         double alpha, std::size_t m, RandomStream& stream) {
    const double closed = alpha_divergence_closed(target, behavior, alpha).value;
    return compare(closed, alpha_divergence_mc(target, behavior, alpha, m, stream));
}

}  // namespace trulr
