#include "trulr/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace trulr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_fn(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

template <class... Ts>
struct overloaded : Ts... { using Ts::operator()...; };

}  // namespace

Beta::Beta(double a, double b) : a_(a), b_(b) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw std::invalid_argument("Beta: a and b must be positive and finite");
    log_beta_ = log_beta_fn(a, b);
    da_ = a - 1.0 / 3.0;
    ca_ = 1.0 / std::sqrt(9.0 * std::max(da_, 1e-300));
    db_ = b - 1.0 / 3.0;
    cb_ = 1.0 / std::sqrt(9.0 * std::max(db_, 1e-300));
}

double Beta::log_density(double x) const {
    if (!(x > 0.0 && x < 1.0)) return kNegInf;
    return (a_ - 1.0) * std::log(x) + (b_ - 1.0) * std::log1p(-x) - log_beta_;
}

Normal::Normal(double mu, double sigma) : mu_(mu), sigma_(sigma) {
    if (!std::isfinite(mu)) throw std::invalid_argument("Normal: mu must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("Normal: sigma must be positive");
}

double Normal::log_density(double x) const {
    const double z = (x - mu_) / sigma_;
    return -0.5 * z * z - std::log(sigma_) - 0.5 * std::log(2.0 * std::numbers::pi);
}

ChiSquared::ChiSquared(double k) : k_(k) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("ChiSquared: k must be positive");
    log_norm_ = 0.5 * k * std::numbers::ln2 + std::lgamma(0.5 * k);
    d_ = 0.5 * k - 1.0 / 3.0;
    c_ = 1.0 / std::sqrt(9.0 * std::max(d_, 1e-300));
}

double ChiSquared::log_density(double x) const {
    if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
    return (0.5 * k_ - 1.0) * std::log(x) - 0.5 * x - log_norm_;
}

FiniteDiscrete::FiniteDiscrete(std::vector<double> support, std::vector<double> probs)
    : support_(std::move(support)), probs_(std::move(probs)) {
    if (support_.empty() || support_.size() != probs_.size())
        throw std::invalid_argument("FiniteDiscrete: support and probs must be non-empty and equal length");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("FiniteDiscrete: probabilities must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("FiniteDiscrete: probabilities must sum to 1");
    std::vector<double> sorted = support_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("FiniteDiscrete: support points must be distinct");
    cumulative_.resize(probs_.size());
    double c = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        c += probs_[i];
        cumulative_[i] = c;
    }
    // the last nonzero atom absorbs rounding
    for (std::size_t i = probs_.size(); i-- > 0;) {
        if (probs_[i] > 0.0) {
            for (std::size_t j = i; j < probs_.size(); ++j) cumulative_[j] = 2.0;
            break;
        }
    }
}

std::size_t FiniteDiscrete::sample_index(RandomStream& rs) const {
    const double u = rs.uniform();
    if (cumulative_.size() <= 8) {
        std::size_t i = 0;
        while (u >= cumulative_[i]) ++i;
        return i;
    }
    return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
}

double FiniteDiscrete::log_density(double x) const {
    for (std::size_t i = 0; i < support_.size(); ++i)
        if (support_[i] == x) return probs_[i] > 0.0 ? std::log(probs_[i]) : kNegInf;
    return kNegInf;
}

double FiniteDiscrete::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) m += support_[i] * probs_[i];
    return m;
}

UniformLaplaceMixture::UniformLaplaceMixture(double a, double theta) : a_(a), theta_(theta) {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("UniformLaplaceMixture: a must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("UniformLaplaceMixture: theta must lie in [0, 1]");
}

double UniformLaplaceMixture::sample(RandomStream& rs) const {
    if (rs.uniform() < theta_) {
        const double mag = a_ + rs.exponential();
        return rs.uniform() < 0.5 ? -mag : mag;
    }
    return (2.0 * rs.uniform() - 1.0) * a_;
}

double UniformLaplaceMixture::log_density(double x) const {
    const double ax = std::abs(x);
    if (ax < a_) return theta_ < 1.0 ? std::log1p(-theta_) - std::log(2.0 * a_) : kNegInf;
    if (!std::isfinite(ax)) return kNegInf;
    return theta_ > 0.0 ? std::log(0.5 * theta_) + a_ - ax : kNegInf;
}

std::string family_name(const ScalarDistribution& d) {
    return std::visit(overloaded{
        [](const Beta&) { return std::string("beta"); },
        [](const Normal&) { return std::string("normal"); },
        [](const ChiSquared&) { return std::string("chi_squared"); },
        [](const FiniteDiscrete&) { return std::string("discrete"); },
        [](const UniformLaplaceMixture&) { return std::string("uniform_laplace"); },
    }, d);
}

double sample(const ScalarDistribution& d, RandomStream& rs) {
    return std::visit([&](const auto& x) { return x.sample(rs); }, d);
}

std::vector<double> sample(const ScalarDistribution& d, RandomStream& rs, std::size_t count) {
    std::vector<double> out(count);
    std::visit([&](const auto& x) {
        for (auto& v : out) v = x.sample(rs);
    }, d);
    return out;
}

double log_density(const ScalarDistribution& d, double x) {
    return std::visit([&](const auto& v) { return v.log_density(x); }, d);
}

double mean(const ScalarDistribution& d) {
    return std::visit([](const auto& v) { return v.mean(); }, d);
}

double likelihood_ratio(const ScalarDistribution& target, const ScalarDistribution& behavior, double x) {
    const double lt = log_density(target, x);
    const double lb = log_density(behavior, x);
    if (lt == kNegInf) return 0.0;
    if (lb == kNegInf)
        throw AbsoluteContinuityError("likelihood ratio: behavior density is zero where target density is positive");
    return std::exp(lt - lb);
}

LogRatio::LogRatio(const ScalarDistribution& target, const ScalarDistribution& behavior)
    : kind_(Kind::generic), target_(target), behavior_(behavior) {
    if (auto* t = std::get_if<Beta>(&target); t && std::holds_alternative<Beta>(behavior)) {
        const auto& b = std::get<Beta>(behavior);
        kind_ = Kind::beta;
        c0_ = log_beta_fn(b.a(), b.b()) - log_beta_fn(t->a(), t->b());
        c1_ = t->a() - b.a();
        c2_ = t->b() - b.b();
    } else if (auto* tn = std::get_if<Normal>(&target); tn && std::holds_alternative<Normal>(behavior)) {
        const auto& b = std::get<Normal>(behavior);
        kind_ = Kind::normal;
        c0_ = std::log(b.sigma() / tn->sigma());
        c1_ = tn->sigma();
        c2_ = b.sigma();
    } else if (auto* tc = std::get_if<ChiSquared>(&target); tc && std::holds_alternative<ChiSquared>(behavior)) {
        const auto& b = std::get<ChiSquared>(behavior);
        kind_ = Kind::chi_squared;
        c0_ = 0.5 * (b.k() - tc->k()) * std::numbers::ln2 + (std::lgamma(0.5 * b.k()) - std::lgamma(0.5 * tc->k()));
        c1_ = 0.5 * (tc->k() - b.k());
    }
}

double LogRatio::operator()(double x) const {
    switch (kind_) {
    case Kind::beta:
        if (x > 0.0 && x < 1.0) return c0_ + c1_ * std::log(x) + c2_ * std::log1p(-x);
        break;
    case Kind::normal: {
        const double zt = (x - std::get<Normal>(target_).mu()) / c1_;
        const double zb = (x - std::get<Normal>(behavior_).mu()) / c2_;
        return c0_ - 0.5 * (zt * zt - zb * zb);
    }
    case Kind::chi_squared:
        if (x > 0.0 && std::isfinite(x)) return c0_ + c1_ * std::log(x);
        break;
    case Kind::generic:
        break;
    }
    const double lt = log_density(target_, x);
    const double lb = log_density(behavior_, x);
    if (lt == kNegInf) return kNegInf;
    if (lb == kNegInf)
        throw AbsoluteContinuityError("likelihood ratio: behavior density is zero where target density is positive");
    return lt - lb;
}

MvNormal::MvNormal(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto m = mean_.size();
    if (m == 0) throw std::invalid_argument("MvNormal: empty mean");
    if (cov_.rows() != m || cov_.cols() != m) throw std::invalid_argument("MvNormal: covariance shape mismatch");
    if (!mean_.allFinite() || !cov_.allFinite()) throw std::invalid_argument("MvNormal: non-finite parameters");
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("MvNormal: covariance is not symmetric");
    llt_.compute(cov_);
    if (llt_.info() != Eigen::Success) throw std::invalid_argument("MvNormal: covariance is not positive definite");
    lower_ = llt_.matrixL();
    if ((lower_.diagonal().array() <= 0.0).any()) throw std::invalid_argument("MvNormal: covariance is not positive definite");
    log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

Eigen::VectorXd MvNormal::sample(RandomStream& rs) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rs.normal();
    return mean_ + lower_.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd MvNormal::sample(RandomStream& rs, std::size_t count) const {
    Eigen::MatrixXd z(mean_.size(), static_cast<Eigen::Index>(count));
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rs.normal();
    Eigen::MatrixXd out = lower_.triangularView<Eigen::Lower>() * z;
    out.colwise() += mean_;
    return out;
}

double MvNormal::log_density(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size()) throw std::invalid_argument("MvNormal: dimension mismatch");
    const Eigen::VectorXd r = lower_.triangularView<Eigen::Lower>().solve(x - mean_);
    return -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det_ + r.squaredNorm());
}

double likelihood_ratio(const MvNormal& target, const MvNormal& behavior, const Eigen::VectorXd& x) {
    return std::exp(target.log_density(x) - behavior.log_density(x));
}

}  // namespace trulr
