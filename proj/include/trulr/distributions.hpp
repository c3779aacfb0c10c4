#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "trulr/random.hpp"

namespace trulr {

// Target mass where the behavior measure has none.
class AbsoluteContinuityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct BetaParams { double a; double b; };
struct NormalParams { double mu; double sigma; };
struct ChiSquaredParams { double k; };

class Beta {
public:
    Beta(double a, double b);
    explicit Beta(BetaParams p) : Beta(p.a, p.b) {}

    double a() const { return a_; }
    double b() const { return b_; }
    double sample(RandomStream& rs) const {
        const double x = draw(rs, a_, da_, ca_);
        const double y = draw(rs, b_, db_, cb_);
        return x / (x + y);
    }
    double log_density(double x) const;
    double mean() const { return a_ / (a_ + b_); }

private:
    static double draw(RandomStream& rs, double shape, double d, double c) {
        return shape < 1.0 ? rs.gamma(shape) : rs.gamma_mt(d, c);
    }
    double a_, b_, log_beta_;
    double da_, ca_, db_, cb_;
};

class Normal {
public:
    Normal(double mu, double sigma);
    explicit Normal(NormalParams p) : Normal(p.mu, p.sigma) {}

    double mu() const { return mu_; }
    double sigma() const { return sigma_; }
    double sample(RandomStream& rs) const { return mu_ + sigma_ * rs.normal(); }
    double log_density(double x) const;
    double mean() const { return mu_; }

private:
    double mu_, sigma_;
};

class ChiSquared {
public:
    explicit ChiSquared(double k);
    explicit ChiSquared(ChiSquaredParams p) : ChiSquared(p.k) {}

    double k() const { return k_; }
    double sample(RandomStream& rs) const {
        const double h = 0.5 * k_;
        return 2.0 * (h < 1.0 ? rs.gamma(h) : rs.gamma_mt(d_, c_));
    }
    double log_density(double x) const;
    double mean() const { return k_; }

private:
    double k_, log_norm_, d_, c_;
};

// Probabilities over a finite set of real support points.
class FiniteDiscrete {
public:
    FiniteDiscrete(std::vector<double> support, std::vector<double> probs);

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& probs() const { return probs_; }
    std::size_t sample_index(RandomStream& rs) const;
    double sample(RandomStream& rs) const { return support_[sample_index(rs)]; }
    double log_density(double x) const;
    double mean() const;

private:
    std::vector<double> support_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
};

// Mass 1-theta uniform on (-a, a); mass theta on |x| >= a with density (theta/2)e^{a-|x|}.
class UniformLaplaceMixture {
public:
    UniformLaplaceMixture(double a, double theta);

    double a() const { return a_; }
    double theta() const { return theta_; }
    double sample(RandomStream& rs) const;
    double log_density(double x) const;
    double mean() const { return 0.0; }

private:
    double a_, theta_;
};

using ScalarDistribution = std::variant<Beta, Normal, ChiSquared, FiniteDiscrete, UniformLaplaceMixture>;

std::string family_name(const ScalarDistribution& d);
double sample(const ScalarDistribution& d, RandomStream& rs);
std::vector<double> sample(const ScalarDistribution& d, RandomStream& rs, std::size_t count);
double log_density(const ScalarDistribution& d, double x);
double mean(const ScalarDistribution& d);

// exp(log f_target(x) - log f_behavior(x)).
double likelihood_ratio(const ScalarDistribution& target, const ScalarDistribution& behavior, double x);

// Same value as likelihood_ratio, with per-pair constants folded in ahead of
// time. Used in the replication loops.
class LogRatio {
public:
    LogRatio(const ScalarDistribution& target, const ScalarDistribution& behavior);
    double operator()(double x) const;

private:
    enum class Kind { beta, normal, chi_squared, generic };
    Kind kind_;
    ScalarDistribution target_, behavior_;
    double c0_ = 0, c1_ = 0, c2_ = 0;
};

struct MvNormalParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

class MvNormal {
public:
    MvNormal(Eigen::VectorXd mean, Eigen::MatrixXd cov);
    explicit MvNormal(MvNormalParams p) : MvNormal(std::move(p.mean), std::move(p.cov)) {}

    Eigen::Index dim() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    const Eigen::MatrixXd& chol_lower() const { return lower_; }
    double log_det() const { return log_det_; }

    Eigen::VectorXd sample(RandomStream& rs) const;
    // One draw per column.
    Eigen::MatrixXd sample(RandomStream& rs, std::size_t count) const;
    double log_density(const Eigen::VectorXd& x) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd lower_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_det_;
};

double likelihood_ratio(const MvNormal& target, const MvNormal& behavior, const Eigen::VectorXd& x);

}  // namespace trulr
