#include "trulr/boundaries.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "trulr/estimators.hpp"

namespace trulr {

namespace {

struct Term { double c; double e; };

const double kSqrt2 = std::sqrt(2.0);

double require(std::optional<double> v, const char* what) {
    if (!v) throw std::invalid_argument(std::string("missing parameter: ") + what);
    return *v;
}

std::vector<Term> terms(BoundaryRule rule, double alpha, std::optional<double> p, std::optional<double> b) {
    switch (rule) {
    case BoundaryRule::inf_simple:
    case BoundaryRule::inf_optimal: {
        const double k = 2.0 / alpha;
        return {{kSqrt2, k - 1.0}, {1.0 / 3.0, k}, {1.0, k - 2.0}};
    }
    case BoundaryRule::pnorm_simple:
    case BoundaryRule::pnorm_mgf_optimal: {
        const double k = 2.0 / alpha + 2.0 / require(p, "p");
        return {{kSqrt2, k - 1.0}, {1.0, k - 2.0}};
    }
    case BoundaryRule::pnorm_bernstein: {
        const double k = 2.0 / alpha + 2.0 / require(p, "p");
        return {{kSqrt2, k - 1.0}, {require(b, "b"), k}, {1.0, k - 2.0}};
    }
    case BoundaryRule::fixed:
        break;
    }
    throw std::invalid_argument("fixed rule has no objective");
}

}  // namespace

std::string to_string(BoundaryRule rule) {
    switch (rule) {
    case BoundaryRule::inf_simple: return "inf_simple";
    case BoundaryRule::inf_optimal: return "inf_optimal";
    case BoundaryRule::pnorm_simple: return "pnorm_simple";
    case BoundaryRule::pnorm_mgf_optimal: return "pnorm_mgf_optimal";
    case BoundaryRule::pnorm_bernstein: return "pnorm_bernstein";
    case BoundaryRule::fixed: return "fixed";
    }
    return "unknown";
}

BoundaryRule parse_boundary_rule(const std::string& name) {
    std::string s = name;
    std::replace(s.begin(), s.end(), '-', '_');
    for (auto r : {BoundaryRule::inf_simple, BoundaryRule::inf_optimal, BoundaryRule::pnorm_simple,
                   BoundaryRule::pnorm_mgf_optimal, BoundaryRule::pnorm_bernstein, BoundaryRule::fixed})
        if (to_string(r) == s) return r;
    throw std::invalid_argument("unknown boundary rule: " + name);
}

BoundarySpec BoundarySpec::lr() { return fixed(kInfinity); }

BoundarySpec BoundarySpec::fixed(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("fixed boundary: tau must be positive");
    return {BoundaryRule::fixed, {}, {}, tau};
}

void ProblemConstants::validate() const {
    if (!(alpha > 1.0) || !std::isfinite(alpha)) throw std::invalid_argument("ProblemConstants: alpha must be > 1");
    if (!(divergence >= 1.0 - 1e-12) || !std::isfinite(divergence))
        throw std::invalid_argument("ProblemConstants: divergence must be >= 1");
    if (n < 1) throw std::invalid_argument("ProblemConstants: n must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("ProblemConstants: delta must lie in (0, 1)");
    if (h_inf_norm && !(*h_inf_norm > 0.0)) throw std::invalid_argument("ProblemConstants: h_inf_norm must be positive");
    if (h_p_norm && !(*h_p_norm > 0.0)) throw std::invalid_argument("ProblemConstants: h_p_norm must be positive");
}

bool is_inf_rule(BoundaryRule rule) {
    return rule == BoundaryRule::inf_simple || rule == BoundaryRule::inf_optimal;
}

bool is_pnorm_rule(BoundaryRule rule) {
    return rule == BoundaryRule::pnorm_simple || rule == BoundaryRule::pnorm_mgf_optimal ||
           rule == BoundaryRule::pnorm_bernstein;
}

void check_rule_constraints(BoundaryRule rule, double alpha, std::optional<double> p, std::optional<double> b) {
    if (!(alpha > 1.0)) throw std::invalid_argument("constraint violated: alpha > 1");
    if (is_inf_rule(rule) && !(alpha <= 2.0))
        throw std::invalid_argument("constraint violated: alpha in (1, 2] for infinity-norm rules");
    if (is_pnorm_rule(rule)) {
        const double pv = require(p, "p");
        if (!(pv > 2.0)) throw std::invalid_argument("constraint violated: p > 2");
        if (!(pv / (pv - 1.0) < alpha && alpha < 2.0 * pv / (pv - 2.0))) {
            std::ostringstream os;
            os << "constraint violated: p/(p-1) < alpha < 2p/(p-2) (p = " << pv << ", alpha = " << alpha
               << ", interval (" << pv / (pv - 1.0) << ", " << 2.0 * pv / (pv - 2.0) << "))";
            throw std::invalid_argument(os.str());
        }
    }
    if (rule == BoundaryRule::pnorm_bernstein && !(require(b, "b") > 0.0))
        throw std::invalid_argument("constraint violated: b > 0");
}

double x_star(BoundaryRule rule, double alpha, std::optional<double> p, std::optional<double> b) {
    check_rule_constraints(rule, alpha, p, b);
    switch (rule) {
    case BoundaryRule::inf_simple:
    case BoundaryRule::pnorm_simple:
        return 1.0;
    case BoundaryRule::inf_optimal: {
        const double u = alpha / 2.0 - 1.0;
        return 1.5 * (kSqrt2 * u + std::sqrt(2.0 * u * u + (4.0 / 3.0) * (alpha - 1.0)));
    }
    case BoundaryRule::pnorm_mgf_optimal: {
        const double pv = *p;
        return (alpha - 1.0 - alpha / pv) / (kSqrt2 * (1.0 - alpha / 2.0 + alpha / pv));
    }
    case BoundaryRule::pnorm_bernstein: {
        const double pv = *p, bv = *b;
        const double c = 1.0 - alpha / 2.0 + alpha / pv;
        const double q = 1.0 + alpha / pv;
        const double e = 1.0 - alpha + alpha / pv;
        return (-kSqrt2 * c + std::sqrt(2.0 * c * c - 4.0 * bv * q * e)) / (2.0 * bv * q);
    }
    case BoundaryRule::fixed:
        break;
    }
    throw std::invalid_argument("fixed rule has no x*");
}

double x_star(const BoundarySpec& spec, double alpha) { return x_star(spec.rule, alpha, spec.p, spec.b); }

double objective(BoundaryRule rule, double x, double alpha, std::optional<double> p, std::optional<double> b) {
    double s = 0.0;
    for (const auto& t : terms(rule, alpha, p, b)) s += t.c * std::pow(x, t.e);
    return s;
}

double objective_d1(BoundaryRule rule, double x, double alpha, std::optional<double> p, std::optional<double> b) {
    double s = 0.0;
    for (const auto& t : terms(rule, alpha, p, b)) s += t.c * t.e * std::pow(x, t.e - 1.0);
    return s;
}

double objective_d2(BoundaryRule rule, double x, double alpha, std::optional<double> p, std::optional<double> b) {
    double s = 0.0;
    for (const auto& t : terms(rule, alpha, p, b)) s += t.c * t.e * (t.e - 1.0) * std::pow(x, t.e - 2.0);
    return s;
}

double stationarity_residual(BoundaryRule rule, double alpha, std::optional<double> p, std::optional<double> b) {
    const double x = x_star(rule, alpha, p, b);
    double s = 0.0, mag = 0.0;
    for (const auto& t : terms(rule, alpha, p, b)) {
        const double v = t.c * t.e * std::pow(x, t.e - 1.0);
        s += v;
        mag += std::abs(v);
    }
    return mag > 0.0 ? std::abs(s) / mag : std::abs(s);
}

double bound_constant(const BoundarySpec& spec, double alpha) {
    const double x = x_star(spec, alpha);
    return objective(spec.rule, x, alpha, spec.p, spec.b);
}

double truncation_boundary(const BoundarySpec& spec, const ProblemConstants& constants) {
    constants.validate();
    if (spec.rule == BoundaryRule::fixed) {
        const double t = require(spec.tau_fixed, "tau_fixed");
        if (!(t > 0.0)) throw std::invalid_argument("fixed boundary: tau must be positive");
        return t;
    }
    const auto p = spec.p ? spec.p : constants.p;
    const double x = x_star(spec.rule, constants.alpha, p, spec.b);
    const double L = std::log(2.0 / constants.delta);
    const double base = static_cast<double>(constants.n) * constants.divergence / L;
    return std::pow(x, 2.0 / constants.alpha) * std::pow(base, 1.0 / constants.alpha);
}

BoundaryResolution resolve_boundary(const BoundarySpec& spec, const ProblemConstants& constants) {
    BoundaryResolution r;
    r.tau = truncation_boundary(spec, constants);
    if (spec.rule == BoundaryRule::fixed) return r;
    BoundarySpec s = spec;
    if (!s.p) s.p = constants.p;
    r.x_star = x_star(s, constants.alpha);
    r.constant = objective(s.rule, r.x_star, constants.alpha, s.p, s.b);
    if (s.rule == BoundaryRule::pnorm_bernstein && *s.b < 1.0 / 18.0) {
        bool convex = true;
        for (int i = 0; i < 50; ++i) {
            const double x = r.x_star * std::pow(10.0, -2.0 + 4.0 * i / 49.0);
            if (!(objective_d2(s.rule, x, constants.alpha, s.p, s.b) > 0.0)) convex = false;
        }
        std::ostringstream os;
        os << "bernstein b = " << *s.b << " is below 1/18; convexity on [x*/100, 100x*] "
           << (convex ? "verified numerically" : "FAILS numerically");
        r.warnings.push_back(os.str());
    }
    return r;
}

double bernstein_constant_estimate(std::span<const double> sample, std::size_t max_k, double multiplier) {
    if (sample.size() < 1000) throw std::invalid_argument("bernstein_constant_estimate: sample size must be >= 1000");
    if (max_k < 2) throw std::invalid_argument("bernstein_constant_estimate: max_k must be >= 2");
    if (!(multiplier > 0.0)) throw std::invalid_argument("bernstein_constant_estimate: multiplier must be positive");
    double best = 0.0;
    for (std::size_t k = 1; k <= max_k; ++k) {
        const double kd = static_cast<double>(k);
        const double m = pairwise_sum(sample.size(), [&](std::size_t i) { return std::pow(std::abs(sample[i]), kd); }) /
                         static_cast<double>(sample.size());
        if (!std::isfinite(m)) throw std::domain_error("bernstein_constant_estimate: non-finite sample moment");
        best = std::max(best, std::pow(m, 1.0 / kd) / kd);
    }
    if (!(best > 0.0)) throw std::domain_error("bernstein_constant_estimate: sample is identically zero");
    return multiplier * best;
}

double normalized_bernstein_b(double b_h, double divergence, double h_p_norm, double p) {
    if (!(b_h > 0.0) || !(h_p_norm > 0.0) || !(p > 0.0) || !(divergence > 0.0))
        throw std::invalid_argument("normalized_bernstein_b: arguments must be positive");
    return b_h * std::pow(divergence, 1.0 / p) / h_p_norm;
}

MgfParams mgf_params_catalog(MgfKind kind, double parameter) {
    if (!(parameter > 0.0)) throw std::invalid_argument("mgf_params_catalog: parameter must be positive");
    switch (kind) {
    case MgfKind::bounded: return {parameter * parameter, 0.0};
    case MgfKind::normal: return {parameter, 0.0};
    case MgfKind::exponential: return {4.0 * parameter * parameter, 2.0 * parameter};
    }
    throw std::invalid_argument("mgf_params_catalog: unknown kind");
}

double plug_in_p_norm(std::span<const double> h, double p) {
    if (h.empty()) throw std::invalid_argument("plug_in_p_norm: empty sample");
    if (!(p > 0.0)) throw std::invalid_argument("plug_in_p_norm: p must be positive");
    const double m = empirical_max_norm(h);
    if (m == 0.0) return 0.0;
    const double s = pairwise_sum(h.size(), [&](std::size_t i) { return std::pow(std::abs(h[i]) / m, p); });
    return m * std::pow(s / static_cast<double>(h.size()), 1.0 / p);
}

double empirical_max_norm(std::span<const double> h) {
    double m = 0.0;
    for (double v : h) {
        if (!std::isfinite(v)) throw std::domain_error("empirical_max_norm: non-finite value");
        m = std::max(m, std::abs(v));
    }
    return m;
}

}  // namespace trulr
