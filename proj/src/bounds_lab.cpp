#include "trulr/bounds_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "trulr/divergence.hpp"
#include "trulr/estimators.hpp"
#include "trulr/parallel.hpp"

namespace trulr {

namespace {

const BoundId kAllIds[] = {BoundId::lr_conc_inf,   BoundId::lr_conc_p,           BoundId::lr_var_p,
                           BoundId::trulr_bias_inf, BoundId::trulr_var_inf,      BoundId::trulr_bias_p,
                           BoundId::trulr_var_p,    BoundId::trulr_conc_inf_full, BoundId::trulr_conc_mgf_full,
                           BoundId::trulr_conc_bernstein_full};

void check_delta(double delta) {
    if (!(delta > 0.0 && delta < std::exp(-1.0)))
        throw std::invalid_argument("counterexample: delta must lie in (0, 1/e)");
}

// Bisection on a sign-change bracket, run until the bracket collapses to adjacent doubles.
template <class F>
std::optional<double> bisect(F&& f, double lo, double hi) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0)) return std::nullopt;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) { lo = mid; flo = fm; }
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// I_alpha(theta, theta0) - 1 for the two-mass structure shared by both
// constructions: tail mass theta vs theta0, central mass 1-theta vs 1-theta0.
double two_mass_xi(double theta, double theta0, double alpha) {
    const double tail = theta > 0.0 ? std::exp(alpha * std::log(theta) + (1.0 - alpha) * std::log(theta0)) : 0.0;
    const double centre = std::expm1(alpha * std::log1p(-theta) + (1.0 - alpha) * std::log1p(-theta0));
    return tail + centre;
}

}  // namespace

std::string to_string(BoundId id) {
    switch (id) {
    case BoundId::lr_conc_inf: return "lr_conc_inf";
    case BoundId::lr_conc_p: return "lr_conc_p";
    case BoundId::lr_var_p: return "lr_var_p";
    case BoundId::trulr_bias_inf: return "trulr_bias_inf";
    case BoundId::trulr_var_inf: return "trulr_var_inf";
    case BoundId::trulr_bias_p: return "trulr_bias_p";
    case BoundId::trulr_var_p: return "trulr_var_p";
    case BoundId::trulr_conc_inf_full: return "trulr_conc_inf_full";
    case BoundId::trulr_conc_mgf_full: return "trulr_conc_mgf_full";
    case BoundId::trulr_conc_bernstein_full: return "trulr_conc_bernstein_full";
    }
    return "unknown";
}

BoundId parse_bound_id(const std::string& name) {
    std::string s = name;
    std::replace(s.begin(), s.end(), '-', '_');
    for (auto id : kAllIds)
        if (to_string(id) == s) return id;
    throw std::invalid_argument("unknown bound id: " + name);
}

double evaluate_bound(BoundId id, const ProblemConstants& c, std::optional<double> tau, std::optional<MgfParams> mgf,
                      std::optional<double> b) {
    c.validate();
    const bool needs_inf = id == BoundId::lr_conc_inf || id == BoundId::trulr_bias_inf ||
                           id == BoundId::trulr_var_inf || id == BoundId::trulr_conc_inf_full;
    const bool needs_tau = id != BoundId::lr_conc_inf && id != BoundId::lr_conc_p && id != BoundId::lr_var_p;
    std::vector<std::string> missing;
    if (needs_inf && !c.h_inf_norm) missing.push_back("h_inf_norm");
    if (!needs_inf && !c.h_p_norm) missing.push_back("h_p_norm");
    const bool needs_p = !needs_inf && id != BoundId::lr_conc_p && id != BoundId::lr_var_p;
    if (needs_p && !c.p) missing.push_back("p");
    if (needs_tau && !tau) missing.push_back("tau");
    if (id == BoundId::trulr_conc_mgf_full && !mgf) missing.push_back("mgf");
    if (id == BoundId::trulr_conc_bernstein_full && !b) missing.push_back("b");
    if (!missing.empty()) {
        std::ostringstream os;
        os << "evaluate_bound(" << to_string(id) << "): missing";
        for (const auto& m : missing) os << ' ' << m;
        throw std::invalid_argument(os.str());
    }
    if (needs_tau && !(*tau > 0.0)) throw std::invalid_argument("evaluate_bound: tau must be positive");

    const double a = c.alpha;
    const double I = c.divergence;
    const double n = static_cast<double>(c.n);
    const double L = std::log(2.0 / c.delta);
    const double hi = c.h_inf_norm.value_or(0.0);
    const double hp = c.h_p_norm.value_or(0.0);
    const double p = c.p.value_or(0.0);
    const double t = tau.value_or(0.0);

    const auto bias_inf = [&] { return hi * std::pow(t, 1.0 - a) * I; };
    const auto bias_p = [&] { return hp * std::pow(t, 1.0 - a + a / p) * std::pow(I, 1.0 - 1.0 / p); };
    const auto var_p_n = [&] { return hp * hp * std::pow(t, 2.0 - a + 2.0 * a / p) * std::pow(I, 1.0 - 2.0 / p); };

    switch (id) {
    case BoundId::lr_conc_inf:
        return hi * std::pow(4.0 * I / (c.delta * std::pow(n, a - 1.0)), 1.0 / a);
    case BoundId::lr_conc_p:
        return 2.0 / std::sqrt(n * c.delta) * hp * std::pow(I, 1.0 / a);
    case BoundId::lr_var_p:
        return hp * hp * std::pow(I, 2.0 / a) / n;
    case BoundId::trulr_bias_inf:
        return bias_inf();
    case BoundId::trulr_var_inf:
        return hi * hi * std::pow(t, 2.0 - a) * I / n;
    case BoundId::trulr_bias_p:
        return bias_p();
    case BoundId::trulr_var_p:
        return var_p_n() / n;
    case BoundId::trulr_conc_inf_full:
        return std::sqrt(2.0 * std::pow(t, 2.0 - a) * L * I / n) * hi + hi * t * L / (3.0 * n) + bias_inf();
    case BoundId::trulr_conc_mgf_full:
        return std::max(std::sqrt(2.0 * mgf->sigma_sq * L / n), 2.0 * mgf->lambda_cap * L / n) + bias_p();
    case BoundId::trulr_conc_bernstein_full:
        return std::sqrt(2.0 * L / n * var_p_n()) + hp * (*b) * std::pow(t, 1.0 + a / p) * std::pow(I, -1.0 / p) * L / n +
               bias_p();
    }
    throw std::invalid_argument("evaluate_bound: unknown id");
}

double counterexample_theta0(std::size_t n, double delta) {
    const double nd = static_cast<double>(n);
    return (delta / nd) * std::exp(-(nd - 1.0) * std::log1p(-std::numbers::e * delta / nd));
}

FiniteDiscrete DiscreteCounterexample::behavior() const {
    return FiniteDiscrete({-a, 0.0, a}, {theta0 / 2.0, 1.0 - theta0, theta0 / 2.0});
}

FiniteDiscrete DiscreteCounterexample::target() const {
    return FiniteDiscrete({-a, 0.0, a}, {theta / 2.0, 1.0 - theta, theta / 2.0});
}

double DiscreteCounterexample::eps_star_closed() const {
    const double nd = static_cast<double>(n);
    return a * std::pow(xi / (delta * std::pow(nd, alpha - 1.0)), 1.0 / alpha) *
           std::exp((nd - 1.0) / alpha * std::log1p(-std::numbers::e * delta / nd));
}

double DiscreteCounterexample::self_consistency_residual() const {
    return theta - std::pow(theta0, (alpha - 1.0) / alpha) * std::pow(xi, 1.0 / alpha);
}

DiscreteCounterexample build_discrete_counterexample(double a, double alpha, std::size_t n, double delta) {
    if (!(a > 0.0)) throw std::invalid_argument("discrete counterexample: a must be positive");
    if (!(alpha > 1.0 && alpha <= 2.0)) throw std::invalid_argument("discrete counterexample: alpha must lie in (1, 2]");
    if (n < 1) throw std::invalid_argument("discrete counterexample: n must be >= 1");
    check_delta(delta);

    DiscreteCounterexample c;
    c.a = a;
    c.alpha = alpha;
    c.n = n;
    c.delta = delta;
    c.theta0 = counterexample_theta0(n, delta);
    const double k = std::pow(c.theta0, (alpha - 1.0) / alpha);
    const auto F = [&](double th) {
        return th - k * std::pow(std::max(0.0, two_mass_xi(th, c.theta0, alpha)), 1.0 / alpha);
    };
    // F(0+) < 0 < F(theta0) = theta0, and F > 0 on all of (theta0, 1].
    const auto root = bisect(F, std::numeric_limits<double>::min(), c.theta0);
    if (!root) throw ConstructionInfeasible("construction infeasible for these inputs: no sign change in (0, theta0]");
    c.theta = *root;
    c.xi = std::max(0.0, two_mass_xi(c.theta, c.theta0, alpha));
    c.eps_star = a * (c.theta / c.theta0) / static_cast<double>(n);
    const double n_min = std::max(1.0, std::numbers::e * delta * std::pow(c.xi, 1.0 / (alpha - 1.0)));
    if (static_cast<double>(n) < n_min)
        throw ConstructionInfeasible("construction infeasible for these inputs: n below e*delta*xi^{1/(alpha-1)}");
    return c;
}

namespace {

ContinuousCounterexample continuous_base(double a, double alpha, double p, std::size_t n, double delta) {
    if (!(a > 0.0)) throw std::invalid_argument("continuous counterexample: a must be positive");
    if (!(p > 2.0)) throw std::invalid_argument("continuous counterexample: p must be > 2");
    if (!(alpha >= 2.0 * p / (p - 2.0))) throw std::invalid_argument("continuous counterexample: alpha must be >= 2p/(p-2)");
    if (n < 1) throw std::invalid_argument("continuous counterexample: n must be >= 1");
    check_delta(delta);
    ContinuousCounterexample c;
    c.a = a;
    c.alpha = alpha;
    c.p = p;
    c.n = n;
    c.delta = delta;
    c.theta0 = counterexample_theta0(n, delta);
    const double ap = std::pow(a, p);
    c.norm_gap = std::abs(ap - c.theta0 * std::exp(a) * boost::math::tgamma(p + 1.0, a)) / ap;
    return c;
}

}  // namespace

ContinuousCounterexample build_continuous_counterexample(double a, double alpha, double p, std::size_t n, double delta) {
    ContinuousCounterexample c = continuous_base(a, alpha, p, n, delta);
    const double s0 = std::sqrt(c.theta0);
    const auto G = [&](double th) {
        return th - s0 * std::pow(1.0 + std::max(0.0, two_mass_xi(th, c.theta0, alpha)), 1.0 / alpha);
    };
    // scan a log grid for a sign change, then refine
    std::optional<double> root;
    double prev_x = std::numeric_limits<double>::min();
    double prev = G(prev_x);
    for (int i = 0; i <= 400 && !root; ++i) {
        const double x = std::pow(10.0, -300.0 + 300.0 * i / 400.0);
        const double g = G(x);
        if ((g < 0.0) != (prev < 0.0) || g == 0.0) root = bisect(G, prev_x, x);
        prev_x = x;
        prev = g;
    }
    if (!root)
        throw ConstructionInfeasible(
            "construction infeasible for these inputs: theta = theta0^{1/2} I_alpha^{1/alpha} has no root in (0, 1]");
    c.theta = *root;
    c.eps = a * (c.theta / c.theta0) / static_cast<double>(n);
    return c;
}

ContinuousCounterexample build_continuous_counterexample(double a, double alpha, double p, std::size_t n, double delta,
                                                         double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("continuous counterexample: theta must lie in (0, 1]");
    ContinuousCounterexample c = continuous_base(a, alpha, p, n, delta);
    c.theta = theta;
    c.eps = a * (c.theta / c.theta0) / static_cast<double>(n);
    return c;
}

namespace {

TailFrequency summarize_tail(const std::vector<char>& hits) {
    TailFrequency t;
    t.reps = hits.size();
    std::size_t k = 0;
    for (char h : hits) k += h ? 1 : 0;
    t.frequency = static_cast<double>(k) / static_cast<double>(t.reps);
    t.binomial_se = std::sqrt(t.frequency * (1.0 - t.frequency) / static_cast<double>(t.reps));
    return t;
}

void check_reps(std::size_t reps) {
    if (reps < 1000) throw std::invalid_argument("empirical_tail_probability: reps must be >= 1000");
}

}  // namespace

TailFrequency empirical_tail_probability(const DiscreteCounterexample& c, std::size_t reps, std::uint64_t seed,
                                         double tau, unsigned threads) {
    check_reps(reps);
    const FiniteDiscrete behavior = c.behavior();
    const double w_tail = c.theta / c.theta0;
    const double w_centre = (1.0 - c.theta) / (1.0 - c.theta0);
    const double w_of[3] = {w_tail, w_centre, w_tail};
    const auto hits = replicate_streams<char>(reps, seed, [&](RandomStream& rs) -> char {
        std::vector<double> h(c.n), w(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            const std::size_t j = behavior.sample_index(rs);
            h[i] = behavior.support()[j];
            w[i] = w_of[j];
        }
        return std::abs(trulr_estimate(h, w, tau).estimate) >= c.eps_star;
    }, threads);
    return summarize_tail(hits);
}

TailFrequency empirical_tail_probability(const ContinuousCounterexample& c, std::size_t reps, std::uint64_t seed,
                                         double tau, unsigned threads) {
    check_reps(reps);
    const UniformLaplaceMixture behavior = c.behavior();
    const double w_tail = c.theta / c.theta0;
    const double w_centre = (1.0 - c.theta) / (1.0 - c.theta0);
    const auto hits = replicate_streams<char>(reps, seed, [&](RandomStream& rs) -> char {
        std::vector<double> h(c.n), w(c.n);
        for (std::size_t i = 0; i < c.n; ++i) {
            const double x = behavior.sample(rs);
            const bool tail = std::abs(x) >= c.a;
            h[i] = tail ? x : 0.0;
            w[i] = tail ? w_tail : w_centre;
        }
        return std::abs(trulr_estimate(h, w, tau).estimate) >= c.eps;
    }, threads);
    return summarize_tail(hits);
}

CoverageResult coverage_check(const ScalarDistribution& target, const ScalarDistribution& behavior,
                              const BoundarySpec& spec, const ProblemConstants& constants, BoundId bound,
                              std::size_t reps, std::uint64_t seed, std::optional<MgfParams> mgf, unsigned threads) {
    if (reps < 1) throw std::invalid_argument("coverage_check: reps must be >= 1");
    CoverageResult out;
    out.reps = reps;
    out.truth = mean(target);
    out.tau = truncation_boundary(spec, constants);
    const std::optional<double> tau_arg = std::isfinite(out.tau) ? std::optional<double>(out.tau) : std::nullopt;
    std::optional<double> b;
    if (spec.rule == BoundaryRule::pnorm_bernstein) b = spec.b;
    out.bound = evaluate_bound(bound, constants, tau_arg, mgf, b);
    const LogRatio log_ratio(target, behavior);
    const auto hits = replicate_streams<char>(reps, seed, [&](RandomStream& rs) -> char {
        std::vector<double> h(constants.n), w(constants.n);
        for (std::size_t i = 0; i < constants.n; ++i) {
            h[i] = sample(behavior, rs);
            w[i] = std::exp(log_ratio(h[i]));
        }
        return std::abs(trulr_estimate(h, w, out.tau).estimate - out.truth) <= out.bound;
    }, threads);
    std::size_t k = 0;
    for (char h : hits) k += h ? 1 : 0;
    out.empirical_coverage = static_cast<double>(k) / static_cast<double>(reps);
    return out;
}

}  // namespace trulr
