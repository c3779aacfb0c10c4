#include "trulr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <json.hpp>

#include "trulr/divergence.hpp"
#include "trulr/estimators.hpp"
#include "trulr/io.hpp"

namespace trulr {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPilotStreamBase = 0xB000000000000000ULL;
constexpr std::size_t kPilotSize = 100000;

[[noreturn]] void config_error(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) config_error("unknown key '" + it.key() + "' in " + where);
}

const json& need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) config_error("missing key '" + key + "' in " + where);
    return j.at(key);
}

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) config_error("'" + key + "' must be a number");
    return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        config_error("'" + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& key) {
    if (!v.is_string()) config_error("'" + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const std::string& key) {
    if (!v.is_array()) config_error("'" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(as_number(e, key));
    return out;
}

EstimatorConfig parse_estimator(const json& j, std::size_t index) {
    const std::string where = "estimators[" + std::to_string(index) + "]";
    if (!j.is_object()) config_error(where + " must be an object");
    reject_unknown(j, {"label", "rule", "tau", "p", "b", "b_h"}, where);
    EstimatorConfig e;
    const std::string rule = as_string(need(j, "rule", where), "rule");
    if (rule == "lr") {
        e.spec = BoundarySpec::lr();
    } else {
        e.spec.rule = parse_boundary_rule(rule);
        if (j.contains("tau")) e.spec.tau_fixed = as_number(j.at("tau"), "tau");
        if (j.contains("p")) e.spec.p = as_number(j.at("p"), "p");
        if (j.contains("b")) e.spec.b = as_number(j.at("b"), "b");
        if (j.contains("b_h")) {
            const auto& v = j.at("b_h");
            if (v.is_string() && v.get<std::string>() == "estimate") e.estimate_b_h = true;
            else e.b_h = as_number(v, "b_h");
        }
        if (e.spec.rule == BoundaryRule::fixed && !e.spec.tau_fixed) config_error(where + ": fixed rule needs 'tau'");
        if (e.spec.rule == BoundaryRule::pnorm_bernstein && !e.spec.b && !e.b_h && !e.estimate_b_h)
            config_error(where + ": bernstein rule needs 'b' or 'b_h'");
    }
    e.label = j.contains("label") ? as_string(j.at("label"), "label") : rule;
    return e;
}

json estimator_to_json(const EstimatorConfig& e) {
    json j;
    j["label"] = e.label;
    if (e.spec.rule == BoundaryRule::fixed && e.spec.tau_fixed && std::isinf(*e.spec.tau_fixed)) {
        j["rule"] = "lr";
        return j;
    }
    j["rule"] = to_string(e.spec.rule);
    if (e.spec.tau_fixed) j["tau"] = *e.spec.tau_fixed;
    if (e.spec.p) j["p"] = *e.spec.p;
    if (e.spec.b) j["b"] = *e.spec.b;
    if (e.estimate_b_h) j["b_h"] = "estimate";
    else if (e.b_h) j["b_h"] = *e.b_h;
    return j;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

void ExperimentConfig::validate() const {
    if (scenario_id.empty()) config_error("scenario_id must be non-empty");
    if (family != "beta" && family != "normal" && family != "chi_squared")
        config_error("family must be one of beta, normal, chi_squared");
    if (h != "identity") config_error("h must be 'identity'");
    if (estimators.empty()) config_error("estimators must be non-empty");
    if (n_grid.empty()) config_error("n_grid must be non-empty");
    for (auto n : n_grid)
        if (n < 1) config_error("n_grid entries must be >= 1");
    if (!(alpha > 1.0)) config_error("alpha must be > 1");
    if (!(delta > 0.0 && delta < 1.0)) config_error("delta must lie in (0, 1)");
    for (double d : delta_grid)
        if (!(d > 0.0 && d < 1.0)) config_error("delta_grid entries must lie in (0, 1)");
    if (reps < 1) config_error("reps must be >= 1");
    (void)make_distribution(family, behavior_params);
    (void)make_distribution(family, target_params);
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        config_error(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) config_error("top level must be an object");
    reject_unknown(j, {"scenario_id", "family", "behavior", "target", "h", "estimators", "alpha", "p", "n_grid",
                       "delta", "delta_grid", "reps", "seed", "out_dir", "h_inf_norm", "h_p_norm"},
                   "config");
    ExperimentConfig c;
    c.scenario_id = as_string(need(j, "scenario_id", "config"), "scenario_id");
    c.family = as_string(need(j, "family", "config"), "family");
    c.behavior_params = as_numbers(need(j, "behavior", "config"), "behavior");
    c.target_params = as_numbers(need(j, "target", "config"), "target");
    if (j.contains("h")) c.h = as_string(j.at("h"), "h");
    const auto& est = need(j, "estimators", "config");
    if (!est.is_array()) config_error("'estimators' must be an array");
    for (std::size_t i = 0; i < est.size(); ++i) c.estimators.push_back(parse_estimator(est[i], i));
    c.alpha = as_number(need(j, "alpha", "config"), "alpha");
    if (j.contains("p")) c.p = as_number(j.at("p"), "p");
    const auto& ng = need(j, "n_grid", "config");
    if (!ng.is_array()) config_error("'n_grid' must be an array");
    for (const auto& v : ng) c.n_grid.push_back(as_count(v, "n_grid"));
    c.delta = as_number(need(j, "delta", "config"), "delta");
    if (j.contains("delta_grid")) c.delta_grid = as_numbers(j.at("delta_grid"), "delta_grid");
    c.reps = as_count(need(j, "reps", "config"), "reps");
    c.seed = as_count(need(j, "seed", "config"), "seed");
    if (j.contains("out_dir")) c.out_dir = as_string(j.at("out_dir"), "out_dir");
    if (j.contains("h_inf_norm")) c.h_inf_norm = as_number(j.at("h_inf_norm"), "h_inf_norm");
    if (j.contains("h_p_norm")) c.h_p_norm = as_number(j.at("h_p_norm"), "h_p_norm");
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::invalid_argument("config file not found: " + path.string());
    return parse_config(read_file(path));
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["scenario_id"] = c.scenario_id;
    j["family"] = c.family;
    j["behavior"] = c.behavior_params;
    j["target"] = c.target_params;
    j["h"] = c.h;
    j["estimators"] = json::array();
    for (const auto& e : c.estimators) j["estimators"].push_back(estimator_to_json(e));
    j["alpha"] = c.alpha;
    if (c.p) j["p"] = *c.p;
    j["n_grid"] = c.n_grid;
    j["delta"] = c.delta;
    if (!c.delta_grid.empty()) j["delta_grid"] = c.delta_grid;
    j["reps"] = c.reps;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    if (c.h_inf_norm) j["h_inf_norm"] = *c.h_inf_norm;
    if (c.h_p_norm) j["h_p_norm"] = *c.h_p_norm;
    return j.dump(2) + "\n";
}

ScalarDistribution make_distribution(const std::string& family, const std::vector<double>& params) {
    const auto want = [&](std::size_t k) {
        if (params.size() != k)
            config_error(family + " expects " + std::to_string(k) + " parameter(s), got " + std::to_string(params.size()));
    };
    if (family == "beta") { want(2); return Beta(params[0], params[1]); }
    if (family == "normal") { want(2); return Normal(params[0], params[1]); }
    if (family == "chi_squared") { want(1); return ChiSquared(params[0]); }
    config_error("unknown family '" + family + "'");
}

double identity_p_norm(const ScalarDistribution& dist, double p) {
    if (!(p > 0.0)) throw std::invalid_argument("identity_p_norm: p must be positive");
    double log_moment = 0.0;
    if (auto* b = std::get_if<Beta>(&dist)) {
        log_moment = log_beta(b->a() + p, b->b()) - log_beta(b->a(), b->b());
    } else if (auto* c = std::get_if<ChiSquared>(&dist)) {
        log_moment = p * std::numbers::ln2 + std::lgamma(0.5 * c->k() + p) - std::lgamma(0.5 * c->k());
    } else if (auto* nd = std::get_if<Normal>(&dist)) {
        // E|X|^p = sigma^p 2^{p/2} Gamma((p+1)/2)/sqrt(pi) 1F1(-p/2; 1/2; -mu^2/(2 sigma^2))
        const double s = nd->sigma();
        const double hyp = boost::math::hypergeometric_1F1(-0.5 * p, 0.5, -nd->mu() * nd->mu() / (2.0 * s * s));
        log_moment = p * std::log(s) + 0.5 * p * std::numbers::ln2 + std::lgamma(0.5 * (p + 1.0)) -
                     0.5 * std::log(std::numbers::pi) + std::log(hyp);
    } else if (auto* f = std::get_if<FiniteDiscrete>(&dist)) {
        double m = 0.0;
        for (std::size_t i = 0; i < f->support().size(); ++i) m += f->probs()[i] * std::pow(std::abs(f->support()[i]), p);
        log_moment = std::log(m);
    } else {
        const auto& u = std::get<UniformLaplaceMixture>(dist);
        const double m = (1.0 - u.theta()) * std::pow(u.a(), p) / (p + 1.0) +
                         u.theta() * std::exp(u.a()) * boost::math::tgamma(p + 1.0, u.a());
        log_moment = std::log(m);
    }
    return std::exp(log_moment / p);
}

std::optional<double> identity_inf_norm(const ScalarDistribution& dist) {
    if (std::holds_alternative<Beta>(dist)) return 1.0;
    if (auto* f = std::get_if<FiniteDiscrete>(&dist)) {
        double m = 0.0;
        for (std::size_t i = 0; i < f->support().size(); ++i)
            if (f->probs()[i] > 0.0) m = std::max(m, std::abs(f->support()[i]));
        return m;
    }
    return std::nullopt;
}

ResolvedScenario resolve_scenario(const ExperimentConfig& config) {
    config.validate();
    ResolvedScenario s{make_distribution(config.family, config.behavior_params),
                       make_distribution(config.family, config.target_params), 0.0, 1.0, {}, {}, {}};
    s.truth = mean(s.target);
    s.divergence = alpha_divergence_closed(s.target, s.behavior, config.alpha).value;
    s.h_inf_norm = config.h_inf_norm ? config.h_inf_norm : identity_inf_norm(s.behavior);
    if (config.h_p_norm) s.h_p_norm = config.h_p_norm;
    else if (config.p) s.h_p_norm = identity_p_norm(s.behavior, *config.p);

    for (std::size_t i = 0; i < config.estimators.size(); ++i) {
        const auto& e = config.estimators[i];
        BoundarySpec spec = e.spec;
        if (is_pnorm_rule(spec.rule) && !spec.p) {
            if (!config.p) config_error("estimator '" + e.label + "' needs p (estimator or config level)");
            spec.p = config.p;
        }
        if (spec.rule == BoundaryRule::pnorm_bernstein && !spec.b) {
            double b_h = e.b_h.value_or(0.0);
            if (e.estimate_b_h) {
                RandomStream rs(config.seed, kPilotStreamBase + i);
                const auto pilot = sample(s.behavior, rs, kPilotSize);
                b_h = bernstein_constant_estimate(pilot, 10, 2.0);
            }
            const double hp = config.h_p_norm.value_or(identity_p_norm(s.behavior, *spec.p));
            spec.b = normalized_bernstein_b(b_h, s.divergence, hp, *spec.p);
        }
        check_rule_constraints(spec.rule, config.alpha, spec.p, spec.b);
        s.specs.push_back(spec);
    }
    return s;
}

ProblemConstants problem_constants(const ExperimentConfig& config, const ResolvedScenario& s, std::size_t n,
                                   std::optional<double> p) {
    ProblemConstants c;
    c.alpha = config.alpha;
    c.divergence = s.divergence;
    c.n = n;
    c.delta = config.delta;
    c.h_inf_norm = s.h_inf_norm;
    c.p = p ? p : config.p;
    if (config.h_p_norm) c.h_p_norm = config.h_p_norm;
    else if (c.p) c.h_p_norm = identity_p_norm(s.behavior, *c.p);
    return c;
}

std::vector<double> replicate(const std::function<double(RandomStream&)>& task, std::size_t reps, std::uint64_t seed,
                              unsigned threads) {
    return replicate_streams<double>(reps, seed, task, threads);
}

SweepResult summarize_estimates(const std::string& scenario_id, const std::string& label, std::size_t n,
                                const std::vector<double>& estimates, double truth, double mean_tau,
                                double frac_truncated, std::uint64_t seed) {
    if (estimates.empty()) throw std::invalid_argument("summarize_estimates: no estimates");
    const std::size_t R = estimates.size();
    const double Rd = static_cast<double>(R);
    std::vector<double> err(R), sq(R);
    for (std::size_t i = 0; i < R; ++i) {
        err[i] = estimates[i] - truth;
        sq[i] = err[i] * err[i];
    }
    SweepResult r;
    r.scenario_id = scenario_id;
    r.estimator_label = label;
    r.n = n;
    r.reps = R;
    r.mse = pairwise_sum(sq) / Rd;
    r.bias = pairwise_sum(err) / Rd;
    r.variance = pairwise_sum(R, [&](std::size_t i) { const double d = err[i] - r.bias; return d * d; }) / Rd;
    if (R > 1) {
        const double ss = pairwise_sum(R, [&](std::size_t i) { const double d = sq[i] - r.mse; return d * d; });
        r.mse_stderr = std::sqrt(ss / (Rd - 1.0)) / std::sqrt(Rd);
    }
    r.mean_tau = mean_tau;
    r.frac_truncated = frac_truncated;
    r.seed = seed;
    return r;
}

double order_statistic_quantile(std::vector<double> abs_errors, double delta) {
    if (abs_errors.empty()) throw std::invalid_argument("order_statistic_quantile: empty input");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("order_statistic_quantile: delta must lie in (0, 1)");
    const double R = static_cast<double>(abs_errors.size());
    // the slack keeps e.g. 0.9 * 1e6 from rounding up past an exact integer
    auto idx = static_cast<std::size_t>(std::ceil((1.0 - delta) * R - 1e-9 * R));
    idx = std::clamp<std::size_t>(idx, 1, abs_errors.size());
    std::nth_element(abs_errors.begin(), abs_errors.begin() + static_cast<std::ptrdiff_t>(idx - 1), abs_errors.end());
    return abs_errors[idx - 1];
}

namespace {

struct SweepPlan {
    ResolvedScenario scenario;
    std::vector<double> taus;
};

SweepPlan plan_for_n(const ExperimentConfig& config, const ResolvedScenario& s, std::size_t n) {
    SweepPlan plan{s, {}};
    for (const auto& spec : s.specs)
        plan.taus.push_back(truncation_boundary(spec, problem_constants(config, s, n, spec.p)));
    return plan;
}

// Per rep: estimate and truncated fraction for every estimator, on one shared sample.
std::vector<std::vector<double>> run_reps(const ExperimentConfig& config, const ResolvedScenario& s,
                                          const std::vector<double>& taus, std::size_t n, std::size_t n_index,
                                          unsigned threads) {
    const LogRatio log_ratio(s.target, s.behavior);
    const std::size_t E = taus.size();
    return replicate_streams<std::vector<double>>(
        config.reps, config.seed,
        [&](RandomStream& rs) {
            std::vector<double> h(n), w(n);
            for (std::size_t i = 0; i < n; ++i) {
                h[i] = sample(s.behavior, rs);
                w[i] = std::exp(log_ratio(h[i]));
            }
            std::vector<double> out(2 * E);
            for (std::size_t e = 0; e < E; ++e) {
                const EstimateReport r = trulr_estimate(h, w, taus[e]);
                out[e] = r.estimate;
                out[E + e] = r.fraction_truncated;
            }
            return out;
        },
        threads, static_cast<std::uint64_t>(n_index) << 32);
}

}  // namespace

std::vector<SweepResult> run_mse_sweep(const ExperimentConfig& config, unsigned threads) {
    const ResolvedScenario s = resolve_scenario(config);
    std::vector<SweepResult> rows;
    for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
        const std::size_t n = config.n_grid[ni];
        const SweepPlan plan = plan_for_n(config, s, n);
        const auto reps = run_reps(config, s, plan.taus, n, ni, threads);
        const std::size_t E = plan.taus.size();
        for (std::size_t e = 0; e < E; ++e) {
            std::vector<double> est(config.reps), frac(config.reps);
            for (std::size_t r = 0; r < config.reps; ++r) {
                est[r] = reps[r][e];
                frac[r] = reps[r][E + e];
            }
            rows.push_back(summarize_estimates(config.scenario_id, config.estimators[e].label, n, est, s.truth,
                                               plan.taus[e], pairwise_sum(frac) / static_cast<double>(config.reps),
                                               config.seed));
        }
    }
    return rows;
}

std::vector<QuantileResult> run_quantile_sweep(const ExperimentConfig& config, unsigned threads) {
    if (config.delta_grid.empty()) config_error("quantile sweep needs a non-empty delta_grid");
    if (config.n_grid.size() != 1) config_error("quantile sweep needs exactly one entry in n_grid");
    const double min_delta = *std::min_element(config.delta_grid.begin(), config.delta_grid.end());
    if (static_cast<double>(config.reps) < 10.0 / min_delta) {
        std::ostringstream os;
        os << "reps = " << config.reps << " too small for delta = " << min_delta << " (need >= " << 10.0 / min_delta << ")";
        config_error(os.str());
    }
    const ResolvedScenario s = resolve_scenario(config);
    const std::size_t n = config.n_grid[0];
    const SweepPlan plan = plan_for_n(config, s, n);
    const auto reps = run_reps(config, s, plan.taus, n, 0, threads);
    std::vector<QuantileResult> rows;
    for (std::size_t e = 0; e < plan.taus.size(); ++e) {
        std::vector<double> abs_err(config.reps);
        for (std::size_t r = 0; r < config.reps; ++r) abs_err[r] = std::abs(reps[r][e] - s.truth);
        for (double d : config.delta_grid) {
            QuantileResult q;
            q.scenario_id = config.scenario_id;
            q.estimator_label = config.estimators[e].label;
            q.delta = d;
            q.quantile_abs_error = order_statistic_quantile(abs_err, d);
            q.reps = config.reps;
            q.seed = config.seed;
            rows.push_back(q);
        }
    }
    return rows;
}

std::string mse_csv(const std::vector<SweepResult>& rows) {
    std::ostringstream os;
    os << "scenario_id,estimator,n,reps,mse,mse_stderr,bias,variance,mean_tau,frac_truncated,seed\n";
    for (const auto& r : rows) {
        os << csv_field(r.scenario_id) << ',' << csv_field(r.estimator_label) << ',' << r.n << ',' << r.reps << ','
           << format_double(r.mse) << ',' << (r.mse_stderr ? format_double(*r.mse_stderr) : "") << ','
           << format_double(r.bias) << ',' << format_double(r.variance) << ',' << format_double(r.mean_tau) << ','
           << format_double(r.frac_truncated) << ',' << r.seed << '\n';
    }
    return os.str();
}

std::string quantile_csv(const std::vector<QuantileResult>& rows) {
    std::ostringstream os;
    os << "scenario_id,estimator,delta,quantile_abs_error,reps,seed\n";
    for (const auto& r : rows) {
        os << csv_field(r.scenario_id) << ',' << csv_field(r.estimator_label) << ',' << format_double(r.delta) << ','
           << format_double(r.quantile_abs_error) << ',' << r.reps << ',' << r.seed << '\n';
    }
    return os.str();
}

void write_mse_outputs(const ExperimentConfig& config, const std::vector<SweepResult>& rows) {
    const std::filesystem::path dir(config.out_dir);
    write_file_atomic(dir / "mse_sweep.csv", mse_csv(rows));
    write_file_atomic(dir / "manifest.json", config_to_json(config));
}

void write_quantile_outputs(const ExperimentConfig& config, const std::vector<QuantileResult>& rows) {
    const std::filesystem::path dir(config.out_dir);
    write_file_atomic(dir / "quantile_sweep.csv", quantile_csv(rows));
    write_file_atomic(dir / "manifest.json", config_to_json(config));
}

}  // namespace trulr
