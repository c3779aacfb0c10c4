#include "trulr/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "trulr/bandit.hpp"
#include "trulr/bounds_lab.hpp"
#include "trulr/divergence.hpp"
#include "trulr/harness.hpp"
#include "trulr/io.hpp"
#include "trulr/portfolio.hpp"

namespace trulr::cli {

namespace {

struct Options {
    // shared
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string out_dir;

    // synthetic / quantiles
    std::string config_path;
    std::size_t reps = 0;
    std::vector<std::size_t> n_grid;
    std::vector<double> delta_grid;

    // scalar problem description
    std::string family;
    std::vector<double> behavior, target;
    double alpha = 0.0;
    double p = 0.0;
    double b = 0.0;
    double delta = 0.0;
    std::size_t n = 0;

    // divergence
    std::size_t mc = 0;

    // boundary
    std::string rule;
    double divergence = 0.0;
    double tau = 0.0;

    // anticonc
    std::string construction = "discrete";
    double a = 1.0;
    double theta_ac = 0.0;

    // coverage
    std::string bound;
    std::string mgf_kind;
    double mgf_param = 0.0;

    // bandit
    std::string dataset;
    std::size_t synthetic_size = 20000;
    double train_frac = 0.3;
    double theta0 = 0.5, theta = 0.99;
    std::string reward = "binary";
    std::vector<std::string> estimators;

    // portfolio
    std::vector<std::string> rules;
    std::size_t reference_m = 10000000;
};

struct Built {
    std::unique_ptr<CLI::App> app;
    std::vector<CLI::App*> subs;
};

CLI::App* sub(Built& b, const std::string& name, const std::string& desc) {
    CLI::App* s = b.app->add_subcommand(name, desc);
    b.subs.push_back(s);
    return s;
}

void add_seed(CLI::App* s, Options& o) {
    s->add_option("--seed", o.seed, "Random seed (required)")->required();
    s->add_option("--threads", o.threads, "Worker threads; 0 = hardware concurrency. Results do not depend on it");
}

Built build(Options& o) {
    Built b;
    b.app = std::make_unique<CLI::App>("Truncated likelihood-ratio estimators: experiments and tools", "trulr_cli");
    b.app->require_subcommand(1);

    for (const std::string name : {"synthetic", "quantiles"}) {
        CLI::App* s = sub(b, name,
                          name == "synthetic" ? "MSE sweep over n for a JSON experiment config"
                                              : "Error-quantile sweep over delta for a JSON experiment config");
        s->add_option("--config", o.config_path, "Experiment config (JSON)")->required();
        add_seed(s, o);
        s->add_option("--reps", o.reps, "Override replications");
        s->add_option("--n", o.n_grid, "Override n grid (comma separated)")->delimiter(',');
        if (name == "quantiles") s->add_option("--delta-grid", o.delta_grid, "Override delta grid")->delimiter(',');
        s->add_option("--out-dir", o.out_dir, "Override output directory");
    }

    {
        CLI::App* s = sub(b, "anticonc", "Tail frequency of the anti-concentration constructions");
        s->add_option("--construction", o.construction, "discrete | continuous")
            ->check(CLI::IsMember({"discrete", "continuous"}));
        s->add_option("--a", o.a, "Scale a > 0");
        s->add_option("--alpha", o.alpha, "Divergence order")->required();
        s->add_option("--n", o.n, "Sample size")->required();
        s->add_option("--delta", o.delta, "Confidence level")->required();
        s->add_option("--p", o.p, "Norm order (continuous)");
        s->add_option("--theta", o.theta_ac, "Explicit tail weight (continuous)");
        s->add_option("--tau", o.tau, "Truncation level; default none");
        s->add_option("--reps", o.reps, "Replications (>= 1000)")->required();
        add_seed(s, o);
    }

    {
        CLI::App* s = sub(b, "coverage", "Empirical coverage of a probability bound");
        s->add_option("--family", o.family, "beta | normal | chi_squared")->required();
        s->add_option("--behavior", o.behavior, "Behavior parameters")->delimiter(',')->required();
        s->add_option("--target", o.target, "Target parameters")->delimiter(',')->required();
        s->add_option("--rule", o.rule, "Boundary rule or lr")->required();
        s->add_option("--bound", o.bound, "Bound id")->required();
        s->add_option("--alpha", o.alpha, "Divergence order")->required();
        s->add_option("--p", o.p, "Norm order");
        s->add_option("--b", o.b, "Normalized Bernstein constant");
        s->add_option("--n", o.n, "Sample size")->required();
        s->add_option("--delta", o.delta, "Confidence level")->required();
        s->add_option("--mgf-kind", o.mgf_kind, "bounded | normal | exponential");
        s->add_option("--mgf-param", o.mgf_param, "Parameter of the MGF family");
        s->add_option("--reps", o.reps, "Replications")->required();
        add_seed(s, o);
    }

    {
        CLI::App* s = sub(b, "bandit", "Offline evaluation of an epsilon-boost policy on letter data");
        s->add_option("--dataset", o.dataset, "Letter dataset file; default synthetic letters");
        s->add_option("--synthetic-size", o.synthetic_size, "Instances of synthetic letter data");
        s->add_option("--train-frac", o.train_frac, "Training fraction");
        s->add_option("--theta0", o.theta0, "Behavior policy theta");
        s->add_option("--theta", o.theta, "Target policy theta");
        s->add_option("--alpha", o.alpha, "Divergence order")->required();
        s->add_option("--delta", o.delta, "Confidence level")->required();
        s->add_option("--p", o.p, "Norm order for p-norm rules");
        s->add_option("--reward", o.reward, "binary | normal")->check(CLI::IsMember({"binary", "normal"}));
        s->add_option("--n", o.n_grid, "Sample sizes (comma separated)")->delimiter(',')->required();
        s->add_option("--reps", o.reps, "Replications")->required();
        s->add_option("--estimators", o.estimators, "lr, a rule name, or fixed:<tau> (comma separated)")
            ->delimiter(',')
            ->required();
        s->add_option("--out-dir", o.out_dir, "Output directory")->required();
        add_seed(s, o);
    }

    {
        CLI::App* s = sub(b, "portfolio", "Asian option portfolio pricing with reused weekly simulations");
        s->add_option("--config", o.config_path, "Portfolio config (JSON); default built-in table");
        s->add_option("--n", o.n, "Paths per week and option")->required();
        s->add_option("--reps", o.reps, "Replications")->required();
        s->add_option("--delta", o.delta, "Confidence level")->required();
        s->add_option("--rules", o.rules, "lr, trulr_m, trulr_s (comma separated)")->delimiter(',');
        s->add_option("--reference-m", o.reference_m, "Paths per option for the reference price");
        s->add_option("--out-dir", o.out_dir, "Output directory")->required();
        add_seed(s, o);
    }

    {
        CLI::App* s = sub(b, "divergence", "Closed-form alpha-divergence, optionally checked by Monte Carlo");
        s->add_option("--family", o.family, "beta | normal | chi_squared")->required();
        s->add_option("--behavior", o.behavior, "Behavior parameters")->delimiter(',')->required();
        s->add_option("--target", o.target, "Target parameters")->delimiter(',')->required();
        s->add_option("--alpha", o.alpha, "Divergence order")->required();
        s->add_option("--mc", o.mc, "Monte Carlo sample size for the oracle comparison");
        s->add_option("--seed", o.seed, "Random seed (required with --mc)");
    }

    {
        CLI::App* s = sub(b, "boundary", "Truncation boundary for a rule and problem constants");
        s->add_option("--rule", o.rule, "Boundary rule")->required();
        s->add_option("--alpha", o.alpha, "Divergence order")->required();
        s->add_option("--n", o.n, "Sample size")->required();
        s->add_option("--delta", o.delta, "Confidence level")->required();
        s->add_option("--divergence", o.divergence, "I_alpha")->required();
        s->add_option("--p", o.p, "Norm order");
        s->add_option("--b", o.b, "Normalized Bernstein constant");
        s->add_option("--tau", o.tau, "Level for the fixed rule");
    }
    return b;
}

bool given(const CLI::App* s, const std::string& flag) {
    const CLI::Option* opt = s->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
}

BoundarySpec spec_from(const std::string& rule, const CLI::App* s, const Options& o) {
    if (rule == "lr") return BoundarySpec::lr();
    const BoundaryRule r = parse_boundary_rule(rule);
    BoundarySpec spec;
    spec.rule = r;
    if (given(s, "--p")) spec.p = o.p;
    if (given(s, "--b")) spec.b = o.b;
    if (r == BoundaryRule::fixed) {
        if (!given(s, "--tau")) throw std::invalid_argument("rule fixed needs --tau");
        spec.tau_fixed = o.tau;
    }
    return spec;
}

int cmd_sweep(const CLI::App* s, const Options& o, bool quantiles, std::ostream& out) {
    ExperimentConfig c = load_config(o.config_path);
    c.seed = o.seed;
    if (given(s, "--reps")) c.reps = o.reps;
    if (given(s, "--n")) c.n_grid = o.n_grid;
    if (given(s, "--delta-grid")) c.delta_grid = o.delta_grid;
    if (given(s, "--out-dir")) c.out_dir = o.out_dir;
    c.validate();
    out << "seed: " << c.seed << "\n";
    if (quantiles) {
        write_quantile_outputs(c, run_quantile_sweep(c, o.threads));
        out << "wrote " << (std::filesystem::path(c.out_dir) / "quantile_sweep.csv").string() << "\n";
    } else {
        write_mse_outputs(c, run_mse_sweep(c, o.threads));
        out << "wrote " << (std::filesystem::path(c.out_dir) / "mse_sweep.csv").string() << "\n";
    }
    return 0;
}

int cmd_anticonc(const CLI::App* s, const Options& o, std::ostream& out) {
    out << "seed: " << o.seed << "\n";
    const double tau = given(s, "--tau") ? o.tau : kInfinity;
    TailFrequency f;
    double eps = 0.0, theta = 0.0, theta0 = 0.0;
    if (o.construction == "discrete") {
        const auto c = build_discrete_counterexample(o.a, o.alpha, o.n, o.delta);
        f = empirical_tail_probability(c, o.reps, o.seed, tau, o.threads);
        eps = c.eps_star;
        theta = c.theta;
        theta0 = c.theta0;
    } else {
        if (!given(s, "--p")) throw std::invalid_argument("continuous construction needs --p");
        const auto c = given(s, "--theta") ? build_continuous_counterexample(o.a, o.alpha, o.p, o.n, o.delta, o.theta_ac)
                                           : build_continuous_counterexample(o.a, o.alpha, o.p, o.n, o.delta);
        f = empirical_tail_probability(c, o.reps, o.seed, tau, o.threads);
        eps = c.eps;
        theta = c.theta;
        theta0 = c.theta0;
    }
    out << "theta0: " << format_double(theta0) << "\n"
        << "theta: " << format_double(theta) << "\n"
        << "epsilon: " << format_double(eps) << "\n"
        << "tail_frequency: " << format_double(f.frequency) << "\n"
        << "binomial_se: " << format_double(f.binomial_se) << "\n"
        << "delta: " << format_double(o.delta) << "\n";
    return 0;
}

int cmd_coverage(const CLI::App* s, const Options& o, std::ostream& out) {
    out << "seed: " << o.seed << "\n";
    const auto behavior = make_distribution(o.family, o.behavior);
    const auto target = make_distribution(o.family, o.target);
    const BoundarySpec spec = spec_from(o.rule, s, o);
    ProblemConstants pc;
    pc.alpha = o.alpha;
    pc.n = o.n;
    pc.delta = o.delta;
    pc.divergence = alpha_divergence_closed(target, behavior, o.alpha).value;
    pc.h_inf_norm = identity_inf_norm(behavior);
    if (given(s, "--p")) {
        pc.p = o.p;
        pc.h_p_norm = identity_p_norm(behavior, o.p);
    }
    std::optional<MgfParams> mgf;
    if (given(s, "--mgf-kind")) {
        MgfKind k;
        if (o.mgf_kind == "bounded") k = MgfKind::bounded;
        else if (o.mgf_kind == "normal") k = MgfKind::normal;
        else if (o.mgf_kind == "exponential") k = MgfKind::exponential;
        else throw std::invalid_argument("unknown --mgf-kind: " + o.mgf_kind);
        mgf = mgf_params_catalog(k, o.mgf_param);
    }
    const auto r = coverage_check(target, behavior, spec, pc, parse_bound_id(o.bound), o.reps, o.seed, mgf, o.threads);
    out << "bound: " << format_double(r.bound) << "\n"
        << "tau: " << format_double(r.tau) << "\n"
        << "truth: " << format_double(r.truth) << "\n"
        << "coverage: " << format_double(r.empirical_coverage) << "\n"
        << "target_coverage: " << format_double(1.0 - o.delta) << "\n";
    return 0;
}

int cmd_bandit(const CLI::App* s, const Options& o, std::ostream& out) {
    out << "seed: " << o.seed << "\n";
    const auto data = o.dataset.empty() ? bandit::generate_synthetic_letters(o.synthetic_size, o.seed)
                                        : bandit::load_letter_dataset(o.dataset);
    RandomStream split_stream(o.seed, 0x5b117ULL);
    auto parts = bandit::split(data, o.train_frac, split_stream);
    const bandit::NearestCentroid clf(parts.train);
    const bandit::EvalContexts ctx(std::move(parts.eval), clf);

    bandit::BanditExperiment e;
    e.theta0 = o.theta0;
    e.theta = o.theta;
    e.alpha = o.alpha;
    e.delta = o.delta;
    e.reward = bandit::parse_reward_kind(o.reward);
    if (given(s, "--p")) e.p = o.p;
    else if (e.reward == bandit::RewardKind::normal) e.p = 40.0;
    e.n_grid = o.n_grid;
    e.reps = o.reps;
    e.seed = o.seed;
    for (const auto& tok : o.estimators) {
        BoundarySpec spec;
        if (tok == "lr") spec = BoundarySpec::lr();
        else if (tok.rfind("fixed:", 0) == 0) spec = BoundarySpec::fixed(std::stod(tok.substr(6)));
        else {
            spec.rule = parse_boundary_rule(tok);
            spec.p = e.p;
        }
        e.estimators.emplace_back(tok, spec);
    }
    const auto rows = bandit::run_bandit_sweep(e, ctx, o.threads);
    const auto path = std::filesystem::path(o.out_dir) / "bandit_sweep.csv";
    write_file_atomic(path, mse_csv(rows));
    out << "classifier_accuracy: " << format_double(ctx.accuracy()) << "\n"
        << "divergence: " << format_double(bandit::policy_alpha_divergence(e.theta, e.theta0, e.alpha)) << "\n"
        << "max_weight: " << format_double(bandit::max_policy_weight(e.theta, e.theta0)) << "\n"
        << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_portfolio(const CLI::App* s, const Options& o, std::ostream& out) {
    out << "seed: " << o.seed << "\n";
    const auto cfg = given(s, "--config") ? portfolio::parse_portfolio_config(read_file(o.config_path))
                                          : portfolio::default_portfolio_config();
    std::vector<portfolio::PricingRule> rules;
    for (const auto& r : o.rules) rules.push_back(portfolio::parse_pricing_rule(r));
    if (rules.empty())
        rules = {portfolio::PricingRule::lr, portfolio::PricingRule::trulr_m, portfolio::PricingRule::trulr_s};
    RandomStream ref_stream(o.seed, 0xEF000000ULL);
    const auto ref = portfolio::reference_price(cfg, o.reference_m, ref_stream);
    double truth = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        truth += ref[i].price;
        out << "reference_price[" << i + 1 << "]: " << format_double(ref[i].price) << " (se "
            << format_double(ref[i].std_error) << ")\n";
    }
    const auto rows = portfolio::run_portfolio_sweep(cfg, o.n, o.reps, o.delta, o.seed, truth, rules, o.threads);
    const auto path = std::filesystem::path(o.out_dir) / "portfolio_sweep.csv";
    write_file_atomic(path, mse_csv(rows));
    write_file_atomic(std::filesystem::path(o.out_dir) / "portfolio_config.json", portfolio::portfolio_config_to_json(cfg));
    out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_divergence(const CLI::App* s, const Options& o, std::ostream& out) {
    const auto behavior = make_distribution(o.family, o.behavior);
    const auto target = make_distribution(o.family, o.target);
    const auto closed = alpha_divergence_closed(target, behavior, o.alpha);
    out << "closed_form: " << format_double(closed.value) << "\n";
    if (given(s, "--mc")) {
        if (!given(s, "--seed")) throw std::invalid_argument("--mc requires --seed");
        out << "seed: " << o.seed << "\n";
        RandomStream rs(o.seed, 0);
        const auto v = validate_divergence(target, behavior, o.alpha, o.mc, rs);
        out << "monte_carlo: " << format_double(v.mc) << "\n"
            << "std_error: " << format_double(v.std_error) << "\n"
            << "z_score: " << format_double(v.z_score) << "\n"
            << "flagged: " << (v.flagged ? "yes" : "no") << "\n";
    }
    return 0;
}

int cmd_boundary(const CLI::App* s, const Options& o, std::ostream& out) {
    const BoundarySpec spec = spec_from(o.rule, s, o);
    ProblemConstants pc;
    pc.alpha = o.alpha;
    pc.n = o.n;
    pc.delta = o.delta;
    pc.divergence = o.divergence;
    if (given(s, "--p")) pc.p = o.p;
    const auto r = resolve_boundary(spec, pc);
    out << "tau: " << format_double(r.tau) << "\n";
    if (spec.rule != BoundaryRule::fixed)
        out << "x_star: " << format_double(r.x_star) << "\n" << "constant: " << format_double(r.constant) << "\n";
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    return 0;
}

}  // namespace

std::string help_text(const std::string& subcommand) {
    Options o;
    Built b = build(o);
    if (subcommand.empty()) return b.app->help();
    return b.app->get_subcommand(subcommand)->help();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    Built b = build(o);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        b.app->parse(rev);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = b.app.get();
        for (CLI::App* s : b.subs)
            if (s->parsed()) target = s;
        out << target->help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return 1;
    }
    try {
        for (CLI::App* s : b.subs) {
            if (!s->parsed()) continue;
            const std::string name = s->get_name();
            if (name == "synthetic") return cmd_sweep(s, o, false, out);
            if (name == "quantiles") return cmd_sweep(s, o, true, out);
            if (name == "anticonc") return cmd_anticonc(s, o, out);
            if (name == "coverage") return cmd_coverage(s, o, out);
            if (name == "bandit") return cmd_bandit(s, o, out);
            if (name == "portfolio") return cmd_portfolio(s, o, out);
            if (name == "divergence") return cmd_divergence(s, o, out);
            if (name == "boundary") return cmd_boundary(s, o, out);
        }
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << "error: no subcommand\n";
    return 1;
}

}  // namespace trulr::cli
