#include "trulr/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "trulr/boundaries.hpp"
#include "trulr/divergence.hpp"
#include "trulr/parallel.hpp"

namespace trulr::portfolio {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

const json& need(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw std::invalid_argument(where + ": missing key '" + key + "'");
    return j.at(key);
}

double number(const json& v, const std::string& what) {
    if (!v.is_number()) throw std::invalid_argument(what + " must be a number");
    return v.get<double>();
}

std::pair<double, double> theta_pair(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 2) throw std::invalid_argument(what + " must be [S0, sigma]");
    return {number(v[0], what), number(v[1], what)};
}

std::string where(std::size_t option, std::size_t week) {
    return "option " + std::to_string(option + 1) + ", week " + std::to_string(week + 1);
}

}  // namespace

void MarketParams::validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("market: T must be positive");
    if (M < 1) throw std::invalid_argument("market: M must be >= 1");
    if (!std::isfinite(r)) throw std::invalid_argument("market: r must be finite");
}

void OptionSpec::validate() const {
    if (!(K > 0.0)) throw std::invalid_argument("option: strike K must be positive");
    if (theta_weeks.empty()) throw std::invalid_argument("option: at least one week is required");
    if (alphas.size() != theta_weeks.size())
        throw std::invalid_argument("option: need one alpha per week (" + std::to_string(theta_weeks.size()) + " weeks, " +
                                    std::to_string(alphas.size()) + " alphas)");
    auto check = [](std::pair<double, double> t, const std::string& what) {
        if (!(t.first > 0.0 && t.second > 0.0)) throw std::invalid_argument(what + ": S0 and sigma must be positive");
    };
    check(theta_target, "option target");
    const double st = theta_target.second;
    for (std::size_t j = 0; j < theta_weeks.size(); ++j) {
        check(theta_weeks[j], "option week " + std::to_string(j + 1));
        const double a = alphas[j], sw = theta_weeks[j].second;
        if (!(a > 1.0)) throw std::invalid_argument("option week " + std::to_string(j + 1) + ": alpha must be > 1");
        if (!((1.0 - a) * st * st + a * sw * sw > 0.0))
            throw std::invalid_argument("option week " + std::to_string(j + 1) +
                                        ": (1 - alpha) sigma_target^2 + alpha sigma_week^2 must be positive");
    }
}

void PortfolioConfig::validate() const {
    market.validate();
    if (options.empty()) throw std::invalid_argument("portfolio: no options");
    for (const auto& o : options) o.validate();
    if (!(p > 2.0)) throw std::invalid_argument("portfolio: p must be > 2");
}

PortfolioConfig default_portfolio_config() {
    PortfolioConfig c;
    c.market = {0.05, 0.25, 13};
    c.p = 40.0;
    OptionSpec o1{100.0, {{100, 0.18}, {102.5, 0.18}, {105, 0.24}, {107.5, 0.24}}, {110, 0.36}, {1.2, 1.2, 1.6, 1.6}};
    OptionSpec o2{45.0, {{55, 0.70}, {65, 0.70}, {65, 0.70}, {60, 0.70}}, {55, 0.25}, {1.7, 1.7, 1.7, 1.7}};
    OptionSpec o3{80.0, {{80, 0.10}, {85, 0.15}, {75, 0.20}, {85, 0.25}}, {80, 0.30}, {1.1, 1.2, 1.2, 1.6}};
    c.options = {o1, o2, o3};
    return c;
}

PortfolioConfig parse_portfolio_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("portfolio config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("portfolio config: top level must be an object");
    reject_unknown(j, {"r", "T", "M", "p", "options"}, "portfolio config");
    PortfolioConfig c;
    c.market.r = number(need(j, "r", "portfolio config"), "r");
    c.market.T = number(need(j, "T", "portfolio config"), "T");
    const json& M = need(j, "M", "portfolio config");
    if (!M.is_number_integer()) throw std::invalid_argument("M must be an integer");
    c.market.M = M.get<int>();
    if (j.contains("p")) c.p = number(j["p"], "p");
    const json& opts = need(j, "options", "portfolio config");
    if (!opts.is_array()) throw std::invalid_argument("options must be an array");
    for (std::size_t i = 0; i < opts.size(); ++i) {
        const std::string w = "options[" + std::to_string(i) + "]";
        const json& o = opts[i];
        if (!o.is_object()) throw std::invalid_argument(w + " must be an object");
        reject_unknown(o, {"K", "weeks", "target", "alphas"}, w);
        OptionSpec s;
        s.K = number(need(o, "K", w), w + ".K");
        const json& weeks = need(o, "weeks", w);
        if (!weeks.is_array()) throw std::invalid_argument(w + ".weeks must be an array");
        for (const auto& t : weeks) s.theta_weeks.push_back(theta_pair(t, w + ".weeks"));
        s.theta_target = theta_pair(need(o, "target", w), w + ".target");
        const json& al = need(o, "alphas", w);
        if (!al.is_array()) throw std::invalid_argument(w + ".alphas must be an array");
        for (const auto& a : al) s.alphas.push_back(number(a, w + ".alphas"));
        c.options.push_back(std::move(s));
    }
    c.validate();
    return c;
}

std::string portfolio_config_to_json(const PortfolioConfig& c) {
    json j;
    j["r"] = c.market.r;
    j["T"] = c.market.T;
    j["M"] = c.market.M;
    j["p"] = c.p;
    j["options"] = json::array();
    for (const auto& o : c.options) {
        json jo;
        jo["K"] = o.K;
        jo["weeks"] = json::array();
        for (const auto& [s0, sig] : o.theta_weeks) jo["weeks"].push_back({s0, sig});
        jo["target"] = {o.theta_target.first, o.theta_target.second};
        jo["alphas"] = o.alphas;
        j["options"].push_back(jo);
    }
    return j.dump(2) + "\n";
}

MvNormalParams input_model(double S0, double sigma, const MarketParams& market) {
    if (!(S0 > 0.0 && sigma > 0.0)) throw std::invalid_argument("input_model: S0 and sigma must be positive");
    market.validate();
    const int M = market.M;
    const double dt = market.dt();
    MvNormalParams p;
    p.mean.resize(M);
    p.cov.resize(M, M);
    for (int m = 0; m < M; ++m) {
        p.mean[m] = std::log(S0) + (market.r - 0.5 * sigma * sigma) * dt * (m + 1);
        for (int k = 0; k < M; ++k) p.cov(m, k) = sigma * sigma * dt * (std::min(m, k) + 1);
    }
    return p;
}

double asian_payoff(const Eigen::Ref<const Eigen::VectorXd>& x, double K, const MarketParams& market) {
    if (x.size() != market.M) throw std::invalid_argument("asian_payoff: path length must equal M");
    // relative to K, so a path sitting at ln K pays exactly zero
    const double rel = (x.array() - std::log(K)).exp().mean();
    return std::exp(-market.r * market.T) * K * std::max(rel - 1.0, 0.0);
}

SurrogateValue surrogate_payoff(const Eigen::Ref<const Eigen::VectorXd>& x, double K, const MarketParams& market) {
    if (x.size() != market.M) throw std::invalid_argument("surrogate_payoff: path length must equal M");
    const double lk = std::log(K);
    double s = 0.0;
    for (Eigen::Index m = 0; m < x.size(); ++m) {
        const double d = x[m] - lk;
        s += d + 0.5 * d * d;
    }
    return {std::exp(-market.r * market.T) * std::max(K / market.M * s, 0.0)};
}

HistoryBatch generate_history(const PortfolioConfig& config, std::size_t n, RandomStream& stream) {
    if (n < 1) throw std::invalid_argument("generate_history: n must be >= 1");
    HistoryBatch h;
    h.n = n;
    h.paths.resize(config.options.size());
    for (std::size_t i = 0; i < config.options.size(); ++i) {
        const auto& o = config.options[i];
        for (const auto& [s0, sig] : o.theta_weeks) {
            const MvNormal d(input_model(s0, sig, config.market));
            h.paths[i].push_back(d.sample(stream, n));
        }
    }
    return h;
}

PricingRule parse_pricing_rule(const std::string& s) {
    if (s == "lr") return PricingRule::lr;
    if (s == "trulr_m" || s == "trulr-m") return PricingRule::trulr_m;
    if (s == "trulr_s" || s == "trulr-s") return PricingRule::trulr_s;
    throw std::invalid_argument("unknown pricing rule: " + s + " (expected lr, trulr_m or trulr_s)");
}

std::string to_string(PricingRule r) {
    switch (r) {
        case PricingRule::lr: return "lr";
        case PricingRule::trulr_m: return "trulr_m";
        case PricingRule::trulr_s: return "trulr_s";
    }
    return "?";
}

Eigen::VectorXd log_density_columns(const MvNormal& d, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Z = X.colwise() - d.mean();
    d.chol_lower().triangularView<Eigen::Lower>().solveInPlace(Z);
    const double c = -0.5 * static_cast<double>(d.dim()) * std::log(2.0 * std::numbers::pi) - 0.5 * d.log_det();
    return (-0.5 * Z.colwise().squaredNorm().array() + c).matrix().transpose();
}

PortfolioPrice price_portfolio(const PortfolioConfig& config, const HistoryBatch& history, PricingRule rule,
                               double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("price_portfolio: delta must lie in (0, 1)");
    if (history.paths.size() != config.options.size())
        throw std::invalid_argument("price_portfolio: history does not match the number of options");
    PortfolioPrice out;
    for (std::size_t i = 0; i < config.options.size(); ++i) {
        const auto& o = config.options[i];
        if (history.paths[i].size() != o.theta_weeks.size())
            throw std::invalid_argument("price_portfolio: history does not match the weeks of option " + std::to_string(i + 1));
        const MvNormal target(input_model(o.theta_target.first, o.theta_target.second, config.market));
        std::vector<WeightedSample> batches;
        std::vector<double> taus;
        for (std::size_t j = 0; j < o.theta_weeks.size(); ++j) {
            const MvNormal week(input_model(o.theta_weeks[j].first, o.theta_weeks[j].second, config.market));
            const Eigen::MatrixXd& X = history.paths[i][j];
            if (X.rows() != config.market.M) throw std::invalid_argument("price_portfolio: path dimension must equal M");
            const Eigen::VectorXd lw = log_density_columns(target, X) - log_density_columns(week, X);
            const auto n = static_cast<std::size_t>(X.cols());
            WeightedSample ws;
            ws.h_values.resize(n);
            ws.weights.resize(n);
            std::vector<double> sur(n);
            for (std::size_t s = 0; s < n; ++s) {
                const auto col = X.col(static_cast<Eigen::Index>(s));
                ws.h_values[s] = asian_payoff(col, o.K, config.market);
                ws.weights[s] = std::exp(lw[static_cast<Eigen::Index>(s)]);
                if (rule != PricingRule::lr) sur[s] = surrogate_payoff(col, o.K, config.market).value;
            }
            double tau = kInfinity;
            if (rule != PricingRule::lr) {
                ProblemConstants pc;
                pc.alpha = o.alphas[j];
                pc.n = n;
                pc.delta = delta;
                pc.p = config.p;
                try {
                    pc.divergence = std::exp(log_alpha_divergence(target, week, pc.alpha));
                } catch (const DivergenceUndefined& e) {
                    throw DivergenceUndefined(where(i, j) + ": " + e.what());
                }
                pc.h_p_norm = plug_in_p_norm(sur, config.p);
                const BoundarySpec spec = rule == PricingRule::trulr_m ? BoundarySpec::pnorm_mgf_optimal(config.p)
                                                                       : BoundarySpec::pnorm_simple(config.p);
                try {
                    tau = truncation_boundary(spec, pc);
                } catch (const std::invalid_argument& e) {
                    throw std::invalid_argument(where(i, j) + ": " + e.what());
                }
            }
            batches.push_back(std::move(ws));
            taus.push_back(tau);
        }
        out.per_option.push_back(multi_batch_estimate(batches, taus));
        out.taus.push_back(std::move(taus));
        out.total += out.per_option.back().estimate;
    }
    return out;
}

std::vector<ReferencePrice> reference_price(const PortfolioConfig& config, std::size_t m, RandomStream& stream) {
    if (m < 1000000) throw std::invalid_argument("reference_price: m must be >= 1e6");
    std::vector<ReferencePrice> out;
    constexpr std::size_t chunk = 100000;
    for (const auto& o : config.options) {
        const MvNormal d(input_model(o.theta_target.first, o.theta_target.second, config.market));
        // chunk sums, combined pairwise at the end
        std::vector<double> sums, sq;
        double shift = std::nan("");
        for (std::size_t done = 0; done < m; done += chunk) {
            const std::size_t c = std::min(chunk, m - done);
            const Eigen::MatrixXd X = d.sample(stream, c);
            std::vector<double> v(c);
            for (std::size_t s = 0; s < c; ++s) v[s] = asian_payoff(X.col(static_cast<Eigen::Index>(s)), o.K, config.market);
            if (std::isnan(shift)) shift = pairwise_sum(v) / static_cast<double>(c);
            sums.push_back(pairwise_sum(c, [&](std::size_t s) { return v[s] - shift; }));
            sq.push_back(pairwise_sum(c, [&](std::size_t s) { return (v[s] - shift) * (v[s] - shift); }));
        }
        const double md = static_cast<double>(m);
        const double mean_dev = pairwise_sum(sums) / md;
        const double var = (pairwise_sum(sq) - md * mean_dev * mean_dev) / (md - 1.0);
        out.push_back({shift + mean_dev, std::sqrt(std::max(var, 0.0) / md)});
    }
    return out;
}

std::vector<SweepResult> run_portfolio_sweep(const PortfolioConfig& config, std::size_t n, std::size_t reps,
                                             double delta, std::uint64_t seed, double truth,
                                             const std::vector<PricingRule>& rules, unsigned threads) {
    config.validate();
    if (rules.empty()) throw std::invalid_argument("run_portfolio_sweep: no rules");
    if (reps < 1) throw std::invalid_argument("run_portfolio_sweep: reps must be >= 1");
    const std::size_t R = rules.size();
    const auto per_rep = replicate_streams<std::vector<double>>(
        reps, seed,
        [&](RandomStream& rs) {
            const HistoryBatch h = generate_history(config, n, rs);
            std::vector<double> out(3 * R);
            for (std::size_t k = 0; k < R; ++k) {
                const PortfolioPrice pp = price_portfolio(config, h, rules[k], delta);
                double frac = 0.0, tau = 0.0;
                std::size_t weeks = 0;
                for (std::size_t i = 0; i < pp.per_option.size(); ++i) {
                    frac += pp.per_option[i].fraction_truncated;
                    for (double t : pp.taus[i]) {
                        tau += t;
                        ++weeks;
                    }
                }
                out[k] = pp.total;
                out[R + k] = frac / static_cast<double>(pp.per_option.size());
                out[2 * R + k] = tau / static_cast<double>(weeks);
            }
            return out;
        },
        threads);
    std::vector<SweepResult> rows;
    for (std::size_t k = 0; k < R; ++k) {
        std::vector<double> est(reps), frac(reps);
        for (std::size_t r = 0; r < reps; ++r) {
            est[r] = per_rep[r][k];
            frac[r] = per_rep[r][R + k];
        }
        double tau = 0.0;
        for (std::size_t r = 0; r < reps; ++r) tau += per_rep[r][2 * R + k];
        rows.push_back(summarize_estimates("portfolio", to_string(rules[k]), n, est, truth,
                                           tau / static_cast<double>(reps), pairwise_sum(frac) / static_cast<double>(reps),
                                           seed));
    }
    return rows;
}

}  // namespace trulr::portfolio
