#include "trulr/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "trulr/distributions.hpp"
#include "trulr/parallel.hpp"

namespace trulr::bandit {

namespace {

using boost::multiprecision::cpp_rational;

cpp_rational exact(double x) {
    int e = 0;
    const double m = std::frexp(x, &e);
    const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
    cpp_rational r(mant);
    e -= 53;
    cpp_rational scale(1);
    for (int i = 0; i < std::abs(e); ++i) scale *= 2;
    if (e >= 0) return r * scale;
    return r / scale;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<LabeledInstance> parse_letter_dataset(std::istream& in) {
    std::vector<LabeledInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(trim(f));
        if (fields.size() != 1 + kNumFeatures)
            throw std::runtime_error("letter dataset line " + std::to_string(line_no) + ": expected 17 fields, got " +
                                     std::to_string(fields.size()));
        if (fields[0].size() != 1 || fields[0][0] < 'A' || fields[0][0] > 'Z')
            throw std::runtime_error("letter dataset line " + std::to_string(line_no) + ": label must be a capital letter");
        LabeledInstance inst;
        inst.label = fields[0][0] - 'A' + 1;
        for (int k = 0; k < kNumFeatures; ++k) {
            const std::string& v = fields[static_cast<std::size_t>(k) + 1];
            std::size_t pos = 0;
            int x = 0;
            try {
                x = std::stoi(v, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (v.empty() || pos != v.size() || x < 0 || x > 15)
                throw std::runtime_error("letter dataset line " + std::to_string(line_no) + ": feature " +
                                         std::to_string(k + 1) + " must be an integer in [0, 15]");
            inst.features[static_cast<std::size_t>(k)] = x;
        }
        out.push_back(inst);
    }
    return out;
}

std::vector<LabeledInstance> load_letter_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open letter dataset: " + path.string());
    return parse_letter_dataset(in);
}

std::string format_letter_dataset(const std::vector<LabeledInstance>& data) {
    std::ostringstream os;
    for (const auto& d : data) {
        os << static_cast<char>('A' + d.label - 1);
        for (int x : d.features) os << ',' << x;
        os << '\n';
    }
    return os.str();
}

std::vector<LabeledInstance> generate_synthetic_letters(std::size_t count, std::uint64_t seed, double noise_sd) {
    RandomStream rs(seed, 0x1e77e5ULL);
    std::array<std::array<int, kNumFeatures>, kNumActions> proto{};
    for (auto& p : proto)
        for (auto& x : p) x = static_cast<int>(rs.below(16));
    std::vector<LabeledInstance> out(count);
    for (auto& inst : out) {
        inst.label = static_cast<int>(rs.below(kNumActions)) + 1;
        const auto& p = proto[static_cast<std::size_t>(inst.label - 1)];
        for (int k = 0; k < kNumFeatures; ++k) {
            const double v = p[static_cast<std::size_t>(k)] + noise_sd * rs.normal();
            inst.features[static_cast<std::size_t>(k)] = std::clamp(static_cast<int>(std::lround(v)), 0, 15);
        }
    }
    return out;
}

DatasetSplit split(const std::vector<LabeledInstance>& data, double train_frac, RandomStream& stream) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("split: train_frac must lie in (0, 1)");
    std::vector<LabeledInstance> shuffled = data;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        const std::size_t j = stream.below(i);
        std::swap(shuffled[i - 1], shuffled[j]);
    }
    const auto k = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(data.size()) + 1e-9));
    DatasetSplit s;
    s.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
    s.eval.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
    return s;
}

NearestCentroid::NearestCentroid(const std::vector<LabeledInstance>& train) {
    std::array<std::size_t, kNumActions> counts{};
    for (const auto& inst : train) {
        if (inst.label < 1 || inst.label > kNumActions) throw std::invalid_argument("NearestCentroid: label out of range");
        auto& c = centroids_[static_cast<std::size_t>(inst.label - 1)];
        for (int k = 0; k < kNumFeatures; ++k) c[static_cast<std::size_t>(k)] += inst.features[static_cast<std::size_t>(k)];
        ++counts[static_cast<std::size_t>(inst.label - 1)];
    }
    for (int a = 0; a < kNumActions; ++a) {
        const auto cnt = counts[static_cast<std::size_t>(a)];
        if (cnt == 0)
            throw std::invalid_argument(std::string("NearestCentroid: class ") + static_cast<char>('A' + a) +
                                        " missing from training data");
        for (auto& v : centroids_[static_cast<std::size_t>(a)]) v /= static_cast<double>(cnt);
    }
}

int NearestCentroid::predict(const std::array<int, kNumFeatures>& x) const {
    int best = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < kNumActions; ++a) {
        double d = 0.0;
        const auto& c = centroids_[static_cast<std::size_t>(a)];
        for (int k = 0; k < kNumFeatures; ++k) {
            const double t = x[static_cast<std::size_t>(k)] - c[static_cast<std::size_t>(k)];
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = a + 1;
        }
    }
    return best;
}

double NearestCentroid::accuracy(const std::vector<LabeledInstance>& data) const {
    if (data.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& d : data) ok += predict(d.features) == d.label ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

NearestCentroid train_nearest_centroid(const std::vector<LabeledInstance>& train) { return NearestCentroid(train); }

EpsilonBoostPolicy::EpsilonBoostPolicy(double theta, const NearestCentroid& classifier)
    : theta_(theta), classifier_(&classifier) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("EpsilonBoostPolicy: theta must lie in [0, 1]");
    const cpp_rational t = exact(theta);
    const cpp_rational other = (1 - t) / kNumActions;
    if (t + other + (kNumActions - 1) * other != 1)
        throw std::logic_error("EpsilonBoostPolicy: probabilities do not sum to 1");
    other_ = (1.0 - theta) / kNumActions;
    top_ = theta + other_;
}

EvalContexts::EvalContexts(std::vector<LabeledInstance> eval_set, const NearestCentroid& classifier)
    : instances(std::move(eval_set)) {
    if (instances.empty()) throw std::invalid_argument("EvalContexts: empty evaluation set");
    predictions.reserve(instances.size());
    for (const auto& d : instances) predictions.push_back(classifier.predict(d.features));
}

double EvalContexts::accuracy() const {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) ok += predictions[i] == instances[i].label ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(instances.size());
}

RewardKind parse_reward_kind(const std::string& s) {
    if (s == "binary") return RewardKind::binary;
    if (s == "normal") return RewardKind::normal;
    throw std::invalid_argument("unknown reward kind: " + s + " (expected binary or normal)");
}

std::string to_string(RewardKind k) { return k == RewardKind::binary ? "binary" : "normal"; }

double true_policy_value(const EpsilonBoostPolicy& policy, const EvalContexts& contexts, RewardKind) {
    return pairwise_sum(contexts.instances.size(), [&](std::size_t i) {
               return policy.probability(contexts.instances[i].label, contexts.predictions[i]);
           }) /
           static_cast<double>(contexts.instances.size());
}

std::vector<LoggedRecord> collect_logged_data(const EpsilonBoostPolicy& behavior, const EvalContexts& contexts,
                                              std::size_t n, RewardKind reward_kind, RandomStream& stream) {
    if (n < 1) throw std::invalid_argument("collect_logged_data: n must be >= 1");
    std::vector<LoggedRecord> out(n);
    const double top = behavior.top_probability();
    for (auto& rec : out) {
        rec.context_index = static_cast<std::size_t>(stream.below(contexts.instances.size()));
        const int pred = contexts.predictions[rec.context_index];
        if (stream.uniform() < top) {
            rec.action = pred;
        } else {
            int k = static_cast<int>(stream.below(kNumActions - 1)) + 1;
            rec.action = k >= pred ? k + 1 : k;
        }
        rec.behavior_prob = behavior.probability(rec.action, pred);
        const bool correct = rec.action == contexts.instances[rec.context_index].label;
        rec.reward = reward_kind == RewardKind::binary ? (correct ? 1.0 : 0.0)
                                                       : (correct ? 1.0 : 0.0) + 0.5 * stream.normal();
    }
    return out;
}

double policy_alpha_divergence(double theta, double theta0, double alpha) {
    if (!(alpha > 1.0)) throw std::invalid_argument("policy_alpha_divergence: alpha must be > 1");
    if (!(theta >= 0.0 && theta <= 1.0 && theta0 >= 0.0 && theta0 <= 1.0))
        throw std::invalid_argument("policy_alpha_divergence: thetas must lie in [0, 1]");
    const double other = (1.0 - theta) / kNumActions, top = theta + other;
    const double other0 = (1.0 - theta0) / kNumActions, top0 = theta0 + other0;
    if (other > 0.0 && other0 == 0.0)
        throw AbsoluteContinuityError("policy_alpha_divergence: behavior theta0 = 1 cannot cover target theta < 1");
    double v = std::pow(top, alpha) * std::pow(top0, 1.0 - alpha);
    if (other > 0.0) v += (kNumActions - 1) * std::pow(other, alpha) * std::pow(other0, 1.0 - alpha);
    return v;
}

double max_policy_weight(double theta, double theta0) {
    const double other = (1.0 - theta) / kNumActions, top = theta + other;
    const double other0 = (1.0 - theta0) / kNumActions, top0 = theta0 + other0;
    double w = top / top0;
    if (other > 0.0) {
        if (other0 == 0.0) return kInfinity;
        w = std::max(w, other / other0);
    }
    return w;
}

EstimateReport evaluate_offline(const std::vector<LoggedRecord>& logged, const EvalContexts& contexts,
                                const EpsilonBoostPolicy& target, const BoundarySpec& spec,
                                ProblemConstants constants, double behavior_theta) {
    if (logged.empty()) throw std::invalid_argument("evaluate_offline: empty log");
    std::vector<double> h(logged.size()), w(logged.size());
    for (std::size_t i = 0; i < logged.size(); ++i) {
        const auto& r = logged[i];
        if (!(r.behavior_prob > 0.0))
            throw AbsoluteContinuityError("evaluate_offline: record " + std::to_string(i) + " has zero behavior probability");
        h[i] = r.reward;
        w[i] = target.probability(r.action, contexts.predictions[r.context_index]) / r.behavior_prob;
    }
    constants.divergence = policy_alpha_divergence(target.theta(), behavior_theta, constants.alpha);
    constants.n = logged.size();
    const double tau = truncation_boundary(spec, constants);
    return trulr_estimate(h, w, tau);
}

double reward_p_norm(const EvalContexts& contexts, double behavior_theta, RewardKind reward_kind, double p) {
    if (!(p > 0.0)) throw std::invalid_argument("reward_p_norm: p must be positive");
    const double q = pairwise_sum(contexts.instances.size(), [&](std::size_t i) {
                         const double other = (1.0 - behavior_theta) / kNumActions;
                         return contexts.predictions[i] == contexts.instances[i].label ? behavior_theta + other : other;
                     }) /
                     static_cast<double>(contexts.instances.size());
    if (reward_kind == RewardKind::binary) return std::pow(q, 1.0 / p);
    const double m1 = std::pow(identity_p_norm(Normal(1.0, 0.5), p), p);
    const double m0 = std::pow(identity_p_norm(Normal(0.0, 0.5), p), p);
    return std::pow(q * m1 + (1.0 - q) * m0, 1.0 / p);
}

std::vector<SweepResult> run_bandit_sweep(const BanditExperiment& exp, const EvalContexts& contexts, unsigned threads) {
    if (exp.estimators.empty()) throw std::invalid_argument("run_bandit_sweep: no estimators");
    if (exp.n_grid.empty() || exp.reps < 1) throw std::invalid_argument("run_bandit_sweep: empty n grid or reps");
    std::vector<SweepResult> rows;
    for (std::size_t ni = 0; ni < exp.n_grid.size(); ++ni) {
        const std::size_t n = exp.n_grid[ni];
        ProblemConstants pc;
        pc.alpha = exp.alpha;
        pc.delta = exp.delta;
        pc.n = n;
        pc.p = exp.p;
        pc.divergence = policy_alpha_divergence(exp.theta, exp.theta0, exp.alpha);
        pc.h_inf_norm = exp.reward == RewardKind::binary ? std::optional<double>(1.0) : std::nullopt;
        std::vector<double> taus;
        for (const auto& [label, spec] : exp.estimators) taus.push_back(truncation_boundary(spec, pc));

        const double top0 = exp.theta0 + (1.0 - exp.theta0) / kNumActions, other0 = (1.0 - exp.theta0) / kNumActions;
        const double top = exp.theta + (1.0 - exp.theta) / kNumActions, other = (1.0 - exp.theta) / kNumActions;
        const std::size_t E = taus.size();
        const auto per_rep = replicate_streams<std::vector<double>>(
            exp.reps, exp.seed,
            [&](RandomStream& rs) {
                std::vector<double> h(n), w(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t c = static_cast<std::size_t>(rs.below(contexts.instances.size()));
                    const int pred = contexts.predictions[c];
                    int action;
                    if (rs.uniform() < top0) {
                        action = pred;
                    } else {
                        const int k = static_cast<int>(rs.below(kNumActions - 1)) + 1;
                        action = k >= pred ? k + 1 : k;
                    }
                    const bool correct = action == contexts.instances[c].label;
                    h[i] = exp.reward == RewardKind::binary ? (correct ? 1.0 : 0.0) : (correct ? 1.0 : 0.0) + 0.5 * rs.normal();
                    w[i] = action == pred ? top / top0 : other / other0;
                }
                std::vector<double> out(2 * E);
                for (std::size_t e = 0; e < E; ++e) {
                    const auto r = trulr_estimate(h, w, taus[e]);
                    out[e] = r.estimate;
                    out[E + e] = r.fraction_truncated;
                }
                return out;
            },
            threads, static_cast<std::uint64_t>(ni) << 32);

        double truth = 0.0;
        for (std::size_t i = 0; i < contexts.instances.size(); ++i)
            truth += contexts.predictions[i] == contexts.instances[i].label ? top : other;
        truth /= static_cast<double>(contexts.instances.size());

        for (std::size_t e = 0; e < E; ++e) {
            std::vector<double> est(exp.reps), frac(exp.reps);
            for (std::size_t r = 0; r < exp.reps; ++r) {
                est[r] = per_rep[r][e];
                frac[r] = per_rep[r][E + e];
            }
            rows.push_back(summarize_estimates(exp.scenario_id, exp.estimators[e].first, n, est, truth, taus[e],
                                               pairwise_sum(frac) / static_cast<double>(exp.reps), exp.seed));
        }
    }
    return rows;
}

}  // namespace trulr::bandit
