#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trulr/boundaries.hpp"
#include "trulr/estimators.hpp"
#include "trulr/harness.hpp"
#include "trulr/random.hpp"

namespace trulr::bandit {

inline constexpr int kNumActions = 26;
inline constexpr int kNumFeatures = 16;

struct LabeledInstance {
    std::array<int, kNumFeatures> features{};
    int label = 1;  // 1..26, A..Z
};

// One instance per line: "T,2,8,3,5,1,8,13,0,6,6,10,8,0,8,0,8".
std::vector<LabeledInstance> parse_letter_dataset(std::istream& in);
std::vector<LabeledInstance> load_letter_dataset(const std::filesystem::path& path);
std::string format_letter_dataset(const std::vector<LabeledInstance>& data);

// Letter-format stand-in: 26 random integer prototypes plus rounded Gaussian
// feature noise, clipped to [0, 15]; labels uniform over A..Z.
std::vector<LabeledInstance> generate_synthetic_letters(std::size_t count, std::uint64_t seed, double noise_sd = 2.5);

struct DatasetSplit {
    std::vector<LabeledInstance> train;
    std::vector<LabeledInstance> eval;
};

// Seeded Fisher-Yates shuffle, then the first floor(train_frac * N) go to train.
DatasetSplit split(const std::vector<LabeledInstance>& data, double train_frac, RandomStream& stream);

class NearestCentroid {
public:
    explicit NearestCentroid(const std::vector<LabeledInstance>& train);
    // argmin Euclidean distance; ties go to the smaller class index
    int predict(const std::array<int, kNumFeatures>& x) const;
    double accuracy(const std::vector<LabeledInstance>& data) const;
    const std::array<std::array<double, kNumFeatures>, kNumActions>& centroids() const { return centroids_; }

private:
    std::array<std::array<double, kNumFeatures>, kNumActions> centroids_{};
};

NearestCentroid train_nearest_centroid(const std::vector<LabeledInstance>& train);

// Puts theta + (1-theta)/26 on the classifier's pick and (1-theta)/26 elsewhere.
class EpsilonBoostPolicy {
public:
    EpsilonBoostPolicy(double theta, const NearestCentroid& classifier);

    double theta() const { return theta_; }
    const NearestCentroid& classifier() const { return *classifier_; }
    double top_probability() const { return top_; }
    double other_probability() const { return other_; }
    double probability(int action, int predicted) const { return action == predicted ? top_ : other_; }

private:
    double theta_;
    const NearestCentroid* classifier_;
    double top_, other_;
};

// Evaluation contexts with the classifier's predictions cached.
struct EvalContexts {
    EvalContexts(std::vector<LabeledInstance> eval_set, const NearestCentroid& classifier);

    std::vector<LabeledInstance> instances;
    std::vector<int> predictions;
    double accuracy() const;
};

enum class RewardKind { binary, normal };
RewardKind parse_reward_kind(const std::string& s);
std::string to_string(RewardKind k);

struct LoggedRecord {
    std::size_t context_index = 0;
    int action = 1;
    double reward = 0.0;
    double behavior_prob = 0.0;
};

// Mean over contexts of pi_theta(label_i | x_i); the Gaussian reward noise has mean zero.
double true_policy_value(const EpsilonBoostPolicy& policy, const EvalContexts& contexts, RewardKind reward_kind);

std::vector<LoggedRecord> collect_logged_data(const EpsilonBoostPolicy& behavior, const EvalContexts& contexts,
                                              std::size_t n, RewardKind reward_kind, RandomStream& stream);

// sum over actions of p^alpha p0^{1-alpha}, identical for every context.
double policy_alpha_divergence(double theta, double theta0, double alpha);
double max_policy_weight(double theta, double theta0);

// h = reward, weight = target/behavior probability; tau from the spec with
// I_alpha and n filled in from the policies and the log.
EstimateReport evaluate_offline(const std::vector<LoggedRecord>& logged, const EvalContexts& contexts,
                                const EpsilonBoostPolicy& target, const BoundarySpec& spec,
                                ProblemConstants constants, double behavior_theta);

// ||reward||_p under the behavior policy's logging distribution.
double reward_p_norm(const EvalContexts& contexts, double behavior_theta, RewardKind reward_kind, double p);

struct BanditExperiment {
    std::string scenario_id = "bandit";
    double theta0 = 0.5;
    double theta = 0.99;
    double alpha = 1.3;
    double delta = 0.01;
    std::optional<double> p;
    RewardKind reward = RewardKind::binary;
    std::vector<std::size_t> n_grid;
    std::size_t reps = 100;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, BoundarySpec>> estimators;
};

// Streams per (n_index, rep) as in the harness; all estimators share each log.
std::vector<SweepResult> run_bandit_sweep(const BanditExperiment& exp, const EvalContexts& contexts,
                                          unsigned threads = 0);

}  // namespace trulr::bandit
