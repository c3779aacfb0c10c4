#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "trulr/bandit.hpp"
#include "trulr/divergence.hpp"

using namespace trulr;
using namespace trulr::bandit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Fixture {
    std::vector<LabeledInstance> data;
    DatasetSplit parts;
    NearestCentroid clf;
    EvalContexts contexts;

    static DatasetSplit make_split(const std::vector<LabeledInstance>& d) {
        RandomStream rs(1, 0x5b117);
        return split(d, 0.3, rs);
    }
    Fixture()
        : data(generate_synthetic_letters(20000, 1)),
          parts(make_split(data)),
          clf(parts.train),
          contexts(parts.eval, clf) {}
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

LabeledInstance instance(int label, int fill) {
    LabeledInstance x;
    x.label = label;
    x.features.fill(fill);
    return x;
}

ProblemConstants bandit_constants() {
    ProblemConstants pc;
    pc.alpha = 1.3;
    pc.delta = 0.01;
    pc.h_inf_norm = 1.0;
    return pc;
}

}  // namespace

TEST_CASE("letter format parsing") {
    std::istringstream one("A,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\nT,2,8,3,5,1,8,13,0,6,6,10,8,0,8,0,8\n");
    const auto d = parse_letter_dataset(one);
    REQUIRE(d.size() == 2);
    CHECK(d[0].label == 1);
    for (int v : d[0].features) CHECK(v == 0);
    CHECK(d[1].label == 20);
    CHECK(d[1].features[6] == 13);
    CHECK(format_letter_dataset(d) == "A,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\nT,2,8,3,5,1,8,13,0,6,6,10,8,0,8,0,8\n");

    std::istringstream short_line("A,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
    CHECK_THROWS_WITH(parse_letter_dataset(short_line), ContainsSubstring("line 1"));
    std::istringstream bad_label("A,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\na,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
    CHECK_THROWS_WITH(parse_letter_dataset(bad_label), ContainsSubstring("line 2"));
    std::istringstream bad_value("B,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,16\n");
    CHECK_THROWS(parse_letter_dataset(bad_value));
    std::istringstream junk("C,0,0,0,0,0,0,0,0,x,0,0,0,0,0,0,0\n");
    CHECK_THROWS(parse_letter_dataset(junk));
    CHECK_THROWS(load_letter_dataset("/nonexistent/letters.data"));
}

TEST_CASE("synthetic letters round trip through the parser") {
    const auto d = generate_synthetic_letters(500, 3);
    std::istringstream in(format_letter_dataset(d));
    const auto back = parse_letter_dataset(in);
    REQUIRE(back.size() == 500);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back[i].label == d[i].label);
        CHECK(back[i].features == d[i].features);
    }
    CHECK(format_letter_dataset(generate_synthetic_letters(500, 3)) == format_letter_dataset(d));
}

TEST_CASE("split sizes and determinism") {
    const auto& f = fixture();
    CHECK(f.parts.train.size() == 6000);
    CHECK(f.parts.eval.size() == 14000);
    RandomStream rs(1, 0x5b117);
    const auto again = split(f.data, 0.3, rs);
    CHECK(format_letter_dataset(again.train) == format_letter_dataset(f.parts.train));

    const std::vector<LabeledInstance> three = {instance(1, 0), instance(2, 1), instance(3, 2)};
    RandomStream r3(5, 5);
    const auto s = split(three, 0.5, r3);
    CHECK(s.train.size() == 1);
    CHECK(s.eval.size() == 2);
    std::set<int> labels;
    for (const auto& x : s.train) labels.insert(x.label);
    for (const auto& x : s.eval) labels.insert(x.label);
    CHECK(labels.size() == 3);
    RandomStream r4(5, 5);
    CHECK_THROWS_AS(split(three, 1.0, r4), std::invalid_argument);
    CHECK_THROWS_AS(split(three, 0.0, r4), std::invalid_argument);
}

TEST_CASE("nearest centroid classifier") {
    std::vector<LabeledInstance> train;
    for (int k = 1; k <= 26; ++k) {
        LabeledInstance x;
        x.label = k;
        x.features[0] = k % 16;
        x.features[1] = k / 16;
        train.push_back(x);
    }
    const NearestCentroid c(train);
    for (const auto& x : train) CHECK(c.predict(x.features) == x.label);
    CHECK(c.accuracy(train) == 1.0);

    // classes 2 and 5 share a centroid: the lower index wins
    std::vector<LabeledInstance> tie;
    for (int k = 1; k <= 26; ++k) tie.push_back(instance(k, k == 5 ? 2 % 16 : k % 16));
    tie[0].features.fill(15);
    const NearestCentroid t(tie);
    CHECK(t.predict(tie[4].features) == 2);

    train.pop_back();
    CHECK_THROWS_WITH(NearestCentroid(train), ContainsSubstring("class Z missing"));

    CHECK(fixture().clf.accuracy(fixture().parts.train) >= 0.5);
}

TEST_CASE("canonical letter file", "[letter]") {
    const char* path = std::getenv("LETTER_DATA");
    if (!path) SKIP("LETTER_DATA not set");
    const auto d = load_letter_dataset(path);
    CHECK(d.size() == 20000);
    RandomStream rs(1, 0x5b117);
    const auto s = split(d, 0.3, rs);
    CHECK(s.train.size() == 6000);
    CHECK(s.eval.size() == 14000);
    const NearestCentroid c(s.train);
    CHECK(c.accuracy(s.train) >= 0.5);
}

TEST_CASE("epsilon-boost policy probabilities") {
    const auto& clf = fixture().clf;
    for (double th : {0.0, 0.3, 0.5, 0.99, 1.0}) {
        const EpsilonBoostPolicy p(th, clf);
        CHECK(p.top_probability() == th + (1 - th) / 26);
        CHECK(p.other_probability() == (1 - th) / 26);
        double s = p.top_probability();
        for (int k = 0; k < 25; ++k) s += p.other_probability();
        CHECK_THAT(s, WithinAbs(1.0, 1e-14));
        CHECK(p.probability(3, 3) == p.top_probability());
        CHECK(p.probability(4, 3) == p.other_probability());
    }
    CHECK_THROWS_AS(EpsilonBoostPolicy(1.5, clf), std::invalid_argument);
    CHECK_THROWS_AS(EpsilonBoostPolicy(-0.1, clf), std::invalid_argument);
}

TEST_CASE("true policy value") {
    const auto& f = fixture();
    const double acc = f.contexts.accuracy();
    CHECK(acc == f.clf.accuracy(f.parts.eval));
    CHECK_THAT(true_policy_value(EpsilonBoostPolicy(1.0, f.clf), f.contexts, RewardKind::binary), WithinAbs(acc, 1e-14));
    CHECK_THAT(true_policy_value(EpsilonBoostPolicy(0.0, f.clf), f.contexts, RewardKind::binary), WithinAbs(1.0 / 26, 1e-15));
    const EpsilonBoostPolicy pol(0.99, f.clf);
    const double v = true_policy_value(pol, f.contexts, RewardKind::binary);
    CHECK_THAT(v, WithinAbs(acc * (0.99 + 0.01 / 26) + (1 - acc) * (0.01 / 26), 1e-14));
    CHECK(true_policy_value(pol, f.contexts, RewardKind::normal) == v);

    // independent simulation of the policy over 1e7 contexts
    RandomStream rs(31, 0);
    const std::size_t m = 10000000;
    const std::size_t N = f.contexts.instances.size();
    double hits = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = rs.below(N);
        const int pred = f.contexts.predictions[c];
        int a = pred;
        if (rs.uniform() >= pol.top_probability()) {
            int k = static_cast<int>(rs.below(25)) + 1;
            a = k >= pred ? k + 1 : k;
        }
        hits += a == f.contexts.instances[c].label ? 1.0 : 0.0;
    }
    const double mean = hits / m;
    CHECK(std::abs(mean - v) <= 4 * std::sqrt(mean * (1 - mean) / m));
}

TEST_CASE("logged data") {
    const auto& f = fixture();
    RandomStream rs(2, 2);
    const auto det = collect_logged_data(EpsilonBoostPolicy(1.0, f.clf), f.contexts, 5000, RewardKind::binary, rs);
    CHECK(det.size() == 5000);
    for (const auto& r : det) {
        CHECK(r.action == f.contexts.predictions[r.context_index]);
        CHECK(r.behavior_prob == 1.0);
    }

    const EpsilonBoostPolicy b(0.5, f.clf);
    const std::size_t m = 1000000;
    for (auto kind : {RewardKind::binary, RewardKind::normal}) {
        RandomStream r2(3, static_cast<std::uint64_t>(kind));
        const auto log = collect_logged_data(b, f.contexts, m, kind, r2);
        double s = 0, s2 = 0;
        for (const auto& r : log) {
            if (kind == RewardKind::binary) CHECK((r.reward == 0.0 || r.reward == 1.0));
            CHECK(r.behavior_prob == b.probability(r.action, f.contexts.predictions[r.context_index]));
            CHECK((r.action >= 1 && r.action <= 26));
            s += r.reward;
            s2 += r.reward * r.reward;
        }
        const double mean = s / m, se = std::sqrt((s2 / m - mean * mean) / m);
        CHECK(std::abs(mean - true_policy_value(b, f.contexts, kind)) <= 4 * se);
    }
    RandomStream r3(3, 3);
    CHECK_THROWS_AS(collect_logged_data(b, f.contexts, 0, RewardKind::binary, r3), std::invalid_argument);
}

TEST_CASE("policy divergence and weights") {
    CHECK_THAT(policy_alpha_divergence(0.7, 0.7, 1.3), WithinAbs(1.0, 1e-14));
    const double d = policy_alpha_divergence(0.99, 0.5, 1.3);
    CHECK_THAT(d, WithinAbs(1.205, 5e-4));
    const double pt = 0.99 + 0.01 / 26, po = 0.01 / 26, qt = 0.5 + 0.5 / 26, qo = 0.5 / 26;
    CHECK_THAT(d, WithinRel(std::pow(pt, 1.3) * std::pow(qt, -0.3) + 25 * std::pow(po, 1.3) * std::pow(qo, -0.3), 1e-14));
    // the same value from the generic finite-discrete closed form
    std::vector<double> sup(26), tp(26, po), bp(26, qo);
    for (int i = 0; i < 26; ++i) sup[i] = i;
    tp[0] = pt;
    bp[0] = qt;
    CHECK_THAT(alpha_divergence_closed(FiniteDiscrete(sup, tp), FiniteDiscrete(sup, bp), 1.3).value, WithinRel(d, 1e-12));

    // Monte Carlo over the 26-point behavior distribution
    RandomStream rs(8, 8);
    double s = 0, s2 = 0;
    const int m = 2000000;
    for (int i = 0; i < m; ++i) {
        const double w = rs.uniform() < qt ? pt / qt : po / qo;
        const double v = std::pow(w, 1.3);
        s += v;
        s2 += v * v;
    }
    CHECK(std::abs(s / m - d) <= 4 * std::sqrt((s2 / m - (s / m) * (s / m)) / m));

    CHECK_THAT(max_policy_weight(0.99, 0.5), WithinAbs(1.9074, 1e-4));
    CHECK_THAT(max_policy_weight(0.99, 0.5), WithinRel(pt / qt, 1e-15));
    CHECK_THROWS_AS(policy_alpha_divergence(0.5, 1.0, 1.3), AbsoluteContinuityError);
    CHECK_THAT(policy_alpha_divergence(1.0, 1.0, 1.3), WithinAbs(1.0, 1e-15));
}

TEST_CASE("offline evaluation") {
    const auto& f = fixture();
    const EpsilonBoostPolicy b(0.5, f.clf), t(0.99, f.clf), same(0.5, f.clf);
    RandomStream rs(4, 4);
    const auto log = collect_logged_data(b, f.contexts, 1000, RewardKind::binary, rs);

    double mean = 0;
    for (const auto& r : log) mean += r.reward;
    mean /= 1000;
    CHECK_THAT(evaluate_offline(log, f.contexts, same, BoundarySpec::lr(), bandit_constants(), 0.5).estimate,
               WithinAbs(mean, 1e-15));

    const auto lr = evaluate_offline(log, f.contexts, t, BoundarySpec::lr(), bandit_constants(), 0.5);
    const double wmax = max_policy_weight(0.99, 0.5);
    CHECK(lr.estimate >= 0.0);
    CHECK(lr.estimate <= wmax);
    for (const auto& spec : {BoundarySpec::inf_simple(), BoundarySpec::inf_optimal(), BoundarySpec::fixed(wmax),
                             BoundarySpec::fixed(2.0)}) {
        const auto r = evaluate_offline(log, f.contexts, t, spec, bandit_constants(), 0.5);
        CHECK(r.tau >= wmax);
        CHECK(r.estimate == lr.estimate);
    }
    const auto clipped = evaluate_offline(log, f.contexts, t, BoundarySpec::fixed(1.0), bandit_constants(), 0.5);
    CHECK(clipped.estimate >= 0.0);
    CHECK(clipped.estimate <= 1.0);
    CHECK(clipped.estimate < lr.estimate);

    // LR over 1e6 records is within 4 s.e. of the true value
    RandomStream r2(5, 5);
    const auto big = collect_logged_data(b, f.contexts, 1000000, RewardKind::binary, r2);
    const auto e = evaluate_offline(big, f.contexts, t, BoundarySpec::lr(), bandit_constants(), 0.5);
    double s2 = 0;
    for (const auto& r : big) {
        const double v = r.reward * t.probability(r.action, f.contexts.predictions[r.context_index]) / r.behavior_prob;
        s2 += (v - e.estimate) * (v - e.estimate);
    }
    const double se = std::sqrt(s2 / 1e6 / 1e6);
    CHECK(std::abs(e.estimate - true_policy_value(t, f.contexts, RewardKind::binary)) <= 4 * se);

    // a deterministic behavior policy cannot support a randomized target
    RandomStream r3(6, 6);
    const auto det = collect_logged_data(EpsilonBoostPolicy(1.0, f.clf), f.contexts, 100, RewardKind::binary, r3);
    CHECK_THROWS_AS(evaluate_offline(det, f.contexts, t, BoundarySpec::lr(), bandit_constants(), 1.0),
                    AbsoluteContinuityError);
}

TEST_CASE("reward p-norm") {
    const auto& f = fixture();
    const double q = true_policy_value(EpsilonBoostPolicy(0.5, f.clf), f.contexts, RewardKind::binary);
    CHECK_THAT(reward_p_norm(f.contexts, 0.5, RewardKind::binary, 4.0), WithinRel(std::pow(q, 0.25), 1e-12));
    // E|N(mu, 0.25)|^2 = mu^2 + 0.25
    CHECK_THAT(reward_p_norm(f.contexts, 0.5, RewardKind::normal, 2.0),
               WithinRel(std::sqrt(q * 1.25 + (1 - q) * 0.25), 1e-8));
}

TEST_CASE("bandit sweep") {
    const auto& f = fixture();
    BanditExperiment e;
    e.n_grid = {100, 400};
    e.reps = 200;
    e.seed = 9;
    e.estimators = {{"LR", BoundarySpec::lr()}, {"TruLR-S", BoundarySpec::inf_simple()}, {"fixed1", BoundarySpec::fixed(1.0)}};
    const auto a = run_bandit_sweep(e, f.contexts, 1), b = run_bandit_sweep(e, f.contexts, 6);
    CHECK(mse_csv(a) == mse_csv(b));
    REQUIRE(a.size() == 6);
    for (const auto& r : a) {
        CHECK(r.scenario_id == "bandit");
        CHECK_THAT(r.mse, WithinRel(r.bias * r.bias + r.variance, 1e-9));
    }
    // tau from the closed form exceeds the largest weight, so TruLR-S repeats LR
    CHECK(a[0].mse == a[1].mse);
}

// Clipping every 1.9074 weight to 1 biases the estimate by about -0.47 times the
// accuracy, far more than the LR variance at n = 100; see the README notes.
TEST_CASE("fixed tau = 1 against LR at theta0 = 0.5, theta = 0.99, n = 100") {
    const auto& f = fixture();
    BanditExperiment e;
    e.n_grid = {100};
    e.reps = 1000;
    e.seed = 10;
    e.estimators = {{"LR", BoundarySpec::lr()}, {"TruLR-1", BoundarySpec::fixed(1.0)}};
    const auto rows = run_bandit_sweep(e, f.contexts);
    CHECK(rows[1].mse < rows[0].mse);
}
