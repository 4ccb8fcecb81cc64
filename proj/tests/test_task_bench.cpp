#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "vlmgeo/error.hpp"
#include "vlmgeo/rng.hpp"
#include "vlmgeo/stats.hpp"
#include "vlmgeo/task_bench.hpp"

using namespace vlmgeo;

namespace {

ConceptVector cv(const std::vector<double>& v, std::string label = "v") {
    return make_concept_vector(v, std::move(label), Method::centroid, "m");
}

SimilarityTrial trial(std::vector<double> setup, double query) {
    SimilarityTrial t;
    t.id = "t";
    t.setup_hues = std::move(setup);
    for (std::size_t i = 0; i < t.setup_hues.size(); ++i) t.letters.push_back(std::string(1, char('A' + i)));
    t.query_hue = query;
    return t;
}

ConceptStore truth_composites(const OracleWorld& w) {
    ConceptStore s;
    for (Color c : kAllColors) {
        for (Shape sh : kAllShapes) s[concept_label(c, sh)] = cv(w.composite(c, sh), concept_label(c, sh));
    }
    return s;
}

}  // namespace

TEST(Interference, Examples) {
    const auto t = cv({1, 0, 0});
    const std::vector<ConceptVector> same{cv({0, 1, 0}), cv({1, 0, 0})};
    EXPECT_NEAR(interference_score(t, same), 1.0, 1e-12);
    const std::vector<ConceptVector> orth{cv({0, 1, 0}), cv({0, 0, -1})};
    EXPECT_NEAR(interference_score(t, orth), 0.0, 1e-12);
    EXPECT_THROW(interference_score(t, std::span<const ConceptVector>{}), Error);
}

TEST(InterferenceProperty, PermutationInvariantAndBounded) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ConceptVector> ds;
        for (int i = 0; i < 6; ++i) ds.push_back(cv({rng.normal(), rng.normal(), rng.normal(), rng.normal()}));
        const auto t = cv({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        const double a = interference_score(t, ds);
        std::reverse(ds.begin(), ds.end());
        EXPECT_EQ(interference_score(t, ds), a);
        EXPECT_LE(a, 1.0 + 1e-12);
    }
}

TEST(Interference, AdditiveOracleScenes) {
    const OracleWorld w(WorldSpec{});
    const auto store = truth_composites(w);
    VisualSearchParams p;
    p.n_dist = {4, 12};
    p.p_int = {0.0, 1.0};
    p.trials_per_cell = 5;
    const auto batch = gen_visual_search_trials(p, 3);
    ASSERT_FALSE(batch.trials.empty());
    for (const auto& t : batch.trials) {
        const double expect = t.p_int == 1.0 ? 0.5 : 0.0;
        EXPECT_NEAR(trial_interference(t, store), expect, 1e-6) << t.id;
    }
}

TEST(BinnedAccuracy, Examples) {
    std::vector<double> s;
    std::vector<int> ok;
    for (int i = 0; i < 100; ++i) {
        s.push_back(i / 99.0);
        ok.push_back(1);
    }
    const auto c = binned_accuracy(s, ok, 10, 5);
    ASSERT_EQ(c.bins.size(), 10u);
    ASSERT_EQ(c.edges.size(), 11u);
    std::size_t total = 0;
    for (const auto& b : c.bins) {
        EXPECT_TRUE(b.retained);
        EXPECT_GE(b.count, 9u);
        EXPECT_LE(b.count, 11u);
        EXPECT_EQ(b.accuracy(), 1.0);
        total += b.count;
    }
    EXPECT_EQ(total, 100u);
    for (std::size_t i = 1; i < c.edges.size(); ++i) EXPECT_GT(c.edges[i], c.edges[i - 1]);
    EXPECT_THROW(binned_accuracy(s, ok, 10, 50), Error);
}

TEST(BinnedAccuracy, SparseBinsDroppedAndReported) {
    const std::vector<double> s{0, 0.01, 0.02, 0.03, 1.0};
    const std::vector<int> ok{1, 0, 1, 1, 0};
    const auto c = binned_accuracy(s, ok, 2, 2);
    EXPECT_TRUE(c.bins[0].retained);
    EXPECT_FALSE(c.bins[1].retained);
    EXPECT_EQ(c.bins[1].count, 1u);
    EXPECT_EQ(c.retained_trials(), 4u);
    EXPECT_DOUBLE_EQ(c.accuracies()[0], 0.75);
}

TEST(BinnedAccuracy, ConstantScores) {
    const std::vector<double> s(30, 0.5);
    const std::vector<int> ok(30, 1);
    const auto c = binned_accuracy(s, ok, 10, 20);
    EXPECT_EQ(c.retained_trials(), 30u);
    for (std::size_t i = 1; i < c.edges.size(); ++i) EXPECT_GT(c.edges[i], c.edges[i - 1]);
}

TEST(BinnedAccuracyProperty, CountsSumAndAccuracyBounded) {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + static_cast<std::size_t>(rng.uniform(0, 500));
        std::vector<double> s(n);
        std::vector<int> ok(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.uniform(-1, 1);
            ok[i] = rng.uniform() < 0.6;
        }
        const int min_per_bin = static_cast<int>(rng.uniform(0, 10));
        const auto c = binned_accuracy(s, ok, 10, min_per_bin);
        std::size_t all = 0, kept = 0;
        for (const auto& b : c.bins) {
            all += b.count;
            if (b.retained) kept += b.count;
            EXPECT_TRUE(b.accuracy() >= 0 && b.accuracy() <= 1);
        }
        EXPECT_EQ(all, n);
        EXPECT_EQ(kept, c.retained_trials());
    }
}

TEST(Pearson, Examples) {
    const std::vector<double> x{0, 1, 2, 5};
    std::vector<double> y, neg;
    for (double v : x) {
        y.push_back(2 * v + 1);
        neg.push_back(-v);
    }
    EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
    EXPECT_NEAR(pearson(x, neg), -1.0, 1e-12);
    const std::vector<double> flat(4, 3.0);
    EXPECT_THROW(pearson(x, flat), Error);
    const std::vector<double> two{1, 2};
    EXPECT_THROW(pearson(two, two), Error);
}

TEST(LogitSeparation, Examples) {
    EXPECT_DOUBLE_EQ(logit_separation({{"A", 2}, {"B", 0}, {"C", 1}}), 1.5);
    EXPECT_DOUBLE_EQ(logit_separation({{"A", 4}, {"B", 4}, {"C", 4}}), 0.0);
    EXPECT_DOUBLE_EQ(logit_separation({{"A", 1}, {"B", 1}}), 0.0);
    EXPECT_THROW(logit_separation({{"A", 1}}), Error);
}

TEST(LogitSeparationProperty, ShiftAndScale) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Logits l;
        const int n = 2 + static_cast<int>(rng.uniform(0, 10));
        for (int i = 0; i < n; ++i) l.emplace_back(std::to_string(i), rng.normal());
        const double base = logit_separation(l);
        const double c = rng.normal() * 10, k = rng.uniform(0.1, 10);
        auto shifted = l, scaled = l;
        for (auto& [_, v] : shifted) v += c;
        for (auto& [_, v] : scaled) v *= k;
        EXPECT_NEAR(logit_separation(shifted), base, 1e-9);
        EXPECT_NEAR(logit_separation(scaled), k * base, 1e-9);
        EXPECT_GE(base, 0.0);
    }
}

TEST(HueSimilarity, Examples) {
    EXPECT_DOUBLE_EQ(hue_similarity(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(hue_similarity(0, 180), 0.0);
    EXPECT_NEAR(hue_similarity(350, 10), 1 - 20.0 / 180, 1e-12);
    EXPECT_NEAR(hue_similarity(350, 10), 0.8889, 1e-4);
}

TEST(HueSimilarityProperty, SymmetricPeriodicAndIdentity) {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        const double a = rng.uniform(0, 360), b = rng.uniform(0, 360);
        EXPECT_NEAR(hue_similarity(a, b), hue_similarity(b, a), 1e-12);
        EXPECT_NEAR(hue_similarity(a + 360, b), hue_similarity(a, b), 1e-9);
        if (a != b) EXPECT_LT(hue_similarity(a, b), 1.0);
        EXPECT_GE(hue_similarity(a, b), 0.0);
    }
}

TEST(SimilaritySeparation, Examples) {
    EXPECT_NEAR(similarity_separation(trial({0, 180}, 0), 0, hue_similarity), 1.0, 1e-12);
    const double expect = (1 - 10.0 / 180) - 0.5 * ((1 - 80.0 / 180) + (1 - 170.0 / 180));
    EXPECT_NEAR(similarity_separation(trial({0, 90, 180}, 10), 0, hue_similarity), expect, 1e-12);
    EXPECT_NEAR(expect, 0.6389, 1e-4);
    // Query equidistant from every setup hue.
    const auto two = trial({80, 100}, 90);
    EXPECT_NEAR(similarity_separation(two, 0, hue_similarity), 0.0, 1e-12);
    EXPECT_NEAR(similarity_separation(two, 1, hue_similarity), 0.0, 1e-12);
    EXPECT_THROW(similarity_separation(two, 2, hue_similarity), Error);
}

TEST(SimilaritySeparationProperty, ConstantSimilarityGivesZero) {
    Rng rng(5);
    const SimFn constant = [](double, double) { return 0.37; };
    for (int i = 0; i < 50; ++i) {
        std::vector<double> setup;
        const int n = 2 + static_cast<int>(rng.uniform(0, 10));
        for (int k = 0; k < n; ++k) setup.push_back(rng.uniform(0, 360));
        const auto t = trial(setup, rng.uniform(0, 360));
        EXPECT_EQ(similarity_separation(t, static_cast<std::size_t>(rng.uniform(0, n)), constant), 0.0);
    }
}

TEST(PredictChoice, QueryOnSetupHue) {
    EXPECT_EQ(predict_choice(trial({10, 200, 300}, 200), hue_similarity), 1u);
    EXPECT_EQ(predict_choice(trial({10, 200, 300}, 305), hue_similarity), 2u);
}

TEST(SimilarityTask, OracleAgreementAndConfidence) {
    const OracleWorld w(WorldSpec{});
    SimilarityParams p;
    p.trial_count = 200;
    const auto trials = gen_similarity_trials(p, 6);
    const auto records = run_oracle_similarity(trials, w);
    EXPECT_DOUBLE_EQ(prediction_agreement(records, planar_cosine_similarity), 1.0);
    EXPECT_NEAR(confidence_correlation(records, planar_cosine_similarity), 1.0, 1e-9);
    EXPECT_GT(confidence_correlation(records, hue_similarity), 0.5);

    // Shuffled pairing: records keep their trial but take another trial's logits.
    auto shuffled = records;
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
        const auto& donor = records[(i + 37) % records.size()];
        if (donor.logits.size() != shuffled[i].logits.size()) continue;
        shuffled[i].logits = donor.logits;
        shuffled[i].answer = donor.answer;
    }
    EXPECT_LT(std::abs(confidence_correlation(shuffled, planar_cosine_similarity)),
              confidence_correlation(records, planar_cosine_similarity));
}

TEST(SimilarityTask, VectorSimilarityUsesNearestGridHue) {
    const OracleWorld w(WorldSpec{});
    std::vector<std::pair<double, ConceptVector>> hv;
    for (int i = 0; i < 36; ++i) hv.emplace_back(10.0 * i, cv(w.hue_vector(10.0 * i)));
    const auto f = vector_similarity(hv);
    EXPECT_NEAR(f(0, 90), 0.0, 1e-6);
    EXPECT_NEAR(f(3, 92), 0.0, 1e-6);  // snaps to 0 and 90
    EXPECT_NEAR(f(358, 181), -1.0, 1e-6);
}

TEST(SimilarityTask, ChosenIndexRequiresKnownLetter) {
    SimilarityRecord r;
    r.trial = trial({0, 90}, 10);
    r.answer = "B";
    EXPECT_EQ(chosen_index(r), 1u);
    r.answer = "Z";
    EXPECT_THROW(chosen_index(r), Error);
}

TEST(VisualSearch, InterferenceDegradesOracleAccuracy) {
    WorldSpec ws;
    ws.color_coupling = 0.8;
    ws.shape_coupling = 0.6;
    ws.decode_noise_gain = 1.0;
    const OracleWorld w(ws);
    VisualSearchParams p;
    p.trials_per_cell = 6;
    const auto batch = gen_visual_search_trials(p, 9);
    auto records = run_oracle_visual_search(batch.trials, w);
    const auto report = score_visual_search(records, truth_composites(w), 10, 20);
    EXPECT_LT(report.r_present, 0.0);
    EXPECT_LT(report.r_absent, 0.0);
    EXPECT_LE(report.present.retained_trials() + report.absent.retained_trials(), records.size());
}

TEST(Records, JsonRoundTrip) {
    VisualSearchParams p;
    p.n_dist = {4};
    p.p_int = {0.5};
    p.trials_per_cell = 1;
    const auto batch = gen_visual_search_trials(p, 2);
    const OracleWorld w(WorldSpec{});
    auto vs = run_oracle_visual_search(batch.trials, w);
    vs[0].interference = 0.25;
    const auto back = visual_search_record_from_json(to_json(vs[0]));
    EXPECT_EQ(to_json(back), to_json(vs[0]));
    EXPECT_EQ(back.trial.scene, vs[0].trial.scene);

    SimilarityParams sp;
    sp.trial_count = 2;
    const auto sim = run_oracle_similarity(gen_similarity_trials(sp, 3), w);
    const auto sback = similarity_record_from_json(to_json(sim[1]));
    EXPECT_EQ(to_json(sback), to_json(sim[1]));
    EXPECT_EQ(sback.logits, sim[1].logits);
}
