// End-to-end acceptance checks against the oracle. Prints one line per
// criterion and exits non-zero if any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vlmgeo/distiller.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/geometry.hpp"
#include "vlmgeo/oracle.hpp"
#include "vlmgeo/pipeline.hpp"
#include "vlmgeo/rng.hpp"
#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/steering.hpp"
#include "vlmgeo/task_bench.hpp"
#include "vlmgeo/tensor_store.hpp"

using namespace vlmgeo;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    std::string s = buf;
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

double cosine(std::span<const float> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += double(a[i]) * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

ConceptVector unit(std::span<const double> v, std::string label) {
    return make_concept_vector(v, std::move(label), Method::centroid, "oracle");
}

std::vector<ConceptVector> truth_composites(const OracleWorld& w) {
    std::vector<ConceptVector> out;
    for (Color c : kAllColors) {
        for (Shape s : kAllShapes) out.push_back(unit(w.composite(c, s), concept_label(c, s)));
    }
    return out;
}

double min_recovery(const OracleWorld& w, std::span<const ConceptVector> vectors) {
    double worst = 1.0;
    for (Color c : kAllColors) {
        for (Shape s : kAllShapes) {
            const auto it = std::find_if(vectors.begin(), vectors.end(),
                                         [&](const ConceptVector& v) { return v.label == concept_label(c, s); });
            if (it == vectors.end()) return -1.0;
            worst = std::min(worst, cosine(it->direction, w.composite(c, s)));
        }
    }
    return worst;
}

Outcome ac1() {
    DistillationParams p;
    p.positions_per_concept = 10;
    const OracleWorld clean(WorldSpec{});
    const auto clean_acts = embed_scenes(gen_distillation_corpus(p, 101), clean);
    const double c_clean = min_recovery(clean, distill_all_centroids(clean_acts.sequences));

    WorldSpec noisy_spec;
    noisy_spec.noise_sigma = 0.1 * noisy_spec.feature_gain;
    const OracleWorld noisy(noisy_spec);
    p.positions_per_concept = 100;
    const auto noisy_acts = embed_scenes(gen_distillation_corpus(p, 102), noisy);
    const double c_noisy = min_recovery(noisy, distill_all_centroids(noisy_acts.sequences));
    return {c_clean >= 0.999 && c_noisy >= 0.95,
            "min cosine noiseless " + fmt("%.6f", c_clean) + " (>= 0.999), noisy " + fmt("%.6f", c_noisy) +
                " (>= 0.95)"};
}

Outcome ac2() {
    const std::size_t d = 64;
    const OracleWorld w(WorldSpec{});
    const auto additive = truth_composites(w);
    const auto r = pca_regularize(additive, 6, 6);
    double err_add = 0;
    for (std::size_t i = 0; i < 36; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            err_add = std::max(err_add, std::abs(double(r.vectors[i].direction[k]) - additive[i].direction[k]));
        }
    }
    // Planted direction: orthogonal to every color and shape direction.
    Rng rng(7);
    std::vector<double> e(d);
    for (auto& x : e) x = rng.normal();
    std::vector<std::span<const double>> factors;
    for (Color c : kAllColors) factors.push_back(w.color_dir(c));
    for (Shape s : kAllShapes) factors.push_back(w.shape_dir(s));
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& f : factors) {
            double p = 0;
            for (std::size_t k = 0; k < d; ++k) p += e[k] * f[k];
            for (std::size_t k = 0; k < d; ++k) e[k] -= p * f[k];
        }
    }
    double n = 0;
    for (double x : e) n += x * x;
    for (auto& x : e) x /= std::sqrt(n);
    // Interaction coefficients with zero row and column sums.
    const std::array<double, 6> xc{1, -1, 2, -2, 0.5, -0.5};
    const std::array<double, 6> ys{-3, 1, 1, 1, -1, 1};
    std::vector<ConceptVector> perturbed = additive;
    for (std::size_t c = 0; c < 6; ++c) {
        for (std::size_t s = 0; s < 6; ++s) {
            auto& v = perturbed[c * 6 + s];
            for (std::size_t k = 0; k < d; ++k) v.direction[k] += static_cast<float>(0.01 * xc[c] * ys[s] * e[k]);
        }
    }
    const auto rp = pca_regularize(perturbed, 6, 6);
    double residual = 0;
    for (const auto& v : rp.vectors) {
        double p = 0;
        for (std::size_t k = 0; k < d; ++k) p += v.direction[k] * e[k];
        residual = std::max(residual, std::abs(p));
    }
    return {r.retained == 10 && err_add <= 1e-6 && residual <= 1e-6,
            std::to_string(r.retained) + " components, additive max error " + fmt("%.2e", err_add) +
                ", planted residual " + fmt("%.2e", residual) + " (<= 1e-6)"};
}

struct ProbeSet {
    std::vector<ActivationSequence> acts;
    std::vector<ProbeExample> examples;
};

ProbeSet probe_set(int scenes, double sigma, std::uint64_t seed) {
    ProbeCorpusParams pp;
    pp.scene_count = scenes;
    const auto corpus = gen_probe_corpus(pp, seed);
    WorldSpec ws;
    ws.noise_sigma = sigma;
    const OracleWorld w(ws);
    ProbeSet s;
    for (const auto& ls : corpus) s.acts.push_back(oracle_embed(ls.scene, w));
    for (std::size_t i = 0; i < corpus.size(); ++i) s.examples.push_back({&s.acts[i], corpus[i].labels.at("red|square")});
    return s;
}

Outcome ac3() {
    const auto fd_set = probe_set(20, 0.1, 31);
    Rng rng(32);
    const double h = 1e-5;
    double worst = 0;
    for (int point = 0; point < 10; ++point) {
        AttentionProbe p;
        p.u.resize(64);
        for (auto& x : p.u) x = 0.5 * rng.normal();
        p.b_att = rng.normal();
        p.w_out = 2 * rng.normal();
        p.b_out = rng.normal();
        ProbeGradient g;
        probe_loss(p, fd_set.examples, &g);
        auto rel = [&](const std::function<double&(AttentionProbe&)>& field, double analytic) {
            AttentionProbe a = p, b = p;
            field(a) += h;
            field(b) -= h;
            const double fd = (probe_loss(a, fd_set.examples) - probe_loss(b, fd_set.examples)) / (2 * h);
            worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}));
        };
        for (std::size_t k = 0; k < p.u.size(); ++k) rel([k](AttentionProbe& q) -> double& { return q.u[k]; }, g.u[k]);
        rel([](AttentionProbe& q) -> double& { return q.b_att; }, g.b_att);
        rel([](AttentionProbe& q) -> double& { return q.w_out; }, g.w_out);
        rel([](AttentionProbe& q) -> double& { return q.b_out; }, g.b_out);
    }
    const auto train = probe_set(200, 0.0, 33);
    ProbeTrainConfig cfg;
    cfg.epochs = 500;
    cfg.seed = 34;
    const auto r = train_attention_probe(train.examples, "red|square", cfg, "oracle");
    return {worst <= 1e-4 && r.metrics.heldout_auc >= 0.99 && r.metrics.epochs_run <= 500,
            "gradient max relative error " + fmt("%.2e", worst) + " (<= 1e-4), held-out AUC " +
                fmt("%.4f", r.metrics.heldout_auc) + " after " + std::to_string(r.metrics.epochs_run) + " epochs"};
}

Outcome ac4() {
    const OracleWorld w(WorldSpec{});
    OracleAnswerer oracle(w);
    const auto composites = truth_composites(w);
    const auto store = make_store(composites);
    const auto triples = enumerate_triples({kAllColors.begin(), kAllColors.end()}, {kAllShapes.begin(), kAllShapes.end()});
    std::vector<TripleOutcome> outcomes;
    outcomes.reserve(triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
        outcomes.push_back(run_triple_protocol(oracle, triples[i], store, {}, derive_seed(41, i)));
    }
    const auto ts = summarize(outcomes);

    std::vector<ConceptVector> colors;
    for (Color c : kAllColors) colors.push_back(unit(w.color_dir(c), std::string(to_string(c))));
    std::vector<ColorImage> images;
    for (const auto& s : gen_color_images({kAllColors.begin(), kAllColors.end()}, 10, 42)) {
        images.push_back({s.id, oracle_embed(s, w), std::string(to_string(s.objects[0].shape)),
                          std::get<Color>(s.objects[0].color)});
    }
    const auto cs = run_color_swap_protocol(oracle, images, make_store(colors), {});

    // Identity steering: no answer and no activation moves.
    int answer_changes = 0;
    double act_change = 0;
    const auto scenes = gen_distillation_corpus({}, 43);
    for (std::size_t i = 0; i < scenes.size(); i += 7) {
        const auto& v = composites[i % composites.size()];
        const SteeringSpec same{v, v};
        const auto acts = oracle_embed(scenes[i], w);
        const auto steered = steer(acts, same);
        for (std::size_t k = 0; k < acts.tokens.size(); ++k) {
            const double a = acts.tokens[k], b = steered.tokens[k];
            act_change = std::max(act_change, std::abs(a - b) / std::max(1.0, std::abs(a)));
        }
        for (Color c : {Color::red, Color::blue}) {
            const Concept q{c, Shape::square};
            answer_changes += oracle.answer_presence(scenes[i], q, nullptr) != oracle.answer_presence(scenes[i], q, &same);
        }
    }
    const bool pass = ts.excluded == 0 && ts.evaluated == triples.size() && ts.successes == ts.evaluated &&
                      cs.operations == 300 && cs.successes == 300 && answer_changes == 0 && act_change <= 1e-6;
    return {pass, "triples " + std::to_string(ts.successes) + "/" + std::to_string(triples.size()) + " (" +
                      std::to_string(ts.excluded) + " excluded), color swap " + std::to_string(cs.successes) + "/" +
                      std::to_string(cs.operations) + ", identity steering: " + std::to_string(answer_changes) +
                      " answer changes, max relative activation change " + fmt("%.1e", act_change)};
}

Outcome ac5() {
    const OracleWorld w(WorldSpec{});
    std::vector<HueVector> hues;
    for (int i = 0; i < 100; ++i) {
        const double h = 3.6 * i;
        hues.push_back({h, unit(w.hue_vector(h), hue_label(h))});
    }
    const auto prof = semantic_similarity_function(hues);
    double profile_err = 0;
    for (const auto& row : prof.per_hue) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            profile_err = std::max(profile_err, std::abs(row[k] - std::cos(prof.deltas[k] * std::numbers::pi / 180)));
        }
    }
    const auto m = cosine_matrix(truth_composites(w));
    const double self = rsa(m, m);
    // A second matrix from distilled vectors, for the symmetry check.
    const auto acts = embed_scenes(gen_distillation_corpus({}, 51), w);
    const auto distilled = grid_order(distill_all_centroids(acts.sequences),
                                      {"red", "green", "blue", "yellow", "orange", "purple"},
                                      {"circle", "square", "triangle", "star", "heart", "cross"});
    const auto md = cosine_matrix(distilled);
    const double asym = std::abs(rsa(m, md) - rsa(md, m));
    const auto g = group_similarity_stats(m);
    const double group_err = std::max({std::abs(g.same_color.mean - 0.5), std::abs(g.same_shape.mean - 0.5),
                                       std::abs(g.neither.mean), g.same_color.std, g.same_shape.std, g.neither.std});
    const auto gd = group_similarity_stats(md);
    const bool pass = profile_err <= 1e-6 && std::abs(self - 1.0) <= 1e-9 && asym <= 1e-12 && group_err <= 1e-6 &&
                      g.separated() && gd.separated();
    return {pass, "profile max error " + fmt("%.1e", profile_err) + ", rsa(M,M) " + fmt("%.12f", self) +
                      ", rsa asymmetry " + fmt("%.1e", asym) + ", groups color " + fmt("%.6f", g.same_color.mean) +
                      " shape " + fmt("%.6f", g.same_shape.mean) + " neither " + fmt("%.6f", g.neither.mean) +
                      ", separated (truth " + (g.separated() ? "yes" : "no") + ", distilled " +
                      (gd.separated() ? "yes" : "no") + ")"};
}

Outcome ac6() {
    const ExperimentConfig defaults;
    const OracleWorld w(merge_world(WorldSpec{}, defaults.visual_search_world));
    const auto acts = embed_scenes(gen_distillation_corpus({}, 61), w);
    const auto vectors = distill_all_centroids(acts.sequences);
    const auto batch = gen_visual_search_trials(VisualSearchParams{}, 62);
    auto records = run_oracle_visual_search(batch.trials, w);
    const auto rep = score_visual_search(records, make_store(vectors), 10, 20);
    const bool pass = records.size() >= 2000 && rep.r_present <= -0.5 && rep.r_absent <= -0.5;
    return {pass, std::to_string(records.size()) + " trials, r present " + fmt("%.4f", rep.r_present) + ", absent " +
                      fmt("%.4f", rep.r_absent) + " (<= -0.5), accuracy " + fmt("%.4f", rep.accuracy)};
}

Outcome ac7() {
    const OracleWorld w(WorldSpec{});
    const auto trials = gen_similarity_trials(SimilarityParams{}, 71);
    const auto records = run_oracle_similarity(trials, w);
    const double r = confidence_correlation(records, planar_cosine_similarity);
    const double agree_cos = prediction_agreement(records, planar_cosine_similarity);
    const double agree_hue = prediction_agreement(records, hue_similarity);
    return {std::abs(r - 1.0) <= 1e-9 && agree_cos == 1.0 && agree_hue == 1.0,
            std::to_string(records.size()) + " trials, confidence r " + fmt("%.12f", r) + ", agreement cosine " +
                fmt("%.4f", agree_cos) + ", hue " + fmt("%.4f", agree_hue)};
}

Outcome ac8() {
    // Round trip of a random container.
    std::mt19937_64 gen(81);
    std::normal_distribution<float> nd(0.f, 3.f);
    ActivationSet set;
    set.dim = 64;
    set.model_id = "m";
    for (int i = 0; i < 12; ++i) {
        ActivationSequence s;
        s.length = 256;
        s.dim = 64;
        s.grid = kOracleGrid;
        s.stimulus_id = "s" + std::to_string(i);
        s.model_id = "m";
        s.layer_tag = "proj";
        s.tokens.resize(256 * 64);
        for (auto& x : s.tokens) x = nd(gen);
        s.tokens[5] = -0.0f;
        s.tokens[6] = 1e-42f;
        s.annotations = {{"red|square", {1, 2, 3}}};
        set.sequences.push_back(std::move(s));
    }
    const auto bytes = encode_activation_set(set);
    const auto back = decode_activation_set(bytes);
    const bool round_trip = bit_equal(set, back) && encode_activation_set(back) == bytes;

    // Fixture written by an independent encoder.
    const auto fixture_bytes = read_file_bytes(std::filesystem::path(VLMGEO_FIXTURE_DIR) / "tiny.cva");
    const std::vector<std::uint8_t> preamble{0x43, 0x56, 0x41, 0x31, 0x01, 0x00, 0x00, 0x00, 0x1a, 0x01, 0x00, 0x00};
    const bool header_ok = fixture_bytes.size() == 390 && std::equal(preamble.begin(), preamble.end(), fixture_bytes.begin());
    const auto fixture = decode_activation_set(fixture_bytes);
    const bool fixture_ok = header_ok && fixture.sequences.size() == 2 && fixture.dim == 3 &&
                            fixture.sequences[0].tokens[4] == 1e-40f && std::signbit(fixture.sequences[0].tokens[1]) &&
                            encode_activation_set(fixture) == fixture_bytes;
    return {round_trip && fixture_ok, std::string("random container ") + (round_trip ? "bit-exact" : "MISMATCH") +
                                          ", fixture " + (fixture_ok ? "parses and re-encodes identically" : "MISMATCH")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* name;
        Outcome (*run)();
        double budget_s;  // 0: no separate budget
    };
    const std::vector<Criterion> criteria{
        {"AC1", "ground-truth recovery", ac1, 30},       {"AC2", "PCA exactness", ac2, 0},
        {"AC3", "probe correctness", ac3, 0},            {"AC4", "steering causality", ac4, 0},
        {"AC5", "geometry analytics", ac5, 0},           {"AC6", "interference-error link", ac6, 120},
        {"AC7", "similarity-task consistency", ac7, 0},  {"AC8", "format integrity", ac8, 0},
    };
    const auto start = Clock::now();
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double dt = seconds_since(t0);
        if (c.budget_s > 0 && dt >= c.budget_s) {
            o.pass = false;
            o.detail += ", over the " + fmt("%.0f", c.budget_s) + " s budget";
        }
        failures += !o.pass;
        std::printf("%s %s %s: %s [%.2f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), dt);
        std::fflush(stdout);
    }
    const double total = seconds_since(start);
    const bool in_budget = total < 300;
    std::printf("suite %s: %d of %zu criteria failed, total %.2f s (budget 300 s)\n",
                failures == 0 && in_budget ? "PASS" : "FAIL", failures, criteria.size(), total);
    return failures == 0 && in_budget ? 0 : 1;
}
