#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/scene_io.hpp"

using namespace vlmgeo;

namespace {

SceneSpec one(ObjectSpec o) {
    SceneSpec s;
    s.id = "t";
    s.objects.push_back(o);
    return s;
}

ObjectSpec obj(Color c, Shape sh, double cx, double cy, int size) {
    ObjectSpec o;
    o.color = c;
    o.shape = sh;
    o.cx = cx;
    o.cy = cy;
    o.size = size;
    return o;
}

std::size_t count_pixels(const Raster& r, Rgb c) {
    std::size_t n = 0;
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) n += r.at(x, y) == c;
    }
    return n;
}

int shared_features(Color c, Shape s, Color tc, Shape ts) { return (c == tc) + (s == ts); }

}  // namespace

TEST(Render, EmptySceneIsBackground) {
    SceneSpec s;
    s.background = {10, 20, 30};
    const auto r = render_scene(s);
    EXPECT_EQ(r.width, 448);
    EXPECT_EQ(r.height, 448);
    EXPECT_EQ(count_pixels(r, {10, 20, 30}), 448u * 448u);
}

TEST(Render, CenteredSquareHasExactPixelCount) {
    const auto r = render_scene(one(obj(Color::red, Shape::square, 224, 224, 112)));
    EXPECT_EQ(count_pixels(r, {255, 0, 0}), 112u * 112u);
    EXPECT_EQ(count_pixels(r, {255, 255, 255}), 448u * 448u - 112u * 112u);
}

TEST(Render, FillMatchesPaletteAndIsConfigurable) {
    Palette p;
    p.named[static_cast<std::size_t>(Color::blue)] = {1, 2, 3};
    const auto r = render_scene(one(obj(Color::blue, Shape::circle, 100, 100, 60)), p);
    EXPECT_GT(count_pixels(r, {1, 2, 3}), 0u);
    EXPECT_EQ(count_pixels(r, {0, 0, 255}), 0u);
}

TEST(Render, OverlapRejected) {
    SceneSpec s;
    s.objects = {obj(Color::red, Shape::square, 100, 100, 60), obj(Color::blue, Shape::square, 120, 120, 60)};
    EXPECT_THROW(render_scene(s), Error);
    EXPECT_THROW(check_scene(s), Error);
}

TEST(Render, OutOfCanvasRejected) {
    EXPECT_THROW(check_scene(one(obj(Color::red, Shape::square, 10, 100, 60))), Error);
}

TEST(Render, TouchingBoxesWithoutSharedPixelsAreFine) {
    SceneSpec s;
    s.objects = {obj(Color::red, Shape::square, 30, 30, 60), obj(Color::blue, Shape::square, 90, 30, 60)};
    EXPECT_NO_THROW(check_scene(s));
}

TEST(Render, Deterministic) {
    const auto s = gen_distillation_corpus({}, 4)[17];
    EXPECT_EQ(render_scene(s).rgb, render_scene(s).rgb);
}

TEST(Shapes, MaskAreasAreSensible) {
    // Brute-force areas against the continuous shape areas within a few percent.
    const double side = 200.0, r = side / 2;
    EXPECT_NEAR(object_mask(one(obj(Color::red, Shape::square, 224, 224, 200)), 0).size(), side * side, 1);
    EXPECT_NEAR(object_mask(one(obj(Color::red, Shape::circle, 224, 224, 200)), 0).size(), M_PI * r * r,
                0.01 * M_PI * r * r);
    // Cross of arm width size/3: 5 of 9 sub-squares.
    EXPECT_NEAR(object_mask(one(obj(Color::red, Shape::cross, 224, 224, 201)), 0).size(), 201.0 * 201.0 * 5 / 9,
                0.01 * 201 * 201);
    for (Shape sh : kAllShapes) {
        const auto n = object_mask(one(obj(Color::red, sh, 224, 224, 200)), 0).size();
        EXPECT_GT(n, 0.2 * side * side) << to_string(sh);
        EXPECT_LE(n, side * side) << to_string(sh);
    }
}

TEST(Shapes, TriangleIsPointUp) {
    EXPECT_TRUE(inside_shape(Shape::triangle, 0.0, -0.8));
    EXPECT_FALSE(inside_shape(Shape::triangle, 0.0, -0.9));
    EXPECT_FALSE(inside_shape(Shape::triangle, 0.9, -0.8));
    EXPECT_TRUE(inside_shape(Shape::triangle, 0.5, 0.8));
}

TEST(TokenMask, SingleCell) {
    const auto m = token_mask(one(obj(Color::red, Shape::square, 14, 14, 28)), 0);
    EXPECT_EQ(m, (std::vector<std::uint32_t>{0}));
    const auto m2 = token_mask(one(obj(Color::red, Shape::square, 28 * 5 + 14, 28 * 7 + 14, 28)), 0);
    EXPECT_EQ(m2, (std::vector<std::uint32_t>{7 * 16 + 5}));
}

TEST(TokenMask, FullCanvas) {
    const auto m = token_mask(one(obj(Color::red, Shape::square, 224, 224, 448)), 0);
    EXPECT_EQ(m.size(), 256u);
}

TEST(TokenMask, AlignedFiftySixSquare) {
    const auto m = token_mask(one(obj(Color::red, Shape::square, 56, 84, 56)), 0);
    EXPECT_EQ(m, (std::vector<std::uint32_t>{2 * 16 + 1, 2 * 16 + 2, 3 * 16 + 1, 3 * 16 + 2}));
}

TEST(TokenMask, QuarterCoverageThreshold) {
    // Centered on a cell corner: a quarter of each of four cells.
    const auto s = one(obj(Color::red, Shape::square, 28, 28, 28));
    const auto cov = cell_coverage(s, 0);
    EXPECT_DOUBLE_EQ(cov[0], 0.25);
    EXPECT_EQ(token_mask(s, 0).size(), 4u);
    EXPECT_TRUE(token_mask(s, 0, {16, 16}, 0.26).empty());
}

TEST(TokenMaskProperty, MatchesRenderedPixelCounts) {
    const auto scenes = gen_distillation_corpus({}, 99);
    for (std::size_t k = 0; k < scenes.size(); k += 7) {
        const auto& s = scenes[k];
        const auto r = render_scene(s);
        const Rgb bg = s.background;
        std::vector<int> count(256, 0);
        for (int y = 0; y < 448; ++y) {
            for (int x = 0; x < 448; ++x) {
                if (!(r.at(x, y) == bg)) ++count[(y / 28) * 16 + x / 28];
            }
        }
        std::vector<std::uint32_t> expect;
        for (std::uint32_t i = 0; i < 256; ++i) {
            if (count[i] * 4 >= 28 * 28) expect.push_back(i);
        }
        EXPECT_EQ(token_mask(s, 0), expect) << s.id;
    }
}

TEST(Hsv, KnownValues) {
    EXPECT_EQ(hsv_to_rgb(0, 1, 1), (Rgb{255, 0, 0}));
    EXPECT_EQ(hsv_to_rgb(120, 1, 1), (Rgb{0, 255, 0}));
    EXPECT_EQ(hsv_to_rgb(240, 1, 1), (Rgb{0, 0, 255}));
    EXPECT_EQ(hsv_to_rgb(0, 0, 1), (Rgb{255, 255, 255}));
    EXPECT_EQ(hsv_to_rgb(60, 1, 1), (Rgb{255, 255, 0}));
    // 30 deg: green channel 127.5 rounds half-up
    EXPECT_EQ(hsv_to_rgb(30, 1, 1), (Rgb{255, 128, 0}));
    EXPECT_EQ(hsv_to_rgb(0, 0, 0.5), (Rgb{128, 128, 128}));
}

TEST(Hsv, OutOfRangeRejected) {
    EXPECT_THROW(hsv_to_rgb(0, 1.5, 1), Error);
    EXPECT_THROW(hsv_to_rgb(0, 1, -0.1), Error);
    EXPECT_THROW(hsv_to_rgb(NAN, 1, 1), Error);
}

TEST(HsvProperty, Periodic) {
    for (int i = 0; i < 720; ++i) {
        const double h = i * 0.5;
        EXPECT_EQ(hsv_to_rgb(h, 1, 1), hsv_to_rgb(h + 360, 1, 1)) << h;
        EXPECT_EQ(hsv_to_rgb(h, 0.7, 0.4), hsv_to_rgb(h - 360, 0.7, 0.4)) << h;
    }
}

TEST(Distillation, CountsAndDeterminism) {
    const auto a = gen_distillation_corpus({}, 1);
    EXPECT_EQ(a.size(), 360u);
    EXPECT_EQ(a, gen_distillation_corpus({}, 1));
    EXPECT_NE(a, gen_distillation_corpus({}, 2));
    std::map<std::string, int> per_concept;
    for (const auto& s : a) {
        ASSERT_EQ(s.objects.size(), 1u);
        EXPECT_NO_THROW(check_scene(s));
        const auto& o = s.objects[0];
        EXPECT_GE(o.size, 40);
        EXPECT_LE(o.size, 90);
        ++per_concept[object_label(o)];
    }
    EXPECT_EQ(per_concept.size(), 36u);
    for (const auto& [k, n] : per_concept) EXPECT_EQ(n, 10) << k;
}

TEST(ProbeCorpus, LabelsMatchObjects) {
    SceneSpec s;
    s.objects = {obj(Color::red, Shape::square, 100, 100, 40), obj(Color::blue, Shape::circle, 300, 300, 40)};
    const auto labels = presence_labels(s, {kAllColors.begin(), kAllColors.end()}, {kAllShapes.begin(), kAllShapes.end()});
    EXPECT_EQ(labels.size(), 36u);
    int n = 0;
    for (const auto& [k, v] : labels) n += v;
    EXPECT_EQ(n, 2);
    EXPECT_TRUE(labels.at("red|square"));
    EXPECT_TRUE(labels.at("blue|circle"));
    EXPECT_FALSE(labels.at("red|circle"));
}

TEST(ProbeCorpus, BalanceHoldsAtScale) {
    ProbeCorpusParams p;
    p.scene_count = 2000;
    const auto corpus = gen_probe_corpus(p, 8);
    ASSERT_EQ(corpus.size(), 2000u);
    std::map<std::string, int> present;
    for (const auto& l : corpus) {
        EXPECT_EQ(l.labels.size(), 36u);
        EXPECT_GE(static_cast<int>(l.scene.objects.size()), p.min_objects);
        EXPECT_LE(static_cast<int>(l.scene.objects.size()), p.max_objects);
        for (const auto& [k, v] : l.labels) present[k] += v;
        // Labels agree with the scene's objects.
        std::set<std::string> objs;
        for (const auto& o : l.scene.objects) objs.insert(object_label(o));
        for (const auto& [k, v] : l.labels) EXPECT_EQ(v, objs.count(k) == 1);
    }
    for (const auto& [k, n] : present) {
        EXPECT_NEAR(n / 2000.0, 0.5, 0.1) << k;
    }
}

TEST(ProbeCorpus, DeterministicAndInfeasible) {
    ProbeCorpusParams p;
    p.scene_count = 30;
    const auto a = gen_probe_corpus(p, 3), b = gen_probe_corpus(p, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].scene, b[i].scene);
    p.min_objects = 2;
    p.max_objects = 4;
    try {
        gen_probe_corpus(p, 3);
        FAIL() << "expected infeasible";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::infeasible);
    }
}

TEST(VisualSearch, HighInterferenceCountRoundsHalfUp) {
    EXPECT_EQ(high_interference_count(10, 0.25), 3);
    EXPECT_EQ(high_interference_count(4, 1.0), 4);
    EXPECT_EQ(high_interference_count(4, 0.0), 0);
    EXPECT_EQ(high_interference_count(6, 0.25), 2);  // 1.5
    EXPECT_EQ(high_interference_count(4, 0.75), 3);
}

TEST(VisualSearch, ExtremeCompositions) {
    VisualSearchParams p;
    p.n_dist = {4};
    p.p_int = {1.0, 0.0};
    p.trials_per_cell = 5;
    const auto batch = gen_visual_search_trials(p, 12);
    ASSERT_EQ(batch.trials.size(), 20u);
    for (const auto& t : batch.trials) {
        int near = 0, far = 0, target = 0;
        for (const auto& o : t.scene.objects) {
            const int sf = shared_features(std::get<Color>(o.color), o.shape, t.target_color, t.target_shape);
            near += sf == 1;
            far += sf == 0;
            target += sf == 2;
        }
        EXPECT_EQ(target, t.target_present ? 1 : 0);
        if (t.p_int == 1.0) EXPECT_EQ(near, 4);
        if (t.p_int == 0.0) EXPECT_EQ(far, 4);
    }
}

TEST(VisualSearchProperty, CompositionAndCollisionFreedom) {
    const auto batch = gen_visual_search_trials({}, 77);
    EXPECT_EQ(batch.trials.size() + batch.failures.size(), 2000u);
    std::size_t present = 0;
    for (const auto& t : batch.trials) {
        int near = 0, far = 0, target = 0;
        for (const auto& o : t.scene.objects) {
            const int sf = shared_features(std::get<Color>(o.color), o.shape, t.target_color, t.target_shape);
            near += sf == 1;
            far += sf == 0;
            target += sf == 2;
        }
        ASSERT_EQ(target, t.target_present ? 1 : 0) << t.id;
        ASSERT_EQ(near, high_interference_count(t.n_dist, t.p_int)) << t.id;
        ASSERT_EQ(near + far, t.n_dist) << t.id;
        ASSERT_EQ(t.k_high, near);
        ASSERT_NO_THROW(check_scene(t.scene)) << t.id;
        present += t.target_present;
    }
    EXPECT_EQ(present * 2, batch.trials.size());
}

TEST(VisualSearch, Deterministic) {
    VisualSearchParams p;
    p.trials_per_cell = 2;
    const auto a = gen_visual_search_trials(p, 5), b = gen_visual_search_trials(p, 5);
    ASSERT_EQ(a.trials.size(), b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].scene, b.trials[i].scene);
}

TEST(VisualSearch, ImpossiblePlacementIsReportedNotEmitted) {
    VisualSearchParams p;
    p.n_dist = {40};
    p.p_int = {0.5};
    p.trials_per_cell = 2;
    p.size = {150, 160};
    p.retry_budget = 3;
    const auto batch = gen_visual_search_trials(p, 1);
    EXPECT_TRUE(batch.trials.empty());
    EXPECT_EQ(batch.failures.size(), 4u);
}

TEST(Similarity, LettersAndSeparation) {
    SimilarityParams p;
    p.min_setup = 4;
    p.max_setup = 4;
    p.trial_count = 3;
    for (const auto& t : gen_similarity_trials(p, 1)) {
        EXPECT_EQ(t.letters, (std::vector<std::string>{"A", "B", "C", "D"}));
    }
}

TEST(SimilarityProperty, SizesDistinctAndSeparated) {
    const auto trials = gen_similarity_trials({}, 21);
    ASSERT_EQ(trials.size(), 100u);
    EXPECT_EQ(trials.size(), gen_similarity_trials({}, 21).size());
    for (const auto& t : trials) {
        EXPECT_GE(t.setup_hues.size(), 4u);
        EXPECT_LE(t.setup_hues.size(), 12u);
        EXPECT_EQ(std::set<std::string>(t.letters.begin(), t.letters.end()).size(), t.letters.size());
        for (std::size_t i = 0; i < t.setup_hues.size(); ++i) {
            EXPECT_GE(t.setup_hues[i], 0.0);
            EXPECT_LT(t.setup_hues[i], 360.0);
            for (std::size_t j = i + 1; j < t.setup_hues.size(); ++j) {
                EXPECT_GE(circular_distance(t.setup_hues[i], t.setup_hues[j]), 10.0);
            }
        }
        EXPECT_NO_THROW(check_scene(t.setup_scene));
        EXPECT_NO_THROW(check_scene(t.query_scene));
        EXPECT_EQ(t.query_scene.objects.size(), 1u);
        EXPECT_EQ(t.setup_scene.objects.size(), t.setup_hues.size());
    }
    const auto again = gen_similarity_trials({}, 21);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        EXPECT_EQ(trials[i].setup_hues, again[i].setup_hues);
        EXPECT_EQ(trials[i].query_hue, again[i].query_hue);
    }
}

TEST(Similarity, InfeasibleSeparation) {
    SimilarityParams p;
    p.max_setup = 12;
    p.min_sep = 40;
    EXPECT_THROW(gen_similarity_trials(p, 1), Error);
}

TEST(HueSweep, GridHues) {
    const auto s100 = gen_hue_sweep(100, 3);
    ASSERT_EQ(s100.size(), 100u);
    EXPECT_DOUBLE_EQ(std::get<Hue>(s100[0].objects[0].color).degrees, 0.0);
    EXPECT_DOUBLE_EQ(std::get<Hue>(s100[1].objects[0].color).degrees, 3.6);
    EXPECT_DOUBLE_EQ(std::get<Hue>(s100[2].objects[0].color).degrees, 7.2);
    const auto s4 = gen_hue_sweep(4, 3);
    std::vector<double> hues;
    for (const auto& s : s4) {
        ASSERT_EQ(s.objects.size(), 1u);
        EXPECT_EQ(s.objects[0].shape, Shape::square);
        hues.push_back(std::get<Hue>(s.objects[0].color).degrees);
    }
    EXPECT_EQ(hues, (std::vector<double>{0, 90, 180, 270}));
    EXPECT_THROW(gen_hue_sweep(1, 0), Error);
    EXPECT_EQ(fill_color(Hue{120}), (Rgb{0, 255, 0}));
}

TEST(Labels, Formatting) {
    EXPECT_EQ(concept_label(Color::red, Shape::square), "red|square");
    EXPECT_EQ(color_label(Hue{137.5}), "hue:137.5");
    EXPECT_EQ(color_label(Hue{3.6}), "hue:3.6");
    EXPECT_EQ(color_from_string("purple"), Color::purple);
    EXPECT_EQ(shape_from_string("heart"), Shape::heart);
    EXPECT_THROW(shape_from_string("oval"), Error);
}

TEST(CircularDistance, Wraps) {
    EXPECT_DOUBLE_EQ(circular_distance(350, 10), 20);
    EXPECT_DOUBLE_EQ(circular_distance(0, 180), 180);
    EXPECT_DOUBLE_EQ(circular_distance(10, 370), 0);
}

TEST(SceneIo, CorpusRoundTripAndPng) {
    testing_support::TempDir dir("scenes");
    auto scenes = gen_distillation_corpus({{Color::red}, {Shape::star, Shape::heart}, 2, {40, 90}}, 4);
    scenes.push_back(gen_hue_sweep(3, 1)[1]);
    write_scene_corpus(dir.path(), scenes, true);
    EXPECT_EQ(read_scene_corpus(dir.path()), scenes);
    for (const auto& s : scenes) {
        const auto bytes = read_file_bytes(dir / (s.id + ".png"));
        ASSERT_GT(bytes.size(), 8u);
        EXPECT_EQ(bytes[1], 'P');
        EXPECT_EQ(bytes[2], 'N');
        EXPECT_EQ(bytes[3], 'G');
    }
}

TEST(SceneIo, TrialRoundTrip) {
    VisualSearchParams p;
    p.trials_per_cell = 1;
    p.n_dist = {4};
    for (const auto& t : gen_visual_search_trials(p, 2).trials) {
        const auto back = visual_search_trial_from_json(to_json(t));
        EXPECT_EQ(back.scene, t.scene);
        EXPECT_EQ(back.target_label(), t.target_label());
        EXPECT_EQ(back.target_present, t.target_present);
        EXPECT_EQ(back.k_high, t.k_high);
    }
    for (const auto& t : gen_similarity_trials({}, 2)) {
        const auto back = similarity_trial_from_json(to_json(t));
        EXPECT_EQ(back.setup_hues, t.setup_hues);
        EXPECT_EQ(back.letters, t.letters);
        EXPECT_EQ(back.query_scene, t.query_scene);
    }
}
