#include "vlmgeo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vlmgeo/csv.hpp"
#include "vlmgeo/distiller.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/geometry.hpp"
#include "vlmgeo/oracle.hpp"
#include "vlmgeo/pipeline.hpp"
#include "vlmgeo/plot.hpp"
#include "vlmgeo/rng.hpp"
#include "vlmgeo/scene_io.hpp"
#include "vlmgeo/steering.hpp"
#include "vlmgeo/task_bench.hpp"

namespace vlmgeo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    std::optional<int> threads;
};

ExperimentConfig resolve(const Globals& g) {
    ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (g.threads) {
        if (*g.threads < 1) throw Error(Errc::config, "--threads must be >= 1");
        c.threads = *g.threads;
    }
    return c;
}

// `--out` names a file when it carries the expected extension, otherwise a
// directory that receives `fallback`.
fs::path output_file(const std::string& out, const std::string& ext, const std::string& fallback) {
    fs::path p(out);
    if (p.extension() == ext) {
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p;
    }
    fs::create_directories(p);
    return p / fallback;
}

fs::path output_dir(const std::string& out) {
    fs::create_directories(out);
    return out;
}

// A directory is read through the file it is expected to hold.
fs::path input_file(const std::string& in, const std::string& inside) {
    fs::path p(in);
    if (fs::is_directory(p)) return p / inside;
    return p;
}

std::string fixed(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(Errc::io, "cannot write '" + path.string() + "'");
    f << j.dump(2) << '\n';
}

std::vector<ConceptVector> ground_truth_composites(const OracleWorld& world, const std::vector<Color>& colors,
                                                   const std::vector<Shape>& shapes) {
    std::vector<ConceptVector> out;
    for (Color c : colors) {
        for (Shape s : shapes) {
            out.push_back(make_concept_vector(world.composite(c, s), concept_label(c, s), Method::centroid,
                                              world.spec().model_id));
        }
    }
    return out;
}

std::vector<ConceptVector> ground_truth_colors(const OracleWorld& world, const std::vector<Color>& colors) {
    std::vector<ConceptVector> out;
    for (Color c : colors) {
        const auto d = world.color_dir(c);
        out.push_back(make_concept_vector(std::vector<double>(d.begin(), d.end()), std::string(to_string(c)),
                                          Method::centroid, world.spec().model_id));
    }
    return out;
}

// Oracle answers, keeping every scene that was shown so that a recorded run
// can be handed to an external model together with its stimuli.
class SceneKeeper : public Answerer {
public:
    explicit SceneKeeper(Answerer& inner) : inner_(inner) {}

    std::string answer_presence(const SceneSpec& scene, const Concept& query, const SteeringSpec* steering) override {
        if (!seen_.count(scene.id)) {
            seen_.insert(scene.id);
            scenes_.push_back(scene);
        }
        return inner_.answer_presence(scene, query, steering);
    }
    std::string answer_color(const ColorImage& image, const SteeringSpec* steering) override {
        return inner_.answer_color(image, steering);
    }

    const std::vector<SceneSpec>& scenes() const { return scenes_; }

private:
    Answerer& inner_;
    std::set<std::string> seen_;
    std::vector<SceneSpec> scenes_;
};

std::map<std::string, ReplayRecord> replay_by_stimulus(const std::string& path) {
    std::map<std::string, ReplayRecord> out;
    for (auto& r : read_replay(path)) {
        if (r.steered) continue;
        out[r.stimulus_id] = std::move(r);
    }
    return out;
}

std::vector<VisualSearchTrial> load_vs_trials(const std::string& path) {
    std::vector<VisualSearchTrial> out;
    for (const auto& j : read_jsonl(input_file(path, "trials.jsonl"))) out.push_back(visual_search_trial_from_json(j));
    return out;
}

std::vector<SimilarityTrial> load_sim_trials(const std::string& path) {
    std::vector<SimilarityTrial> out;
    for (const auto& j : read_jsonl(input_file(path, "trials.jsonl"))) out.push_back(similarity_trial_from_json(j));
    return out;
}

std::vector<HueVector> hue_vectors_of(const std::vector<ConceptVector>& vs) {
    std::vector<HueVector> out;
    for (const auto& v : vs) out.push_back({hue_of_label(v.label), v});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.hue < b.hue; });
    return out;
}

// ---- subcommand bodies ----

struct GenArgs {
    std::string kind;
    std::optional<int> count;
    bool png = false;
};

int cmd_gen(const Globals& g, const GenArgs& a, std::ostream& out) {
    const auto cfg = resolve(g);
    const auto dir = output_dir(g.out);
    json manifest = {{"kind", a.kind}, {"seed", cfg.seed}, {"format", "vlmgeo-stimuli"}, {"version", 1}};
    std::size_t items = 0;
    std::vector<std::string> files;

    auto save_scenes = [&](const std::vector<SceneSpec>& scenes) {
        write_scene_corpus(dir, scenes, a.png);
        items = scenes.size();
        files.push_back("scenes.jsonl");
    };

    if (a.kind == "distill") {
        auto p = cfg.distillation;
        if (a.count) p.positions_per_concept = *a.count;
        manifest["params"] = {{"positions_per_concept", p.positions_per_concept}};
        save_scenes(gen_distillation_corpus(p, stage_seed(cfg.seed, "distill")));
    } else if (a.kind == "probe") {
        auto p = cfg.probe_corpus;
        if (a.count) p.scene_count = *a.count;
        manifest["params"] = {{"scene_count", p.scene_count}};
        const auto corpus = gen_probe_corpus(p, stage_seed(cfg.seed, "probe-corpus"));
        std::vector<SceneSpec> scenes;
        std::vector<json> labels;
        for (const auto& l : corpus) {
            scenes.push_back(l.scene);
            labels.push_back({{"id", l.scene.id}, {"labels", l.labels}});
        }
        save_scenes(scenes);
        write_jsonl(dir / "labels.jsonl", labels);
        files.push_back("labels.jsonl");
    } else if (a.kind == "hue-sweep") {
        const int n = a.count.value_or(cfg.hue_count);
        manifest["params"] = {{"count", n}};
        save_scenes(gen_hue_sweep(n, stage_seed(cfg.seed, "hue-sweep")));
    } else if (a.kind == "color") {
        const int n = a.count.value_or(cfg.color_images_per_color);
        manifest["params"] = {{"per_color", n}};
        save_scenes(gen_color_images(cfg.color_swap.colors, n, stage_seed(cfg.seed, "color-images")));
    } else if (a.kind == "visual-search") {
        auto p = cfg.visual_search;
        if (a.count) p.trials_per_cell = *a.count;
        manifest["params"] = {{"trials_per_cell", p.trials_per_cell}};
        const auto batch = gen_visual_search_trials(p, stage_seed(cfg.seed, "visual-search"));
        std::vector<json> lines;
        for (const auto& t : batch.trials) {
            lines.push_back(to_json(t));
            if (a.png) write_png(dir / (t.scene.id + ".png"), render_scene(t.scene));
        }
        write_jsonl(dir / "trials.jsonl", lines);
        files.push_back("trials.jsonl");
        json failures = json::array();
        for (const auto& f : batch.failures) failures.push_back({{"trial_id", f.trial_id}, {"reason", f.reason}});
        manifest["placement_failures"] = failures;
        items = batch.trials.size();
    } else if (a.kind == "similarity") {
        auto p = cfg.similarity;
        if (a.count) p.trial_count = *a.count;
        manifest["params"] = {{"trial_count", p.trial_count}};
        const auto trials = gen_similarity_trials(p, stage_seed(cfg.seed, "similarity"));
        std::vector<json> lines;
        for (const auto& t : trials) {
            lines.push_back(to_json(t));
            if (a.png) {
                write_png(dir / (t.setup_scene.id + ".png"), render_scene(t.setup_scene));
                write_png(dir / (t.query_scene.id + ".png"), render_scene(t.query_scene));
            }
        }
        write_jsonl(dir / "trials.jsonl", lines);
        files.push_back("trials.jsonl");
        items = trials.size();
    } else {
        throw Error(Errc::config, "unknown stimulus kind '" + a.kind + "'");
    }
    manifest["items"] = items;
    manifest["files"] = files;
    manifest["png"] = a.png;
    write_json(dir / "manifest.json", manifest);
    out << "wrote " << items << ' ' << a.kind << " items to " << dir.string() << '\n';
    return 0;
}

int cmd_embed(const Globals& g, const std::string& scenes_path, std::ostream& out) {
    const auto cfg = resolve(g);
    const OracleWorld world(cfg.world);
    std::vector<SceneSpec> scenes;
    for (const auto& j : read_jsonl(input_file(scenes_path, "scenes.jsonl"))) scenes.push_back(scene_from_json(j));
    const auto set = embed_scenes(scenes, world);
    const auto path = output_file(g.out, ".cva", "activations.cva");
    write_activation_set(set, path);
    out << "embedded " << set.sequences.size() << " scenes (d=" << set.dim << ") into " << path.string() << '\n';
    return 0;
}

struct DistillArgs {
    std::string method = "centroid";
    std::string acts;
    std::string factor = "composite";
};

int cmd_distill(const Globals& g, const DistillArgs& a, std::ostream& out) {
    const auto cfg = resolve(g);
    const Method method = method_from_string(a.method);
    const auto set = read_activation_set(a.acts);
    const auto seqs = relabel(set.sequences, factor_from_string(a.factor));
    std::vector<ConceptVector> vectors;
    if (method == Method::centroid) {
        vectors = distill_all_centroids(seqs);
    } else {
        auto pc = cfg.probe;
        pc.seed = derive_seed(stage_seed(cfg.seed, "probe-train"), cfg.probe.seed);
        const auto probes = train_all_probes(seqs, pc);
        for (const auto& p : probes) {
            vectors.push_back(p.vector);
            out << p.vector.label << ": held-out auc " << fixed(p.metrics.heldout_auc) << ", epochs "
                << p.metrics.epochs_run << '\n';
        }
        if (method == Method::pca_probe) {
            std::vector<std::string> colors, shapes;
            for (const auto& v : vectors) {
                const auto f = split_label(v.label);
                if (std::find(colors.begin(), colors.end(), f.color) == colors.end()) colors.push_back(f.color);
                if (std::find(shapes.begin(), shapes.end(), f.shape) == shapes.end()) shapes.push_back(f.shape);
            }
            auto reg = pca_regularize(grid_order(vectors, colors, shapes), colors.size(), shapes.size());
            for (const auto& w : reg.warnings) out << "warning: " << w << '\n';
            vectors = std::move(reg.vectors);
        }
    }
    const auto path = output_file(g.out, ".cvv", "vectors.cvv");
    write_concept_vectors(vectors, path);
    out << "wrote " << vectors.size() << ' ' << to_string(method) << " vectors to " << path.string() << '\n';
    return 0;
}

struct SteerArgs {
    std::string vectors;
    std::string replay;
    std::string record;
    std::optional<std::size_t> max_triples;
    std::optional<int> per_color;
};

int cmd_triples(const Globals& g, const SteerArgs& a, std::ostream& out) {
    auto cfg = resolve(g);
    if (a.max_triples) cfg.max_triples = *a.max_triples;
    const OracleWorld world(cfg.world);
    const auto vectors = a.vectors.empty()
                             ? ground_truth_composites(world, cfg.distillation.colors, cfg.distillation.shapes)
                             : read_concept_vectors(a.vectors);
    const auto store = make_store(vectors);
    OracleAnswerer oracle(world);
    std::optional<ReplayAnswerer> replay;
    if (!a.replay.empty()) replay.emplace(read_replay(a.replay));
    Answerer& base = replay ? static_cast<Answerer&>(*replay) : static_cast<Answerer&>(oracle);
    SceneKeeper keeper(base);
    RecordingAnswerer recorder(keeper);

    auto triples = enumerate_triples(cfg.distillation.colors, cfg.distillation.shapes);
    if (cfg.max_triples > 0 && cfg.max_triples < triples.size()) {
        std::vector<Triple> picked;
        for (std::size_t i = 0; i < cfg.max_triples; ++i) picked.push_back(triples[i * triples.size() / cfg.max_triples]);
        triples = std::move(picked);
    }
    const auto seed = stage_seed(cfg.seed, "triples");
    std::vector<TripleOutcome> outcomes;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        outcomes.push_back(run_triple_protocol(recorder, triples[i], store, cfg.triples, derive_seed(seed, i)));
    }
    const auto dir = output_dir(g.out);
    write_triple_csv(dir / "triples.csv", outcomes);
    if (!a.record.empty()) {
        write_replay(a.record, recorder.records());
        write_scene_corpus(dir / "triple_scenes", keeper.scenes(), false);
    }
    const auto s = summarize(outcomes);
    out << "triples " << s.triples << ", excluded " << s.excluded << ", evaluated " << s.evaluated << ", successes "
        << s.successes << ", success rate " << fixed(s.success_rate()) << '\n';
    return 0;
}

int cmd_color_swap(const Globals& g, const SteerArgs& a, std::ostream& out) {
    auto cfg = resolve(g);
    if (a.per_color) cfg.color_images_per_color = *a.per_color;
    const OracleWorld world(cfg.world);
    const auto vectors =
        a.vectors.empty() ? ground_truth_colors(world, cfg.color_swap.colors) : read_concept_vectors(a.vectors);
    const auto store = make_store(vectors);
    const auto scenes =
        gen_color_images(cfg.color_swap.colors, cfg.color_images_per_color, stage_seed(cfg.seed, "color-images"));
    std::vector<ColorImage> images;
    for (const auto& s : scenes) {
        images.push_back({s.id, a.replay.empty() ? oracle_embed(s, world) : ActivationSequence{},
                          std::string(to_string(s.objects[0].shape)), std::get<Color>(s.objects[0].color)});
    }
    OracleAnswerer oracle(world);
    std::optional<ReplayAnswerer> replay;
    if (!a.replay.empty()) replay.emplace(read_replay(a.replay));
    Answerer& base = replay ? static_cast<Answerer&>(*replay) : static_cast<Answerer&>(oracle);
    RecordingAnswerer recorder(base);
    const auto rep = run_color_swap_protocol(recorder, images, store, cfg.color_swap);
    const auto dir = output_dir(g.out);
    write_color_swap_csv(dir / "color_swap.csv", rep);
    if (!a.record.empty()) {
        write_replay(a.record, recorder.records());
        write_scene_corpus(dir / "color_scenes", scenes, false);
    }
    out << "operations " << rep.operations << ", successes " << rep.successes << ", success rate "
        << fixed(rep.overall_rate()) << '\n';
    return 0;
}

struct GeometryArgs {
    std::string vectors;
    std::string other;
    std::size_t k = 3;
};

int cmd_matrix(const Globals& g, const GeometryArgs& a, std::ostream& out) {
    const auto vs = read_concept_vectors(a.vectors);
    const auto m = cosine_matrix(vs);
    const auto dir = output_dir(g.out);
    write_matrix_csv(dir / "similarity_matrix.csv", m);
    bool factored = std::all_of(vs.begin(), vs.end(), [](const auto& v) {
        return std::count(v.label.begin(), v.label.end(), '|') == 1;
    });
    if (factored) {
        const auto groups = group_similarity_stats(m);
        write_group_csv(dir / "groups.csv", groups);
        svg_similarity_figure(dir / "similarity_matrix.svg", m, groups, a.vectors);
        out << "same color " << fixed(groups.same_color.mean) << ", same shape " << fixed(groups.same_shape.mean)
            << ", neither " << fixed(groups.neither.mean) << ", separated " << (groups.separated() ? "yes" : "no")
            << '\n';
    } else {
        svg_similarity_figure(dir / "similarity_matrix.svg", m, {}, a.vectors);
        out << "matrix " << m.size() << 'x' << m.size() << '\n';
    }
    return 0;
}

int cmd_profile(const Globals& g, const GeometryArgs& a, std::ostream& out) {
    const auto hv = hue_vectors_of(read_concept_vectors(a.vectors));
    const auto p = semantic_similarity_function(hv, 1e-3);
    const auto shape = describe_profile(p);
    const auto dir = output_dir(g.out);
    write_profile_csv(dir / "profile.csv", p);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < p.deltas.size(); ++k) pts.emplace_back(SimilarityProfile::signed_delta(p.deltas[k]), p.mean[k]);
    std::sort(pts.begin(), pts.end());
    Series s{"mean", {}, {}};
    for (const auto& [x, y] : pts) {
        s.x.push_back(x);
        s.y.push_back(y);
    }
    svg_line_plot(dir / "profile.svg", "hue similarity profile", "hue displacement (degrees)", "cosine", {s});
    out << "hues " << hv.size() << ", tail sign changes " << shape.tail_sign_changes << '\n';
    return 0;
}

int cmd_rsa(const GeometryArgs& a, std::ostream& out) {
    if (a.other.empty()) throw Error(Errc::config, "geometry rsa needs --other");
    const auto va = read_concept_vectors(a.vectors);
    const auto vb_raw = read_concept_vectors(a.other);
    // Align the second set to the first by label.
    std::vector<ConceptVector> vb;
    for (const auto& v : va) {
        auto it = std::find_if(vb_raw.begin(), vb_raw.end(), [&](const auto& w) { return w.label == v.label; });
        if (it == vb_raw.end()) throw Error(Errc::not_found, "'" + v.label + "' missing from " + a.other);
        vb.push_back(*it);
    }
    out << "rsa " << fixed(rsa(cosine_matrix(va), cosine_matrix(vb))) << '\n';
    return 0;
}

int cmd_pca(const Globals& g, const GeometryArgs& a, std::ostream& out) {
    const auto vs = read_concept_vectors(a.vectors);
    const auto p = pca_project(vs, a.k);
    std::vector<std::string> labels;
    std::vector<ScatterPoint> pts;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        labels.push_back(vs[i].label);
        pts.push_back({p.coords[i][0], a.k > 1 ? p.coords[i][1] : 0.0, "#1f77b4", vs[i].label});
    }
    const auto dir = output_dir(g.out);
    write_projection_csv(dir / "pca.csv", labels, p);
    svg_scatter(dir / "pca.svg", "first two principal components", "PC1", "PC2", pts);
    out << "explained";
    for (double r : p.explained_ratio) out << ' ' << fixed(r);
    out << '\n';
    return 0;
}

struct BenchArgs {
    std::string trials;
    std::string vectors;
    std::string replay;
    std::string simfn = "cosine";
    std::optional<int> bins;
    std::optional<int> min_per_bin;
};

int cmd_visual_search(const Globals& g, const BenchArgs& a, std::ostream& out) {
    auto cfg = resolve(g);
    if (a.bins) cfg.bins = *a.bins;
    if (a.min_per_bin) cfg.min_per_bin = *a.min_per_bin;
    const OracleWorld world(merge_world(cfg.world, cfg.visual_search_world));
    const auto trials = a.trials.empty()
                            ? gen_visual_search_trials(cfg.visual_search, stage_seed(cfg.seed, "visual-search")).trials
                            : load_vs_trials(a.trials);
    const auto vectors = a.vectors.empty() ? ground_truth_composites(world, {kAllColors.begin(), kAllColors.end()},
                                                                     {kAllShapes.begin(), kAllShapes.end()})
                                           : read_concept_vectors(a.vectors);
    std::vector<VisualSearchRecord> records;
    if (a.replay.empty()) {
        records = run_oracle_visual_search(trials, world);
    } else {
        const auto byid = replay_by_stimulus(a.replay);
        for (const auto& t : trials) {
            const auto it = byid.find(t.id);
            if (it == byid.end()) throw Error(Errc::not_found, "no replay answer for trial " + t.id);
            Logits l;
            for (const char* k : {"yes", "no"}) {
                if (it->second.logits.count(k)) l.emplace_back(k, it->second.logits.at(k));
            }
            records.push_back({t, it->second.answer, l, false, 0.0});
        }
    }
    const auto rep = score_visual_search(records, make_store(vectors), cfg.bins, cfg.min_per_bin);
    const auto dir = output_dir(g.out);
    std::vector<json> lines;
    for (const auto& r : records) lines.push_back(to_json(r));
    write_jsonl(dir / "visual_search_records.jsonl", lines);
    write_curve_csv(dir / "visual_search_curve.csv", rep);
    svg_line_plot(dir / "visual_search.svg", "accuracy against interference", "interference", "accuracy",
                  {{"present", rep.present.centers(), rep.present.accuracies(), "#1f77b4"},
                   {"absent", rep.absent.centers(), rep.absent.accuracies(), "#d62728"}});
    out << "trials " << records.size() << ", accuracy " << fixed(rep.accuracy) << ", r_present "
        << fixed(rep.r_present) << ", r_absent " << fixed(rep.r_absent) << '\n';
    return 0;
}

int cmd_similarity(const Globals& g, const BenchArgs& a, std::ostream& out) {
    const auto cfg = resolve(g);
    const OracleWorld world(cfg.world);
    const auto trials = a.trials.empty() ? gen_similarity_trials(cfg.similarity, stage_seed(cfg.seed, "similarity"))
                                         : load_sim_trials(a.trials);
    SimFn fn;
    if (a.simfn == "hue") {
        fn = hue_similarity;
    } else if (a.simfn == "cosine") {
        fn = planar_cosine_similarity;
    } else if (a.simfn == "vectors") {
        if (a.vectors.empty()) throw Error(Errc::config, "--simfn vectors needs --vectors");
        std::vector<std::pair<double, ConceptVector>> hv;
        for (auto& h : hue_vectors_of(read_concept_vectors(a.vectors))) hv.emplace_back(h.hue, std::move(h.vector));
        fn = vector_similarity(std::move(hv));
    } else {
        throw Error(Errc::config, "--simfn must be hue, cosine or vectors");
    }
    std::vector<SimilarityRecord> records;
    if (a.replay.empty()) {
        records = run_oracle_similarity(trials, world);
    } else {
        const auto byid = replay_by_stimulus(a.replay);
        for (const auto& t : trials) {
            const auto it = byid.find(t.id);
            if (it == byid.end()) throw Error(Errc::not_found, "no replay answer for trial " + t.id);
            Logits l;
            for (const auto& letter : t.letters) {
                if (!it->second.logits.count(letter)) {
                    throw Error(Errc::bad_header, "replay for " + t.id + " lacks a logit for " + letter);
                }
                l.emplace_back(letter, it->second.logits.at(letter));
            }
            records.push_back({t, it->second.answer, l});
        }
    }
    const auto dir = output_dir(g.out);
    write_similarity_csv(dir / "similarity_trials.csv", records, fn);
    out << "trials " << records.size() << ", agreement " << fixed(prediction_agreement(records, fn));
    try {
        out << ", confidence r " << fixed(confidence_correlation(records, fn));
    } catch (const Error& e) {
        if (e.code() != Errc::degenerate && e.code() != Errc::invalid_argument) throw;
        out << ", confidence r nan";
    }
    out << '\n';
    return 0;
}

int cmd_pipeline(const Globals& g, std::ostream& out) {
    const auto cfg = resolve(g);
    const auto sum = full_pipeline(cfg, output_dir(g.out));
    for (const auto& l : sum.report_lines) out << l << '\n';
    return 0;
}

int cmd_validate(const std::string& path, std::ostream& out) {
    if (fs::path(path).extension() == ".cvv") {
        const auto vs = read_concept_vectors(path);
        bool ok = true;
        for (const auto& v : vs) {
            double n = 0.0;
            for (float x : v.direction) n += static_cast<double>(x) * x;
            const bool unit = std::abs(std::sqrt(n) - 1.0) < 1e-5;
            if (!unit) {
                out << v.label << ": norm " << fixed(std::sqrt(n)) << ", not unit\n";
                ok = false;
            }
        }
        out << vs.size() << " vectors, " << (ok ? "ok" : "invalid") << '\n';
        return ok ? 0 : 1;
    }
    const auto rep = validate_container(path);
    for (const auto& s : rep.sequences) {
        out << s.stimulus_id << ": L=" << s.length << " d=" << s.dim << " grid=" << s.grid.rows << 'x' << s.grid.cols
            << (s.finite ? "" : " non-finite") << (s.grid_consistent ? "" : " grid-mismatch") << '\n';
    }
    for (const auto& i : rep.issues) out << "issue: " << i << '\n';
    out << rep.sequences.size() << " sequences, " << (rep.ok ? "ok" : "invalid") << '\n';
    return rep.ok ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept-vector geometry toolkit for vision-language activations", "vlmgeo"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "root seed, overrides the config");
    app.add_option("--out", g.out, "output directory or file")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads");

    auto* gen = app.add_subcommand("gen", "generate stimuli")->require_subcommand(1);
    GenArgs gen_args;
    auto* stimuli = gen->add_subcommand("stimuli", "write a scene or trial corpus");
    stimuli->add_option("--kind", gen_args.kind, "distill, probe, visual-search, similarity, hue-sweep or color")
        ->required()
        ->check(CLI::IsMember({"distill", "probe", "visual-search", "similarity", "hue-sweep", "color"}));
    stimuli->add_option("--count", gen_args.count, "size parameter of the chosen kind");
    stimuli->add_flag("--png", gen_args.png, "also render PNG files");

    auto* embed = app.add_subcommand("embed", "compute activations")->require_subcommand(1);
    std::string scenes_path;
    auto* oracle = embed->add_subcommand("oracle", "embed scenes with the oracle world of the config");
    oracle->add_option("--scenes", scenes_path, "scenes.jsonl or a directory holding one")->required();

    DistillArgs dargs;
    auto* distill = app.add_subcommand("distill", "extract concept vectors from a container");
    distill->add_option("--method", dargs.method)->check(CLI::IsMember({"probe", "pca_probe", "centroid"}));
    distill->add_option("--acts", dargs.acts, "activation container (.cva)")->required();
    distill->add_option("--factor", dargs.factor)->check(CLI::IsMember({"composite", "color", "shape"}));

    SteerArgs sargs;
    auto* steer = app.add_subcommand("steer", "steering protocols")->require_subcommand(1);
    auto* triples = steer->add_subcommand("eval-triples", "triple protocol over all valid triples");
    auto* swap = steer->add_subcommand("eval-color-swap", "color-swap protocol over all ordered pairs");
    for (auto* sc : {triples, swap}) {
        sc->add_option("--vectors", sargs.vectors, "concept vectors (.cvv); ground truth when omitted");
        sc->add_option("--replay", sargs.replay, "answer from a replay file instead of the oracle");
        sc->add_option("--record", sargs.record, "write every query and answer as a replay file");
    }
    triples->add_option("--max-triples", sargs.max_triples, "evenly spaced subset, 0 for all");
    swap->add_option("--per-color", sargs.per_color, "images per color");

    GeometryArgs gargs;
    auto* geometry = app.add_subcommand("geometry", "similarity analyses")->require_subcommand(1);
    auto* matrix = geometry->add_subcommand("matrix", "cosine matrix and group statistics");
    auto* profile = geometry->add_subcommand("profile", "hue similarity profile");
    auto* rsa_cmd = geometry->add_subcommand("rsa", "correlate two similarity matrices");
    auto* pca = geometry->add_subcommand("pca", "principal-component projection");
    for (auto* sc : {matrix, profile, rsa_cmd, pca}) {
        sc->add_option("--vectors", gargs.vectors, "concept vectors (.cvv)")->required();
    }
    rsa_cmd->add_option("--other", gargs.other, "second vector file")->required();
    pca->add_option("--k", gargs.k, "components")->capture_default_str();

    BenchArgs bargs;
    auto* bench = app.add_subcommand("bench", "task benchmarks")->require_subcommand(1);
    auto* vs = bench->add_subcommand("visual-search", "interference against accuracy");
    auto* sim = bench->add_subcommand("similarity", "similarity-judgment consistency");
    for (auto* sc : {vs, sim}) {
        sc->add_option("--trials", bargs.trials, "trials.jsonl or its directory; generated when omitted");
        sc->add_option("--vectors", bargs.vectors, "concept vectors (.cvv)");
        sc->add_option("--replay", bargs.replay, "model answers as a replay file; the oracle answers when omitted");
    }
    vs->add_option("--bins", bargs.bins);
    vs->add_option("--min-per-bin", bargs.min_per_bin);
    sim->add_option("--simfn", bargs.simfn, "hue, cosine or vectors")->capture_default_str();

    auto* pipeline = app.add_subcommand("pipeline", "end-to-end run")->require_subcommand(1);
    auto* run = pipeline->add_subcommand("run", "generate, embed, distill, evaluate and report");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a container or vector file");
    validate->add_option("path", validate_path)->required();

    // Name the offending word instead of CLI11's generic "subcommand required".
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--config" || a == "--seed" || a == "--out" || a == "--threads") {
            ++i;
            continue;
        }
        if (a.empty() || a[0] == '-') continue;
        bool known = false;
        for (const auto* sc : app.get_subcommands({})) known = known || sc->get_name() == a;
        if (!known) {
            err << "error: unknown subcommand '" << a << "'\n\n" << app.help();
            return 2;
        }
        break;
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*stimuli) return cmd_gen(g, gen_args, out);
        if (*oracle) return cmd_embed(g, scenes_path, out);
        if (*distill) return cmd_distill(g, dargs, out);
        if (*triples) return cmd_triples(g, sargs, out);
        if (*swap) return cmd_color_swap(g, sargs, out);
        if (*matrix) return cmd_matrix(g, gargs, out);
        if (*profile) return cmd_profile(g, gargs, out);
        if (*rsa_cmd) return cmd_rsa(gargs, out);
        if (*pca) return cmd_pca(g, gargs, out);
        if (*vs) return cmd_visual_search(g, bargs, out);
        if (*sim) return cmd_similarity(g, bargs, out);
        if (*run) return cmd_pipeline(g, out);
        if (*validate) return cmd_validate(validate_path, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == Errc::config ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace vlmgeo
