#include "vlmgeo/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "vlmgeo/csv.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/geometry.hpp"
#include "vlmgeo/plot.hpp"
#include "vlmgeo/rng.hpp"
#include "vlmgeo/scene_io.hpp"

namespace vlmgeo {

using nlohmann::json;

namespace {

// Reads one config object, remembering which keys were consumed so that
// leftovers can be reported.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw Error(Errc::config, "'" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw Error(Errc::config, "'" + name_ + "." + key + "': " + e.what());
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return name_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw Error(Errc::config, "unknown key '" + name_ + "." + item.key() + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

template <typename F>
auto as_config(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == Errc::config) throw;
        throw Error(Errc::config, "'" + where + "': " + e.detail());
    }
}

void get_colors(Section& s, const char* key, std::vector<Color>& out) {
    std::vector<std::string> names;
    for (Color c : out) names.emplace_back(to_string(c));
    s.get(key, names);
    as_config(s.path(key), [&] {
        out.clear();
        for (const auto& n : names) out.push_back(color_from_string(n));
        return 0;
    });
}

void get_shapes(Section& s, const char* key, std::vector<Shape>& out) {
    std::vector<std::string> names;
    for (Shape x : out) names.emplace_back(to_string(x));
    s.get(key, names);
    as_config(s.path(key), [&] {
        out.clear();
        for (const auto& n : names) out.push_back(shape_from_string(n));
        return 0;
    });
}

void get_size(Section& s, const char* key, SizeRange& out) {
    std::array<int, 2> v{out.min, out.max};
    s.get(key, v);
    out = {v[0], v[1]};
}

json names(const std::vector<Color>& v) {
    json a = json::array();
    for (Color c : v) a.push_back(std::string(to_string(c)));
    return a;
}

json names(const std::vector<Shape>& v) {
    json a = json::array();
    for (Shape s : v) a.push_back(std::string(to_string(s)));
    return a;
}

json size_json(const SizeRange& s) { return json::array({s.min, s.max}); }

std::string_view to_string(ProbeOptimizer o) { return o == ProbeOptimizer::adam ? "adam" : "gd"; }

template <typename F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.code(), std::string("stage '") + name + "': " + e.detail());
    }
}

std::string fixed(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

double cosine(std::span<const float> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

ConceptVector world_vector(std::vector<double> v, std::string label, const OracleWorld& world) {
    return make_concept_vector(v, std::move(label), Method::centroid, world.spec().model_id);
}

double nan_on_degenerate(const std::function<double()>& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() != Errc::degenerate) throw;
        return std::nan("");
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Section root(j, "config");
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    if (c.threads < 1) throw Error(Errc::config, "'config.threads' must be >= 1");
    std::string method{to_string(c.method)};
    root.get("method", method);
    c.method = as_config("config.method", [&] { return method_from_string(method); });
    if (const json* w = root.sub("world")) {
        Section s(*w, "world");
        const json known = to_json(WorldSpec{});
        for (const auto& item : known.items()) s.sub(item.key().c_str());
        s.finish();
        c.world = as_config("world", [&] { return world_spec_from_json(*w); });
    }
    if (const json* d = root.sub("distillation")) {
        Section s(*d, "distillation");
        get_colors(s, "colors", c.distillation.colors);
        get_shapes(s, "shapes", c.distillation.shapes);
        s.get("positions_per_concept", c.distillation.positions_per_concept);
        get_size(s, "size", c.distillation.size);
        s.finish();
    }
    if (const json* p = root.sub("probe_corpus")) {
        Section s(*p, "probe_corpus");
        auto& q = c.probe_corpus;
        s.get("scene_count", q.scene_count);
        s.get("min_objects", q.min_objects);
        s.get("max_objects", q.max_objects);
        s.get("target_rate", q.target_rate);
        s.get("balance_tolerance", q.balance_tolerance);
        get_size(s, "size", q.size);
        s.get("retry_budget", q.retry_budget);
        get_colors(s, "colors", q.colors);
        get_shapes(s, "shapes", q.shapes);
        s.finish();
    }
    if (const json* p = root.sub("probe")) {
        Section s(*p, "probe");
        auto& q = c.probe;
        std::string opt{to_string(q.optimizer)};
        s.get("optimizer", opt);
        if (opt == "adam") q.optimizer = ProbeOptimizer::adam;
        else if (opt == "gd") q.optimizer = ProbeOptimizer::gd;
        else throw Error(Errc::config, "'probe.optimizer' must be adam or gd");
        s.get("learning_rate", q.learning_rate);
        s.get("epochs", q.epochs);
        s.get("batch_size", q.batch_size);
        s.get("init_scale", q.init_scale);
        s.get("init_w_out", q.init_w_out);
        s.get("seed", q.seed);
        s.get("early_stop_patience", q.early_stop_patience);
        s.get("holdout_fraction", q.holdout_fraction);
        s.finish();
    }
    root.get("hue_count", c.hue_count);
    if (const json* t = root.sub("triples")) {
        Section s(*t, "triples");
        s.get("scene_budget", c.triples.scene_budget);
        get_size(s, "size", c.triples.size);
        s.get("max_triples", c.max_triples);
        s.finish();
    }
    if (const json* t = root.sub("color_swap")) {
        Section s(*t, "color_swap");
        s.get("images_per_color", c.color_images_per_color);
        s.get("per_pair", c.color_swap.per_pair);
        get_colors(s, "colors", c.color_swap.colors);
        s.finish();
    }
    if (const json* v = root.sub("visual_search")) {
        Section s(*v, "visual_search");
        if (const json* w = s.sub("world")) {
            if (!w->is_object()) throw Error(Errc::config, "'visual_search.world' must be an object");
            c.visual_search_world = *w;
        }
        auto& q = c.visual_search;
        s.get("n_dist", q.n_dist);
        s.get("p_int", q.p_int);
        s.get("trials_per_cell", q.trials_per_cell);
        get_size(s, "size", q.size);
        s.get("retry_budget", q.retry_budget);
        s.get("bins", c.bins);
        s.get("min_per_bin", c.min_per_bin);
        s.finish();
    }
    if (const json* v = root.sub("similarity")) {
        Section s(*v, "similarity");
        auto& q = c.similarity;
        s.get("trial_count", q.trial_count);
        s.get("min_setup", q.min_setup);
        s.get("max_setup", q.max_setup);
        s.get("min_sep", q.min_sep);
        s.get("hue_grid", q.hue_grid);
        s.get("square_size", q.square_size);
        s.get("query_size", q.query_size);
        s.finish();
    }
    root.finish();
    // Fail on a bad override now rather than mid-run.
    as_config("visual_search.world", [&] { return merge_world(c.world, c.visual_search_world); });
    return c;
}

json to_json(const ExperimentConfig& c) {
    const auto& p = c.probe;
    const auto& q = c.probe_corpus;
    return {
        {"seed", c.seed},
        {"method", std::string(to_string(c.method))},
        {"threads", c.threads},
        {"world", to_json(c.world)},
        {"distillation",
         {{"colors", names(c.distillation.colors)},
          {"shapes", names(c.distillation.shapes)},
          {"positions_per_concept", c.distillation.positions_per_concept},
          {"size", size_json(c.distillation.size)}}},
        {"probe_corpus",
         {{"scene_count", q.scene_count},
          {"min_objects", q.min_objects},
          {"max_objects", q.max_objects},
          {"target_rate", q.target_rate},
          {"balance_tolerance", q.balance_tolerance},
          {"size", size_json(q.size)},
          {"retry_budget", q.retry_budget},
          {"colors", names(q.colors)},
          {"shapes", names(q.shapes)}}},
        {"probe",
         {{"optimizer", std::string(to_string(p.optimizer))},
          {"learning_rate", p.learning_rate},
          {"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"init_scale", p.init_scale},
          {"init_w_out", p.init_w_out},
          {"seed", p.seed},
          {"early_stop_patience", p.early_stop_patience},
          {"holdout_fraction", p.holdout_fraction}}},
        {"hue_count", c.hue_count},
        {"triples",
         {{"scene_budget", c.triples.scene_budget},
          {"size", size_json(c.triples.size)},
          {"max_triples", c.max_triples}}},
        {"color_swap",
         {{"images_per_color", c.color_images_per_color},
          {"per_pair", c.color_swap.per_pair},
          {"colors", names(c.color_swap.colors)}}},
        {"visual_search",
         {{"world", c.visual_search_world},
          {"n_dist", c.visual_search.n_dist},
          {"p_int", c.visual_search.p_int},
          {"trials_per_cell", c.visual_search.trials_per_cell},
          {"size", size_json(c.visual_search.size)},
          {"retry_budget", c.visual_search.retry_budget},
          {"bins", c.bins},
          {"min_per_bin", c.min_per_bin}}},
        {"similarity",
         {{"trial_count", c.similarity.trial_count},
          {"min_setup", c.similarity.min_setup},
          {"max_setup", c.similarity.max_setup},
          {"min_sep", c.similarity.min_sep},
          {"hue_grid", c.similarity.hue_grid},
          {"square_size", c.similarity.square_size},
          {"query_size", c.similarity.query_size}}},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::config, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

WorldSpec merge_world(const WorldSpec& base, const json& overrides) {
    json j = to_json(base);
    for (const auto& item : overrides.items()) {
        if (!j.contains(item.key())) throw Error(Errc::config, "unknown world key '" + item.key() + "'");
        j[item.key()] = item.value();
    }
    return world_spec_from_json(j);
}

ActivationSet embed_scenes(const std::vector<SceneSpec>& scenes, const OracleWorld& world) {
    ActivationSet set;
    set.dim = world.dim();
    set.model_id = world.spec().model_id;
    set.sequences.reserve(scenes.size());
    for (const auto& s : scenes) set.sequences.push_back(oracle_embed(s, world));
    return set;
}

Factor factor_from_string(std::string_view s) {
    if (s == "composite") return Factor::composite;
    if (s == "color") return Factor::color;
    if (s == "shape") return Factor::shape;
    throw Error(Errc::invalid_argument, "unknown factor '" + std::string(s) + "' (composite, color or shape)");
}

std::vector<ActivationSequence> relabel(std::vector<ActivationSequence> seqs, Factor factor) {
    if (factor == Factor::composite) return seqs;
    for (auto& seq : seqs) {
        std::vector<TokenAnnotation> merged;
        for (auto& ann : seq.annotations) {
            const auto parts = split_label(ann.label);
            const auto& label = factor == Factor::color ? parts.color : parts.shape;
            auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& a) { return a.label == label; });
            if (it == merged.end()) {
                merged.push_back({label, std::move(ann.tokens)});
            } else {
                it->tokens.insert(it->tokens.end(), ann.tokens.begin(), ann.tokens.end());
                std::sort(it->tokens.begin(), it->tokens.end());
            }
        }
        seq.annotations = std::move(merged);
    }
    return seqs;
}

std::vector<ConceptVector> distill_all_centroids(std::span<const ActivationSequence> corpus) {
    auto labels = annotated_labels(corpus);
    if (labels.empty()) throw Error(Errc::invalid_argument, "corpus carries no token annotations");
    std::sort(labels.begin(), labels.end());
    const auto mu = global_mean(corpus);
    std::vector<ConceptVector> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(distill_centroid(corpus, mu, l));
    return out;
}

std::vector<ProbeResult> train_all_probes(std::span<const ActivationSequence> corpus, const ProbeTrainConfig& cfg) {
    auto labels = annotated_labels(corpus);
    if (labels.empty()) throw Error(Errc::invalid_argument, "corpus carries no token annotations");
    std::sort(labels.begin(), labels.end());
    std::vector<ProbeResult> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::vector<ProbeExample> examples;
        examples.reserve(corpus.size());
        for (const auto& seq : corpus) {
            const bool has = std::any_of(seq.annotations.begin(), seq.annotations.end(),
                                         [&](const auto& a) { return a.label == labels[i]; });
            examples.push_back({&seq, has});
        }
        auto c = cfg;
        c.seed = derive_seed(cfg.seed, i);
        out.push_back(train_attention_probe(examples, labels[i], c, corpus.front().model_id));
    }
    return out;
}

std::vector<ConceptVector> grid_order(std::span<const ConceptVector> vectors, const std::vector<std::string>& colors,
                                      const std::vector<std::string>& shapes) {
    std::vector<ConceptVector> out;
    for (const auto& c : colors) {
        for (const auto& s : shapes) {
            const auto label = c + "|" + s;
            auto it = std::find_if(vectors.begin(), vectors.end(), [&](const auto& v) { return v.label == label; });
            if (it == vectors.end()) throw Error(Errc::not_found, "no vector for '" + label + "'");
            out.push_back(*it);
        }
    }
    return out;
}

double hue_of_label(const std::string& label) {
    const auto color = label.substr(0, label.find('|'));
    if (color.rfind("hue:", 0) != 0) throw Error(Errc::invalid_argument, "'" + label + "' is not a hue label");
    double h = 0.0;
    const char* first = color.data() + 4;
    const char* last = color.data() + color.size();
    const auto [ptr, ec] = std::from_chars(first, last, h);
    if (ec != std::errc{} || ptr != last) throw Error(Errc::invalid_argument, "bad hue in '" + label + "'");
    return h;
}

PipelineSummary full_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    {
        std::ofstream f(out / "config.json", std::ios::trunc);
        if (!f) throw Error(Errc::io, "cannot write " + (out / "config.json").string());
        f << to_json(cfg).dump(2) << '\n';
    }

    PipelineSummary sum;
    const OracleWorld world(cfg.world);
    std::vector<std::string> color_names, shape_names;
    for (Color c : cfg.distillation.colors) color_names.emplace_back(to_string(c));
    for (Shape s : cfg.distillation.shapes) shape_names.emplace_back(to_string(s));

    // Distillation corpus and composite vectors.
    const auto distill_scenes =
        stage("generate", [&] { return gen_distillation_corpus(cfg.distillation, stage_seed(cfg.seed, "distill")); });
    const auto distill_acts = stage("embed", [&] {
        auto set = embed_scenes(distill_scenes, world);
        write_activation_set(set, out / "distill.cva");
        return set;
    });

    std::vector<ProbeResult> probes;
    const auto composites = stage("distill", [&] {
        if (cfg.method == Method::centroid) return distill_all_centroids(distill_acts.sequences);
        const auto corpus = gen_probe_corpus(cfg.probe_corpus, stage_seed(cfg.seed, "probe-corpus"));
        std::vector<SceneSpec> scenes;
        for (const auto& l : corpus) scenes.push_back(l.scene);
        const auto acts = embed_scenes(scenes, world);
        auto pc = cfg.probe;
        pc.seed = derive_seed(stage_seed(cfg.seed, "probe-train"), cfg.probe.seed);
        probes = train_all_probes(acts.sequences, pc);
        std::vector<ConceptVector> vs;
        for (const auto& p : probes) vs.push_back(p.vector);
        if (cfg.method == Method::probe) return vs;
        auto reg = pca_regularize(grid_order(vs, color_names, shape_names), color_names.size(), shape_names.size());
        auto sorted = reg.vectors;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
        return sorted;
    });
    write_concept_vectors(composites, out / "vectors.cvv");
    if (!probes.empty()) {
        CsvWriter w(out / "probes.csv");
        w.row({"label", "epochs_run", "best_epoch", "loss_increases", "heldout_accuracy", "heldout_auc"});
        for (const auto& p : probes) {
            w.row({p.vector.label, std::to_string(p.metrics.epochs_run), std::to_string(p.metrics.best_epoch),
                   std::to_string(p.metrics.loss_increases), fixed(p.metrics.heldout_accuracy),
                   fixed(p.metrics.heldout_auc)});
        }
    }

    std::vector<ConceptVector> truth;
    {
        CsvWriter w(out / "recovery.csv");
        w.row({"label", "cosine"});
        double total = 0.0;
        sum.min_recovery_cosine = 1.0;
        for (const auto& v : composites) {
            const auto f = split_label(v.label);
            const auto gt = world.composite(color_from_string(f.color), shape_from_string(f.shape));
            truth.push_back(world_vector(gt, v.label, world));
            const double c = cosine(v.direction, gt);
            sum.min_recovery_cosine = std::min(sum.min_recovery_cosine, c);
            total += c;
            w.row({v.label, fixed(c)});
        }
        sum.mean_recovery_cosine = total / static_cast<double>(composites.size());
    }

    // Color vectors come from the same corpus, relabeled by color.
    const auto color_vectors = stage("distill", [&] {
        const auto relabeled = relabel(distill_acts.sequences, Factor::color);
        return distill_all_centroids(relabeled);
    });
    write_concept_vectors(color_vectors, out / "color_vectors.cvv");

    const auto hue_vectors = stage("hue-sweep", [&] {
        const auto scenes = gen_hue_sweep(cfg.hue_count, stage_seed(cfg.seed, "hue-sweep"));
        const auto acts = relabel(embed_scenes(scenes, world).sequences, Factor::color);
        std::vector<HueVector> hv;
        for (auto& v : distill_all_centroids(acts)) {
            const double h = hue_of_label(v.label);
            hv.push_back({h, std::move(v)});
        }
        std::sort(hv.begin(), hv.end(), [](const auto& a, const auto& b) { return a.hue < b.hue; });
        return hv;
    });
    {
        std::vector<ConceptVector> vs;
        for (const auto& h : hue_vectors) vs.push_back(h.vector);
        write_concept_vectors(vs, out / "hue_vectors.cvv");
    }

    // Geometry.
    stage("geometry", [&] {
        const auto m = cosine_matrix(composites);
        const auto gt = cosine_matrix(truth);
        sum.groups = group_similarity_stats(m);
        sum.rsa_self = rsa(m, m);
        sum.rsa_ground_truth = nan_on_degenerate([&] { return rsa(m, gt); });
        write_matrix_csv(out / "similarity_matrix.csv", m);
        write_group_csv(out / "groups.csv", sum.groups);
        svg_similarity_figure(out / "similarity_matrix.svg", m, sum.groups, "composite concept vectors");

        std::vector<HueVector> planar;
        for (const auto& h : hue_vectors) {
            planar.push_back({h.hue, world_vector(world.hue_vector(h.hue), h.vector.label, world)});
        }
        const auto pp = semantic_similarity_function(planar);
        const auto dp = semantic_similarity_function(hue_vectors);
        constexpr double kDeg = 3.14159265358979323846 / 180.0;
        for (std::size_t k = 0; k < pp.deltas.size(); ++k) {
            const double expect = std::cos(pp.deltas[k] * kDeg);
            for (std::size_t i = 0; i < pp.per_hue.size(); ++i) {
                sum.planar_profile_max_error =
                    std::max(sum.planar_profile_max_error, std::abs(pp.per_hue[i][k] - expect));
            }
        }
        sum.distilled_profile_min = *std::min_element(dp.mean.begin(), dp.mean.end());
        sum.tail_sign_changes = describe_profile(dp).tail_sign_changes;
        write_profile_csv(out / "profile.csv", dp);
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t k = 0; k < dp.deltas.size(); ++k) order.emplace_back(SimilarityProfile::signed_delta(dp.deltas[k]), k);
        std::sort(order.begin(), order.end());
        Series distilled{"distilled", {}, {}, "#1f77b4"}, planar_s{"cos", {}, {}, "#d62728", 1.0};
        for (const auto& [x, k] : order) {
            distilled.x.push_back(x);
            distilled.y.push_back(dp.mean[k]);
            planar_s.x.push_back(x);
            planar_s.y.push_back(std::cos(x * kDeg));
        }
        svg_line_plot(out / "profile.svg", "hue similarity profile", "hue displacement (degrees)", "cosine",
                      {distilled, planar_s});

        const std::size_t k = std::min<std::size_t>(3, composites.size() - 1);
        const auto proj = pca_project(composites, k);
        sum.pca_explained = proj.explained_ratio;
        std::vector<std::string> labels;
        std::vector<ScatterPoint> pts;
        const Palette palette;
        for (std::size_t i = 0; i < composites.size(); ++i) {
            labels.push_back(composites[i].label);
            const auto f = split_label(composites[i].label);
            pts.push_back({proj.coords[i][0], k > 1 ? proj.coords[i][1] : 0.0, hex(palette[color_from_string(f.color)]),
                           composites[i].label});
        }
        write_projection_csv(out / "pca.csv", labels, proj);
        svg_scatter(out / "pca.svg", "composite vectors, first two components", "PC1", "PC2", pts);
        return 0;
    });

    // Steering protocols.
    stage("steer", [&] {
        const auto store = make_store(composites);
        OracleAnswerer answerer(world);
        auto triples = enumerate_triples(cfg.distillation.colors, cfg.distillation.shapes);
        if (cfg.max_triples > 0 && cfg.max_triples < triples.size()) {
            std::vector<Triple> picked;
            for (std::size_t i = 0; i < cfg.max_triples; ++i) picked.push_back(triples[i * triples.size() / cfg.max_triples]);
            triples = std::move(picked);
        }
        const auto seed = stage_seed(cfg.seed, "triples");
        std::vector<TripleOutcome> outcomes;
        outcomes.reserve(triples.size());
        for (std::size_t i = 0; i < triples.size(); ++i) {
            outcomes.push_back(run_triple_protocol(answerer, triples[i], store, cfg.triples, derive_seed(seed, i)));
        }
        sum.triples = summarize(outcomes);
        write_triple_csv(out / "triples.csv", outcomes);

        const auto color_store = make_store(color_vectors);
        const auto scenes =
            gen_color_images(cfg.color_swap.colors, cfg.color_images_per_color, stage_seed(cfg.seed, "color-images"));
        std::vector<ColorImage> images;
        for (const auto& s : scenes) {
            images.push_back({s.id, oracle_embed(s, world), std::string(to_string(s.objects[0].shape)),
                              std::get<Color>(s.objects[0].color)});
        }
        sum.color_swap = run_color_swap_protocol(answerer, images, color_store, cfg.color_swap);
        write_color_swap_csv(out / "color_swap.csv", sum.color_swap);
        return 0;
    });

    // Visual search runs in its own world; interference is measured with
    // vectors distilled from that world.
    std::size_t vs_trials = 0, vs_failures = 0;
    stage("visual-search", [&] {
        const OracleWorld vs_world(merge_world(cfg.world, cfg.visual_search_world));
        const auto acts = embed_scenes(distill_scenes, vs_world);
        const auto vectors = distill_all_centroids(acts.sequences);
        write_concept_vectors(vectors, out / "visual_search_vectors.cvv");
        const auto batch = gen_visual_search_trials(cfg.visual_search, stage_seed(cfg.seed, "visual-search"));
        vs_trials = batch.trials.size();
        vs_failures = batch.failures.size();
        auto records = run_oracle_visual_search(batch.trials, vs_world);
        sum.visual_search = score_visual_search(records, make_store(vectors), cfg.bins, cfg.min_per_bin);
        std::vector<json> lines;
        for (const auto& r : records) lines.push_back(to_json(r));
        write_jsonl(out / "visual_search_records.jsonl", lines);
        write_curve_csv(out / "visual_search_curve.csv", sum.visual_search);
        svg_line_plot(out / "visual_search.svg", "accuracy against interference", "interference", "accuracy",
                      {{"present", sum.visual_search.present.centers(), sum.visual_search.present.accuracies(), "#1f77b4"},
                       {"absent", sum.visual_search.absent.centers(), sum.visual_search.absent.accuracies(), "#d62728"}});
        return 0;
    });

    double agreement_vectors = 0.0;
    std::size_t sim_trials = 0;
    stage("similarity", [&] {
        const auto trials = gen_similarity_trials(cfg.similarity, stage_seed(cfg.seed, "similarity"));
        sim_trials = trials.size();
        const auto records = run_oracle_similarity(trials, world);
        const SimFn cos_fn = planar_cosine_similarity;
        const SimFn hue_fn = hue_similarity;
        std::vector<std::pair<double, ConceptVector>> hv;
        for (const auto& h : hue_vectors) hv.emplace_back(h.hue, h.vector);
        const auto vec_fn = vector_similarity(std::move(hv));
        sum.similarity_agreement_cosine = prediction_agreement(records, cos_fn);
        sum.similarity_agreement_hue = prediction_agreement(records, hue_fn);
        agreement_vectors = prediction_agreement(records, vec_fn);
        sum.similarity_confidence_r = nan_on_degenerate([&] { return confidence_correlation(records, cos_fn); });
        sum.similarity_confidence_r_hue = nan_on_degenerate([&] { return confidence_correlation(records, hue_fn); });
        write_similarity_csv(out / "similarity_trials.csv", records, cos_fn);
        std::vector<ScatterPoint> pts;
        for (const auto& r : records) {
            const auto i = chosen_index(r);
            pts.push_back({similarity_separation(r.trial, i, cos_fn), logit_separation(r.logits), "#1f77b4", r.trial.id});
        }
        svg_scatter(out / "similarity.svg", "confidence against similarity", "similarity separation",
                    "logit separation", pts);
        return 0;
    });

    auto& L = sum.report_lines;
    auto line = [&](const std::string& k, const std::string& v) { L.push_back(k + " = " + v); };
    line("seed", std::to_string(cfg.seed));
    line("method", std::string(to_string(cfg.method)));
    line("model_id", world.spec().model_id);
    line("dim", std::to_string(world.dim()));
    line("noise_sigma", fixed(world.spec().noise_sigma));
    line("recovery.concepts", std::to_string(composites.size()));
    line("recovery.min_cosine", fixed(sum.min_recovery_cosine));
    line("recovery.mean_cosine", fixed(sum.mean_recovery_cosine));
    if (!probes.empty()) {
        double worst = 1.0;
        for (const auto& p : probes) worst = std::min(worst, p.metrics.heldout_auc);
        line("probe.min_heldout_auc", fixed(worst));
    }
    line("triples.total", std::to_string(sum.triples.triples));
    line("triples.excluded", std::to_string(sum.triples.excluded));
    line("triples.evaluated", std::to_string(sum.triples.evaluated));
    line("triples.successes", std::to_string(sum.triples.successes));
    line("triples.success_rate", fixed(sum.triples.success_rate()));
    line("color_swap.operations", std::to_string(sum.color_swap.operations));
    line("color_swap.successes", std::to_string(sum.color_swap.successes));
    line("color_swap.success_rate", fixed(sum.color_swap.overall_rate()));
    line("geometry.rsa_self", fixed(sum.rsa_self));
    line("geometry.rsa_ground_truth", fixed(sum.rsa_ground_truth));
    line("geometry.same_color_mean", fixed(sum.groups.same_color.mean));
    line("geometry.same_shape_mean", fixed(sum.groups.same_shape.mean));
    line("geometry.neither_mean", fixed(sum.groups.neither.mean));
    line("geometry.separated", sum.groups.separated() ? "yes" : "no");
    line("geometry.planar_profile_max_error", fixed(sum.planar_profile_max_error));
    line("geometry.distilled_profile_min", fixed(sum.distilled_profile_min));
    line("geometry.tail_sign_changes", std::to_string(sum.tail_sign_changes));
    for (std::size_t i = 0; i < sum.pca_explained.size(); ++i) {
        line("geometry.pca_explained_" + std::to_string(i + 1), fixed(sum.pca_explained[i]));
    }
    line("visual_search.trials", std::to_string(vs_trials));
    line("visual_search.placement_failures", std::to_string(vs_failures));
    line("visual_search.accuracy", fixed(sum.visual_search.accuracy));
    line("visual_search.r_present", fixed(sum.visual_search.r_present));
    line("visual_search.r_absent", fixed(sum.visual_search.r_absent));
    line("visual_search.r_present_trials", fixed(sum.visual_search.r_present_trials));
    line("visual_search.r_absent_trials", fixed(sum.visual_search.r_absent_trials));
    line("similarity.trials", std::to_string(sim_trials));
    line("similarity.agreement_cosine", fixed(sum.similarity_agreement_cosine));
    line("similarity.agreement_hue", fixed(sum.similarity_agreement_hue));
    line("similarity.agreement_vectors", fixed(agreement_vectors));
    line("similarity.confidence_r_cosine", fixed(sum.similarity_confidence_r));
    line("similarity.confidence_r_hue", fixed(sum.similarity_confidence_r_hue));

    std::ofstream f(out / "report.txt", std::ios::trunc);
    if (!f) throw Error(Errc::io, "cannot write " + (out / "report.txt").string());
    for (const auto& l : L) f << l << '\n';
    return sum;
}

}  // namespace vlmgeo
