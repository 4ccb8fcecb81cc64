#include "vlmgeo/steering.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "vlmgeo/csv.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/rng.hpp"
#include "vlmgeo/scene_io.hpp"

namespace vlmgeo {

using nlohmann::json;

namespace {

double vec_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

std::string normalize_answer(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    if (e > b && s[e - 1] == '.') --e;
    std::string out(s.substr(b, e - b));
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string key(const std::string& stimulus, const std::string& prompt, const std::string& steering) {
    return stimulus + '\x1f' + prompt + '\x1f' + steering;
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

}  // namespace

void validate_steering(const SteeringSpec& spec) {
    if (spec.source.dim() != spec.target.dim()) throw Error(Errc::dimension_mismatch, "steering vectors differ in d");
    if (spec.source.model_id != spec.target.model_id) {
        throw Error(Errc::invalid_argument, "steering vectors come from different models");
    }
    for (const auto* v : {&spec.source, &spec.target}) {
        if (std::abs(vec_norm(v->direction) - 1.0) > 1e-5) {
            throw Error(Errc::invariant, "steering vector '" + v->label + "' is not unit norm");
        }
    }
}

std::string steering_label(const SteeringSpec& spec) {
    return "steer:" + spec.source.label + "->" + spec.target.label;
}

ActivationSequence steer(const ActivationSequence& acts, const SteeringSpec& spec) {
    validate_steering(spec);
    if (acts.dim != spec.source.dim()) throw Error(Errc::dimension_mismatch, "activation width differs from vectors");
    ActivationSequence out = acts;
    const auto& va = spec.source.direction;
    const auto& vb = spec.target.direction;
    const std::size_t d = acts.dim;
    for (std::size_t t = 0; t < acts.length; ++t) {
        auto row = out.row(t);
        double p = 0.0;
        for (std::size_t k = 0; k < d; ++k) p += static_cast<double>(row[k]) * va[k];
        if (p == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
            row[k] = static_cast<float>(static_cast<double>(row[k]) - p * va[k] + p * vb[k]);
        }
    }
    const auto label = steering_label(spec);
    out.intervention = acts.intervention.empty() ? label : acts.intervention + ";" + label;
    return out;
}

std::optional<bool> parse_yes_no(std::string_view answer) {
    const auto a = normalize_answer(answer);
    if (a == "yes") return true;
    if (a == "no") return false;
    return std::nullopt;
}

std::optional<Color> parse_color_answer(std::string_view answer) {
    return parse_color_name(normalize_answer(answer));
}

ConceptStore make_store(std::span<const ConceptVector> vectors) {
    ConceptStore store;
    for (const auto& v : vectors) store[v.label] = v;
    return store;
}

const ConceptVector& lookup(const ConceptStore& store, const std::string& label) {
    const auto it = store.find(label);
    if (it == store.end()) throw Error(Errc::not_found, "no concept vector for '" + label + "'");
    return it->second;
}

const ActivationSequence& OracleAnswerer::embedded(const SceneSpec& scene) {
    if (!cached_scene_ || cached_id_ != scene.id || !(*cached_scene_ == scene)) {
        cached_ = oracle_embed(scene, world_);
        cached_scene_ = scene;
        cached_id_ = scene.id;
    }
    return cached_;
}

std::string OracleAnswerer::answer_presence(const SceneSpec& scene, const Concept& query,
                                            const SteeringSpec* steering) {
    const auto& base = embedded(scene);
    if (!steering) return oracle_answer_presence(base, query.color, query.shape, world_).choice;
    return oracle_answer_presence(steer(base, *steering), query.color, query.shape, world_).choice;
}

std::string OracleAnswerer::answer_color(const ColorImage& image, const SteeringSpec* steering) {
    if (!steering) return oracle_answer_color(image.acts, world_).choice;
    return oracle_answer_color(steer(image.acts, *steering), world_).choice;
}

std::string presence_prompt_id(const Concept& query) { return "presence:" + query.label(); }
std::string color_prompt_id(const std::string& object_name) { return "color:" + object_name; }

std::vector<ReplayRecord> read_replay(const std::filesystem::path& path) {
    std::vector<ReplayRecord> records;
    for (const auto& j : read_jsonl(path)) {
        if (j.contains("format")) continue;  // optional header line
        try {
            ReplayRecord r;
            r.stimulus_id = j.at("stimulus_id").get<std::string>();
            r.prompt_id = j.at("prompt_id").get<std::string>();
            r.steered = j.value("steered", false);
            r.steering_spec = j.value("steering_spec", std::string{});
            r.answer = j.at("answer").get<std::string>();
            if (j.contains("logits")) r.logits = j.at("logits").get<std::map<std::string, double>>();
            if (r.steered && r.steering_spec.empty()) {
                throw Error(Errc::bad_header, "steered replay record without steering_spec");
            }
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(Errc::bad_header, path.string() + ": replay record: " + e.what());
        }
    }
    return records;
}

void write_replay(const std::filesystem::path& path, const std::vector<ReplayRecord>& records) {
    std::vector<json> out;
    out.push_back({{"format", "vlmgeo-replay"}, {"version", 1}});
    for (const auto& r : records) {
        json j{{"stimulus_id", r.stimulus_id},
               {"prompt_id", r.prompt_id},
               {"steered", r.steered},
               {"steering_spec", r.steering_spec},
               {"answer", r.answer}};
        if (!r.logits.empty()) j["logits"] = r.logits;
        out.push_back(std::move(j));
    }
    write_jsonl(path, out);
}

ReplayAnswerer::ReplayAnswerer(const std::vector<ReplayRecord>& records) {
    for (const auto& r : records) {
        answers_[key(r.stimulus_id, r.prompt_id, r.steered ? r.steering_spec : std::string{})] = r.answer;
    }
}

std::string ReplayAnswerer::find(const std::string& stimulus, const std::string& prompt,
                                 const SteeringSpec* steering) const {
    const auto spec = steering ? steering_label(*steering) : std::string{};
    const auto it = answers_.find(key(stimulus, prompt, spec));
    if (it == answers_.end()) {
        throw Error(Errc::not_found, "replay has no answer for " + stimulus + " / " + prompt +
                                         (spec.empty() ? std::string{} : " / " + spec));
    }
    return it->second;
}

std::string ReplayAnswerer::answer_presence(const SceneSpec& scene, const Concept& query,
                                            const SteeringSpec* steering) {
    return find(scene.id, presence_prompt_id(query), steering);
}

std::string ReplayAnswerer::answer_color(const ColorImage& image, const SteeringSpec* steering) {
    return find(image.stimulus_id, color_prompt_id(image.object_name), steering);
}

std::string RecordingAnswerer::answer_presence(const SceneSpec& scene, const Concept& query,
                                               const SteeringSpec* steering) {
    auto a = inner_.answer_presence(scene, query, steering);
    records_.push_back({scene.id, presence_prompt_id(query), steering != nullptr,
                        steering ? steering_label(*steering) : std::string{}, a, {}});
    return a;
}

std::string RecordingAnswerer::answer_color(const ColorImage& image, const SteeringSpec* steering) {
    auto a = inner_.answer_color(image, steering);
    records_.push_back({image.stimulus_id, color_prompt_id(image.object_name), steering != nullptr,
                        steering ? steering_label(*steering) : std::string{}, a, {}});
    return a;
}

bool valid_triple(const Triple& t) {
    const auto distinct = [](const Concept& x, const Concept& y) { return x.color != y.color && x.shape != y.shape; };
    return distinct(t.a, t.b) && distinct(t.a, t.c) && distinct(t.b, t.c);
}

std::vector<Triple> enumerate_triples(const std::vector<Color>& colors, const std::vector<Shape>& shapes) {
    std::vector<Concept> concepts;
    for (Color c : colors) {
        for (Shape s : shapes) concepts.push_back({c, s});
    }
    std::vector<Triple> out;
    for (const auto& a : concepts) {
        for (const auto& b : concepts) {
            for (const auto& c : concepts) {
                Triple t{a, b, c};
                if (valid_triple(t)) out.push_back(t);
            }
        }
    }
    return out;
}

std::pair<SceneSpec, SceneSpec> triple_scenes(const Triple& t, const TripleParams& params, std::uint64_t seed,
                                              const std::string& id) {
    Rng rng(seed);
    SceneSpec orig;
    orig.id = id + "_orig";
    orig.seed = seed;
    for (int tries = 0;; ++tries) {
        if (tries == 1000) throw Error(Errc::placement_failure, "cannot place triple objects for " + id);
        ObjectSpec oa, oc;
        oa.size = rng.between(params.size.min, params.size.max);
        oc.size = rng.between(params.size.min, params.size.max);
        for (auto* o : {&oa, &oc}) {
            const double half = 0.5 * o->size;
            o->cx = rng.uniform(half, orig.width - half);
            o->cy = rng.uniform(half, orig.height - half);
        }
        // Disjoint bounding boxes keep the layout valid whatever shape B has.
        const double gap = 0.5 * (oa.size + oc.size);
        if (std::abs(oa.cx - oc.cx) < gap && std::abs(oa.cy - oc.cy) < gap) continue;
        oa.color = t.a.color;
        oa.shape = t.a.shape;
        oc.color = t.c.color;
        oc.shape = t.c.shape;
        orig.objects = {oa, oc};
        break;
    }
    SceneSpec swapped = orig;
    swapped.id = id + "_swap";
    swapped.objects[0].color = t.b.color;
    swapped.objects[0].shape = t.b.shape;
    return {orig, swapped};
}

TripleOutcome run_triple_protocol(Answerer& model, const Triple& triple, const ConceptStore& vectors,
                                  const TripleParams& params, std::uint64_t seed) {
    if (!valid_triple(triple)) {
        throw Error(Errc::invalid_argument, "triple " + triple.a.label() + ", " + triple.b.label() + ", " +
                                                triple.c.label() + " shares a color or shape");
    }
    const SteeringSpec spec{lookup(vectors, triple.a.label()), lookup(vectors, triple.b.label())};
    const std::array<Concept, 3> queries{triple.a, triple.b, triple.c};
    const std::string base_id = "triple_" + triple.a.label() + "_" + triple.b.label() + "_" + triple.c.label();

    TripleOutcome out;
    out.triple = triple;
    auto ask_all = [&](const SceneSpec& scene, const SteeringSpec* s) {
        std::array<std::string, 3> answers;
        for (std::size_t i = 0; i < 3; ++i) answers[i] = model.answer_presence(scene, queries[i], s);
        return answers;
    };
    auto matches = [](const std::array<std::string, 3>& answers, std::array<bool, 3> expected) {
        for (std::size_t i = 0; i < 3; ++i) {
            const auto parsed = parse_yes_no(answers[i]);
            if (!parsed || *parsed != expected[i]) return false;
        }
        return true;
    };

    for (int attempt = 0; attempt < params.scene_budget; ++attempt) {
        out.attempts = attempt + 1;
        auto [orig, swapped] =
            triple_scenes(triple, params, derive_seed(seed, static_cast<std::uint64_t>(attempt)),
                          base_id + "_" + std::to_string(attempt));
        out.scene_id = orig.id;
        out.pre_answers = ask_all(orig, nullptr);
        if (!matches(out.pre_answers, {true, false, true})) continue;
        out.swapped_answers = ask_all(swapped, nullptr);
        if (!matches(out.swapped_answers, {false, true, true})) continue;
        out.post_answers = ask_all(orig, &spec);
        out.success = matches(out.post_answers, {false, true, true});
        return out;
    }
    out.excluded = true;
    return out;
}

TripleSummary summarize(const std::vector<TripleOutcome>& outcomes) {
    TripleSummary s;
    s.triples = outcomes.size();
    for (const auto& o : outcomes) {
        if (o.excluded) {
            ++s.excluded;
            continue;
        }
        ++s.evaluated;
        if (o.success) ++s.successes;
    }
    return s;
}

void write_triple_csv(const std::filesystem::path& path, const std::vector<TripleOutcome>& outcomes) {
    CsvWriter csv(path);
    csv.row({"a", "b", "c", "status", "attempts", "scene_id", "pre_a", "pre_b", "pre_c", "swap_a", "swap_b", "swap_c",
             "post_a", "post_b", "post_c", "success"});
    for (const auto& o : outcomes) {
        const std::string status = o.excluded ? "excluded" : "evaluated";
        csv.row({o.triple.a.label(), o.triple.b.label(), o.triple.c.label(), status, std::to_string(o.attempts),
                 o.scene_id, o.pre_answers[0], o.pre_answers[1], o.pre_answers[2], o.swapped_answers[0],
                 o.swapped_answers[1], o.swapped_answers[2], o.post_answers[0], o.post_answers[1], o.post_answers[2],
                 o.excluded ? "" : yes_no(o.success)});
    }
    const auto s = summarize(outcomes);
    csv.row({"ALL", "", "", "summary", "", "", "", "", "", "", "", "", "", "", "",
             format_number(s.success_rate())});
}

ColorSwapReport run_color_swap_protocol(Answerer& model, const std::vector<ColorImage>& images,
                                        const ConceptStore& vectors, const ColorSwapParams& params) {
    ColorSwapReport report;
    std::map<Color, std::vector<const ColorImage*>> retained;
    for (Color c : params.colors) {
        retained[c];
        report.retained[c] = 0;
    }
    for (const auto& img : images) {
        if (!retained.count(img.true_color)) continue;
        const auto parsed = parse_color_answer(model.answer_color(img, nullptr));
        if (parsed && *parsed == img.true_color) retained[img.true_color].push_back(&img);
    }
    for (Color c : params.colors) report.retained[c] = static_cast<int>(retained[c].size());

    for (Color from : params.colors) {
        for (Color to : params.colors) {
            if (from == to) continue;
            PairResult pr{from, to, 0, 0};
            const auto& pool = retained[from];
            const auto n = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(0, params.per_pair)));
            if (n > 0) {
                const SteeringSpec spec{lookup(vectors, std::string(to_string(from))),
                                        lookup(vectors, std::string(to_string(to)))};
                for (std::size_t i = 0; i < n; ++i) {
                    const auto parsed = parse_color_answer(model.answer_color(*pool[i], &spec));
                    ++pr.n;
                    if (parsed && *parsed == to) ++pr.successes;
                }
            }
            report.operations += pr.n;
            report.successes += pr.successes;
            report.pairs.push_back(pr);
        }
    }
    return report;
}

void write_color_swap_csv(const std::filesystem::path& path, const ColorSwapReport& report) {
    CsvWriter csv(path);
    csv.row({"from", "to", "n", "successes", "rate"});
    for (const auto& p : report.pairs) {
        csv.row({std::string(to_string(p.from)), std::string(to_string(p.to)), std::to_string(p.n),
                 std::to_string(p.successes), p.n ? format_number(p.rate()) : ""});
    }
    csv.row({"ALL", "ALL", std::to_string(report.operations), std::to_string(report.successes),
             report.operations ? format_number(report.overall_rate()) : ""});
}

std::vector<SceneSpec> gen_color_images(const std::vector<Color>& colors, int per_color, std::uint64_t seed,
                                        SizeRange size) {
    if (per_color < 1) throw Error(Errc::invalid_argument, "per_color must be >= 1");
    std::vector<SceneSpec> scenes;
    std::uint64_t index = 0;
    for (Color c : colors) {
        for (int i = 0; i < per_color; ++i, ++index) {
            SceneSpec s;
            s.seed = derive_seed(seed, index);
            s.id = "color_" + std::string(to_string(c)) + "_" + std::to_string(i);
            Rng rng(s.seed);
            ObjectSpec o;
            o.color = c;
            o.shape = kAllShapes[static_cast<std::size_t>(i) % kAllShapes.size()];
            o.size = rng.between(size.min, size.max);
            const double half = 0.5 * o.size;
            o.cx = rng.uniform(half, s.width - half);
            o.cy = rng.uniform(half, s.height - half);
            s.objects.push_back(o);
            scenes.push_back(std::move(s));
        }
    }
    return scenes;
}

}  // namespace vlmgeo
