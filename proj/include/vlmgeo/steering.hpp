#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vlmgeo/oracle.hpp"
#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/tensor_store.hpp"

namespace vlmgeo {

struct SteeringSpec {
    ConceptVector source;  // v_A
    ConceptVector target;  // v_B
};

// Throws unless both vectors are unit norm and agree on d and model_id.
void validate_steering(const SteeringSpec& spec);

// "steer:red|square->blue|star"
std::string steering_label(const SteeringSpec& spec);

// h' = h - (h.vA) vA + (h.vA) vB for every token.
ActivationSequence steer(const ActivationSequence& acts, const SteeringSpec& spec);

// Case-insensitive; surrounding whitespace and a single trailing period are
// ignored. Anything else yields nullopt.
std::optional<bool> parse_yes_no(std::string_view answer);
std::optional<Color> parse_color_answer(std::string_view answer);

using ConceptStore = std::map<std::string, ConceptVector>;
ConceptStore make_store(std::span<const ConceptVector> vectors);
const ConceptVector& lookup(const ConceptStore& store, const std::string& label);

struct Concept {
    Color color = Color::red;
    Shape shape = Shape::square;

    std::string label() const { return concept_label(color, shape); }
    bool operator==(const Concept&) const = default;
};

// An image for the color protocol: one labeled object of a known color.
struct ColorImage {
    std::string stimulus_id;
    ActivationSequence acts;  // may be empty for replayed models
    std::string object_name;
    Color true_color = Color::red;
};

// Anything that answers the two prompts of the steering protocols, with or
// without an intervention. Answers are raw strings and go through the parsers.
class Answerer {
public:
    virtual ~Answerer() = default;
    virtual std::string answer_presence(const SceneSpec& scene, const Concept& query,
                                        const SteeringSpec* steering) = 0;
    virtual std::string answer_color(const ColorImage& image, const SteeringSpec* steering) = 0;
};

class OracleAnswerer : public Answerer {
public:
    explicit OracleAnswerer(const OracleWorld& world) : world_(world) {}

    std::string answer_presence(const SceneSpec& scene, const Concept& query, const SteeringSpec* steering) override;
    std::string answer_color(const ColorImage& image, const SteeringSpec* steering) override;

private:
    const ActivationSequence& embedded(const SceneSpec& scene);

    const OracleWorld& world_;
    std::string cached_id_;
    std::optional<SceneSpec> cached_scene_;
    ActivationSequence cached_;
};

// Offline answers: one JSON object per line,
//   {"stimulus_id", "prompt_id", "steered", "steering_spec", "answer", "logits"?}
// prompt_id is "presence:<color>|<shape>" or "color:<object name>".
struct ReplayRecord {
    std::string stimulus_id;
    std::string prompt_id;
    bool steered = false;
    std::string steering_spec;  // steering_label(), empty when not steered
    std::string answer;
    std::map<std::string, double> logits;
};

std::string presence_prompt_id(const Concept& query);
std::string color_prompt_id(const std::string& object_name);

std::vector<ReplayRecord> read_replay(const std::filesystem::path& path);
void write_replay(const std::filesystem::path& path, const std::vector<ReplayRecord>& records);

class ReplayAnswerer : public Answerer {
public:
    explicit ReplayAnswerer(const std::vector<ReplayRecord>& records);

    std::string answer_presence(const SceneSpec& scene, const Concept& query, const SteeringSpec* steering) override;
    std::string answer_color(const ColorImage& image, const SteeringSpec* steering) override;

private:
    std::string find(const std::string& stimulus, const std::string& prompt, const SteeringSpec* steering) const;

    std::map<std::string, std::string> answers_;
};

// Records every query an inner answerer receives, so that a run can be turned
// into the request list for an offline model.
class RecordingAnswerer : public Answerer {
public:
    explicit RecordingAnswerer(Answerer& inner) : inner_(inner) {}

    std::string answer_presence(const SceneSpec& scene, const Concept& query, const SteeringSpec* steering) override;
    std::string answer_color(const ColorImage& image, const SteeringSpec* steering) override;

    const std::vector<ReplayRecord>& records() const { return records_; }

private:
    Answerer& inner_;
    std::vector<ReplayRecord> records_;
};

struct Triple {
    Concept a, b, c;
};

// True when the three concepts share no color and no shape.
bool valid_triple(const Triple& t);
// All ordered valid triples over the given factors, in lexicographic order.
std::vector<Triple> enumerate_triples(const std::vector<Color>& colors, const std::vector<Shape>& shapes);

struct TripleParams {
    int scene_budget = 10;
    SizeRange size{40, 90};
};

// Scene with A and C at random disjoint positions, and the same layout with A
// replaced by B.
std::pair<SceneSpec, SceneSpec> triple_scenes(const Triple& t, const TripleParams& params, std::uint64_t seed,
                                              const std::string& id);

struct TripleOutcome {
    Triple triple;
    bool excluded = false;
    int attempts = 0;
    std::string scene_id;
    std::array<std::string, 3> pre_answers;      // A, B, C on the original scene
    std::array<std::string, 3> swapped_answers;  // A, B, C on the swapped scene
    std::array<std::string, 3> post_answers;     // A, B, C on the steered original
    bool success = false;
};

TripleOutcome run_triple_protocol(Answerer& model, const Triple& triple, const ConceptStore& vectors,
                                  const TripleParams& params, std::uint64_t seed);

struct TripleSummary {
    std::size_t triples = 0;
    std::size_t excluded = 0;
    std::size_t evaluated = 0;
    std::size_t successes = 0;
    double success_rate() const { return evaluated ? static_cast<double>(successes) / static_cast<double>(evaluated) : 0.0; }
};

TripleSummary summarize(const std::vector<TripleOutcome>& outcomes);
void write_triple_csv(const std::filesystem::path& path, const std::vector<TripleOutcome>& outcomes);

struct ColorSwapParams {
    int per_pair = 10;
    std::vector<Color> colors{kAllColors.begin(), kAllColors.end()};
};

struct PairResult {
    Color from = Color::red;
    Color to = Color::red;
    int n = 0;
    int successes = 0;
    double rate() const { return n ? static_cast<double>(successes) / n : 0.0; }
};

struct ColorSwapReport {
    std::vector<PairResult> pairs;
    std::map<Color, int> retained;  // images per color that passed the unsteered check
    int operations = 0;
    int successes = 0;
    double overall_rate() const { return operations ? static_cast<double>(successes) / operations : 0.0; }
};

// `vectors` holds one vector per color, keyed by color name.
ColorSwapReport run_color_swap_protocol(Answerer& model, const std::vector<ColorImage>& images,
                                        const ConceptStore& vectors, const ColorSwapParams& params);

void write_color_swap_csv(const std::filesystem::path& path, const ColorSwapReport& report);

// Single-object images for the color protocol, `per_color` per color with
// cycling shapes.
std::vector<SceneSpec> gen_color_images(const std::vector<Color>& colors, int per_color, std::uint64_t seed,
                                        SizeRange size = {40, 90});

}  // namespace vlmgeo
