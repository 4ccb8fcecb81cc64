#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmgeo/distiller.hpp"
#include "vlmgeo/geometry.hpp"
#include "vlmgeo/oracle.hpp"
#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/steering.hpp"
#include "vlmgeo/task_bench.hpp"

namespace vlmgeo {

struct ExperimentConfig {
    std::uint64_t seed = 0;
    WorldSpec world;
    Method method = Method::centroid;
    int threads = 1;

    DistillationParams distillation;
    ProbeCorpusParams probe_corpus;
    ProbeTrainConfig probe;
    int hue_count = 100;

    TripleParams triples;
    std::size_t max_triples = 0;  // 0: every valid triple
    int color_images_per_color = 10;
    ColorSwapParams color_swap;

    // The visual-search stage runs against the base world with these fields
    // overridden, so that interference can be switched on for that stage only.
    nlohmann::json visual_search_world = {{"color_coupling", 0.8}, {"shape_coupling", 0.6}, {"decode_noise_gain", 1.0}};
    VisualSearchParams visual_search;
    int bins = 10;
    int min_per_bin = 20;

    SimilarityParams similarity;
};

// Unknown keys are rejected so that typos fail loudly.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

WorldSpec merge_world(const WorldSpec& base, const nlohmann::json& overrides);

ActivationSet embed_scenes(const std::vector<SceneSpec>& scenes, const OracleWorld& world);

enum class Factor { composite, color, shape };
Factor factor_from_string(std::string_view s);

// Relabels every annotation by the chosen factor ("red|square" -> "red").
std::vector<ActivationSequence> relabel(std::vector<ActivationSequence> seqs, Factor factor);

// Centroid vector for every annotated label, in sorted label order.
std::vector<ConceptVector> distill_all_centroids(std::span<const ActivationSequence> corpus);

// One probe per annotated label; a sequence is positive when it carries an
// annotation with that label.
std::vector<ProbeResult> train_all_probes(std::span<const ActivationSequence> corpus, const ProbeTrainConfig& cfg);

// Orders composite vectors color-major over the given factors, as
// pca_regularize expects; throws if one is missing.
std::vector<ConceptVector> grid_order(std::span<const ConceptVector> vectors, const std::vector<std::string>& colors,
                                      const std::vector<std::string>& shapes);

// Parses "hue:137.5|square" (or "hue:137.5") to 137.5.
double hue_of_label(const std::string& label);

struct PipelineSummary {
    // Recovery of composite directions against the generating world.
    double min_recovery_cosine = 0.0;
    double mean_recovery_cosine = 0.0;

    TripleSummary triples;
    ColorSwapReport color_swap;

    double rsa_self = 0.0;
    double rsa_ground_truth = 0.0;
    GroupSimilarity groups;
    double planar_profile_max_error = 0.0;  // max |g_h(D) - cos D| on the world's hue plane
    double distilled_profile_min = 0.0;  // lowest point of the mean distilled curve
    int tail_sign_changes = 0;
    std::vector<double> pca_explained;

    VisualSearchReport visual_search;

    double similarity_agreement_cosine = 0.0;
    double similarity_agreement_hue = 0.0;
    double similarity_confidence_r = 0.0;
    double similarity_confidence_r_hue = 0.0;

    std::vector<std::string> report_lines;
};

// generate -> embed -> distill -> steering, geometry, visual search,
// similarity -> report. Every artifact goes under `out`.
PipelineSummary full_pipeline(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace vlmgeo
