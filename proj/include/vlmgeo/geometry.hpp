#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/tensor_store.hpp"

namespace vlmgeo {

struct SimilarityMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;  // n x n, row-major

    std::size_t size() const { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
};

SimilarityMatrix cosine_matrix(std::span<const ConceptVector> vectors);

struct GroupStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    std::vector<double> values;
};

struct GroupSimilarity {
    GroupStats same_color;
    GroupStats same_shape;
    GroupStats neither;
    GroupStats both;  // only non-empty when two vectors carry the same (color, shape)

    // min over the shared-feature groups exceeds max over `neither`.
    bool separated() const;
};

struct FactorLabel {
    std::string color;
    std::string shape;
};

// Splits "red|square" (or "hue:12|square") into its two factors.
FactorLabel split_label(const std::string& label);

GroupSimilarity group_similarity_stats(const SimilarityMatrix& m, std::span<const FactorLabel> factors);
GroupSimilarity group_similarity_stats(const SimilarityMatrix& m);  // factors parsed from the labels

struct HueVector {
    double hue = 0.0;  // degrees
    ConceptVector vector;
};

struct SimilarityProfile {
    std::vector<double> hues;    // sorted
    std::vector<double> deltas;  // k * 360 / n, k = 0..n-1
    std::vector<std::vector<double>> per_hue;  // per_hue[i][k] = g_{h_i}(delta_k)
    std::vector<double> mean;

    // Displacement folded into (-180, 180].
    static double signed_delta(double delta) { return delta > 180.0 ? delta - 360.0 : delta; }
};

// Requires the hues to form a uniform circular grid (tolerance in degrees).
SimilarityProfile semantic_similarity_function(std::span<const HueVector> hues, double grid_tol = 1e-6);

struct ProfileShape {
    // Sign changes of the discrete derivative of the mean curve over
    // 90 < |delta| <= 180 (both sides of the circle).
    int tail_sign_changes = 0;
    // Per-hue second difference (g(+step) + g(-step) - 2) / step^2, step in radians.
    std::vector<double> curvature;
};

ProfileShape describe_profile(const SimilarityProfile& p);

struct PcaProjection {
    std::vector<std::vector<double>> coords;  // n x k
    std::vector<double> explained_ratio;      // k
    std::vector<double> singular_values;      // all, non-increasing
};

PcaProjection pca_project(std::span<const ConceptVector> vectors, std::size_t k);

// Pearson correlation over the strict upper triangles.
double rsa(const SimilarityMatrix& a, const SimilarityMatrix& b);

void write_matrix_csv(const std::filesystem::path& path, const SimilarityMatrix& m);
void write_group_csv(const std::filesystem::path& path, const GroupSimilarity& g);
void write_profile_csv(const std::filesystem::path& path, const SimilarityProfile& p);
void write_projection_csv(const std::filesystem::path& path, std::span<const std::string> labels,
                          const PcaProjection& p);

}  // namespace vlmgeo
