#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmgeo/scene_forge.hpp"
#include "vlmgeo/tensor_store.hpp"

namespace vlmgeo {

// Hyperparameters from which an OracleWorld is rebuilt deterministically.
struct WorldSpec {
    std::size_t d = 64;
    double feature_gain = 1.0;  // a
    double noise_sigma = 0.0;   // per-component token noise
    double answer_temperature = 1.0;
    double mu_scale = 2.0;  // norm of the global mean
    std::uint64_t seed = 0;
    std::string model_id = "oracle";

    // Interference controls. With both couplings at zero the color and shape
    // directions are mutually orthonormal. A coupling gamma mixes a shared
    // planar component into each direction so that cos(k_i, k_j) =
    // gamma * cos(angle_i - angle_j).
    double color_coupling = 0.0;
    double shape_coupling = 0.0;
    // Named-color positions on the coupling circle (degrees), in Color order.
    std::array<double, 6> color_angles{0.0, 120.0, 240.0, 60.0, 30.0, 280.0};

    // Presence decoding noise: std = a * (floor + gain * c), where c is the
    // largest cosine between the query and any object token that is not a
    // match (cosine below match_cos).
    double decode_noise_floor = 0.0;
    double decode_noise_gain = 0.0;
    double match_cos = 0.95;
};

nlohmann::json to_json(const WorldSpec& spec);
WorldSpec world_spec_from_json(const nlohmann::json& j);

inline constexpr TokenGrid kOracleGrid{16, 16};

class OracleWorld {
public:
    explicit OracleWorld(WorldSpec spec);

    const WorldSpec& spec() const { return spec_; }
    std::size_t dim() const { return spec_.d; }
    double gain() const { return spec_.feature_gain; }
    // Presence decision threshold: half the full composite signal.
    double threshold() const;

    std::span<const double> mu_glob() const { return mu_; }
    std::span<const double> color_dir(Color c) const { return colors_[static_cast<std::size_t>(c)]; }
    std::span<const double> shape_dir(Shape s) const { return shapes_[static_cast<std::size_t>(s)]; }
    std::span<const double> hue_plane(int i) const { return hue_plane_[static_cast<std::size_t>(i)]; }

    // cos(h) p1 + sin(h) p2
    std::vector<double> hue_vector(double degrees) const;
    std::vector<double> color_term(const ObjectColor& c) const;
    // (k_c + s_s) / |k_c + s_s|
    std::vector<double> composite(Color c, Shape s) const;

private:
    WorldSpec spec_;
    std::vector<double> mu_;
    std::array<std::vector<double>, 6> colors_;
    std::array<std::vector<double>, 6> shapes_;
    std::array<std::vector<double>, 2> hue_plane_;
};

struct OracleAnswer {
    std::string choice;
    std::vector<std::pair<std::string, double>> logits;  // answer token -> logit, in answer order
};

// Lowest index wins ties.
std::size_t argmax_index(const std::vector<std::pair<std::string, double>>& logits);

// Token t covered by object (c, s) carries mu + a*(color term + shape dir);
// every other token carries mu; both get seeded Gaussian noise.
ActivationSequence oracle_embed(const SceneSpec& scene, const OracleWorld& world);

OracleAnswer oracle_answer_presence(const ActivationSequence& acts, Color color, Shape shape,
                                    const OracleWorld& world);

// Answers "what color is the object" over the six named colors.
OracleAnswer oracle_answer_color(const ActivationSequence& acts, const OracleWorld& world);

OracleAnswer oracle_answer_similarity(const SimilarityTrial& trial, const OracleWorld& world);

}  // namespace vlmgeo
