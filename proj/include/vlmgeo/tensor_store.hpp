#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlmgeo {

// Container layout (all integers little-endian):
//   "CVA1" | u32 version | u32 header length | UTF-8 JSON header | payload
// The payload holds, per sequence, L*d float32 LE values in token-major order.
// Concept-vector files use the same framing with magic "CVV1".
inline constexpr std::string_view kActivationMagic = "CVA1";
inline constexpr std::string_view kVectorMagic = "CVV1";
inline constexpr std::uint32_t kFormatVersion = 1;

enum class Method { probe, pca_probe, centroid };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct TokenGrid {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    bool operator==(const TokenGrid&) const = default;
};

// Token indices carrying a labeled object (e.g. "red|square"). Written by the
// oracle and by capture tools so that centroid distillation can run from a
// container alone.
struct TokenAnnotation {
    std::string label;
    std::vector<std::uint32_t> tokens;

    bool operator==(const TokenAnnotation&) const = default;
};

struct ActivationSequence {
    std::size_t length = 0;  // L
    std::size_t dim = 0;     // d
    std::vector<float> tokens;  // L x d, row t = h_t
    std::string stimulus_id;
    std::string model_id;
    std::string layer_tag;
    TokenGrid grid;
    std::string intervention;  // empty unless the activations were steered
    std::vector<TokenAnnotation> annotations;

    std::span<const float> row(std::size_t t) const {
        return {tokens.data() + t * dim, dim};
    }
    std::span<float> row(std::size_t t) { return {tokens.data() + t * dim, dim}; }
};

// Equality on the float payload is bitwise, not IEEE (so -0.0f != 0.0f).
bool bit_equal(const ActivationSequence& a, const ActivationSequence& b);

struct ActivationSet {
    std::size_t dim = 0;
    std::string model_id;
    std::vector<ActivationSequence> sequences;
};

bool bit_equal(const ActivationSet& a, const ActivationSet& b);

// Throws Error(Errc::invariant) naming the first violated invariant.
void validate_sequence(const ActivationSequence& seq);
void validate_set(const ActivationSet& set);

struct ConceptVector {
    std::vector<float> direction;
    std::string label;
    Method method = Method::centroid;
    std::string model_id;

    std::size_t dim() const { return direction.size(); }
};

// Normalizes `raw`; throws Errc::degenerate when its norm is below `min_norm`.
ConceptVector make_concept_vector(std::span<const double> raw, std::string label, Method method,
                                  std::string model_id, double min_norm = 1e-9);

struct SequenceCheck {
    std::string stimulus_id;
    std::size_t length = 0;
    std::size_t dim = 0;
    bool finite = true;
    std::optional<std::size_t> first_nonfinite_row;
    bool grid_consistent = true;
    TokenGrid grid;
};

struct ValidationReport {
    bool ok = false;
    std::vector<SequenceCheck> sequences;
    std::vector<std::string> issues;
};

std::vector<std::uint8_t> encode_activation_set(const ActivationSet& set);
ActivationSet decode_activation_set(std::span<const std::uint8_t> bytes);

void write_activation_set(const ActivationSet& set, const std::filesystem::path& path);
ActivationSet read_activation_set(const std::filesystem::path& path);

// Never throws for content problems; every defect becomes a report entry.
ValidationReport validate_container(const std::filesystem::path& path);
ValidationReport validate_container_bytes(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_concept_vectors(std::span<const ConceptVector> vectors);
std::vector<ConceptVector> decode_concept_vectors(std::span<const std::uint8_t> bytes);

void write_concept_vectors(std::span<const ConceptVector> vectors, const std::filesystem::path& path);
std::vector<ConceptVector> read_concept_vectors(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vlmgeo
