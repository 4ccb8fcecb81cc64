#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vlmgeo/tensor_store.hpp"

namespace vlmgeo {

enum class Color { red, green, blue, yellow, orange, purple };
enum class Shape { circle, square, triangle, star, heart, cross };

inline constexpr std::array<Color, 6> kAllColors = {Color::red,    Color::green,  Color::blue,
                                                    Color::yellow, Color::orange, Color::purple};
inline constexpr std::array<Shape, 6> kAllShapes = {Shape::circle, Shape::square, Shape::triangle,
                                                    Shape::star,   Shape::heart,  Shape::cross};

std::string_view to_string(Color c);
std::string_view to_string(Shape s);
Color color_from_string(std::string_view s);
Shape shape_from_string(std::string_view s);
std::optional<Color> parse_color_name(std::string_view s);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Fill values for the named colors. These are configuration: a palette can be
// swapped without touching any generator.
struct Palette {
    std::array<Rgb, 6> named = {Rgb{255, 0, 0},   Rgb{0, 200, 0},   Rgb{0, 0, 255},
                                Rgb{255, 220, 0}, Rgb{255, 140, 0}, Rgb{150, 0, 200}};
    Rgb operator[](Color c) const { return named[static_cast<std::size_t>(c)]; }
};

struct Hue {
    double degrees = 0.0;
    bool operator==(const Hue&) const = default;
};

using ObjectColor = std::variant<Color, Hue>;

struct ObjectSpec {
    ObjectColor color = Color::red;
    Shape shape = Shape::square;
    double cx = 0.0;  // center, pixels
    double cy = 0.0;
    int size = 0;  // bounding-box side, pixels

    bool operator==(const ObjectSpec&) const = default;
};

// "red|square", "hue:137.5|square"
std::string color_label(const ObjectColor& c);
std::string object_label(const ObjectSpec& o);
std::string concept_label(Color c, Shape s);
std::string hue_label(double degrees);
std::string format_number(double x);

struct TextLabel {
    std::string text;
    int x = 0;  // top-left corner, pixels
    int y = 0;
    int scale = 3;

    bool operator==(const TextLabel&) const = default;
};

inline constexpr int kCanvasSide = 448;

struct SceneSpec {
    std::string id;
    int width = kCanvasSide;
    int height = kCanvasSide;
    std::vector<ObjectSpec> objects;
    Rgb background{255, 255, 255};
    std::uint64_t seed = 0;
    std::vector<TextLabel> labels;

    bool operator==(const SceneSpec&) const = default;
};

struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Rgb at(int x, int y) const {
        const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
        return {rgb[i], rgb[i + 1], rgb[i + 2]};
    }
};

// Point-in-shape test in object-local units: u, v in [-1, 1] span the
// bounding box, v grows downward.
bool inside_shape(Shape shape, double u, double v);

// Pixel indices (y * width + x) covered by object `index`. A pixel belongs to
// the object when its center passes inside_shape; rendering is aliased.
std::vector<std::uint32_t> object_mask(const SceneSpec& scene, std::size_t index);

// Throws Error(Errc::invariant) if an object leaves the canvas or two object
// masks share a pixel.
void check_scene(const SceneSpec& scene);

Raster render_scene(const SceneSpec& scene, const Palette& palette = {});

Rgb fill_color(const ObjectColor& c, const Palette& palette = {});

// Standard HSV model; channels rounded half-up. Hue wraps modulo 360.
Rgb hsv_to_rgb(double h, double s, double v);

inline constexpr double kDefaultCoverage = 0.25;

// Fraction of each grid cell's pixels that lie inside the object's mask.
std::vector<double> cell_coverage(const SceneSpec& scene, std::size_t object_index, TokenGrid grid = {16, 16});

// Cells whose coverage is at least `threshold`.
std::vector<std::uint32_t> token_mask(const SceneSpec& scene, std::size_t object_index, TokenGrid grid = {16, 16},
                                      double threshold = kDefaultCoverage);

struct SizeRange {
    int min = 40;
    int max = 90;
};

struct DistillationParams {
    std::vector<Color> colors{kAllColors.begin(), kAllColors.end()};
    std::vector<Shape> shapes{kAllShapes.begin(), kAllShapes.end()};
    int positions_per_concept = 10;
    SizeRange size;
};

std::vector<SceneSpec> gen_distillation_corpus(const DistillationParams& params, std::uint64_t seed);

struct ProbeCorpusParams {
    int scene_count = 200;
    int min_objects = 14;
    int max_objects = 22;
    double target_rate = 0.5;
    double balance_tolerance = 0.1;
    SizeRange size{28, 48};
    int retry_budget = 100;
    std::vector<Color> colors{kAllColors.begin(), kAllColors.end()};
    std::vector<Shape> shapes{kAllShapes.begin(), kAllShapes.end()};
};

struct LabeledScene {
    SceneSpec scene;
    std::map<std::string, bool> labels;  // composite concept -> present
};

std::map<std::string, bool> presence_labels(const SceneSpec& scene, const std::vector<Color>& colors,
                                            const std::vector<Shape>& shapes);

std::vector<LabeledScene> gen_probe_corpus(const ProbeCorpusParams& params, std::uint64_t seed);

struct VisualSearchParams {
    std::vector<int> n_dist{4, 8, 12, 16, 20, 24, 28, 32, 36, 40};
    std::vector<double> p_int{0.0, 0.25, 0.5, 0.75, 1.0};
    int trials_per_cell = 20;  // per (n_dist, p_int, present)
    SizeRange size{24, 44};
    int retry_budget = 100;
};

struct VisualSearchTrial {
    std::string id;
    SceneSpec scene;
    Color target_color = Color::red;
    Shape target_shape = Shape::square;
    bool target_present = false;
    int n_dist = 0;
    double p_int = 0.0;
    int k_high = 0;  // distractors sharing exactly one feature with the target

    std::string target_label() const { return concept_label(target_color, target_shape); }
};

struct PlacementFailure {
    std::string trial_id;
    std::string reason;
};

struct VisualSearchBatch {
    std::vector<VisualSearchTrial> trials;
    std::vector<PlacementFailure> failures;
};

// round(n * p) with ties rounded up.
int high_interference_count(int n_dist, double p_int);

VisualSearchBatch gen_visual_search_trials(const VisualSearchParams& params, std::uint64_t seed);

struct SimilarityParams {
    int trial_count = 100;
    int min_setup = 4;
    int max_setup = 12;
    double min_sep = 10.0;  // degrees, pairwise circular distance between setup hues
    int hue_grid = 0;  // 0: continuous hues; n > 0: snap to multiples of 360/n
    int square_size = 64;
    int query_size = 160;
};

struct SimilarityTrial {
    std::string id;
    std::vector<double> setup_hues;
    std::vector<std::string> letters;
    double query_hue = 0.0;
    SceneSpec setup_scene;
    SceneSpec query_scene;
};

std::vector<SimilarityTrial> gen_similarity_trials(const SimilarityParams& params, std::uint64_t seed);

struct HueSweepParams {
    int positions_per_hue = 1;
    Shape shape = Shape::square;
    SizeRange size;
};

std::vector<SceneSpec> gen_hue_sweep(int count, std::uint64_t seed, const HueSweepParams& params = {});

double circular_distance(double h1, double h2);

}  // namespace vlmgeo
