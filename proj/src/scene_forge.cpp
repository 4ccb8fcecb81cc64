#include "vlmgeo/scene_forge.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "vlmgeo/error.hpp"
#include "vlmgeo/rng.hpp"

namespace vlmgeo {

namespace {

constexpr std::array<std::string_view, 6> kColorNames = {"red", "green", "blue", "yellow", "orange", "purple"};
constexpr std::array<std::string_view, 6> kShapeNames = {"circle", "square", "triangle", "star", "heart", "cross"};

// 5x7 bitmap glyphs for the setup-image letters, MSB is the leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 12> kGlyphs = {{
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
    {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // B
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
    {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},  // D
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // F
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
    {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
    {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
    {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
}};

bool point_in_polygon(const std::array<double, 20>& xy, double u, double v) {
    bool in = false;
    constexpr int n = 10;
    for (int i = 0, j = n - 1; i < n; j = i++) {
        const double xi = xy[2 * i], yi = xy[2 * i + 1];
        const double xj = xy[2 * j], yj = xy[2 * j + 1];
        if ((yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi) in = !in;
    }
    return in;
}

const std::array<double, 20>& star_polygon() {
    static const std::array<double, 20> poly = [] {
        std::array<double, 20> p{};
        for (int i = 0; i < 10; ++i) {
            const double r = (i % 2 == 0) ? 1.0 : 0.5;
            const double a = -std::numbers::pi / 2 + i * std::numbers::pi / 5;
            p[2 * i] = r * std::cos(a);
            p[2 * i + 1] = r * std::sin(a);
        }
        return p;
    }();
    return poly;
}

// Sign of the edge function; used for the triangle parts of shapes.
bool inside_triangle(double u, double v, double ax, double ay, double bx, double by, double cx, double cy) {
    const auto edge = [](double px, double py, double qx, double qy, double x, double y) {
        return (qx - px) * (y - py) - (qy - py) * (x - px);
    };
    const double e0 = edge(ax, ay, bx, by, u, v);
    const double e1 = edge(bx, by, cx, cy, u, v);
    const double e2 = edge(cx, cy, ax, ay, u, v);
    return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

template <typename Fn>
void for_each_pixel(const ObjectSpec& o, int width, int height, Fn&& fn) {
    const double half = o.size / 2.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(o.cx - half)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(o.cx + half)));
    const int y0 = std::max(0, static_cast<int>(std::floor(o.cy - half)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(o.cy + half)));
    for (int y = y0; y <= y1; ++y) {
        const double v = (y + 0.5 - o.cy) / half;
        for (int x = x0; x <= x1; ++x) {
            const double u = (x + 0.5 - o.cx) / half;
            if (inside_shape(o.shape, u, v)) fn(x, y);
        }
    }
}

bool in_canvas(const ObjectSpec& o, int width, int height) {
    const double half = o.size / 2.0;
    return o.size >= 1 && o.cx - half >= 0.0 && o.cy - half >= 0.0 && o.cx + half <= width && o.cy + half <= height;
}

class Occupancy {
public:
    Occupancy(int width, int height)
        : width_(width), height_(height), taken_(static_cast<std::size_t>(width) * height, 0) {}

    bool fits(const ObjectSpec& o) const {
        bool ok = true;
        for_each_pixel(o, width_, height_, [&](int x, int y) {
            if (taken_[static_cast<std::size_t>(y) * width_ + x]) ok = false;
        });
        return ok;
    }

    void add(const ObjectSpec& o) {
        for_each_pixel(o, width_, height_, [&](int x, int y) { taken_[static_cast<std::size_t>(y) * width_ + x] = 1; });
    }

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> taken_;
};

void random_center(ObjectSpec& o, Rng& rng, int width, int height) {
    const double half = o.size / 2.0;
    o.cx = rng.uniform(half, width - half);
    o.cy = rng.uniform(half, height - half);
}

// Places objects (sizes already set) without pixel overlap. Each of the
// `budget` layout attempts gives every object a bounded number of candidate
// positions; returns false when all attempts fail.
bool place_objects(std::vector<ObjectSpec>& objects, Rng& rng, int width, int height, int budget) {
    std::vector<std::size_t> order(objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return objects[a].size > objects[b].size; });
    constexpr int kCandidates = 64;
    for (int attempt = 0; attempt < budget; ++attempt) {
        Occupancy occ(width, height);
        bool all = true;
        for (std::size_t idx : order) {
            bool placed = false;
            for (int c = 0; c < kCandidates; ++c) {
                random_center(objects[idx], rng, width, height);
                if (occ.fits(objects[idx])) {
                    occ.add(objects[idx]);
                    placed = true;
                    break;
                }
            }
            if (!placed) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

double round_half_up(double x) { return std::floor(x + 0.5); }

double wrap_degrees(double h) {
    double w = std::fmod(h, 360.0);
    if (w < 0) w += 360.0;
    if (w >= 360.0) w -= 360.0;
    return w;
}

std::string pad_index(std::size_t i, int width) {
    std::string s = std::to_string(i);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

}  // namespace

std::string_view to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }

std::optional<Color> parse_color_name(std::string_view s) {
    for (std::size_t i = 0; i < kColorNames.size(); ++i) {
        if (kColorNames[i] == s) return static_cast<Color>(i);
    }
    return std::nullopt;
}

Color color_from_string(std::string_view s) {
    if (auto c = parse_color_name(s)) return *c;
    throw Error(Errc::invalid_argument, "unknown color '" + std::string(s) + "'");
}

Shape shape_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kShapeNames.size(); ++i) {
        if (kShapeNames[i] == s) return static_cast<Shape>(i);
    }
    throw Error(Errc::invalid_argument, "unknown shape '" + std::string(s) + "'");
}

std::string format_number(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) return std::to_string(x);
    return std::string(buf, ptr);
}

std::string hue_label(double degrees) { return "hue:" + format_number(degrees); }

std::string color_label(const ObjectColor& c) {
    if (const auto* named = std::get_if<Color>(&c)) return std::string(to_string(*named));
    return hue_label(std::get<Hue>(c).degrees);
}

std::string concept_label(Color c, Shape s) { return std::string(to_string(c)) + "|" + std::string(to_string(s)); }

std::string object_label(const ObjectSpec& o) { return color_label(o.color) + "|" + std::string(to_string(o.shape)); }

bool inside_shape(Shape shape, double u, double v) {
    if (std::abs(u) >= 1.0 || std::abs(v) >= 1.0) return false;
    switch (shape) {
        case Shape::square: return true;
        case Shape::circle: return u * u + v * v < 1.0;
        case Shape::triangle: {
            // Equilateral, point up, centered in the box.
            const double h = std::sqrt(3.0) / 2.0;
            if (v < -h || v >= h) return false;
            return std::abs(u) <= (v + h) / std::sqrt(3.0);
        }
        case Shape::star: return point_in_polygon(star_polygon(), u, v);
        case Shape::heart: {
            const double r = 0.5;
            const double dl = (u + 0.5) * (u + 0.5) + (v + 0.45) * (v + 0.45);
            const double dr = (u - 0.5) * (u - 0.5) + (v + 0.45) * (v + 0.45);
            if (dl < r * r || dr < r * r) return true;
            return inside_triangle(u, v, -0.97, -0.3, 0.97, -0.3, 0.0, 0.95);
        }
        case Shape::cross: {
            const double arm = 1.0 / 3.0;  // arm width = size / 3
            return std::abs(u) < arm || std::abs(v) < arm;
        }
    }
    return false;
}

std::vector<std::uint32_t> object_mask(const SceneSpec& scene, std::size_t index) {
    if (index >= scene.objects.size()) throw Error(Errc::invalid_argument, "object index out of range");
    std::vector<std::uint32_t> pixels;
    for_each_pixel(scene.objects[index], scene.width, scene.height, [&](int x, int y) {
        pixels.push_back(static_cast<std::uint32_t>(y) * static_cast<std::uint32_t>(scene.width) +
                         static_cast<std::uint32_t>(x));
    });
    return pixels;
}

void check_scene(const SceneSpec& scene) {
    if (scene.width < 1 || scene.height < 1) throw Error(Errc::invariant, "scene '" + scene.id + "' has empty canvas");
    std::vector<std::int32_t> owner(static_cast<std::size_t>(scene.width) * scene.height, -1);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        if (!in_canvas(o, scene.width, scene.height)) {
            throw Error(Errc::invariant, "scene '" + scene.id + "': object " + std::to_string(i) + " (" +
                                             object_label(o) + ") leaves the canvas");
        }
        if (const auto* hue = std::get_if<Hue>(&o.color); hue && !std::isfinite(hue->degrees)) {
            throw Error(Errc::invariant, "scene '" + scene.id + "': non-finite hue");
        }
        for_each_pixel(o, scene.width, scene.height, [&](int x, int y) {
            auto& slot = owner[static_cast<std::size_t>(y) * scene.width + x];
            if (slot >= 0) {
                throw Error(Errc::invariant, "scene '" + scene.id + "': objects " + std::to_string(slot) + " and " +
                                                 std::to_string(i) + " overlap at pixel (" + std::to_string(x) + ", " +
                                                 std::to_string(y) + ")");
            }
            slot = static_cast<std::int32_t>(i);
        });
    }
}

Rgb hsv_to_rgb(double h, double s, double v) {
    if (!std::isfinite(h)) throw Error(Errc::invalid_argument, "hue must be finite");
    if (!(s >= 0.0 && s <= 1.0)) throw Error(Errc::invalid_argument, "saturation outside [0, 1]");
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_argument, "value outside [0, 1]");
    const double hw = wrap_degrees(h);
    const double c = v * s;
    const double hp = hw / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(std::floor(hp))) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
    }
    const auto channel = [m](double val) {
        return static_cast<std::uint8_t>(std::clamp(round_half_up((val + m) * 255.0), 0.0, 255.0));
    };
    return {channel(r), channel(g), channel(b)};
}

Rgb fill_color(const ObjectColor& c, const Palette& palette) {
    if (const auto* named = std::get_if<Color>(&c)) return palette[*named];
    return hsv_to_rgb(std::get<Hue>(c).degrees, 1.0, 1.0);
}

Raster render_scene(const SceneSpec& scene, const Palette& palette) {
    check_scene(scene);
    Raster img{scene.width, scene.height, {}};
    img.rgb.resize(static_cast<std::size_t>(scene.width) * scene.height * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = scene.background.r;
        img.rgb[i + 1] = scene.background.g;
        img.rgb[i + 2] = scene.background.b;
    }
    const auto put = [&](int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        const auto i = 3 * (static_cast<std::size_t>(y) * img.width + x);
        img.rgb[i] = c.r;
        img.rgb[i + 1] = c.g;
        img.rgb[i + 2] = c.b;
    };
    for (const auto& o : scene.objects) {
        const Rgb c = fill_color(o.color, palette);
        for_each_pixel(o, scene.width, scene.height, [&](int x, int y) { put(x, y, c); });
    }
    for (const auto& label : scene.labels) {
        int pen = label.x;
        for (char ch : label.text) {
            if (ch >= 'A' && ch < 'A' + static_cast<int>(kGlyphs.size())) {
                const auto& glyph = kGlyphs[static_cast<std::size_t>(ch - 'A')];
                for (int row = 0; row < 7; ++row) {
                    for (int col = 0; col < 5; ++col) {
                        if (!(glyph[static_cast<std::size_t>(row)] & (0x10 >> col))) continue;
                        for (int dy = 0; dy < label.scale; ++dy) {
                            for (int dx = 0; dx < label.scale; ++dx) {
                                put(pen + col * label.scale + dx, label.y + row * label.scale + dy, Rgb{0, 0, 0});
                            }
                        }
                    }
                }
            }
            pen += 6 * label.scale;
        }
    }
    return img;
}

std::vector<double> cell_coverage(const SceneSpec& scene, std::size_t object_index, TokenGrid grid) {
    if (grid.rows == 0 || grid.cols == 0 || scene.width % static_cast<int>(grid.cols) != 0 ||
        scene.height % static_cast<int>(grid.rows) != 0) {
        throw Error(Errc::invalid_argument, "grid does not tile the canvas");
    }
    if (object_index >= scene.objects.size()) throw Error(Errc::invalid_argument, "object index out of range");
    const int cw = scene.width / static_cast<int>(grid.cols);
    const int ch = scene.height / static_cast<int>(grid.rows);
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
    for_each_pixel(scene.objects[object_index], scene.width, scene.height, [&](int x, int y) {
        ++counts[static_cast<std::size_t>(y / ch) * grid.cols + static_cast<std::size_t>(x / cw)];
    });
    std::vector<double> coverage(counts.size());
    const double area = static_cast<double>(cw) * ch;
    for (std::size_t i = 0; i < counts.size(); ++i) coverage[i] = counts[i] / area;
    return coverage;
}

std::vector<std::uint32_t> token_mask(const SceneSpec& scene, std::size_t object_index, TokenGrid grid,
                                      double threshold) {
    const auto coverage = cell_coverage(scene, object_index, grid);
    std::vector<std::uint32_t> cells;
    for (std::size_t i = 0; i < coverage.size(); ++i) {
        if (coverage[i] >= threshold) cells.push_back(static_cast<std::uint32_t>(i));
    }
    return cells;
}

std::vector<SceneSpec> gen_distillation_corpus(const DistillationParams& params, std::uint64_t seed) {
    if (params.positions_per_concept < 1) throw Error(Errc::invalid_argument, "positions_per_concept must be >= 1");
    if (params.size.min < 1 || params.size.max < params.size.min || params.size.max > kCanvasSide) {
        throw Error(Errc::invalid_argument, "invalid size range");
    }
    std::vector<SceneSpec> scenes;
    std::size_t index = 0;
    for (Color c : params.colors) {
        for (Shape s : params.shapes) {
            for (int p = 0; p < params.positions_per_concept; ++p, ++index) {
                SceneSpec scene;
                scene.seed = derive_seed(seed, index);
                Rng rng(scene.seed);
                scene.id = "distill_" + concept_label(c, s).replace(std::string(to_string(c)).size(), 1, "_") + "_" +
                           pad_index(static_cast<std::size_t>(p), 3);
                ObjectSpec o;
                o.color = c;
                o.shape = s;
                o.size = rng.between(params.size.min, params.size.max);
                random_center(o, rng, scene.width, scene.height);
                scene.objects.push_back(o);
                scenes.push_back(std::move(scene));
            }
        }
    }
    return scenes;
}

std::map<std::string, bool> presence_labels(const SceneSpec& scene, const std::vector<Color>& colors,
                                            const std::vector<Shape>& shapes) {
    std::map<std::string, bool> labels;
    for (Color c : colors) {
        for (Shape s : shapes) labels[concept_label(c, s)] = false;
    }
    for (const auto& o : scene.objects) {
        if (const auto* named = std::get_if<Color>(&o.color)) {
            auto it = labels.find(concept_label(*named, o.shape));
            if (it != labels.end()) it->second = true;
        }
    }
    return labels;
}

std::vector<LabeledScene> gen_probe_corpus(const ProbeCorpusParams& params, std::uint64_t seed) {
    const int n_concepts = static_cast<int>(params.colors.size() * params.shapes.size());
    if (params.scene_count < 1 || n_concepts < 1) throw Error(Errc::invalid_argument, "empty probe corpus request");
    if (params.min_objects < 1 || params.max_objects < params.min_objects || params.max_objects > n_concepts) {
        throw Error(Errc::invalid_argument, "objects-per-scene range must satisfy 1 <= min <= max <= concept count");
    }
    const double expected_rate = 0.5 * (params.min_objects + params.max_objects) / n_concepts;
    if (std::abs(expected_rate - params.target_rate) > params.balance_tolerance) {
        throw Error(Errc::infeasible, "objects-per-scene range yields presence rate " + format_number(expected_rate) +
                                          ", outside " + format_number(params.target_rate) + " +/- " +
                                          format_number(params.balance_tolerance));
    }

    std::vector<std::pair<Color, Shape>> concepts;
    for (Color c : params.colors) {
        for (Shape s : params.shapes) concepts.emplace_back(c, s);
    }
    std::vector<int> counts(concepts.size(), 0);
    std::vector<LabeledScene> corpus;
    for (int i = 0; i < params.scene_count; ++i) {
        SceneSpec scene;
        scene.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        scene.id = "probe_" + pad_index(static_cast<std::size_t>(i), 5);
        Rng scene_rng(scene.seed);
        const int n = scene_rng.between(params.min_objects, params.max_objects);

        // Least-used concepts first, random tie-break: keeps per-concept
        // presence rates close to n_mean / n_concepts.
        std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
        for (std::size_t k = 0; k < concepts.size(); ++k) {
            keyed.emplace_back((static_cast<std::uint64_t>(counts[k]) << 32) | (scene_rng.next_u64() >> 32), k);
        }
        std::sort(keyed.begin(), keyed.end());
        for (int j = 0; j < n; ++j) {
            const std::size_t k = keyed[static_cast<std::size_t>(j)].second;
            ++counts[k];
            ObjectSpec o;
            o.color = concepts[k].first;
            o.shape = concepts[k].second;
            o.size = scene_rng.between(params.size.min, params.size.max);
            scene.objects.push_back(o);
        }
        scene_rng.shuffle(scene.objects.begin(), scene.objects.end());
        if (!place_objects(scene.objects, scene_rng, scene.width, scene.height, params.retry_budget)) {
            throw Error(Errc::placement_failure, "could not place " + std::to_string(n) + " objects in '" + scene.id + "'");
        }
        auto labels = presence_labels(scene, params.colors, params.shapes);
        corpus.push_back({std::move(scene), std::move(labels)});
    }
    for (std::size_t k = 0; k < concepts.size(); ++k) {
        const double rate = static_cast<double>(counts[k]) / params.scene_count;
        if (std::abs(rate - params.target_rate) > params.balance_tolerance) {
            throw Error(Errc::infeasible, "concept " + concept_label(concepts[k].first, concepts[k].second) +
                                              " present in " + format_number(rate) + " of scenes");
        }
    }
    return corpus;
}

int high_interference_count(int n_dist, double p_int) {
    return static_cast<int>(round_half_up(n_dist * p_int));
}

VisualSearchBatch gen_visual_search_trials(const VisualSearchParams& params, std::uint64_t seed) {
    if (params.trials_per_cell < 1) throw Error(Errc::invalid_argument, "trials_per_cell must be >= 1");
    for (int n : params.n_dist) {
        if (n < 4 || n > 40) throw Error(Errc::invalid_argument, "n_dist must lie in [4, 40]");
    }
    for (double p : params.p_int) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "p_int must lie in [0, 1]");
    }
    VisualSearchBatch batch;
    std::uint64_t index = 0;
    for (int n_dist : params.n_dist) {
        for (double p_int : params.p_int) {
            for (int present = 0; present < 2; ++present) {
                for (int rep = 0; rep < params.trials_per_cell; ++rep, ++index) {
                    VisualSearchTrial trial;
                    trial.id = "vs_" + pad_index(index, 5);
                    trial.n_dist = n_dist;
                    trial.p_int = p_int;
                    trial.target_present = present == 1;
                    trial.k_high = high_interference_count(n_dist, p_int);
                    trial.scene.id = trial.id;
                    trial.scene.seed = derive_seed(seed, index);
                    Rng rng(trial.scene.seed);
                    trial.target_color = kAllColors[rng.below(6)];
                    trial.target_shape = kAllShapes[rng.below(6)];

                    std::vector<std::pair<Color, Shape>> high, low;
                    for (Color c : kAllColors) {
                        for (Shape s : kAllShapes) {
                            const bool same_c = c == trial.target_color;
                            const bool same_s = s == trial.target_shape;
                            if (same_c != same_s) high.emplace_back(c, s);
                            if (!same_c && !same_s) low.emplace_back(c, s);
                        }
                    }
                    auto& objects = trial.scene.objects;
                    const auto add = [&](Color c, Shape s) {
                        ObjectSpec o;
                        o.color = c;
                        o.shape = s;
                        o.size = rng.between(params.size.min, params.size.max);
                        objects.push_back(o);
                    };
                    for (int k = 0; k < trial.k_high; ++k) {
                        const auto& [c, s] = high[rng.below(high.size())];
                        add(c, s);
                    }
                    for (int k = trial.k_high; k < n_dist; ++k) {
                        const auto& [c, s] = low[rng.below(low.size())];
                        add(c, s);
                    }
                    if (trial.target_present) add(trial.target_color, trial.target_shape);
                    rng.shuffle(objects.begin(), objects.end());
                    if (!place_objects(objects, rng, trial.scene.width, trial.scene.height, params.retry_budget)) {
                        batch.failures.push_back({trial.id, "no collision-free layout for " +
                                                                std::to_string(objects.size()) + " objects after " +
                                                                std::to_string(params.retry_budget) + " attempts"});
                        continue;
                    }
                    batch.trials.push_back(std::move(trial));
                }
            }
        }
    }
    return batch;
}

double circular_distance(double h1, double h2) {
    const double d = wrap_degrees(std::abs(h1 - h2));
    return std::min(d, 360.0 - d);
}

std::vector<SimilarityTrial> gen_similarity_trials(const SimilarityParams& params, std::uint64_t seed) {
    if (params.min_setup < 1 || params.max_setup < params.min_setup || params.max_setup > 12) {
        throw Error(Errc::invalid_argument, "setup size range must lie within [1, 12]");
    }
    if (params.max_setup * params.min_sep > 360.0) {
        throw Error(Errc::infeasible, "cannot fit " + std::to_string(params.max_setup) + " hues " +
                                          format_number(params.min_sep) + " degrees apart");
    }
    const auto snap = [&](double h) {
        if (params.hue_grid <= 0) return h;
        const double step = 360.0 / params.hue_grid;
        const auto k = static_cast<long>(std::llround(h / step)) % params.hue_grid;
        return 360.0 * static_cast<double>(k) / params.hue_grid;
    };
    constexpr int kCols = 4;
    constexpr int kRows = 3;
    const int slot_w = kCanvasSide / kCols;
    const int slot_h = kCanvasSide / kRows;

    std::vector<SimilarityTrial> trials;
    for (int t = 0; t < params.trial_count; ++t) {
        SimilarityTrial trial;
        trial.id = "sim_" + pad_index(static_cast<std::size_t>(t), 5);
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
        Rng rng(trial_seed);
        const int n = rng.between(params.min_setup, params.max_setup);
        int tries = 0;
        while (static_cast<int>(trial.setup_hues.size()) < n) {
            if (++tries > 100000) throw Error(Errc::infeasible, "hue sampling did not satisfy min_sep");
            const double h = snap(rng.uniform(0.0, 360.0));
            bool ok = true;
            for (double other : trial.setup_hues) {
                if (circular_distance(h, other) < params.min_sep || circular_distance(h, other) == 0.0) ok = false;
            }
            if (ok) trial.setup_hues.push_back(h);
        }
        trial.query_hue = snap(rng.uniform(0.0, 360.0));

        std::vector<int> slots(kCols * kRows);
        for (int i = 0; i < kCols * kRows; ++i) slots[static_cast<std::size_t>(i)] = i;
        rng.shuffle(slots.begin(), slots.end());

        trial.setup_scene.id = trial.id + "_setup";
        trial.setup_scene.seed = derive_seed(trial_seed, 1);
        for (int i = 0; i < n; ++i) {
            const int slot = slots[static_cast<std::size_t>(i)];
            const int sx = (slot % kCols) * slot_w;
            const int sy = (slot / kCols) * slot_h;
            ObjectSpec o;
            o.color = Hue{trial.setup_hues[static_cast<std::size_t>(i)]};
            o.shape = Shape::square;
            o.size = params.square_size;
            o.cx = sx + slot_w / 2.0;
            o.cy = sy + 8 + params.square_size / 2.0;
            trial.setup_scene.objects.push_back(o);
            const std::string letter(1, static_cast<char>('A' + i));
            trial.letters.push_back(letter);
            trial.setup_scene.labels.push_back(
                {letter, static_cast<int>(o.cx) - 7, sy + 8 + params.square_size + 10, 3});
        }
        trial.query_scene.id = trial.id + "_query";
        trial.query_scene.seed = derive_seed(trial_seed, 2);
        ObjectSpec q;
        q.color = Hue{trial.query_hue};
        q.shape = Shape::square;
        q.size = params.query_size;
        q.cx = kCanvasSide / 2.0;
        q.cy = kCanvasSide / 2.0;
        trial.query_scene.objects.push_back(q);
        trials.push_back(std::move(trial));
    }
    return trials;
}

std::vector<SceneSpec> gen_hue_sweep(int count, std::uint64_t seed, const HueSweepParams& params) {
    if (count < 2) throw Error(Errc::invalid_argument, "hue sweep needs at least 2 hues");
    if (params.positions_per_hue < 1) throw Error(Errc::invalid_argument, "positions_per_hue must be >= 1");
    std::vector<SceneSpec> scenes;
    std::uint64_t index = 0;
    for (int i = 0; i < count; ++i) {
        const double hue = 360.0 * i / count;
        for (int p = 0; p < params.positions_per_hue; ++p, ++index) {
            SceneSpec scene;
            scene.seed = derive_seed(seed, index);
            scene.id = "hue_" + pad_index(static_cast<std::size_t>(i), 3) + "_" + pad_index(static_cast<std::size_t>(p), 3);
            Rng rng(scene.seed);
            ObjectSpec o;
            o.color = Hue{hue};
            o.shape = params.shape;
            o.size = rng.between(params.size.min, params.size.max);
            random_center(o, rng, scene.width, scene.height);
            scene.objects.push_back(o);
            scenes.push_back(std::move(scene));
        }
    }
    return scenes;
}

}  // namespace vlmgeo
