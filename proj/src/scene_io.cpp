#include "vlmgeo/scene_io.hpp"

#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

#include "vlmgeo/error.hpp"

namespace vlmgeo {

using nlohmann::json;

namespace {

json color_to_json(const ObjectColor& c) {
    if (const auto* named = std::get_if<Color>(&c)) return std::string(to_string(*named));
    return json{{"hue", std::get<Hue>(c).degrees}};
}

ObjectColor color_from_json(const json& j) {
    if (j.is_string()) return color_from_string(j.get<std::string>());
    return Hue{j.at("hue").get<double>()};
}

template <typename Fn>
auto with_json_errors(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw Error(Errc::bad_header, std::string(what) + ": " + e.what());
    }
}

}  // namespace

json to_json(const SceneSpec& scene) {
    json objects = json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"color", color_to_json(o.color)},
                           {"shape", std::string(to_string(o.shape))},
                           {"cx", o.cx},
                           {"cy", o.cy},
                           {"size", o.size}});
    }
    json j{{"id", scene.id},
           {"canvas", {scene.width, scene.height}},
           {"background", {scene.background.r, scene.background.g, scene.background.b}},
           {"seed", scene.seed},
           {"objects", objects}};
    if (!scene.labels.empty()) {
        json labels = json::array();
        for (const auto& l : scene.labels) labels.push_back({{"text", l.text}, {"x", l.x}, {"y", l.y}, {"scale", l.scale}});
        j["labels"] = labels;
    }
    return j;
}

SceneSpec scene_from_json(const json& j) {
    return with_json_errors("scene record", [&] {
        SceneSpec s;
        s.id = j.at("id").get<std::string>();
        const auto canvas = j.at("canvas").get<std::vector<int>>();
        if (canvas.size() != 2) throw Error(Errc::bad_header, "canvas must have two entries");
        s.width = canvas[0];
        s.height = canvas[1];
        const auto bg = j.at("background").get<std::vector<int>>();
        if (bg.size() != 3) throw Error(Errc::bad_header, "background must be RGB");
        s.background = {static_cast<std::uint8_t>(bg[0]), static_cast<std::uint8_t>(bg[1]),
                        static_cast<std::uint8_t>(bg[2])};
        s.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& o : j.at("objects")) {
            ObjectSpec spec;
            spec.color = color_from_json(o.at("color"));
            spec.shape = shape_from_string(o.at("shape").get<std::string>());
            spec.cx = o.at("cx").get<double>();
            spec.cy = o.at("cy").get<double>();
            spec.size = o.at("size").get<int>();
            s.objects.push_back(spec);
        }
        if (j.contains("labels")) {
            for (const auto& l : j.at("labels")) {
                s.labels.push_back({l.at("text").get<std::string>(), l.at("x").get<int>(), l.at("y").get<int>(),
                                    l.at("scale").get<int>()});
            }
        }
        return s;
    });
}

json to_json(const VisualSearchTrial& t) {
    return {{"id", t.id},
            {"kind", "visual_search"},
            {"target", {std::string(to_string(t.target_color)), std::string(to_string(t.target_shape))}},
            {"target_present", t.target_present},
            {"n_dist", t.n_dist},
            {"p_int", t.p_int},
            {"k_high", t.k_high},
            {"scene", to_json(t.scene)}};
}

VisualSearchTrial visual_search_trial_from_json(const json& j) {
    return with_json_errors("visual-search trial", [&] {
        VisualSearchTrial t;
        t.id = j.at("id").get<std::string>();
        const auto target = j.at("target").get<std::vector<std::string>>();
        if (target.size() != 2) throw Error(Errc::bad_header, "target must be [color, shape]");
        t.target_color = color_from_string(target[0]);
        t.target_shape = shape_from_string(target[1]);
        t.target_present = j.at("target_present").get<bool>();
        t.n_dist = j.at("n_dist").get<int>();
        t.p_int = j.at("p_int").get<double>();
        t.k_high = j.at("k_high").get<int>();
        t.scene = scene_from_json(j.at("scene"));
        return t;
    });
}

json to_json(const SimilarityTrial& t) {
    return {{"id", t.id},
            {"kind", "similarity"},
            {"setup_hues", t.setup_hues},
            {"letters", t.letters},
            {"query_hue", t.query_hue},
            {"setup_scene", to_json(t.setup_scene)},
            {"query_scene", to_json(t.query_scene)}};
}

SimilarityTrial similarity_trial_from_json(const json& j) {
    return with_json_errors("similarity trial", [&] {
        SimilarityTrial t;
        t.id = j.at("id").get<std::string>();
        t.setup_hues = j.at("setup_hues").get<std::vector<double>>();
        t.letters = j.at("letters").get<std::vector<std::string>>();
        if (t.letters.size() != t.setup_hues.size()) throw Error(Errc::bad_header, "letters/hues length mismatch");
        t.query_hue = j.at("query_hue").get<double>();
        t.setup_scene = scene_from_json(j.at("setup_scene"));
        t.query_scene = scene_from_json(j.at("query_scene"));
        return t;
    });
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    for (const auto& r : records) out << r.dump() << '\n';
    if (!out) throw Error(Errc::io, "write failure on '" + path.string() + "'");
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "' for reading");
    std::vector<json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(Errc::bad_header, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

void write_scene_corpus(const std::filesystem::path& dir, const std::vector<SceneSpec>& scenes, bool png,
                        const Palette& palette) {
    std::filesystem::create_directories(dir);
    std::vector<json> records;
    records.reserve(scenes.size());
    for (const auto& s : scenes) {
        records.push_back(to_json(s));
        if (png) write_png(dir / (s.id + ".png"), render_scene(s, palette));
    }
    write_jsonl(dir / "scenes.jsonl", records);
}

std::vector<SceneSpec> read_scene_corpus(const std::filesystem::path& dir) {
    std::vector<SceneSpec> scenes;
    for (const auto& r : read_jsonl(dir / "scenes.jsonl")) scenes.push_back(scene_from_json(r));
    return scenes;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(Errc::io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(Errc::io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(Errc::io, "libpng error writing '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        auto* row = const_cast<png_bytep>(image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace vlmgeo
