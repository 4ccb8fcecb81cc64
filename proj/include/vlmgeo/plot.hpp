#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vlmgeo/geometry.hpp"

namespace vlmgeo {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string stroke = "#1f77b4";
    double width = 1.5;
};

// Cosine heatmap with the group distributions drawn as strips underneath.
void svg_similarity_figure(const std::filesystem::path& path, const SimilarityMatrix& m, const GroupSimilarity& g,
                           const std::string& title);

void svg_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::vector<Series>& series);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::string fill = "#333333";
    std::string label;
};

void svg_scatter(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                 const std::string& y_label, const std::vector<ScatterPoint>& points);

}  // namespace vlmgeo
