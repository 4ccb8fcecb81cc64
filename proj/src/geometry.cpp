#include "vlmgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "vlmgeo/csv.hpp"
#include "vlmgeo/error.hpp"
#include "vlmgeo/stats.hpp"

namespace vlmgeo {

namespace {

GroupStats finish(std::vector<double> values) {
    GroupStats g;
    g.count = values.size();
    if (!values.empty()) {
        g.mean = mean(values);
        g.std = stddev(values);
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        g.min = *lo;
        g.max = *hi;
    }
    g.values = std::move(values);
    return g;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += static_cast<double>(a[k]) * b[k];
        aa += static_cast<double>(a[k]) * a[k];
        bb += static_cast<double>(b[k]) * b[k];
    }
    if (aa == 0.0 || bb == 0.0) throw Error(Errc::degenerate, "cosine with a zero vector");
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace

SimilarityMatrix cosine_matrix(std::span<const ConceptVector> vectors) {
    if (vectors.size() < 2) throw Error(Errc::invalid_argument, "cosine_matrix needs at least two vectors");
    const std::size_t n = vectors.size();
    const std::size_t d = vectors.front().dim();
    SimilarityMatrix m;
    m.values.assign(n * n, 0.0);
    for (const auto& v : vectors) {
        if (v.dim() != d) throw Error(Errc::dimension_mismatch, "vectors differ in width");
        m.labels.push_back(v.label);
    }
    for (std::size_t i = 0; i < n; ++i) {
        m.values[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = cosine(vectors[i].direction, vectors[j].direction);
            m.values[i * n + j] = c;
            m.values[j * n + i] = c;
        }
    }
    return m;
}

bool GroupSimilarity::separated() const {
    if (neither.count == 0) return true;
    double shared_min = INFINITY;
    for (const auto* g : {&same_color, &same_shape, &both}) {
        if (g->count) shared_min = std::min(shared_min, g->min);
    }
    return shared_min > neither.max;
}

FactorLabel split_label(const std::string& label) {
    const auto bar = label.find('|');
    if (bar == std::string::npos || label.find('|', bar + 1) != std::string::npos) {
        throw Error(Errc::invalid_argument, "label '" + label + "' is not of the form color|shape");
    }
    return {label.substr(0, bar), label.substr(bar + 1)};
}

GroupSimilarity group_similarity_stats(const SimilarityMatrix& m, std::span<const FactorLabel> factors) {
    const std::size_t n = m.size();
    if (factors.size() != n) throw Error(Errc::invalid_argument, "one factor label per matrix row required");
    std::vector<double> color, shape, neither, both;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool c = factors[i].color == factors[j].color;
            const bool s = factors[i].shape == factors[j].shape;
            (c && s ? both : c ? color : s ? shape : neither).push_back(m.at(i, j));
        }
    }
    return {finish(std::move(color)), finish(std::move(shape)), finish(std::move(neither)), finish(std::move(both))};
}

GroupSimilarity group_similarity_stats(const SimilarityMatrix& m) {
    std::vector<FactorLabel> factors;
    for (const auto& l : m.labels) factors.push_back(split_label(l));
    return group_similarity_stats(m, factors);
}

SimilarityProfile semantic_similarity_function(std::span<const HueVector> hues, double grid_tol) {
    const std::size_t n = hues.size();
    if (n < 2) throw Error(Errc::invalid_argument, "hue profile needs at least two hues");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hues[a].hue < hues[b].hue; });
    const double step = 360.0 / static_cast<double>(n);
    const double h0 = hues[order[0]].hue;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = hues[order[i]].hue;
        if (!(std::abs(h - (h0 + step * static_cast<double>(i))) <= grid_tol) || h - h0 >= 360.0) {
            throw Error(Errc::invalid_argument, "hues do not form a uniform circular grid (hue " +
                                                    format_number(h) + ")");
        }
    }
    SimilarityProfile p;
    p.hues.resize(n);
    p.deltas.resize(n);
    p.per_hue.assign(n, std::vector<double>(n));
    p.mean.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        p.hues[i] = hues[order[i]].hue;
        p.deltas[i] = step * static_cast<double>(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double g = k == 0 ? 1.0
                                    : cosine(hues[order[i]].vector.direction, hues[order[(i + k) % n]].vector.direction);
            p.per_hue[i][k] = g;
            p.mean[k] += g / static_cast<double>(n);
        }
    }
    return p;
}

ProfileShape describe_profile(const SimilarityProfile& p) {
    ProfileShape s;
    const std::size_t n = p.deltas.size();
    if (n < 3) return s;
    // Walk the mean curve in signed displacement order over each tail.
    auto tail_changes = [&](bool positive) {
        std::vector<double> g;
        for (std::size_t k = 0; k < n; ++k) {
            const double sd = SimilarityProfile::signed_delta(p.deltas[k]);
            if (positive ? (sd > 90.0) : (sd < -90.0 || sd == 180.0)) g.push_back(p.mean[k]);
        }
        if (!positive) std::reverse(g.begin(), g.end());
        int changes = 0, last = 0;
        for (std::size_t i = 1; i < g.size(); ++i) {
            const double diff = g[i] - g[i - 1];
            const int sign = diff > 1e-12 ? 1 : diff < -1e-12 ? -1 : 0;
            if (sign != 0) {
                if (last != 0 && sign != last) ++changes;
                last = sign;
            }
        }
        return changes;
    };
    s.tail_sign_changes = tail_changes(true) + tail_changes(false);
    const double step = p.deltas[1] * std::numbers::pi / 180.0;
    for (const auto& row : p.per_hue) s.curvature.push_back((row[1] + row[n - 1] - 2.0) / (step * step));
    return s;
}

PcaProjection pca_project(std::span<const ConceptVector> vectors, std::size_t k) {
    const std::size_t n = vectors.size();
    if (k == 0 || k >= n) throw Error(Errc::invalid_argument, "pca_project needs 0 < k < n");
    const auto d = static_cast<Eigen::Index>(vectors.front().dim());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(vectors[i].dim()) != d) {
            throw Error(Errc::dimension_mismatch, "vectors differ in width");
        }
        for (Eigen::Index j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), j) = vectors[i].direction[static_cast<std::size_t>(j)];
    }
    const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double total = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) total += sv(i) * sv(i);

    PcaProjection out;
    for (Eigen::Index i = 0; i < sv.size(); ++i) out.singular_values.push_back(sv(i));
    out.coords.assign(n, std::vector<double>(k, 0.0));
    const auto kk = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), sv.size());
    for (std::size_t c = 0; c < k; ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        const double var = ci < sv.size() ? sv(ci) * sv(ci) : 0.0;
        out.explained_ratio.push_back(total > 0.0 ? var / total : 0.0);
        if (ci >= kk || total == 0.0) continue;
        // Fix the sign so the largest-magnitude loading is positive.
        const auto v = svd.matrixV().col(ci);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        const double sign = v(arg) < 0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.coords[i][c] = sign * C.row(static_cast<Eigen::Index>(i)).dot(v);
        }
    }
    return out;
}

double rsa(const SimilarityMatrix& a, const SimilarityMatrix& b) {
    if (a.labels != b.labels) throw Error(Errc::invalid_argument, "rsa needs identical label sets in the same order");
    std::vector<double> x, y;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            x.push_back(a.at(i, j));
            y.push_back(b.at(i, j));
        }
    }
    return pearson(x, y);
}

void write_matrix_csv(const std::filesystem::path& path, const SimilarityMatrix& m) {
    CsvWriter csv(path);
    std::vector<std::string> header{"label"};
    header.insert(header.end(), m.labels.begin(), m.labels.end());
    csv.row(header);
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::vector<std::string> row{m.labels[i]};
        for (std::size_t j = 0; j < m.size(); ++j) row.push_back(format_number(m.at(i, j)));
        csv.row(row);
    }
}

void write_group_csv(const std::filesystem::path& path, const GroupSimilarity& g) {
    CsvWriter csv(path);
    csv.row({"group", "count", "mean", "std", "min", "max"});
    const std::pair<const char*, const GroupStats*> groups[] = {
        {"same_color", &g.same_color}, {"same_shape", &g.same_shape}, {"neither", &g.neither}, {"both", &g.both}};
    for (const auto& [name, s] : groups) {
        if (!s->count && std::string(name) == "both") continue;
        csv.row({name, std::to_string(s->count), format_number(s->mean), format_number(s->std), format_number(s->min),
                 format_number(s->max)});
    }
}

void write_profile_csv(const std::filesystem::path& path, const SimilarityProfile& p) {
    CsvWriter csv(path);
    csv.row({"hue", "delta", "g"});
    for (std::size_t k = 0; k < p.deltas.size(); ++k) {
        csv.row({"mean", format_number(p.deltas[k]), format_number(p.mean[k])});
    }
    for (std::size_t i = 0; i < p.hues.size(); ++i) {
        for (std::size_t k = 0; k < p.deltas.size(); ++k) {
            csv.row({format_number(p.hues[i]), format_number(p.deltas[k]), format_number(p.per_hue[i][k])});
        }
    }
}

void write_projection_csv(const std::filesystem::path& path, std::span<const std::string> labels,
                          const PcaProjection& p) {
    if (labels.size() != p.coords.size()) throw Error(Errc::invalid_argument, "one label per projected vector");
    CsvWriter csv(path);
    std::vector<std::string> header{"label"};
    for (std::size_t c = 0; c < p.explained_ratio.size(); ++c) header.push_back("pc" + std::to_string(c + 1));
    csv.row(header);
    std::vector<std::string> ratio{"explained_ratio"};
    for (double r : p.explained_ratio) ratio.push_back(format_number(r));
    csv.row(ratio);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::vector<std::string> row{labels[i]};
        for (double x : p.coords[i]) row.push_back(format_number(x));
        csv.row(row);
    }
}

}  // namespace vlmgeo
