#include "vlmgeo/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vlmgeo/error.hpp"

namespace vlmgeo {

namespace {

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << x;
    auto s = os.str();
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    return s;
}

void save(const std::filesystem::path& path, const std::string& body, int w, int h) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
        << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body << "</svg>\n";
}

// Diverging blue-white-red ramp over [-1, 1].
std::string ramp(double v) {
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0) {
        r = 255;
        g = b = static_cast<int>(std::lround(255 * (1 - v)));
    } else {
        b = 255;
        r = g = static_cast<int>(std::lround(255 * (1 + v)));
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

struct Frame {
    double x0, x1, y0, y1;  // data range
    double left, top, width, height;  // pixels

    double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
    double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

void axes(std::ostringstream& os, const Frame& f, const std::string& xl, const std::string& yl) {
    os << "<rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\"" << f.width << "\" height=\"" << f.height
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(f.top + f.height + 14)
           << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
        os << "<text x=\"" << num(f.left - 4) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
           << "</text>\n";
    }
    os << "<text x=\"" << num(f.left + f.width / 2) << "\" y=\"" << num(f.top + f.height + 30)
       << "\" text-anchor=\"middle\">" << esc(xl) << "</text>\n";
    os << "<text transform=\"translate(" << num(f.left - 40) << ',' << num(f.top + f.height / 2)
       << ") rotate(-90)\" text-anchor=\"middle\">" << esc(yl) << "</text>\n";
}

void range(const std::vector<double>& v, double& lo, double& hi) {
    for (double x : v) {
        if (!std::isfinite(x)) continue;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
}

void pad(double& lo, double& hi) {
    if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
        return;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
}

}  // namespace

void svg_similarity_figure(const std::filesystem::path& path, const SimilarityMatrix& m, const GroupSimilarity& g,
                           const std::string& title) {
    const std::size_t n = m.size();
    const double cell = std::max(6.0, std::min(16.0, 560.0 / static_cast<double>(std::max<std::size_t>(n, 1))));
    const double left = 120, top = 40;
    const double side = cell * static_cast<double>(n);
    std::ostringstream os;
    os << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << esc(title) << "</text>\n";
    for (std::size_t i = 0; i < n; ++i) {
        os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + cell * (i + 0.5) + 3)
           << "\" text-anchor=\"end\" font-size=\"8\">" << esc(m.labels[i]) << "</text>\n";
        for (std::size_t j = 0; j < n; ++j) {
            os << "<rect x=\"" << num(left + cell * j) << "\" y=\"" << num(top + cell * i) << "\" width=\"" << num(cell)
               << "\" height=\"" << num(cell) << "\" fill=\"" << ramp(m.at(i, j)) << "\"><title>" << esc(m.labels[i])
               << " / " << esc(m.labels[j]) << ": " << num(m.at(i, j)) << "</title></rect>\n";
        }
    }
    // Strip plot of the group distributions.
    const double strip_top = top + side + 30;
    const double strip_h = 160;
    const std::pair<std::string, const GroupStats*> groups[] = {
        {"same color", &g.same_color}, {"same shape", &g.same_shape}, {"neither", &g.neither}, {"both", &g.both}};
    Frame f{0, 4, -1, 1, left, strip_top, std::max(side, 240.0), strip_h};
    axes(os, f, "group", "cosine");
    const char* colors[] = {"#d62728", "#1f77b4", "#7f7f7f", "#9467bd"};
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& [name, stats] = groups[k];
        const double cx = f.px(k + 0.5);
        os << "<text x=\"" << num(cx) << "\" y=\"" << num(strip_top - 4) << "\" text-anchor=\"middle\">" << name
           << " (n=" << stats->count << ")</text>\n";
        for (std::size_t i = 0; i < stats->values.size(); ++i) {
            const double jitter = (static_cast<double>((i * 37) % 17) / 16.0 - 0.5) * 0.5;
            os << "<circle cx=\"" << num(f.px(k + 0.5 + jitter)) << "\" cy=\"" << num(f.py(stats->values[i]))
               << "\" r=\"1.8\" fill=\"" << colors[k] << "\" fill-opacity=\"0.6\"/>\n";
        }
    }
    save(path, os.str(), static_cast<int>(left + std::max(side, 240.0) + 40),
         static_cast<int>(strip_top + strip_h + 50));
}

void svg_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::vector<Series>& series) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw Error(Errc::invalid_argument, "series x/y lengths differ");
        range(s.x, x0, x1);
        range(s.y, y0, y1);
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    pad(y0, y1);
    if (!(x0 < x1)) pad(x0, x1);
    Frame f{x0, x1, y0, y1, 70, 40, 520, 300};
    std::ostringstream os;
    os << "<text x=\"70\" y=\"22\" font-size=\"14\">" << esc(title) << "</text>\n";
    axes(os, f, x_label, y_label);
    double legend_y = f.top + 12;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.stroke << "\" stroke-width=\"" << num(s.width) << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
        }
        os << "\"/>\n";
        if (!s.name.empty()) {
            os << "<text x=\"" << num(f.left + f.width + 8) << "\" y=\"" << num(legend_y) << "\" fill=\"" << s.stroke
               << "\">" << esc(s.name) << "</text>\n";
            legend_y += 14;
        }
    }
    save(path, os.str(), 720, 390);
}

void svg_scatter(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                 const std::string& y_label, const std::vector<ScatterPoint>& points) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& p : points) {
        x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    if (points.empty()) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    pad(x0, x1);
    pad(y0, y1);
    Frame f{x0, x1, y0, y1, 70, 40, 420, 420};
    std::ostringstream os;
    os << "<text x=\"70\" y=\"22\" font-size=\"14\">" << esc(title) << "</text>\n";
    axes(os, f, x_label, y_label);
    for (const auto& p : points) {
        os << "<circle cx=\"" << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y)) << "\" r=\"4\" fill=\"" << p.fill
           << "\">";
        if (!p.label.empty()) os << "<title>" << esc(p.label) << "</title>";
        os << "</circle>\n";
    }
    save(path, os.str(), 540, 510);
}

}  // namespace vlmgeo
