#pragma once

#include <cmath>
#include <span>

#include "vlmgeo/error.hpp"

namespace vlmgeo {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw Error(Errc::invalid_argument, "mean of an empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Population standard deviation.
inline double stddev(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

// Throws Errc::degenerate when either sample is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(Errc::dimension_mismatch, "pearson samples differ in length");
    if (x.size() < 3) throw Error(Errc::invalid_argument, "pearson needs at least three points");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(Errc::degenerate, "pearson of a constant sample");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace vlmgeo
