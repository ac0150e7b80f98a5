#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cyberspec/errors.hpp"

namespace cyberspec {

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R/NumPy default). `sorted` must be ascending.
inline double quantile_type7(std::span<const double> sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Thresholds {
    double lo = 0.0;
    double hi = 0.0;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// Interquartile rule: [Q1 - 1.5 IQR, Q3 + 1.5 IQR].
inline Thresholds fit_iqr_threshold(std::span<const double> scores) {
    if (scores.size() < 4) throw ConfigError("IQR thresholding needs at least 4 scores");
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    const double q1 = quantile_type7(s, 0.25);
    const double q3 = quantile_type7(s, 0.75);
    const double iqr = q3 - q1;
    return {q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

enum class ThresholdSide { below, within, above };

/// Bounds are inclusive: a score equal to lo or hi is normal.
inline ThresholdSide threshold_side(const Thresholds& t, double score) {
    if (score < t.lo) return ThresholdSide::below;
    if (score > t.hi) return ThresholdSide::above;
    return ThresholdSide::within;
}

}  // namespace cyberspec
