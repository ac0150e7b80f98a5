#pragma once

// Copula-based outlier detection. Per feature, empirical left/right tail
// probabilities F_L(x) = (1 + #{t <= x}) / (n + 1) and
// F_R(x) = (1 + #{t >= x}) / (n + 1); the feature contributes
// max(U_skew, (U_L + U_R) / 2) with U = -log F and U_skew picked by the
// sign of the training skewness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"

namespace cyberspec {

struct TailScores {
    double left = 0.0;   ///< -log F_L
    double right = 0.0;  ///< -log F_R
};

class Copod {
public:
    Copod() = default;

    explicit Copod(const Matrix& train) {
        if (train.rows() < 2) throw ConfigError("COPOD needs at least 2 rows");
        sorted_.resize(train.cols());
        skew_sign_.resize(train.cols());
        for (std::size_t c = 0; c < train.cols(); ++c) {
            sorted_[c] = train.column(c);
            skew_sign_[c] = sign(skewness(sorted_[c]));
            std::sort(sorted_[c].begin(), sorted_[c].end());
        }
    }

    Copod(std::vector<std::vector<double>> sorted_columns, std::vector<int> skew_signs)
        : sorted_(std::move(sorted_columns)), skew_sign_(std::move(skew_signs)) {}

    TailScores tails(std::size_t feature, double x) const {
        const auto& s = sorted_[feature];
        const double n1 = static_cast<double>(s.size()) + 1.0;
        const auto le = static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin());
        const auto ge = static_cast<double>(s.end() - std::lower_bound(s.begin(), s.end(), x));
        return {-std::log((1.0 + le) / n1), -std::log((1.0 + ge) / n1)};
    }

    /// Skew-selected tail score of one feature (both tails summed when skewness is zero).
    double skew_tail(std::size_t feature, double x) const {
        const auto t = tails(feature, x);
        const int s = skew_sign_[feature];
        return s < 0 ? t.left : s > 0 ? t.right : t.left + t.right;
    }

    double score(std::span<const double> x) const {
        double total = 0.0;
        for (std::size_t c = 0; c < sorted_.size(); ++c) {
            const auto t = tails(c, x[c]);
            total += std::max(skew_tail(c, x[c]), (t.left + t.right) / 2.0);
        }
        return total;
    }

    const std::vector<std::vector<double>>& sorted_columns() const noexcept { return sorted_; }
    const std::vector<int>& skew_signs() const noexcept { return skew_sign_; }

    /// Fisher-Pearson sample skewness (biased), 0 for constant columns.
    static double skewness(std::span<const double> v) {
        const double n = static_cast<double>(v.size());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double m2 = 0.0, m3 = 0.0;
        for (double x : v) {
            const double d = x - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    }

private:
    static int sign(double v) { return (v > 0.0) - (v < 0.0); }

    std::vector<std::vector<double>> sorted_;
    std::vector<int> skew_sign_;
};

inline Copod train_copod(const Matrix& train) { return Copod(train); }

}  // namespace cyberspec
