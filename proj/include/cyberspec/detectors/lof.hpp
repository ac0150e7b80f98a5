#pragma once

// Local outlier factor in novelty mode: training points are scored against
// each other (excluding themselves), queries are scored against all
// training points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"

namespace cyberspec {

class LocalOutlierFactor {
public:
    static constexpr double kDensityGuard = 1e-10;

    LocalOutlierFactor() = default;

    LocalOutlierFactor(Matrix train, std::size_t k) : train_(std::move(train)), k_(k) {
        const std::size_t n = train_.rows();
        if (k_ == 0 || n <= k_)
            throw ConfigError("LOF needs more rows (" + std::to_string(n) + ") than neighbors (" + std::to_string(k_) + ")");
        std::vector<std::vector<Neighbor>> neighbors(n);
        k_distance_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            neighbors[i] = nearest(train_.row(i), i);
            k_distance_[i] = neighbors[i].back().distance;
        }
        lrd_.resize(n);
        for (std::size_t i = 0; i < n; ++i) lrd_[i] = density(neighbors[i]);
        training_scores_.resize(n);
        for (std::size_t i = 0; i < n; ++i) training_scores_[i] = ratio(neighbors[i], lrd_[i]);
    }

    std::size_t k() const noexcept { return k_; }
    const Matrix& train() const noexcept { return train_; }
    const std::vector<double>& k_distances() const noexcept { return k_distance_; }
    const std::vector<double>& densities() const noexcept { return lrd_; }

    /// LOF of each training row among the others (the row itself is not its own neighbor).
    const std::vector<double>& training_scores() const noexcept { return training_scores_; }

    double score(std::span<const double> x) const {
        const auto nb = nearest(x, train_.rows());
        return ratio(nb, density(nb));
    }

private:
    struct Neighbor {
        double distance;
        std::size_t index;
    };

    /// Exactly k nearest training rows, ties broken by index; `skip` is excluded.
    std::vector<Neighbor> nearest(std::span<const double> x, std::size_t skip) const {
        std::vector<Neighbor> all;
        all.reserve(train_.rows());
        for (std::size_t j = 0; j < train_.rows(); ++j)
            if (j != skip) all.push_back({std::sqrt(squared_distance(x, train_.row(j))), j});
        auto less = [](const Neighbor& a, const Neighbor& b) {
            return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
        };
        std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k_ - 1), all.end(), less);
        all.resize(k_);
        std::sort(all.begin(), all.end(), less);
        return all;
    }

    double density(const std::vector<Neighbor>& nb) const {
        double reach = 0.0;
        for (const auto& o : nb) reach += std::max(k_distance_[o.index], o.distance);
        return 1.0 / (reach / static_cast<double>(nb.size()) + kDensityGuard);
    }

    double ratio(const std::vector<Neighbor>& nb, double own) const {
        double sum = 0.0;
        for (const auto& o : nb) sum += lrd_[o.index];
        return sum / static_cast<double>(nb.size()) / own;
    }

    Matrix train_;
    std::size_t k_ = 15;
    std::vector<double> k_distance_;
    std::vector<double> lrd_;
    std::vector<double> training_scores_;
};

inline LocalOutlierFactor train_lof(const Matrix& train, std::size_t n_neighbors = 15) {
    return LocalOutlierFactor(train, n_neighbors);
}

}  // namespace cyberspec
