#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"
#include "cyberspec/rng.hpp"

namespace cyberspec {

/// Average unsuccessful-search path length in a BST of n points; c(0) = c(1) = 0.
inline double average_path_length(std::size_t n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    const double m = static_cast<double>(n - 1);
    constexpr double euler_gamma = 0.5772156649015329;
    const double harmonic = std::log(m) + euler_gamma;
    return 2.0 * harmonic - 2.0 * m / static_cast<double>(n);
}

struct IsolationNode {
    std::int32_t feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1, right = -1;
    std::uint32_t size = 0;  ///< training points reaching a leaf
};

using IsolationTree = std::vector<IsolationNode>;

struct IForestOptions {
    std::size_t trees = 150;
    std::size_t subsample = 256;
    std::uint64_t seed = 0;
};

class IsolationForest {
public:
    IsolationForest() = default;
    IsolationForest(std::vector<IsolationTree> trees, std::size_t subsample)
        : trees_(std::move(trees)), subsample_(subsample) {}

    /// Path length of x in one tree, with the c(size) correction at leaves.
    static double path_length(const IsolationTree& tree, std::span<const double> x) {
        std::size_t node = 0;
        double depth = 0.0;
        while (tree[node].feature >= 0) {
            const auto& n = tree[node];
            node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
            depth += 1.0;
        }
        return depth + average_path_length(tree[node].size);
    }

    /// 2^(-E[h(x)] / c(psi)); 0.5 when c(psi) = 0 (single-row training).
    double score(std::span<const double> x) const {
        const double c = average_path_length(subsample_);
        if (c == 0.0) return 0.5;
        double total = 0.0;
        for (const auto& t : trees_) total += path_length(t, x);
        return std::exp2(-(total / static_cast<double>(trees_.size())) / c);
    }

    const std::vector<IsolationTree>& trees() const noexcept { return trees_; }
    std::size_t subsample() const noexcept { return subsample_; }

private:
    std::vector<IsolationTree> trees_;
    std::size_t subsample_ = 0;
};

namespace detail {

inline std::int32_t grow_isolation_tree(IsolationTree& tree, const Matrix& x, std::vector<std::size_t>& idx,
                                        std::size_t first, std::size_t last, std::size_t depth, std::size_t limit,
                                        Rng& rng) {
    const auto id = static_cast<std::int32_t>(tree.size());
    tree.push_back({});
    const std::size_t n = last - first;
    if (depth >= limit || n <= 1) {
        tree[static_cast<std::size_t>(id)].size = static_cast<std::uint32_t>(n);
        return id;
    }
    std::vector<std::size_t> usable;
    std::vector<std::pair<double, double>> range(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double lo = x(idx[first], c), hi = lo;
        for (std::size_t r = first + 1; r < last; ++r) {
            lo = std::min(lo, x(idx[r], c));
            hi = std::max(hi, x(idx[r], c));
        }
        range[c] = {lo, hi};
        if (hi > lo) usable.push_back(c);
    }
    if (usable.empty()) {
        tree[static_cast<std::size_t>(id)].size = static_cast<std::uint32_t>(n);
        return id;
    }
    const std::size_t f = usable[rng.index(usable.size())];
    const auto [lo, hi] = range[f];
    double split = rng.uniform(lo, hi);
    if (split <= lo) split = std::nextafter(lo, hi);
    const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(first),
                                    idx.begin() + static_cast<std::ptrdiff_t>(last),
                                    [&](std::size_t r) { return x(r, f) < split; });
    const auto m = static_cast<std::size_t>(mid - idx.begin());
    const auto left = grow_isolation_tree(tree, x, idx, first, m, depth + 1, limit, rng);
    const auto right = grow_isolation_tree(tree, x, idx, m, last, depth + 1, limit, rng);
    auto& node = tree[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(f);
    node.threshold = split;
    node.left = left;
    node.right = right;
    return id;
}

}  // namespace detail

inline IsolationForest train_iforest(const Matrix& train, const IForestOptions& o = {}) {
    if (train.rows() == 0) throw ConfigError("isolation forest needs training rows");
    if (o.trees == 0) throw ConfigError("isolation forest needs at least one tree");
    const std::size_t psi = std::min(o.subsample, train.rows());
    const auto limit = static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(psi)))));
    Rng rng(o.seed);
    std::vector<std::size_t> all(train.rows());
    std::iota(all.begin(), all.end(), 0);
    std::vector<IsolationTree> trees;
    trees.reserve(o.trees);
    for (std::size_t t = 0; t < o.trees; ++t) {
        // Partial Fisher-Yates: the first psi entries form a sample without replacement.
        for (std::size_t i = 0; i < psi; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
        std::vector<std::size_t> idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi));
        IsolationTree tree;
        detail::grow_isolation_tree(tree, train, idx, 0, psi, 0, psi <= 1 ? 0 : limit, rng);
        trees.push_back(std::move(tree));
    }
    return IsolationForest(std::move(trees), psi);
}

}  // namespace cyberspec
