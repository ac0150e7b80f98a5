#pragma once

// One-class SVM (Schoelkopf formulation, libsvm scaling):
//   min 1/2 a'Qa   s.t. 0 <= a_i <= 1, sum a_i = nu * l
// solved by SMO with second-order working-set selection.
// decision(x) = sum_i a_i K(x_i, x) - rho

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <list>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"

namespace cyberspec {

enum class KernelKind { rbf, linear, poly, sigmoid };

constexpr std::string_view to_string(KernelKind k) {
    switch (k) {
        case KernelKind::rbf: return "rbf";
        case KernelKind::linear: return "linear";
        case KernelKind::poly: return "poly";
        case KernelKind::sigmoid: return "sigmoid";
    }
    return "?";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
    for (auto k : {KernelKind::rbf, KernelKind::linear, KernelKind::poly, KernelKind::sigmoid})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown kernel: " + std::string(s));
}

struct Kernel {
    KernelKind kind = KernelKind::rbf;
    double gamma = 0.001;
    double coef0 = 0.0;
    int degree = 3;

    double operator()(std::span<const double> a, std::span<const double> b) const {
        switch (kind) {
            case KernelKind::rbf: return std::exp(-gamma * squared_distance(a, b));
            case KernelKind::linear: return dot(a, b);
            case KernelKind::poly: return std::pow(gamma * dot(a, b) + coef0, degree);
            case KernelKind::sigmoid: return std::tanh(gamma * dot(a, b) + coef0);
        }
        return 0.0;
    }

    static double dot(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }
};

struct OcsvmOptions {
    Kernel kernel{};
    double nu = 0.1;
    double tolerance = 1e-3;             ///< stop when the maximal KKT violation falls below this
    std::uint64_t max_iterations = 0;    ///< 0: max(10^7, 100 l)
    std::size_t cache_bytes = 256u << 20;
};

class OneClassSvm {
public:
    OneClassSvm() = default;
    OneClassSvm(Kernel kernel, Matrix support_vectors, std::vector<double> coef, double rho)
        : kernel_(kernel), sv_(std::move(support_vectors)), coef_(std::move(coef)), rho_(rho) {}

    double decision(std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < sv_.rows(); ++i) s += coef_[i] * kernel_(sv_.row(i), x);
        return s - rho_;
    }

    double score(std::span<const double> x) const { return decision(x); }

    const Kernel& kernel() const noexcept { return kernel_; }
    const Matrix& support_vectors() const noexcept { return sv_; }
    const std::vector<double>& coefficients() const noexcept { return coef_; }
    double rho() const noexcept { return rho_; }

private:
    Kernel kernel_{};
    Matrix sv_;
    std::vector<double> coef_;
    double rho_ = 0.0;
};

struct OcsvmTraining {
    OneClassSvm model;
    std::vector<double> alpha;  ///< dual solution over all training rows
    double kkt_residual = 0.0;
    std::uint64_t iterations = 0;
};

namespace detail {

/// LRU cache of kernel-matrix columns.
class KernelColumns {
public:
    KernelColumns(const Matrix& x, const Kernel& k, std::size_t budget_bytes)
        : x_(x), k_(k), capacity_(std::max<std::size_t>(2, budget_bytes / (sizeof(double) * std::max<std::size_t>(1, x.rows())))) {}

    const std::vector<double>& column(std::size_t i) {
        if (auto it = index_.find(i); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->second;
        }
        if (lru_.size() >= capacity_) {
            index_.erase(lru_.back().first);
            lru_.pop_back();
        }
        std::vector<double> col(x_.rows());
        for (std::size_t j = 0; j < x_.rows(); ++j) col[j] = k_(x_.row(i), x_.row(j));
        lru_.emplace_front(i, std::move(col));
        index_[i] = lru_.begin();
        return lru_.front().second;
    }

private:
    const Matrix& x_;
    const Kernel& k_;
    std::size_t capacity_;
    std::list<std::pair<std::size_t, std::vector<double>>> lru_;
    std::unordered_map<std::size_t, decltype(lru_)::iterator> index_;
};

}  // namespace detail

inline OcsvmTraining train_ocsvm(const Matrix& train, const OcsvmOptions& o = {}) {
    const std::size_t l = train.rows();
    if (l < 2) throw ConfigError("one-class SVM needs at least 2 rows");
    if (!(o.nu > 0.0 && o.nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
    constexpr double C = 1.0;
    constexpr double tau = 1e-12;

    std::vector<double> alpha(l, 0.0);
    const double total = o.nu * static_cast<double>(l);
    const auto n_full = static_cast<std::size_t>(total);
    for (std::size_t i = 0; i < n_full; ++i) alpha[i] = 1.0;
    if (n_full < l) alpha[n_full] = total - static_cast<double>(n_full);

    detail::KernelColumns Q(train, o.kernel, o.cache_bytes);
    std::vector<double> diag(l);
    for (std::size_t i = 0; i < l; ++i) diag[i] = o.kernel(train.row(i), train.row(i));

    std::vector<double> G(l, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
        if (alpha[i] == 0.0) continue;
        const auto& qi = Q.column(i);
        for (std::size_t j = 0; j < l; ++j) G[j] += alpha[i] * qi[j];
    }

    const std::uint64_t max_iter = o.max_iterations ? o.max_iterations : std::max<std::uint64_t>(10'000'000, 100 * l);
    std::uint64_t iter = 0;
    double residual = std::numeric_limits<double>::infinity();
    for (;; ++iter) {
        // i maximises -G over {a < C}; j minimises the second-order gain over {a > 0}.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = l;
        for (std::size_t t = 0; t < l; ++t)
            if (alpha[t] < C && -G[t] >= gmax) {
                gmax = -G[t];
                i = t;
            }
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t j = l;
        double best = std::numeric_limits<double>::infinity();
        const std::vector<double>* qi = i < l ? &Q.column(i) : nullptr;
        for (std::size_t t = 0; t < l; ++t) {
            if (alpha[t] <= 0.0) continue;
            gmax2 = std::max(gmax2, G[t]);
            if (!qi) continue;
            const double b = gmax + G[t];
            if (b > 0.0) {
                double a = diag[i] + diag[t] - 2.0 * (*qi)[t];
                if (a <= 0.0) a = tau;
                const double obj = -(b * b) / a;
                if (obj <= best) {
                    best = obj;
                    j = t;
                }
            }
        }
        residual = gmax + gmax2;
        if (residual < o.tolerance || j == l) break;
        if (iter >= max_iter) {
            std::ostringstream msg;
            msg << "one-class SVM did not converge after " << iter << " iterations (KKT residual " << residual << ")";
            throw TrainingError(msg.str());
        }

        const std::vector<double> col_i = *qi;  // copy: fetching column j may evict column i
        const auto& qj = Q.column(j);
        double quad = diag[i] + diag[j] - 2.0 * col_i[j];
        if (quad <= 0.0) quad = tau;
        const double old_i = alpha[i], old_j = alpha[j];
        const double delta = (G[i] - G[j]) / quad;
        const double sum = old_i + old_j;
        alpha[i] -= delta;
        alpha[j] += delta;
        if (sum > C) {
            if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
            if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
        } else {
            if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
            if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < l; ++t) G[t] += col_i[t] * di + qj[t] * dj;
    }

    // rho: average gradient over free vectors, else midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < l; ++t) {
        if (alpha[t] >= C) lb = std::max(lb, G[t]);
        else if (alpha[t] <= 0.0) ub = std::min(ub, G[t]);
        else { ++n_free; sum_free += G[t]; }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    std::vector<std::size_t> sv;
    for (std::size_t t = 0; t < l; ++t)
        if (alpha[t] > 0.0) sv.push_back(t);
    std::vector<double> coef;
    for (auto t : sv) coef.push_back(alpha[t]);
    OcsvmTraining out{OneClassSvm(o.kernel, train.select_rows(sv), std::move(coef), rho), std::move(alpha), residual, iter};
    return out;
}

}  // namespace cyberspec
