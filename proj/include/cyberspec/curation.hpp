#pragma once

// Data curation: noisy-vector removal, uninformative/correlated/drifting
// feature removal, chronological 72/18/10 split and min-max normalization
// fitted on the training partition only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"

namespace cyberspec {

struct CurationThresholds {
    double noisy_z = 6.0;
    double noisy_feature_fraction = 0.25;
    double identical_fraction = 0.99;
    double min_scaled_variance = 1e-6;
    double correlation = 0.95;
    double ks_statistic = 0.3;
};

struct DroppedFeature {
    std::string name;
    std::string reason;

    friend bool operator==(const DroppedFeature&, const DroppedFeature&) = default;
};

struct FeatureTable {
    std::vector<std::string> names;
    Matrix values;
};

struct RowFilterResult {
    Matrix rows;
    std::vector<std::size_t> dropped;  ///< indices into the input
};

struct ColumnFilterResult {
    FeatureTable table;
    std::vector<DroppedFeature> dropped;
};

namespace stats {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

inline double mean(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) return 0.0;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

}  // namespace stats

/// Drops rows whose robust z-score |x - median| / (1.4826 MAD) exceeds the
/// threshold in at least the configured fraction of features. Features with
/// zero MAD never flag a row.
inline RowFilterResult remove_noisy_vectors(const Matrix& rows, const CurationThresholds& t = {}) {
    if (rows.rows() < 10) throw ConfigError("remove_noisy_vectors needs at least 10 rows");
    const std::size_t n = rows.rows(), d = rows.cols();
    std::vector<std::size_t> flags(n, 0);
    for (std::size_t c = 0; c < d; ++c) {
        auto col = rows.column(c);
        const double med = stats::median(col);
        std::vector<double> dev(n);
        for (std::size_t r = 0; r < n; ++r) dev[r] = std::abs(col[r] - med);
        const double mad = stats::median(dev);
        if (mad == 0.0) continue;
        const double scale = 1.4826 * mad;
        for (std::size_t r = 0; r < n; ++r)
            if (dev[r] / scale > t.noisy_z) ++flags[r];
    }
    const double need = t.noisy_feature_fraction * static_cast<double>(d);
    RowFilterResult out;
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < n; ++r) {
        if (d > 0 && static_cast<double>(flags[r]) >= need && flags[r] > 0) out.dropped.push_back(r);
        else keep.push_back(r);
    }
    out.rows = rows.select_rows(keep);
    return out;
}

namespace detail {

inline FeatureTable keep_columns(const FeatureTable& in, const std::vector<std::size_t>& keep) {
    FeatureTable out;
    for (auto k : keep) out.names.push_back(in.names[k]);
    out.values = in.values.select_cols(keep);
    return out;
}

}  // namespace detail

/// Drops single-valued columns ("constant") and columns that are almost
/// always the same value or have negligible spread after min-max scaling
/// ("low-info").
inline ColumnFilterResult drop_constant_and_lowinfo(const FeatureTable& table, const CurationThresholds& t = {}) {
    ColumnFilterResult out;
    std::vector<std::size_t> keep;
    const std::size_t n = table.values.rows();
    for (std::size_t c = 0; c < table.values.cols(); ++c) {
        auto col = table.values.column(c);
        std::sort(col.begin(), col.end());
        if (n == 0 || col.front() == col.back()) {
            out.dropped.push_back({table.names[c], "constant"});
            continue;
        }
        std::size_t best = 0;
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && col[j] == col[i]) ++j;
            best = std::max(best, j - i);
            i = j;
        }
        const double lo = col.front(), range = col.back() - col.front();
        double m = 0.0, m2 = 0.0;
        for (double v : col) m += (v - lo) / range;
        m /= static_cast<double>(n);
        for (double v : col) m2 += ((v - lo) / range - m) * ((v - lo) / range - m);
        const double var = m2 / static_cast<double>(n);
        if (static_cast<double>(best) > t.identical_fraction * static_cast<double>(n) || var < t.min_scaled_variance) {
            out.dropped.push_back({table.names[c], "low-info"});
            continue;
        }
        keep.push_back(c);
    }
    out.table = detail::keep_columns(table, keep);
    return out;
}

/// Scans columns in order; a column is dropped when its |Pearson r| with an
/// earlier kept column exceeds the threshold.
inline ColumnFilterResult drop_correlated(const FeatureTable& table, const CurationThresholds& t = {}) {
    const std::size_t d = table.values.cols();
    std::vector<std::vector<double>> cols(d);
    for (std::size_t c = 0; c < d; ++c) cols[c] = table.values.column(c);
    ColumnFilterResult out;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < d; ++j) {
        std::optional<std::pair<std::size_t, double>> hit;
        for (auto i : keep) {
            const double r = stats::pearson(cols[i], cols[j]);
            if (std::abs(r) > t.correlation) {
                hit = {i, r};
                break;
            }
        }
        if (hit) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", hit->second);
            out.dropped.push_back({table.names[j], "correlated with " + table.names[hit->first] + " (r=" + buf + ")"});
        } else {
            keep.push_back(j);
        }
    }
    out.table = detail::keep_columns(table, keep);
    return out;
}

/// Benign rows of one device in chronological order, tagged with the group
/// used for cross-device comparisons (devices are compared only within a group).
struct DeviceRows {
    std::string device;
    std::string group;
    Matrix rows;
};

/// Features whose distribution shifts between the two chronological halves
/// of any device, or between any two devices of the same group, by a KS
/// statistic above the threshold.
inline std::vector<DroppedFeature> drop_drifting(const std::vector<DeviceRows>& devices,
                                                 const std::vector<std::string>& names,
                                                 const CurationThresholds& t = {}) {
    std::vector<DroppedFeature> dropped;
    for (std::size_t c = 0; c < names.size(); ++c) {
        std::optional<std::string> why;
        char buf[32];
        for (const auto& dev : devices) {
            const std::size_t n = dev.rows.rows();
            if (n < 2) continue;
            auto col = dev.rows.column(c);
            std::vector<double> first(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(n / 2));
            std::vector<double> second(col.begin() + static_cast<std::ptrdiff_t>(n / 2), col.end());
            const double ks = stats::ks_statistic(first, second);
            if (ks > t.ks_statistic) {
                std::snprintf(buf, sizeof buf, "%.3f", ks);
                why = "drift between halves of " + dev.device + " (KS=" + buf + ")";
                break;
            }
        }
        for (std::size_t a = 0; !why && a < devices.size(); ++a)
            for (std::size_t b = a + 1; !why && b < devices.size(); ++b) {
                if (devices[a].group != devices[b].group) continue;
                const double ks = stats::ks_statistic(devices[a].rows.column(c), devices[b].rows.column(c));
                if (ks > t.ks_statistic) {
                    std::snprintf(buf, sizeof buf, "%.3f", ks);
                    why = "drift between " + devices[a].device + " and " + devices[b].device + " (KS=" + buf + ")";
                }
            }
        if (why) dropped.push_back({names[c], *why});
    }
    return dropped;
}

struct Normalization {
    std::vector<double> min;
    std::vector<double> max;

    static Normalization fit(const Matrix& train, const std::vector<std::string>& names) {
        Normalization n;
        n.min.assign(train.cols(), 0.0);
        n.max.assign(train.cols(), 0.0);
        for (std::size_t c = 0; c < train.cols(); ++c) {
            auto col = train.column(c);
            const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
            n.min[c] = *lo;
            n.max[c] = *hi;
            if (!(*hi > *lo)) throw ConfigError("feature '" + names.at(c) + "' has zero range in the training partition");
        }
        return n;
    }

    void apply_row(std::span<double> row) const {
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - min[c]) / (max[c] - min[c]);
    }

    /// Affine map without clamping; out-of-range values stay out of range.
    Matrix apply(Matrix m) const {
        for (std::size_t r = 0; r < m.rows(); ++r) apply_row(m.row(r));
        return m;
    }

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct CuratedDataset {
    std::vector<std::string> feature_names;
    Matrix train, val, test;
    Normalization normalization;
    std::vector<DroppedFeature> curation_log;
};

struct PartitionSizes {
    std::size_t train, val, test;
};

inline PartitionSizes partition_sizes(std::size_t n) {
    const auto train = static_cast<std::size_t>(std::llround(0.72 * static_cast<double>(n)));
    const auto val = static_cast<std::size_t>(std::llround(0.18 * static_cast<double>(n)));
    return {train, val, n - train - val};
}

/// Chronological split of each device's rows, pooled across devices (train
/// earliest), followed by min-max scaling fitted on the pooled training rows.
inline CuratedDataset split_and_normalize(const std::vector<Matrix>& per_device, const std::vector<std::string>& names) {
    std::size_t total = 0;
    for (const auto& m : per_device) total += m.rows();
    if (total < 50) throw ConfigError("split_and_normalize needs at least 50 rows");
    CuratedDataset ds;
    ds.feature_names = names;
    for (const auto& m : per_device) {
        if (m.cols() != names.size()) throw SchemaError("row width does not match feature list");
        const auto p = partition_sizes(m.rows());
        ds.train.append_rows(m.slice_rows(0, p.train));
        ds.val.append_rows(m.slice_rows(p.train, p.train + p.val));
        ds.test.append_rows(m.slice_rows(p.train + p.val, m.rows()));
    }
    ds.normalization = Normalization::fit(ds.train, names);
    ds.train = ds.normalization.apply(std::move(ds.train));
    ds.val = ds.normalization.apply(std::move(ds.val));
    ds.test = ds.normalization.apply(std::move(ds.test));
    return ds;
}

inline CuratedDataset split_and_normalize(const Matrix& rows, const std::vector<std::string>& names) {
    return split_and_normalize(std::vector<Matrix>{rows}, names);
}

struct CurationResult {
    std::vector<std::string> kept;
    std::vector<DroppedFeature> log;
    std::vector<DeviceRows> devices;  ///< cleaned rows restricted to kept features
    std::size_t dropped_rows = 0;
};

/// Full feature-selection pass over a fleet's benign data.
inline CurationResult curate_fleet(const std::vector<DeviceRows>& devices, const std::vector<std::string>& names,
                                   const CurationThresholds& t = {}) {
    CurationResult res;
    std::vector<DeviceRows> clean;
    FeatureTable pooled{names, Matrix(0, names.size())};
    for (const auto& d : devices) {
        auto f = remove_noisy_vectors(d.rows, t);
        res.dropped_rows += f.dropped.size();
        pooled.values.append_rows(f.rows);
        clean.push_back({d.device, d.group, std::move(f.rows)});
    }
    auto c1 = drop_constant_and_lowinfo(pooled, t);
    auto c2 = drop_correlated(c1.table, t);
    res.log = c1.dropped;
    res.log.insert(res.log.end(), c2.dropped.begin(), c2.dropped.end());

    std::vector<std::size_t> idx;
    for (const auto& n : c2.table.names)
        idx.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin()));
    for (auto& d : clean) d.rows = d.rows.select_cols(idx);
    auto drift = drop_drifting(clean, c2.table.names, t);
    res.log.insert(res.log.end(), drift.begin(), drift.end());

    std::vector<std::size_t> final_idx;
    for (std::size_t i = 0; i < c2.table.names.size(); ++i) {
        const auto& n = c2.table.names[i];
        if (std::none_of(drift.begin(), drift.end(), [&](const auto& x) { return x.name == n; })) {
            final_idx.push_back(i);
            res.kept.push_back(n);
        }
    }
    for (auto& d : clean) d.rows = d.rows.select_cols(final_idx);
    res.devices = std::move(clean);
    return res;
}

}  // namespace cyberspec
