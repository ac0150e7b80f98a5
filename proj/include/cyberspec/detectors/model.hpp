#pragma once

// Trained detector container: scorer + feature schema + IQR thresholds,
// verdict classification and the JSON model file format.

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyberspec/binary_json.hpp"
#include "cyberspec/curation.hpp"
#include "cyberspec/detectors/autoencoder.hpp"
#include "cyberspec/detectors/copod.hpp"
#include "cyberspec/detectors/iforest.hpp"
#include "cyberspec/detectors/iqr.hpp"
#include "cyberspec/detectors/lof.hpp"
#include "cyberspec/detectors/ocsvm.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/fingerprint.hpp"

namespace cyberspec {

enum class DetectorKind { autoencoder, lof, ocsvm, iforest, copod };

inline constexpr DetectorKind kAllDetectorKinds[] = {DetectorKind::autoencoder, DetectorKind::lof, DetectorKind::ocsvm,
                                                     DetectorKind::iforest, DetectorKind::copod};

constexpr std::string_view to_string(DetectorKind k) {
    switch (k) {
        case DetectorKind::autoencoder: return "autoencoder";
        case DetectorKind::lof: return "lof";
        case DetectorKind::ocsvm: return "ocsvm";
        case DetectorKind::iforest: return "iforest";
        case DetectorKind::copod: return "copod";
    }
    return "?";
}

inline DetectorKind parse_detector_kind(std::string_view s) {
    for (auto k : kAllDetectorKinds)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown detector kind: " + std::string(s));
}

struct DetectorOptions {
    AutoencoderOptions autoencoder{};
    std::size_t lof_neighbors = 15;
    OcsvmOptions ocsvm{};
    IForestOptions iforest{};
    std::uint64_t seed = 0;  ///< overrides the per-kind seeds
};

struct TrainingFingerprint {
    std::uint64_t seed = 0;
    std::size_t rows = 0;

    friend bool operator==(const TrainingFingerprint&, const TrainingFingerprint&) = default;
};

using DetectorImpl = std::variant<Autoencoder, LocalOutlierFactor, OneClassSvm, IsolationForest, Copod>;

struct DetectorModel {
    DetectorKind kind = DetectorKind::copod;
    DetectorImpl impl;
    std::vector<std::string> feature_names;
    Thresholds thresholds;
    TrainingFingerprint training;
    std::optional<Normalization> normalization;

    double score(std::span<const double> x) const {
        return std::visit([&](const auto& m) { return m.score(x); }, impl);
    }

    std::vector<double> scores(const Matrix& rows) const {
        std::vector<double> out(rows.rows());
        for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = score(rows.row(r));
        return out;
    }
};

/// Trains a scorer on normalized benign rows and fits IQR thresholds on its training scores.
inline DetectorModel train_detector(DetectorKind kind, const Matrix& train, const std::vector<std::string>& names,
                                    const DetectorOptions& o = {}) {
    if (train.cols() != names.size()) throw SchemaError("training matrix width does not match feature list");
    DetectorModel m;
    m.kind = kind;
    m.feature_names = names;
    m.training = {o.seed, train.rows()};
    std::vector<double> train_scores;
    try {
        switch (kind) {
            case DetectorKind::autoencoder: {
                auto opts = o.autoencoder;
                opts.seed = o.seed;
                m.impl = train_autoencoder(train, opts).model;
                break;
            }
            case DetectorKind::lof: {
                auto lof = train_lof(train, o.lof_neighbors);
                train_scores = lof.training_scores();
                m.impl = std::move(lof);
                break;
            }
            case DetectorKind::ocsvm: m.impl = train_ocsvm(train, o.ocsvm).model; break;
            case DetectorKind::iforest: {
                auto opts = o.iforest;
                opts.seed = o.seed;
                m.impl = train_iforest(train, opts);
                break;
            }
            case DetectorKind::copod: m.impl = train_copod(train); break;
        }
    } catch (const TrainingError& e) {
        throw TrainingError(std::string(to_string(kind)) + " training on " + std::to_string(train.rows()) +
                            " rows failed: " + e.what());
    }
    if (train_scores.empty()) train_scores = m.scores(train);
    m.thresholds = fit_iqr_threshold(train_scores);
    return m;
}

struct AnomalyVerdict {
    std::string sensor_id;
    double timestamp = 0.0;
    double score = 0.0;
    bool anomalous = false;
    ThresholdSide side = ThresholdSide::within;

    friend bool operator==(const AnomalyVerdict&, const AnomalyVerdict&) = default;
};

constexpr std::string_view to_string(ThresholdSide s) {
    switch (s) {
        case ThresholdSide::below: return "below";
        case ThresholdSide::within: return "within";
        case ThresholdSide::above: return "above";
    }
    return "?";
}

/// A normalized feature row tagged with its schema.
struct FeatureRow {
    std::string sensor_id;
    double timestamp = 0.0;
    std::vector<std::string> names;
    std::vector<double> values;
};

inline AnomalyVerdict verdict_for(const DetectorModel& model, std::string sensor_id, double timestamp, double score) {
    const auto side = threshold_side(model.thresholds, score);
    return {std::move(sensor_id), timestamp, score, side != ThresholdSide::within, side};
}

inline AnomalyVerdict classify(const DetectorModel& model, const FeatureRow& row) {
    if (row.names != model.feature_names) {
        std::string detail = "feature schema does not match model";
        for (std::size_t i = 0; i < std::max(row.names.size(), model.feature_names.size()); ++i) {
            const std::string got = i < row.names.size() ? row.names[i] : "<missing>";
            const std::string want = i < model.feature_names.size() ? model.feature_names[i] : "<none>";
            if (got != want) {
                detail += " at position " + std::to_string(i) + ": expected '" + want + "', got '" + got + "'";
                break;
            }
        }
        throw SchemaError(detail);
    }
    if (row.values.size() != row.names.size()) throw SchemaError("feature row has mismatched value count");
    return verdict_for(model, row.sensor_id, row.timestamp, model.score(row.values));
}

/// Projects a raw behavior vector onto the model's features and applies its normalization.
inline FeatureRow feature_row(const DetectorModel& model, const BehaviorVector& v) {
    if (!model.normalization) throw ConfigError("model carries no normalization; cannot score raw vectors");
    const auto& cat = event_catalog();
    FeatureRow row{v.sensor_id, v.timestamp, model.feature_names, {}};
    row.values.reserve(model.feature_names.size());
    for (const auto& name : model.feature_names)
        row.values.push_back(static_cast<double>(v.counts.at(cat.require_index(name))));
    model.normalization->apply_row(row.values);
    return row;
}

inline AnomalyVerdict classify(const DetectorModel& model, const BehaviorVector& v) {
    return classify(model, feature_row(model, v));
}

// ---- model files ----

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", f64_array(m.data())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<std::size_t>(), cols = j.at("cols").get<std::size_t>();
    const auto v = read_f64_array(j.at("values"));
    if (v.size() != rows * cols) throw SchemaError("matrix payload size mismatch");
    Matrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.data().begin());
    return m;
}

inline nlohmann::json params_json(const Autoencoder& a) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : a.layers())
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", f64_array(l.weights)}, {"bias", f64_array(l.bias)}});
    return {{"activation", a.activation() == Activation::relu ? "relu" : "linear"}, {"layers", layers}};
}

inline nlohmann::json params_json(const LocalOutlierFactor& l) {
    return {{"n_neighbors", l.k()}, {"train", matrix_json(l.train())}};
}

inline nlohmann::json params_json(const OneClassSvm& s) {
    const auto& k = s.kernel();
    return {{"kernel", {{"kind", to_string(k.kind)}, {"gamma", f64_scalar(k.gamma)}, {"coef0", f64_scalar(k.coef0)}, {"degree", k.degree}}},
            {"support_vectors", matrix_json(s.support_vectors())},
            {"coefficients", f64_array(s.coefficients())},
            {"rho", f64_scalar(s.rho())}};
}

inline nlohmann::json params_json(const IsolationForest& f) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees()) {
        std::vector<std::int64_t> ints;
        std::vector<double> thr;
        for (const auto& n : t) {
            ints.insert(ints.end(), {n.feature, n.left, n.right, static_cast<std::int64_t>(n.size)});
            thr.push_back(n.threshold);
        }
        trees.push_back({{"nodes", i64_array(ints)}, {"thresholds", f64_array(thr)}});
    }
    return {{"subsample", f.subsample()}, {"trees", trees}};
}

inline nlohmann::json params_json(const Copod& c) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& s : c.sorted_columns()) cols.push_back(f64_array(s));
    return {{"sorted_columns", cols}, {"skew_signs", c.skew_signs()}};
}

inline DetectorImpl impl_from_json(DetectorKind kind, const nlohmann::json& p) {
    switch (kind) {
        case DetectorKind::autoencoder: {
            std::vector<DenseLayer> layers;
            for (const auto& l : p.at("layers"))
                layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                                  read_f64_array(l.at("weights")), read_f64_array(l.at("bias"))});
            const auto act = p.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::linear;
            return Autoencoder(std::move(layers), act);
        }
        case DetectorKind::lof:
            return LocalOutlierFactor(matrix_from_json(p.at("train")), p.at("n_neighbors").get<std::size_t>());
        case DetectorKind::ocsvm: {
            const auto& k = p.at("kernel");
            Kernel kernel{parse_kernel_kind(k.at("kind").get<std::string>()), read_f64_scalar(k.at("gamma")),
                          read_f64_scalar(k.at("coef0")), k.at("degree").get<int>()};
            return OneClassSvm(kernel, matrix_from_json(p.at("support_vectors")), read_f64_array(p.at("coefficients")),
                               read_f64_scalar(p.at("rho")));
        }
        case DetectorKind::iforest: {
            std::vector<IsolationTree> trees;
            for (const auto& t : p.at("trees")) {
                const auto ints = read_i64_array(t.at("nodes"));
                const auto thr = read_f64_array(t.at("thresholds"));
                if (ints.size() != 4 * thr.size()) throw SchemaError("isolation tree arrays disagree");
                IsolationTree tree(thr.size());
                for (std::size_t i = 0; i < thr.size(); ++i)
                    tree[i] = {static_cast<std::int32_t>(ints[4 * i]), thr[i], static_cast<std::int32_t>(ints[4 * i + 1]),
                               static_cast<std::int32_t>(ints[4 * i + 2]), static_cast<std::uint32_t>(ints[4 * i + 3])};
                trees.push_back(std::move(tree));
            }
            return IsolationForest(std::move(trees), p.at("subsample").get<std::size_t>());
        }
        case DetectorKind::copod: {
            std::vector<std::vector<double>> cols;
            for (const auto& c : p.at("sorted_columns")) cols.push_back(read_f64_array(c));
            return Copod(std::move(cols), p.at("skew_signs").get<std::vector<int>>());
        }
    }
    throw SchemaError("unknown detector kind");
}

}  // namespace detail

inline nlohmann::json to_json(const DetectorModel& m) {
    nlohmann::json j{{"format", "cyberspec-model"},
                     {"version", kModelFormatVersion},
                     {"kind", to_string(m.kind)},
                     {"feature_names", m.feature_names},
                     {"thresholds", {{"lo", f64_scalar(m.thresholds.lo)}, {"hi", f64_scalar(m.thresholds.hi)}}},
                     {"training", {{"seed", m.training.seed}, {"rows", m.training.rows}}},
                     {"params", std::visit([](const auto& x) { return detail::params_json(x); }, m.impl)}};
    if (m.normalization)
        j["normalization"] = {{"min", f64_array(m.normalization->min)}, {"max", f64_array(m.normalization->max)}};
    return j;
}

inline DetectorModel detector_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "cyberspec-model") throw SchemaError("not a model file");
        if (j.at("version").get<int>() != kModelFormatVersion)
            throw SchemaError("unsupported model version " + j.at("version").dump());
        DetectorModel m;
        m.kind = parse_detector_kind(j.at("kind").get<std::string>());
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.thresholds = {read_f64_scalar(j.at("thresholds").at("lo")), read_f64_scalar(j.at("thresholds").at("hi"))};
        m.training = {j.at("training").at("seed").get<std::uint64_t>(), j.at("training").at("rows").get<std::size_t>()};
        m.impl = detail::impl_from_json(m.kind, j.at("params"));
        if (j.contains("normalization"))
            m.normalization = Normalization{read_f64_array(j["normalization"].at("min")), read_f64_array(j["normalization"].at("max"))};
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const DetectorModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(m).dump(1) << '\n';
}

inline DetectorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return detector_model_from_json(j);
}

}  // namespace cyberspec
