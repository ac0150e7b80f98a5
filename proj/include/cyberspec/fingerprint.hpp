#pragma once

// Behavioral fingerprints: per-window kernel event counts.
//
// Two sources produce the same BehaviorVector schema:
//  * synthesize_behavior_vector() draws baseline counts from a DeviceProfile
//    and adds the expected effect of an attack's OpTally through a
//    CouplingMatrix;
//  * parse_perf_stat() reads machine-readable `perf stat -x` output from a
//    real sensor.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyberspec/attacks.hpp"
#include "cyberspec/catalog.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/rng.hpp"

#ifndef CYBERSPEC_DEFAULT_CALIBRATION
#define CYBERSPEC_DEFAULT_CALIBRATION "data/calibration.json"
#endif

namespace cyberspec {

struct BehaviorVector {
    std::string sensor_id;
    double timestamp = 0.0;  ///< UTC seconds at the start of the monitoring window
    double window_s = 50.0;
    std::vector<std::int64_t> counts;  ///< aligned with event_catalog() order

    std::int64_t count(std::string_view event) const { return counts.at(event_catalog().require_index(event)); }

    friend bool operator==(const BehaviorVector&, const BehaviorVector&) = default;
};

inline nlohmann::json to_json(const BehaviorVector& v) {
    const auto& cat = event_catalog();
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t i = 0; i < cat.size(); ++i) counts[cat[i].name] = v.counts.at(i);
    return {{"sensor_id", v.sensor_id}, {"timestamp", v.timestamp}, {"window_s", v.window_s}, {"counts", counts}};
}

/// Validates against the catalog: every event must be present with a
/// non-negative integer count. Unknown events are rejected as well.
inline BehaviorVector behavior_vector_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("behavior vector must be a JSON object");
    for (const char* key : {"sensor_id", "timestamp", "window_s", "counts"})
        if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    if (!j["sensor_id"].is_string() || j["sensor_id"].get<std::string>().empty())
        throw SchemaError("sensor_id must be a non-empty string");
    if (!j["timestamp"].is_number()) throw SchemaError("timestamp must be a number");
    if (!j["window_s"].is_number() || !(j["window_s"].get<double>() > 0.0))
        throw SchemaError("window_s must be a positive number");
    const auto& counts = j["counts"];
    if (!counts.is_object()) throw SchemaError("counts must be an object");

    const auto& cat = event_catalog();
    BehaviorVector v;
    v.sensor_id = j["sensor_id"].get<std::string>();
    v.timestamp = j["timestamp"].get<double>();
    v.window_s = j["window_s"].get<double>();
    v.counts.resize(cat.size());
    for (std::size_t i = 0; i < cat.size(); ++i) {
        auto it = counts.find(cat[i].name);
        if (it == counts.end()) throw SchemaError("missing event '" + cat[i].name + "'");
        if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
            throw SchemaError("event '" + cat[i].name + "' must be a non-negative integer");
        v.counts[i] = it->get<std::int64_t>();
    }
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (!cat.index_of(it.key())) throw SchemaError("unknown event '" + it.key() + "'");
    return v;
}

enum class DeviceType { type_a, type_b };

constexpr std::string_view to_string(DeviceType t) { return t == DeviceType::type_a ? "rpi3-like" : "rpi4-like"; }

inline DeviceType parse_device_type(std::string_view s) {
    if (s == "rpi3-like" || s == "type-a" || s == "A") return DeviceType::type_a;
    if (s == "rpi4-like" || s == "type-b" || s == "B") return DeviceType::type_b;
    throw ConfigError("unknown device type '" + std::string(s) + "'");
}

enum class EventModel { lognormal, sparse, constant, mirror };

struct EventCalibration {
    EventModel model = EventModel::lognormal;
    double mean = 0.0;         ///< type-A count per reference window
    double log_sigma = 0.3;
    double offset_bound = 0.1; ///< per-device multiplicative offset, +-bound
    double rate = 0.0;         ///< sparse: probability of a non-zero window
    double value = 0.0;        ///< constant
    std::size_t mirror_of = 0; ///< mirror: catalog index of the source event
    double factor = 1.0;       ///< mirror
    double jitter = 0.0;       ///< mirror: relative Gaussian jitter
};

enum class OpCategory { file_creates, psd_writes, psd_reads, rng_draws, substitutions };
inline constexpr std::array<OpCategory, 5> kOpCategories{OpCategory::file_creates, OpCategory::psd_writes,
                                                         OpCategory::psd_reads, OpCategory::rng_draws,
                                                         OpCategory::substitutions};

constexpr std::string_view to_string(OpCategory c) {
    switch (c) {
        case OpCategory::file_creates: return "file_creates";
        case OpCategory::psd_writes: return "psd_writes";
        case OpCategory::psd_reads: return "psd_reads";
        case OpCategory::rng_draws: return "rng_draws";
        case OpCategory::substitutions: return "substitutions";
    }
    return "?";
}

constexpr std::uint64_t tally_value(const OpTally& t, OpCategory c) {
    switch (c) {
        case OpCategory::file_creates: return t.file_creates;
        case OpCategory::psd_writes: return t.psd_writes;
        case OpCategory::psd_reads: return t.psd_reads;
        case OpCategory::rng_draws: return t.rng_draws;
        case OpCategory::substitutions: return t.substitutions;
    }
    return 0;
}

/// Expected event-count delta per unit operation; rows follow kOpCategories.
struct CouplingMatrix {
    std::array<std::vector<double>, 5> rows;

    double at(OpCategory c, std::size_t event) const { return rows[static_cast<std::size_t>(c)][event]; }

    /// Coupling applied to a whole tally.
    std::vector<double> delta(const OpTally& t) const {
        std::vector<double> d(rows[0].size(), 0.0);
        for (OpCategory c : kOpCategories) {
            const double n = static_cast<double>(tally_value(t, c));
            if (n == 0.0) continue;
            const auto& row = rows[static_cast<std::size_t>(c)];
            for (std::size_t e = 0; e < d.size(); ++e) d[e] += row[e] * n;
        }
        return d;
    }
};

struct Calibration {
    double reference_window_s = 50.0;
    double glitch_rate = 0.0;
    double glitch_factor = 1.0;
    std::array<double, 7> type_b_family_factor{1, 1, 1, 1, 1, 1, 1};
    std::vector<EventCalibration> events;  ///< catalog order
    CouplingMatrix coupling;               ///< in counts

    /// Dispersion (standard deviation) of a lognormal event for a type-A device.
    double reference_dispersion(std::size_t event) const {
        const auto& e = events[event];
        return e.mean * std::sqrt(std::expm1(e.log_sigma * e.log_sigma));
    }

    static Calibration from_json(const nlohmann::json& j) {
        const auto& cat = event_catalog();
        Calibration c;
        c.reference_window_s = j.value("reference_window_s", 50.0);
        c.glitch_rate = j.value("glitch_rate", 0.0);
        c.glitch_factor = j.value("glitch_factor", 1.0);
        const double default_sigma = j.value("default_log_sigma", 0.3);
        const double default_offset = j.value("device_offset_bound", 0.1);
        if (j.contains("type_b_family_factor"))
            for (auto& [fam, f] : j["type_b_family_factor"].items())
                c.type_b_family_factor[static_cast<std::size_t>(parse_event_family(fam))] = f.get<double>();

        c.events.resize(cat.size());
        std::vector<bool> seen(cat.size(), false);
        for (auto& [name, spec] : j.at("events").items()) {
            const std::size_t i = cat.require_index(name);
            seen[i] = true;
            EventCalibration& e = c.events[i];
            const std::string model = spec.value("model", "lognormal");
            e.log_sigma = spec.value("log_sigma", default_sigma);
            e.offset_bound = spec.value("offset_bound", default_offset);
            e.mean = spec.value("mean", 0.0);
            if (model == "lognormal") {
                e.model = EventModel::lognormal;
                if (!(e.mean > 0.0) || !(e.log_sigma > 0.0)) throw ConfigError("event " + name + ": mean and log_sigma must be positive");
            } else if (model == "sparse") {
                e.model = EventModel::sparse;
                e.rate = spec.at("rate").get<double>();
            } else if (model == "constant") {
                e.model = EventModel::constant;
                e.value = spec.at("value").get<double>();
            } else if (model == "mirror") {
                e.model = EventModel::mirror;
                e.mirror_of = cat.require_index(spec.at("of").get<std::string>());
                e.factor = spec.value("factor", 1.0);
                e.jitter = spec.value("jitter", 0.0);
            } else {
                throw ConfigError("event " + name + ": unknown model '" + model + "'");
            }
        }
        for (std::size_t i = 0; i < cat.size(); ++i)
            if (!seen[i]) throw ConfigError("calibration lacks event '" + cat[i].name + "'");
        for (std::size_t i = 0; i < cat.size(); ++i)
            if (c.events[i].model == EventModel::mirror && c.events[c.events[i].mirror_of].model == EventModel::mirror)
                throw ConfigError("mirror events must mirror a non-mirror event: " + cat[i].name);

        for (auto& row : c.coupling.rows) row.assign(cat.size(), 0.0);
        if (j.contains("coupling")) {
            for (auto& [cat_name, entries] : j["coupling"].items()) {
                std::optional<OpCategory> op;
                for (OpCategory oc : kOpCategories)
                    if (to_string(oc) == cat_name) op = oc;
                if (!op) throw ConfigError("unknown tally category '" + cat_name + "'");
                for (auto& [ev, sigmas] : entries.items()) {
                    const std::size_t i = cat.require_index(ev);
                    if (c.events[i].model != EventModel::lognormal)
                        throw ConfigError("coupling targets non-lognormal event " + ev);
                    c.coupling.rows[static_cast<std::size_t>(*op)][i] = sigmas.get<double>() * c.reference_dispersion(i);
                }
            }
        }
        return c;
    }

    static Calibration load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open calibration file " + path.string());
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("calibration file " + path.string() + ": " + e.what());
        }
    }
};

/// Calibration from $CYBERSPEC_CALIBRATION, else the bundled data file.
inline const Calibration& default_calibration() {
    static const Calibration c = [] {
        if (const char* env = std::getenv("CYBERSPEC_CALIBRATION"); env && *env) return Calibration::load(env);
        return Calibration::load(CYBERSPEC_DEFAULT_CALIBRATION);
    }();
    return c;
}

struct EventBaseline {
    double mean = 0.0;
    double dispersion = 0.0;
};

struct DeviceProfile {
    std::string sensor_id;
    DeviceType device_type = DeviceType::type_a;
    std::uint64_t offset_seed = 0;
    std::vector<EventBaseline> baseline;   ///< catalog order, device-specific
    std::vector<double> device_offset;     ///< multiplicative factor applied to the type mean
    const Calibration* calibration = nullptr;
};

inline DeviceProfile make_device_profile(std::string sensor_id, DeviceType type, std::uint64_t offset_seed,
                                         const Calibration& calibration = default_calibration()) {
    const auto& cat = event_catalog();
    DeviceProfile p;
    p.sensor_id = std::move(sensor_id);
    p.device_type = type;
    p.offset_seed = offset_seed;
    p.calibration = &calibration;
    p.baseline.resize(cat.size());
    p.device_offset.resize(cat.size(), 1.0);
    for (std::size_t i = 0; i < cat.size(); ++i) {
        const auto& e = calibration.events[i];
        double type_mean = e.mean;
        if (type == DeviceType::type_b)
            type_mean *= calibration.type_b_family_factor[static_cast<std::size_t>(cat[i].family)];
        const double u = 2.0 * to_unit(hash_keys({offset_seed, 0x6f6666ULL, i})) - 1.0;
        p.device_offset[i] = 1.0 + e.offset_bound * u;
        const double mean = type_mean * p.device_offset[i];
        p.baseline[i] = {mean, mean * std::sqrt(std::expm1(e.log_sigma * e.log_sigma))};
    }
    return p;
}

/// Counts for one monitoring window. Deterministic in
/// (profile, tally, seed, timestamp); the coupling delta is added to the
/// baseline draw before rounding and clamping at zero.
inline BehaviorVector synthesize_behavior_vector(const DeviceProfile& profile, const OpTally& tally, double window_s,
                                                 std::uint64_t seed, double timestamp) {
    if (!(window_s > 0.0)) throw ConfigError("window_s must be positive");
    const auto& cat = event_catalog();
    const Calibration& cal = *profile.calibration;
    const double scale = window_s / cal.reference_window_s;
    const std::uint64_t key = hash_keys({seed, hash_string(profile.sensor_id), std::bit_cast<std::uint64_t>(timestamp)});
    const bool glitch = to_unit(hash_keys({key, 0x676cULL})) < cal.glitch_rate;
    const std::vector<double> delta = cal.coupling.delta(tally);

    std::vector<double> raw(cat.size(), 0.0);
    for (std::size_t i = 0; i < cat.size(); ++i) {
        const auto& e = cal.events[i];
        const std::uint64_t k = hash_keys({key, i});
        double v = 0.0;
        switch (e.model) {
            case EventModel::lognormal: {
                const double s = e.log_sigma;
                v = profile.baseline[i].mean * scale * std::exp(s * normal_from_key(k) - 0.5 * s * s);
                if (glitch) v *= cal.glitch_factor;
                v += delta[i];
                break;
            }
            case EventModel::sparse:
                if (to_unit(splitmix64(k)) < e.rate)
                    v = e.mean * profile.device_offset[i] * scale *
                        std::exp(e.log_sigma * normal_from_key(k ^ 0x73ULL));
                break;
            case EventModel::constant: v = e.value; break;
            case EventModel::mirror: break;
        }
        raw[i] = v;
    }
    for (std::size_t i = 0; i < cat.size(); ++i) {
        const auto& e = cal.events[i];
        if (e.model != EventModel::mirror) continue;
        raw[i] = raw[e.mirror_of] * e.factor * profile.device_offset[i] *
                 (1.0 + e.jitter * normal_from_key(hash_keys({key, i, 0x6d6972ULL})));
    }

    BehaviorVector out;
    out.sensor_id = profile.sensor_id;
    out.timestamp = timestamp;
    out.window_s = window_s;
    out.counts.resize(cat.size());
    for (std::size_t i = 0; i < cat.size(); ++i) out.counts[i] = static_cast<std::int64_t>(std::max(0.0, std::round(raw[i])));
    return out;
}

struct PerfStatOptions {
    char separator = ',';
    /// Fallbacks used when the text carries no metadata header for them.
    std::optional<std::string> sensor_id;
    std::optional<double> timestamp;
    std::optional<double> window_s;
};

struct PerfStatResult {
    BehaviorVector vector;
    std::vector<std::string> warnings;  ///< uncounted/unsupported or absent catalog events
};

/// Parses `perf stat -x<sep>` output (value, unit, event, run time, percentage).
/// Metadata is carried in comment lines `# timestamp=<s>`, `# sensor_id=<id>`,
/// `# window_s=<s>`; other comment lines and blank lines are skipped.
inline PerfStatResult parse_perf_stat(std::string_view text, const PerfStatOptions& options = {}) {
    const auto& cat = event_catalog();
    PerfStatResult r;
    r.vector.counts.assign(cat.size(), 0);
    std::vector<bool> seen(cat.size(), false);
    std::optional<double> timestamp = options.timestamp;
    std::optional<double> window = options.window_s;
    std::string sensor = options.sensor_id.value_or("");

    auto trim = [](std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return s;
    };
    auto parse_double = [](std::string_view s, std::size_t line) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("bad number '" + std::string(s) + "'", line);
        return v;
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            line = trim(line.substr(1));
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = trim(line.substr(0, eq));
            const auto val = trim(line.substr(eq + 1));
            if (key == "timestamp") timestamp = parse_double(val, line_no);
            else if (key == "window_s") window = parse_double(val, line_no);
            else if (key == "sensor_id") sensor = std::string(val);
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        for (;;) {
            const auto sep = line.find(options.separator, start);
            fields.push_back(trim(line.substr(start, sep == std::string_view::npos ? std::string_view::npos : sep - start)));
            if (sep == std::string_view::npos) break;
            start = sep + 1;
        }
        if (fields.size() < 3 || fields[2].empty())
            throw ParseError("expected 'value" + std::string(1, options.separator) + "unit" +
                                 std::string(1, options.separator) + "event...'",
                             line_no);
        const auto idx = cat.index_of(fields[2]);
        if (!idx) continue;
        const auto value = fields[0];
        if (value == "<not counted>" || value == "<not supported>") {
            r.warnings.push_back(std::string(fields[2]) + ": " + std::string(value));
            seen[*idx] = true;
            continue;
        }
        const double v = parse_double(value, line_no);
        if (!(v >= 0.0) || !std::isfinite(v)) throw ParseError("negative or non-finite count", line_no);
        r.vector.counts[*idx] += static_cast<std::int64_t>(std::llround(v));
        seen[*idx] = true;
    }
    if (!timestamp) throw ParseError("missing timestamp metadata ('# timestamp=<utc seconds>')");
    for (std::size_t i = 0; i < cat.size(); ++i)
        if (!seen[i]) r.warnings.push_back(cat[i].name + ": absent");
    r.vector.sensor_id = sensor;
    r.vector.timestamp = *timestamp;
    r.vector.window_s = window.value_or(50.0);
    return r;
}

}  // namespace cyberspec
