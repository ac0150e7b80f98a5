#pragma once

// Experiment harness: fleet and dataset synthesis, the individual /
// device-type / global experiments, TPR/TNR metrics and report output.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyberspec/attacks.hpp"
#include "cyberspec/config.hpp"
#include "cyberspec/curation.hpp"
#include "cyberspec/detectors/model.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/fingerprint.hpp"
#include "cyberspec/io.hpp"
#include "cyberspec/rng.hpp"
#include "cyberspec/spectrum.hpp"

namespace cyberspec {

// ---- metrics ----

inline double tnr(std::span<const AnomalyVerdict> benign) {
    if (benign.empty()) throw ConfigError("tnr needs at least one verdict");
    const auto normal = std::count_if(benign.begin(), benign.end(), [](const auto& v) { return !v.anomalous; });
    return static_cast<double>(normal) / static_cast<double>(benign.size());
}

inline double tpr(std::span<const AnomalyVerdict> attack) {
    if (attack.empty()) throw ConfigError("tpr needs at least one verdict");
    const auto flagged = std::count_if(attack.begin(), attack.end(), [](const auto& v) { return v.anomalous; });
    return static_cast<double>(flagged) / static_cast<double>(attack.size());
}

/// Fraction of rows whose score falls outside the model's thresholds.
inline double anomaly_rate(const DetectorModel& m, const Matrix& normalized_rows) {
    if (normalized_rows.rows() == 0) throw ConfigError("anomaly rate of an empty dataset");
    std::size_t flagged = 0;
    for (std::size_t r = 0; r < normalized_rows.rows(); ++r)
        flagged += threshold_side(m.thresholds, m.score(normalized_rows.row(r))) != ThresholdSide::within;
    return static_cast<double>(flagged) / static_cast<double>(normalized_rows.rows());
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// All ways of excluding k of n devices, in lexicographic order of the
/// excluded set; `train` holds the remaining devices.
inline std::vector<Split> exclusion_combinations(std::size_t n, std::size_t k) {
    if (k == 0 || k >= n) throw ConfigError("excluded count must satisfy 0 < k < " + std::to_string(n));
    std::vector<Split> out;
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    for (;;) {
        Split s;
        s.eval = pick;
        for (std::size_t i = 0; i < n; ++i)
            if (!std::binary_search(pick.begin(), pick.end(), i)) s.train.push_back(i);
        out.push_back(std::move(s));
        std::size_t i = k;
        while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    return out;
}

inline std::vector<Split> exclusion_combinations(const std::vector<std::string>& device_ids, std::size_t k) {
    return exclusion_combinations(device_ids.size(), k);
}

// ---- fleet and datasets ----

struct FleetSpec {
    std::size_t type_a = 6;
    std::size_t type_b = 3;
    double benign_hours = 192.0;
    double attack_hours = 2.0;
    double cadence_s = 56.8;
    double window_s = 50.0;
    double start_time = 1.6e9;
};

inline std::size_t rows_for_hours(double hours, double cadence_s) {
    return static_cast<std::size_t>(std::floor(hours * 3600.0 / cadence_s + 1e-9));
}

inline std::string device_id(DeviceType t, std::size_t ordinal) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%02zu", t == DeviceType::type_a ? "rpi3" : "rpi4", ordinal + 1);
    return buf;
}

inline std::vector<DeviceProfile> make_fleet(const FleetSpec& f, std::uint64_t seed,
                                             const Calibration& cal = default_calibration()) {
    std::vector<DeviceProfile> fleet;
    for (auto [type, n] : {std::pair{DeviceType::type_a, f.type_a}, {DeviceType::type_b, f.type_b}})
        for (std::size_t i = 0; i < n; ++i) {
            auto id = device_id(type, i);
            const auto offset_seed = hash_keys({seed, hash_string(id)});
            fleet.push_back(make_device_profile(std::move(id), type, offset_seed, cal));
        }
    return fleet;
}

inline constexpr double kBandwidthGrid[] = {20e3, 200e3, 2e6, 20e6, 80e6, 160e6};

inline std::string bandwidth_label(double hz) {
    std::ostringstream s;
    if (hz >= 1e6) s << hz / 1e6 << " MHz";
    else s << hz / 1e3 << " kHz";
    return s.str();
}

struct AttackGrid {
    std::vector<AttackKind> kinds{std::begin(kAllAttackKinds), std::end(kAllAttackKinds)};
    std::vector<double> bandwidths_hz{std::begin(kBandwidthGrid), std::end(kBandwidthGrid)};
    double attacked_lower_hz = 800e6;  ///< bin-aligned lower edges
    double source_lower_hz = 300e6;
    double noise_intensity_db = 10.0;
    double delay_s = 150.0;

    void validate() const {
        for (double bw : bandwidths_hz)
            if (std::find(std::begin(kBandwidthGrid), std::end(kBandwidthGrid), bw) == std::end(kBandwidthGrid))
                throw ConfigError("bandwidth " + bandwidth_label(bw) + " is not in the evaluation grid");
        if (kinds.empty() || bandwidths_hz.empty()) throw ConfigError("attack grid is empty");
    }
};

/// Kind-major list of attack configurations.
inline std::vector<AttackConfig> make_attack_configs(const AttackGrid& g, std::uint64_t seed) {
    g.validate();
    std::vector<AttackConfig> out;
    for (AttackKind k : g.kinds)
        for (double bw : g.bandwidths_hz) {
            AttackConfig c;
            c.kind = k;
            c.attacked = Band::from_lower_edge(g.attacked_lower_hz, bw);
            if (needs_source(k)) c.source = Band::from_lower_edge(g.source_lower_hz, bw);
            if (k == AttackKind::noise || k == AttackKind::spoof) c.noise_intensity_db = g.noise_intensity_db;
            if (k == AttackKind::delay) c.delay_s = g.delay_s;
            c.seed = hash_keys({seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(bw)});
            out.push_back(c);
        }
    return out;
}

struct AttackTrace {
    AttackConfig config;
    std::vector<OpTally> tallies;  ///< one per scan cycle
};

/// Runs every attack over the same generated sweeps and records the tallies.
/// Tallies depend only on band geometry and cycle position, so one trace
/// per configuration serves the whole fleet.
inline std::vector<AttackTrace> trace_attacks(const std::vector<AttackConfig>& configs, const Scenario& scenario,
                                              std::size_t cycles, std::uint64_t seed) {
    std::vector<Attack> attacks;
    std::vector<AttackTrace> traces;
    for (const auto& c : configs) {
        attacks.emplace_back(c, scenario.spectrum);
        traces.push_back({c, {}});
    }
    const auto emitters = scenario.emitters();
    for (std::size_t i = 0; i < cycles; ++i) {
        const auto scan = generate_scan_cycle(scenario.spectrum, emitters, scenario.noise, i, seed, "trace");
        for (std::size_t a = 0; a < attacks.size(); ++a) traces[a].tallies.push_back(attacks[a].step(scan).tally);
    }
    return traces;
}

inline std::vector<BehaviorVector> benign_vectors(const DeviceProfile& p, const FleetSpec& f, std::uint64_t seed) {
    const std::size_t n = rows_for_hours(f.benign_hours, f.cadence_s);
    std::vector<BehaviorVector> out;
    out.reserve(n);
    const std::uint64_t key = hash_keys({seed, 0x62656e69676eULL});
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(synthesize_behavior_vector(p, OpTally{}, f.window_s, key, f.start_time + static_cast<double>(i) * f.cadence_s));
    return out;
}

/// Attack windows follow the benign period; `index` separates datasets in time.
inline std::vector<BehaviorVector> attack_vectors(const DeviceProfile& p, const AttackTrace& trace, std::size_t index,
                                                  const FleetSpec& f, std::uint64_t seed) {
    const std::size_t n = std::min(rows_for_hours(f.attack_hours, f.cadence_s), trace.tallies.size());
    const double t0 = f.start_time + f.benign_hours * 3600.0 + static_cast<double>(index) * (f.attack_hours * 3600.0 + 600.0);
    const std::uint64_t key = hash_keys({seed, 0x61747461636bULL, index});
    std::vector<BehaviorVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(synthesize_behavior_vector(p, trace.tallies[i], f.window_s, key, t0 + static_cast<double>(i) * f.cadence_s));
    return out;
}

// ---- experiment specification ----

enum class ExperimentKind { individual, device_type, global };

constexpr std::string_view to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::individual: return "individual";
        case ExperimentKind::device_type: return "device_type";
        case ExperimentKind::global: return "global";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
    for (auto k : {ExperimentKind::individual, ExperimentKind::device_type, ExperimentKind::global})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown experiment kind: " + std::string(s));
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::global;
    FleetSpec fleet{};
    AttackGrid attacks{};
    std::vector<DetectorKind> detectors{std::begin(kAllDetectorKinds), std::end(kAllDetectorKinds)};
    std::optional<double> excluded_fraction;  ///< device_type only: share of type-A devices held out
    std::uint64_t seed = 7;
    DetectorOptions detector_options{};
    std::size_t max_train_rows = 3000;  ///< cap on rows per trained model, split evenly across devices
    bool select_hyperparameters = false;
    std::size_t threads = 1;

    void validate() const {
        attacks.validate();
        if (detectors.empty()) throw ConfigError("experiment lists no detectors");
        if (excluded_fraction) {
            if (kind != ExperimentKind::device_type) throw ConfigError("excluded_fraction applies to device_type experiments only");
            if (!(*excluded_fraction > 0.0 && *excluded_fraction <= 0.85 + 1e-9))
                throw ConfigError("excluded_fraction must lie in (0, 0.85]");
        }
        if (fleet.type_a + fleet.type_b == 0) throw ConfigError("fleet is empty");
        if (max_train_rows < 50) throw ConfigError("max_train_rows must be at least 50");
    }

    std::size_t excluded_count() const {
        if (!excluded_fraction) return 0;
        return static_cast<std::size_t>(std::llround(*excluded_fraction * static_cast<double>(fleet.type_a)));
    }
};

/// [experiment] kind, seed, detectors, excluded_fraction, max_train_rows, threads, select_hyperparameters
/// [fleet]      type_a, type_b, benign_hours, attack_hours, cadence_s, window_s
/// [attacks]    kinds, bandwidths_hz, intensity_db, delay_s, attacked_lower_hz, source_lower_hz
/// [detectors]  autoencoder_epochs, autoencoder_neurons, autoencoder_layers, learning_rate,
///              batch_size, lof_neighbors, ocsvm_gamma, ocsvm_nu, ocsvm_kernel, iforest_trees, iforest_subsample
inline ExperimentSpec parse_experiment_spec(const ptree& tree) {
    static const std::map<std::string, std::set<std::string>> known{
        {"experiment", {"kind", "seed", "detectors", "excluded_fraction", "max_train_rows", "threads", "select_hyperparameters"}},
        {"fleet", {"type_a", "type_b", "benign_hours", "attack_hours", "cadence_s", "window_s"}},
        {"attacks", {"kinds", "bandwidths_hz", "intensity_db", "delay_s", "attacked_lower_hz", "source_lower_hz"}},
        {"detectors", {"autoencoder_epochs", "autoencoder_neurons", "autoencoder_layers", "learning_rate", "batch_size",
                       "lof_neighbors", "ocsvm_gamma", "ocsvm_nu", "ocsvm_kernel", "iforest_trees", "iforest_subsample"}}};
    for (const auto& [section, keys] : tree) {
        auto it = known.find(section);
        if (it == known.end()) throw ConfigError("unknown section [" + section + "]");
        for (const auto& [key, value] : keys)
            if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
    ExperimentSpec s;
    const ptree empty;
    const auto& ex = tree.get_child("experiment", empty);
    s.kind = parse_experiment_kind(ini_get<std::string>(ex, "kind", "global"));
    s.seed = ini_get<std::uint64_t>(ex, "seed", s.seed);
    if (auto d = ini_list(ex, "detectors"); !d.empty()) {
        s.detectors.clear();
        for (const auto& name : d) s.detectors.push_back(parse_detector_kind(name));
    }
    if (ex.get_optional<std::string>("excluded_fraction")) s.excluded_fraction = ini_get(ex, "excluded_fraction", 0.0);
    s.max_train_rows = ini_get(ex, "max_train_rows", s.max_train_rows);
    s.threads = ini_get(ex, "threads", s.threads);
    s.select_hyperparameters = ini_get(ex, "select_hyperparameters", false);

    const auto& fl = tree.get_child("fleet", empty);
    s.fleet.type_a = ini_get(fl, "type_a", s.fleet.type_a);
    s.fleet.type_b = ini_get(fl, "type_b", s.fleet.type_b);
    s.fleet.benign_hours = ini_get(fl, "benign_hours", s.fleet.benign_hours);
    s.fleet.attack_hours = ini_get(fl, "attack_hours", s.fleet.attack_hours);
    s.fleet.cadence_s = ini_get(fl, "cadence_s", s.fleet.cadence_s);
    s.fleet.window_s = ini_get(fl, "window_s", s.fleet.window_s);

    const auto& at = tree.get_child("attacks", empty);
    if (auto k = ini_list(at, "kinds"); !k.empty()) {
        s.attacks.kinds.clear();
        for (const auto& name : k) s.attacks.kinds.push_back(parse_attack_kind(name));
    }
    if (auto b = ini_list(at, "bandwidths_hz"); !b.empty()) {
        s.attacks.bandwidths_hz.clear();
        for (const auto& v : b) s.attacks.bandwidths_hz.push_back(std::stod(v));
    }
    s.attacks.noise_intensity_db = ini_get(at, "intensity_db", s.attacks.noise_intensity_db);
    s.attacks.delay_s = ini_get(at, "delay_s", s.attacks.delay_s);
    s.attacks.attacked_lower_hz = ini_get(at, "attacked_lower_hz", s.attacks.attacked_lower_hz);
    s.attacks.source_lower_hz = ini_get(at, "source_lower_hz", s.attacks.source_lower_hz);

    const auto& de = tree.get_child("detectors", empty);
    auto& o = s.detector_options;
    o.autoencoder.epochs = ini_get(de, "autoencoder_epochs", o.autoencoder.epochs);
    o.autoencoder.neurons = ini_get(de, "autoencoder_neurons", o.autoencoder.neurons);
    o.autoencoder.hidden_layers = ini_get(de, "autoencoder_layers", o.autoencoder.hidden_layers);
    o.autoencoder.learning_rate = ini_get(de, "learning_rate", o.autoencoder.learning_rate);
    o.autoencoder.batch_size = ini_get(de, "batch_size", o.autoencoder.batch_size);
    o.lof_neighbors = ini_get(de, "lof_neighbors", o.lof_neighbors);
    o.ocsvm.kernel.gamma = ini_get(de, "ocsvm_gamma", o.ocsvm.kernel.gamma);
    o.ocsvm.nu = ini_get(de, "ocsvm_nu", o.ocsvm.nu);
    o.ocsvm.kernel.kind = parse_kernel_kind(ini_get<std::string>(de, "ocsvm_kernel", "rbf"));
    o.iforest.trees = ini_get(de, "iforest_trees", o.iforest.trees);
    o.iforest.subsample = ini_get(de, "iforest_subsample", o.iforest.subsample);
    s.validate();
    return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
    try {
        return parse_experiment_spec(read_ini_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---- prepared data ----

struct DeviceData {
    DeviceProfile profile;
    Matrix benign;                ///< curated benign rows, selected features, chronological
    std::vector<Matrix> attacks;  ///< raw counts restricted to the selected features, aligned with traces
    std::size_t raw_benign_rows = 0;
};

struct ExperimentData {
    FleetSpec fleet;
    std::vector<AttackTrace> traces;
    std::vector<DeviceData> devices;
    std::vector<std::string> features;
    std::vector<DroppedFeature> curation_log;
    std::size_t dropped_rows = 0;

    /// Number of datasets available for one device: 1 benign + one per attack configuration.
    std::size_t datasets_per_device() const { return 1 + traces.size(); }
};

/// Synthesizes the fleet's benign and attack datasets and runs the feature
/// curation once over the pooled benign data.
inline ExperimentData prepare_experiment_data(const FleetSpec& fleet, const AttackGrid& grid, std::uint64_t seed,
                                              const Scenario& scenario = default_scenario(),
                                              const Calibration& cal = default_calibration()) {
    ExperimentData data;
    data.fleet = fleet;
    const auto configs = make_attack_configs(grid, seed);
    data.traces = trace_attacks(configs, scenario, rows_for_hours(fleet.attack_hours, fleet.cadence_s), seed);

    const auto profiles = make_fleet(fleet, seed, cal);
    const auto names = event_catalog().names();
    std::vector<DeviceRows> raw;
    for (const auto& p : profiles) raw.push_back({p.sensor_id, std::string(to_string(p.device_type)), count_matrix(benign_vectors(p, fleet, seed))});
    auto curated = curate_fleet(raw, names);
    data.features = curated.kept;
    data.curation_log = curated.log;
    data.dropped_rows = curated.dropped_rows;

    std::vector<std::size_t> cols;
    for (const auto& f : data.features) cols.push_back(event_catalog().require_index(f));
    for (std::size_t d = 0; d < profiles.size(); ++d) {
        DeviceData dd{profiles[d], std::move(curated.devices[d].rows), {}, raw[d].rows.rows()};
        for (std::size_t a = 0; a < data.traces.size(); ++a)
            dd.attacks.push_back(count_matrix(attack_vectors(profiles[d], data.traces[a], a, fleet, seed)).select_cols(cols));
        data.devices.push_back(std::move(dd));
    }
    return data;
}

inline ExperimentData prepare_experiment_data(const ExperimentSpec& spec, const Scenario& scenario = default_scenario(),
                                              const Calibration& cal = default_calibration()) {
    spec.validate();
    return prepare_experiment_data(spec.fleet, spec.attacks, spec.seed, scenario, cal);
}

// ---- report ----

struct TprCell {
    DetectorKind detector{};
    std::string group;
    AttackKind attack{};
    double bandwidth_hz = 0.0;
    double mean = 0.0, stddev = 0.0;
    std::size_t n = 0;
    std::string error;  ///< non-empty marks a failed cell

    friend bool operator==(const TprCell&, const TprCell&) = default;
};

struct TnrCell {
    DetectorKind detector{};
    std::string group;
    double mean = 0.0, stddev = 0.0;
    std::size_t n = 0;
    std::string error;

    friend bool operator==(const TnrCell&, const TnrCell&) = default;
};

struct RuntimeCell {
    DetectorKind detector{};
    std::string model;
    std::size_t train_rows = 0;
    double train_s = 0.0;
    double test_s = 0.0;  ///< mean scoring time per evaluated dataset
};

struct MetricsReport {
    ExperimentKind kind = ExperimentKind::global;
    std::optional<double> excluded_fraction;
    std::vector<std::string> features;
    std::vector<TnrCell> tnr;
    std::vector<TprCell> tpr;
    std::vector<RuntimeCell> runtimes;
    std::size_t models_trained = 0;
    std::map<std::string, std::string> selected_hyperparameters;

    const TnrCell* find_tnr(DetectorKind d, const std::string& group) const {
        for (const auto& c : tnr)
            if (c.detector == d && c.group == group) return &c;
        return nullptr;
    }
    const TprCell* find_tpr(DetectorKind d, const std::string& group, AttackKind a, double bw) const {
        for (const auto& c : tpr)
            if (c.detector == d && c.group == group && c.attack == a && c.bandwidth_hz == bw) return &c;
        return nullptr;
    }
};

/// Equal apart from wall-clock runtimes.
inline bool same_metrics(const MetricsReport& a, const MetricsReport& b) {
    return a.kind == b.kind && a.excluded_fraction == b.excluded_fraction && a.features == b.features && a.tnr == b.tnr &&
           a.tpr == b.tpr && a.models_trained == b.models_trained;
}

inline std::pair<double, double> mean_and_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

// ---- running experiments ----

namespace detail {

struct TrainingSet {
    Matrix rows;
    Normalization normalization;
};

/// Pools the chronological training partitions of `devices`, fits min-max
/// on the pool and draws an equal number of rows per device (capped so the
/// total stays within max_rows).
inline TrainingSet balanced_training_set(const ExperimentData& data, const std::vector<std::size_t>& devices,
                                         std::size_t max_rows, std::uint64_t seed) {
    Matrix pooled(0, data.features.size());
    std::size_t per_device = std::numeric_limits<std::size_t>::max();
    for (auto d : devices) {
        const auto p = partition_sizes(data.devices[d].benign.rows());
        per_device = std::min(per_device, p.train);
    }
    per_device = std::min(per_device, std::max<std::size_t>(1, max_rows / devices.size()));
    Rng rng(seed);
    for (auto d : devices) {
        const auto& m = data.devices[d].benign;
        const auto p = partition_sizes(m.rows());
        std::vector<std::size_t> idx(p.train);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < per_device; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
        idx.resize(per_device);
        std::sort(idx.begin(), idx.end());
        pooled.append_rows(m.select_rows(idx));
    }
    TrainingSet ts;
    Matrix full(0, data.features.size());
    for (auto d : devices) {
        const auto& m = data.devices[d].benign;
        full.append_rows(m.slice_rows(0, partition_sizes(m.rows()).train));
    }
    ts.normalization = Normalization::fit(full, data.features);
    ts.rows = ts.normalization.apply(std::move(pooled));
    return ts;
}

inline Matrix test_partition(const DeviceData& d) {
    const auto p = partition_sizes(d.benign.rows());
    return d.benign.slice_rows(p.train + p.val, d.benign.rows());
}

inline Matrix val_partition(const DeviceData& d) {
    const auto p = partition_sizes(d.benign.rows());
    return d.benign.slice_rows(p.train, p.train + p.val);
}

/// One trained model and the datasets it is evaluated on.
struct Job {
    DetectorKind detector{};
    std::string group;
    std::vector<std::size_t> train_devices;
    std::vector<std::size_t> tnr_devices;  ///< evaluated on their test partition
    bool tnr_full = false;                 ///< evaluate on all benign rows instead
    std::vector<std::size_t> tpr_devices;
};

struct JobResult {
    std::string error;
    std::vector<double> tnr_per_device;
    std::vector<std::vector<double>> tpr;  ///< [attack dataset][device]
    RuntimeCell runtime;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline JobResult run_job(const ExperimentData& data, const ExperimentSpec& spec, const DetectorOptions& options, const Job& job) {
    JobResult r;
    r.runtime.detector = job.detector;
    r.runtime.model = job.group;
    const std::uint64_t model_seed = hash_keys({spec.seed, static_cast<std::uint64_t>(job.detector), hash_string(job.group)});
    DetectorModel model;
    try {
        auto ts = balanced_training_set(data, job.train_devices, spec.max_train_rows, model_seed);
        auto opts = options;
        opts.seed = model_seed;
        const auto t0 = std::chrono::steady_clock::now();
        model = train_detector(job.detector, ts.rows, data.features, opts);
        r.runtime.train_s = seconds_since(t0);
        r.runtime.train_rows = ts.rows.rows();
        model.normalization = ts.normalization;
    } catch (const std::exception& e) {
        r.error = std::string(to_string(job.detector)) + " model '" + job.group + "': " + e.what();
        return r;
    }
    const auto& norm = *model.normalization;
    double test_time = 0.0;
    std::size_t evaluated = 0;
    for (auto d : job.tnr_devices) {
        const Matrix rows = norm.apply(job.tnr_full ? data.devices[d].benign : test_partition(data.devices[d]));
        const auto t0 = std::chrono::steady_clock::now();
        r.tnr_per_device.push_back(1.0 - anomaly_rate(model, rows));
        test_time += seconds_since(t0);
        ++evaluated;
    }
    r.tpr.assign(data.traces.size(), {});
    for (std::size_t a = 0; a < data.traces.size(); ++a)
        for (auto d : job.tpr_devices) {
            const Matrix rows = norm.apply(data.devices[d].attacks[a]);
            const auto t0 = std::chrono::steady_clock::now();
            r.tpr[a].push_back(anomaly_rate(model, rows));
            test_time += seconds_since(t0);
            ++evaluated;
        }
    r.runtime.test_s = evaluated ? test_time / static_cast<double>(evaluated) : 0.0;
    return r;
}

inline void run_parallel(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace detail

/// Candidate settings explored when hyper-parameter selection is enabled.
inline std::vector<DetectorOptions> hyperparameter_grid(DetectorKind kind, const DetectorOptions& base) {
    std::vector<DetectorOptions> grid;
    auto with = [&](auto&& edit) {
        DetectorOptions o = base;
        edit(o);
        grid.push_back(o);
    };
    switch (kind) {
        case DetectorKind::autoencoder:
            for (std::size_t n : {20, 40, 60}) with([&](auto& o) { o.autoencoder.neurons = n; });
            break;
        case DetectorKind::lof:
            for (std::size_t k : {5, 15, 25}) with([&](auto& o) { o.lof_neighbors = k; });
            break;
        case DetectorKind::ocsvm:
            for (double g : {0.001, 0.01, 0.1}) with([&](auto& o) { o.ocsvm.kernel.gamma = g; });
            break;
        case DetectorKind::iforest:
            for (std::size_t t : {50, 150, 500}) with([&](auto& o) { o.iforest.trees = t; });
            break;
        case DetectorKind::copod: grid.push_back(base); break;
    }
    return grid;
}

inline std::string describe_options(DetectorKind kind, const DetectorOptions& o) {
    std::ostringstream s;
    switch (kind) {
        case DetectorKind::autoencoder: s << "layers=" << o.autoencoder.hidden_layers << " neurons=" << o.autoencoder.neurons; break;
        case DetectorKind::lof: s << "n_neighbors=" << o.lof_neighbors; break;
        case DetectorKind::ocsvm: s << "kernel=" << to_string(o.ocsvm.kernel.kind) << " gamma=" << o.ocsvm.kernel.gamma << " nu=" << o.ocsvm.nu; break;
        case DetectorKind::iforest: s << "trees=" << o.iforest.trees; break;
        case DetectorKind::copod: s << "-"; break;
    }
    return s.str();
}

/// Picks, on the global configuration, the candidate with the highest TNR
/// on the pooled validation partitions (first candidate wins ties).
inline DetectorOptions select_hyperparameters(const ExperimentData& data, const ExperimentSpec& spec, DetectorKind kind) {
    std::vector<std::size_t> all(data.devices.size());
    std::iota(all.begin(), all.end(), 0);
    const std::uint64_t seed = hash_keys({spec.seed, static_cast<std::uint64_t>(kind), 0x73656cULL});
    auto ts = detail::balanced_training_set(data, all, spec.max_train_rows, seed);
    Matrix val(0, data.features.size());
    for (const auto& d : data.devices) val.append_rows(detail::val_partition(d));
    val = ts.normalization.apply(std::move(val));
    const auto grid = hyperparameter_grid(kind, spec.detector_options);
    DetectorOptions best = grid.front();
    double best_tnr = -1.0;
    for (auto o : grid) {
        o.seed = seed;
        try {
            const double t = 1.0 - anomaly_rate(train_detector(kind, ts.rows, data.features, o), val);
            if (t > best_tnr) {
                best_tnr = t;
                best = o;
            }
        } catch (const TrainingError&) {
        }
    }
    return best;
}

inline MetricsReport run_experiment(const ExperimentSpec& spec, const ExperimentData& data) {
    spec.validate();
    MetricsReport report;
    report.kind = spec.kind;
    report.excluded_fraction = spec.excluded_fraction;
    report.features = data.features;

    std::map<DetectorKind, DetectorOptions> options;
    for (auto k : spec.detectors) {
        options[k] = spec.select_hyperparameters ? select_hyperparameters(data, spec, k) : spec.detector_options;
        report.selected_hyperparameters[std::string(to_string(k))] = describe_options(k, options[k]);
    }

    std::vector<std::size_t> type_a, type_b, all;
    for (std::size_t d = 0; d < data.devices.size(); ++d) {
        (data.devices[d].profile.device_type == DeviceType::type_a ? type_a : type_b).push_back(d);
        all.push_back(d);
    }

    // Jobs and the group each job's metrics aggregate into.
    std::vector<detail::Job> jobs;
    bool aggregate_tnr_over_jobs = false;
    for (auto k : spec.detectors) {
        switch (spec.kind) {
            case ExperimentKind::individual:
                for (auto d : all) jobs.push_back({k, data.devices[d].profile.sensor_id, {d}, {d}, false, {d}});
                break;
            case ExperimentKind::device_type:
                if (spec.excluded_fraction) {
                    const std::size_t excluded = spec.excluded_count();
                    aggregate_tnr_over_jobs = true;
                    for (const auto& split : exclusion_combinations(type_a.size(), excluded)) {
                        detail::Job j{k, "", {}, {}, true, {}};
                        std::string name = "excluded";
                        for (auto i : split.train) j.train_devices.push_back(type_a[i]);
                        for (auto i : split.eval) {
                            j.tnr_devices.push_back(type_a[i]);
                            j.tpr_devices.push_back(type_a[i]);
                            name += ":" + data.devices[type_a[i]].profile.sensor_id;
                        }
                        j.group = name;
                        jobs.push_back(std::move(j));
                    }
                } else {
                    for (auto* members : {&type_a, &type_b}) {
                        if (members->empty()) continue;
                        const std::string g(to_string(data.devices[members->front()].profile.device_type));
                        jobs.push_back({k, g, *members, *members, false, *members});
                    }
                }
                break;
            case ExperimentKind::global: jobs.push_back({k, "global", all, all, false, all}); break;
        }
    }

    std::vector<detail::JobResult> results(jobs.size());
    detail::run_parallel(jobs.size(), spec.threads, [&](std::size_t i) {
        results[i] = detail::run_job(data, spec, options.at(jobs[i].detector), jobs[i]);
    });

    // Aggregation units: each job's devices, or (exclusion tests) whole jobs.
    struct Acc {
        std::vector<double> tnr;
        std::vector<std::vector<double>> tpr;
        std::string error;
    };
    std::map<std::pair<DetectorKind, std::string>, Acc> acc;
    std::vector<std::pair<DetectorKind, std::string>> order;
    auto unit = [&](DetectorKind k, const std::string& g) -> Acc& {
        auto key = std::pair{k, g};
        if (!acc.count(key)) {
            order.push_back(key);
            acc[key].tpr.assign(data.traces.size(), {});
        }
        return acc[key];
    };
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& j = jobs[i];
        const auto& r = results[i];
        if (r.error.empty()) ++report.models_trained;
        report.runtimes.push_back(r.runtime);
        std::vector<std::string> groups{aggregate_tnr_over_jobs ? std::string("excluded") : j.group};
        if (spec.kind == ExperimentKind::individual) groups.push_back("fleet");
        for (const auto& g : groups) {
            auto& a = unit(j.detector, g);
            if (!r.error.empty()) {
                a.error = r.error;
                continue;
            }
            if (aggregate_tnr_over_jobs) {
                a.tnr.push_back(mean_and_std(r.tnr_per_device).first);
                for (std::size_t t = 0; t < r.tpr.size(); ++t) a.tpr[t].push_back(mean_and_std(r.tpr[t]).first);
            } else {
                a.tnr.insert(a.tnr.end(), r.tnr_per_device.begin(), r.tnr_per_device.end());
                for (std::size_t t = 0; t < r.tpr.size(); ++t) a.tpr[t].insert(a.tpr[t].end(), r.tpr[t].begin(), r.tpr[t].end());
            }
        }
    }
    for (const auto& key : order) {
        const auto& a = acc[key];
        const auto [m, s] = mean_and_std(a.tnr);
        report.tnr.push_back({key.first, key.second, m, s, a.tnr.size(), a.error});
        for (std::size_t t = 0; t < data.traces.size(); ++t) {
            const auto [tm, ts] = mean_and_std(a.tpr[t]);
            const auto& c = data.traces[t].config;
            report.tpr.push_back({key.first, key.second, c.kind, c.attacked.bandwidth_hz, tm, ts, a.tpr[t].size(), a.error});
        }
    }
    return report;
}

inline MetricsReport run_experiment(const ExperimentSpec& spec) { return run_experiment(spec, prepare_experiment_data(spec)); }

// ---- report files ----

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j{{"kind", to_string(r.kind)},
                     {"features", r.features},
                     {"models_trained", r.models_trained},
                     {"selected_hyperparameters", r.selected_hyperparameters}};
    if (r.excluded_fraction) j["excluded_fraction"] = *r.excluded_fraction;
    for (const auto& c : r.tnr)
        j["tnr"].push_back({{"detector", to_string(c.detector)}, {"group", c.group}, {"mean", c.mean}, {"std", c.stddev}, {"n", c.n}, {"error", c.error}});
    for (const auto& c : r.tpr)
        j["tpr"].push_back({{"detector", to_string(c.detector)}, {"group", c.group}, {"attack", to_string(c.attack)},
                            {"bandwidth_hz", c.bandwidth_hz}, {"mean", c.mean}, {"std", c.stddev}, {"n", c.n}, {"error", c.error}});
    for (const auto& c : r.runtimes)
        j["runtimes"].push_back({{"detector", to_string(c.detector)}, {"model", c.model}, {"train_rows", c.train_rows},
                                 {"train_s", c.train_s}, {"test_s", c.test_s}});
    return j;
}

inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.kind = parse_experiment_kind(j.at("kind").get<std::string>());
        r.features = j.at("features").get<std::vector<std::string>>();
        r.models_trained = j.at("models_trained").get<std::size_t>();
        r.selected_hyperparameters = j.value("selected_hyperparameters", std::map<std::string, std::string>{});
        if (j.contains("excluded_fraction")) r.excluded_fraction = j["excluded_fraction"].get<double>();
        for (const auto& c : j.value("tnr", nlohmann::json::array()))
            r.tnr.push_back({parse_detector_kind(c.at("detector").get<std::string>()), c.at("group"), c.at("mean"), c.at("std"), c.at("n"), c.at("error")});
        for (const auto& c : j.value("tpr", nlohmann::json::array()))
            r.tpr.push_back({parse_detector_kind(c.at("detector").get<std::string>()), c.at("group"),
                             parse_attack_kind(c.at("attack").get<std::string>()), c.at("bandwidth_hz"), c.at("mean"), c.at("std"),
                             c.at("n"), c.at("error")});
        for (const auto& c : j.value("runtimes", nlohmann::json::array()))
            r.runtimes.push_back({parse_detector_kind(c.at("detector").get<std::string>()), c.at("model"), c.at("train_rows"),
                                  c.at("train_s"), c.at("test_s")});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed report: ") + e.what());
    }
}

inline std::string percent(double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.0f%%", 100.0 * v);
    return buf;
}

/// Markdown summary: TNR per model group, then one attack x bandwidth TPR table per detector and group.
inline std::string render_summary(const MetricsReport& r) {
    std::ostringstream out;
    out << "# " << to_string(r.kind) << " experiment";
    if (r.excluded_fraction) out << " (excluded fraction " << *r.excluded_fraction << ")";
    out << "\n\n" << r.features.size() << " features, " << r.models_trained << " models trained.\n\n";
    out << "## TNR\n\n| detector | group | mean | std | n |\n|---|---|---|---|---|\n";
    for (const auto& c : r.tnr) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f | %.3f | %zu", c.mean, c.stddev, c.n);
        out << "| " << to_string(c.detector) << " | " << c.group << " | " << (c.error.empty() ? buf : "failed") << " |\n";
    }
    std::vector<std::pair<DetectorKind, std::string>> groups;
    std::vector<double> bws;
    std::vector<AttackKind> attacks;
    for (const auto& c : r.tpr) {
        if (std::find(groups.begin(), groups.end(), std::pair{c.detector, c.group}) == groups.end()) groups.emplace_back(c.detector, c.group);
        if (std::find(bws.begin(), bws.end(), c.bandwidth_hz) == bws.end()) bws.push_back(c.bandwidth_hz);
        if (std::find(attacks.begin(), attacks.end(), c.attack) == attacks.end()) attacks.push_back(c.attack);
    }
    for (const auto& [det, group] : groups) {
        if (r.kind == ExperimentKind::individual && group != "fleet") continue;
        out << "\n## TPR: " << to_string(det) << " (" << group << ")\n\n| attack |";
        for (double bw : bws) out << ' ' << bandwidth_label(bw) << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < bws.size(); ++i) out << "---|";
        out << '\n';
        for (auto a : attacks) {
            out << "| " << to_string(a) << " |";
            for (double bw : bws) {
                const auto* c = r.find_tpr(det, group, a, bw);
                out << ' ' << (!c ? "-" : c->error.empty() ? percent(c->mean) : "failed") << " |";
            }
            out << '\n';
        }
    }
    if (!r.runtimes.empty()) {
        out << "\n## Runtime\n\n| detector | model | train rows | train s | test s / dataset |\n|---|---|---|---|---|\n";
        for (const auto& c : r.runtimes) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%zu | %.3f | %.4f", c.train_rows, c.train_s, c.test_s);
            out << "| " << to_string(c.detector) << " | " << c.model << " | " << buf << " |\n";
        }
    }
    return out.str();
}

/// Writes report.json, tnr.csv, tpr.csv, runtimes.csv and summary.md.
inline void write_report(const std::filesystem::path& dir, const MetricsReport& r) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.json") << to_json(r).dump(1) << '\n';
    {
        std::ofstream out(dir / "tnr.csv");
        out << "detector,group,tnr_mean,tnr_std,n,status\n";
        for (const auto& c : r.tnr)
            out << to_string(c.detector) << ',' << c.group << ',' << format_double(c.mean) << ',' << format_double(c.stddev)
                << ',' << c.n << ',' << (c.error.empty() ? "ok" : "failed") << '\n';
    }
    {
        std::ofstream out(dir / "tpr.csv");
        out << "detector,group,attack,bandwidth_hz,tpr_mean,tpr_std,n,status\n";
        for (const auto& c : r.tpr)
            out << to_string(c.detector) << ',' << c.group << ',' << to_string(c.attack) << ',' << format_double(c.bandwidth_hz)
                << ',' << format_double(c.mean) << ',' << format_double(c.stddev) << ',' << c.n << ','
                << (c.error.empty() ? "ok" : "failed") << '\n';
    }
    {
        std::ofstream out(dir / "runtimes.csv");
        out << "detector,model,train_rows,train_s,test_s\n";
        for (const auto& c : r.runtimes)
            out << to_string(c.detector) << ',' << c.model << ',' << c.train_rows << ',' << format_double(c.train_s) << ','
                << format_double(c.test_s) << '\n';
    }
    std::ofstream(dir / "summary.md") << render_summary(r);
}

inline MetricsReport read_report(const std::filesystem::path& dir) {
    std::ifstream in(dir / "report.json");
    if (!in) throw std::runtime_error("no report.json in " + dir.string());
    try {
        return metrics_report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("report.json: ") + e.what());
    }
}

}  // namespace cyberspec
