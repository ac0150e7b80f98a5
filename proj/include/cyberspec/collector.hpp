#pragma once

// Ingestion side of the deployment: an append-only per-sensor vector log
// and the online classification session fed from it.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyberspec/detectors/model.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/fingerprint.hpp"
#include "cyberspec/io.hpp"

namespace cyberspec {

enum class IngestSource { simulated, parsed_perf };

constexpr std::string_view to_string(IngestSource s) { return s == IngestSource::simulated ? "simulated" : "parsed-perf"; }

inline IngestSource parse_ingest_source(std::string_view s) {
    if (s == "simulated") return IngestSource::simulated;
    if (s == "parsed-perf") return IngestSource::parsed_perf;
    throw SchemaError("unknown ingest source '" + std::string(s) + "'");
}

struct IngestRecord {
    double received_at = 0.0;  ///< UTC seconds
    BehaviorVector vector;
    IngestSource source = IngestSource::simulated;
    std::uint64_t storage_offset = 0;  ///< position of the record in its sensor's log

    friend bool operator==(const IngestRecord&, const IngestRecord&) = default;
};

inline double utc_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Sensor ids become file names, so they are restricted to a safe alphabet.
inline void validate_sensor_id(const std::string& id) {
    if (id.empty() || id.size() > 128 || id.front() == '.')
        throw SchemaError("sensor_id '" + id + "' is not a valid identifier");
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            throw SchemaError("sensor_id '" + id + "' contains '" + std::string(1, c) + "'");
}

/// One newline-delimited JSON log per sensor under `<root>/vectors/`.
/// Every append is fsync'ed before it returns, so an acknowledged record
/// survives a crash. A torn final line left by a crash is ignored on replay
/// and cut off before the next append.
class VectorStore {
public:
    explicit VectorStore(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(log_dir(), ec);
        if (ec) throw StorageError("cannot create store at " + log_dir().string() + ": " + ec.message());
    }

    VectorStore(const VectorStore&) = delete;
    VectorStore& operator=(const VectorStore&) = delete;

    ~VectorStore() {
        for (auto& [id, s] : sensors_)
            if (s->fd >= 0) ::close(s->fd);
    }

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path log_dir() const { return root_ / "vectors"; }
    std::filesystem::path log_path(const std::string& sensor) const { return log_dir() / (sensor + ".ndjson"); }

    IngestRecord append(BehaviorVector v, IngestSource source, double received_at = utc_now()) {
        validate_sensor_id(v.sensor_id);
        auto& s = sensor(v.sensor_id);
        std::lock_guard lock(s.mutex);
        open_for_append(s, v.sensor_id);
        IngestRecord r{std::max(received_at, s.last_received), std::move(v), source, s.next_offset};
        std::string line = record_json(r).dump();
        line += '\n';
        write_all(s.fd, line, r.vector.sensor_id);
        if (::fsync(s.fd) != 0) throw StorageError("fsync failed for " + r.vector.sensor_id + ": " + std::strerror(errno));
        s.last_received = r.received_at;
        ++s.next_offset;
        return r;
    }

    std::vector<std::string> sensors() const {
        std::vector<std::string> out;
        for (const auto& e : std::filesystem::directory_iterator(log_dir()))
            if (e.path().extension() == ".ndjson") out.push_back(e.path().stem().string());
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<IngestRecord> replay(const std::string& sensor_id) const {
        validate_sensor_id(sensor_id);
        std::ifstream in(log_path(sensor_id), std::ios::binary);
        if (!in) return {};
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::vector<IngestRecord> out;
        std::size_t start = 0;
        while (start < content.size()) {
            const auto nl = content.find('\n', start);
            if (nl == std::string::npos) break;  // torn tail
            try {
                out.push_back(record_from_json(nlohmann::json::parse(content.substr(start, nl - start))));
            } catch (const std::exception& e) {
                throw StorageError(log_path(sensor_id).string() + ": corrupt record " + std::to_string(out.size()) + ": " + e.what());
            }
            start = nl + 1;
        }
        return out;
    }

    std::map<std::string, std::vector<IngestRecord>> replay_all() const {
        std::map<std::string, std::vector<IngestRecord>> out;
        for (const auto& s : sensors()) out[s] = replay(s);
        return out;
    }

    /// Writes one curation-ready CSV per sensor into `dir`; returns the row counts.
    std::map<std::string, std::size_t> compact(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::map<std::string, std::size_t> counts;
        for (const auto& s : sensors()) {
            std::vector<BehaviorVector> rows;
            for (auto& r : replay(s)) rows.push_back(std::move(r.vector));
            save_vectors_csv(dir / (s + ".csv"), rows);
            counts[s] = rows.size();
        }
        return counts;
    }

    static nlohmann::json record_json(const IngestRecord& r) {
        return {{"received_at", r.received_at}, {"source", to_string(r.source)}, {"offset", r.storage_offset}, {"vector", to_json(r.vector)}};
    }

    static IngestRecord record_from_json(const nlohmann::json& j) {
        IngestRecord r;
        r.received_at = j.at("received_at").get<double>();
        r.source = parse_ingest_source(j.at("source").get<std::string>());
        r.storage_offset = j.at("offset").get<std::uint64_t>();
        r.vector = behavior_vector_from_json(j.at("vector"));
        return r;
    }

private:
    struct SensorLog {
        std::mutex mutex;
        int fd = -1;
        std::uint64_t next_offset = 0;
        double last_received = 0.0;
    };

    SensorLog& sensor(const std::string& id) {
        std::lock_guard lock(table_mutex_);
        auto& p = sensors_[id];
        if (!p) p = std::make_unique<SensorLog>();
        return *p;
    }

    void open_for_append(SensorLog& s, const std::string& id) {
        if (s.fd >= 0) return;
        const auto path = log_path(id);
        const auto existing = replay(id);
        std::uintmax_t valid_bytes = 0;
        if (std::filesystem::exists(path)) {
            std::ifstream in(path, std::ios::binary);
            std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            const auto last_nl = content.rfind('\n');
            valid_bytes = last_nl == std::string::npos ? 0 : last_nl + 1;
            if (valid_bytes != content.size()) std::filesystem::resize_file(path, valid_bytes);
        }
        s.fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (s.fd < 0) throw StorageError("cannot open " + path.string() + ": " + std::strerror(errno));
        s.next_offset = existing.size();
        if (!existing.empty()) s.last_received = existing.back().received_at;
    }

    static void write_all(int fd, const std::string& data, const std::string& id) {
        std::size_t done = 0;
        while (done < data.size()) {
            const auto n = ::write(fd, data.data() + done, data.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw StorageError("write failed for " + id + ": " + std::strerror(errno));
            }
            done += static_cast<std::size_t>(n);
        }
    }

    std::filesystem::path root_;
    std::mutex table_mutex_;
    std::map<std::string, std::unique_ptr<SensorLog>> sensors_;
};

struct VerdictRecord {
    std::string sensor_id;
    double timestamp = 0.0;
    double received_at = 0.0;
    bool scored = false;  ///< false: no model covers the sensor
    AnomalyVerdict verdict;
    bool alert = false;
    double scoring_s = 0.0;
    double latency_s = 0.0;  ///< window + transport delay + processing + scoring
};

inline nlohmann::json to_json(const VerdictRecord& v) {
    nlohmann::json j{{"sensor_id", v.sensor_id}, {"timestamp", v.timestamp}, {"received_at", v.received_at},
                     {"status", v.scored ? (v.verdict.anomalous ? "anomalous" : "normal") : "unscored"},
                     {"latency_s", v.latency_s}};
    if (v.scored) {
        j["score"] = v.verdict.score;
        j["side"] = to_string(v.verdict.side);
        j["alert"] = v.alert;
        j["scoring_s"] = v.scoring_s;
    }
    return j;
}

/// Maps sensors to models and keeps the verdict log. Model references are
/// swapped under a lock, so a retrain never disturbs an in-flight scoring.
class OnlineSession {
public:
    explicit OnlineSession(std::size_t alert_after = 2) : alert_after_(alert_after) {
        if (alert_after_ == 0) throw ConfigError("alert policy needs at least one anomaly");
    }

    void assign(const std::string& sensor_id, std::shared_ptr<const DetectorModel> model) {
        std::lock_guard lock(mutex_);
        models_[sensor_id] = std::move(model);
    }

    /// Model used for sensors without their own assignment.
    void assign_default(std::shared_ptr<const DetectorModel> model) {
        std::lock_guard lock(mutex_);
        default_model_ = std::move(model);
    }

    std::shared_ptr<const DetectorModel> model_for(const std::string& sensor_id) const {
        std::lock_guard lock(mutex_);
        if (auto it = models_.find(sensor_id); it != models_.end()) return it->second;
        return default_model_;
    }

    VerdictRecord evaluate(const IngestRecord& record, double processing_s = 0.0) {
        const auto& v = record.vector;
        VerdictRecord out;
        out.sensor_id = v.sensor_id;
        out.timestamp = v.timestamp;
        out.received_at = record.received_at;
        const double transport = std::max(0.0, record.received_at - (v.timestamp + v.window_s));
        if (auto model = model_for(v.sensor_id)) {
            const auto t0 = std::chrono::steady_clock::now();
            out.verdict = classify(*model, v);
            out.scoring_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.scored = true;
        }
        out.latency_s = v.window_s + transport + processing_s + out.scoring_s;
        std::lock_guard lock(mutex_);
        auto& run = streak_[v.sensor_id];
        run = out.scored && out.verdict.anomalous ? run + 1 : 0;
        out.alert = run >= alert_after_;
        log_[v.sensor_id].push_back(out);
        return out;
    }

    std::vector<VerdictRecord> verdicts(const std::string& sensor_id) const {
        std::lock_guard lock(mutex_);
        auto it = log_.find(sensor_id);
        return it == log_.end() ? std::vector<VerdictRecord>{} : it->second;
    }

    /// Worst end-to-end latency over the sensor's classified records.
    double detection_latency(const std::string& sensor_id) const {
        std::lock_guard lock(mutex_);
        double worst = -1.0;
        if (auto it = log_.find(sensor_id); it != log_.end())
            for (const auto& r : it->second)
                if (r.scored) worst = std::max(worst, r.latency_s);
        if (worst < 0.0) throw ConfigError("no classified records for sensor '" + sensor_id + "'");
        return worst;
    }

private:
    std::size_t alert_after_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const DetectorModel>> models_;
    std::shared_ptr<const DetectorModel> default_model_;
    std::map<std::string, std::size_t> streak_;
    std::map<std::string, std::vector<VerdictRecord>> log_;
};

struct IngestResult {
    IngestRecord record;
    VerdictRecord verdict;
};

/// Store plus session: persist first, then classify.
class Collector {
public:
    explicit Collector(std::filesystem::path root, std::size_t alert_after = 2) : store_(std::move(root)), session_(alert_after) {}

    IngestResult ingest(BehaviorVector v, IngestSource source = IngestSource::simulated, std::optional<double> received_at = {}) {
        const auto t0 = std::chrono::steady_clock::now();
        auto record = store_.append(std::move(v), source, received_at.value_or(utc_now()));
        const double processing = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        auto verdict = session_.evaluate(record, processing);
        return {std::move(record), std::move(verdict)};
    }

    VectorStore& store() { return store_; }
    OnlineSession& session() { return session_; }

private:
    VectorStore store_;
    OnlineSession session_;
};

/// Storage root from CYBERSPEC_STORE, falling back to `fallback`.
inline std::filesystem::path store_root_from_env(const std::filesystem::path& fallback = "cyberspec-store") {
    if (const char* env = std::getenv("CYBERSPEC_STORE"); env && *env) return env;
    return fallback;
}

}  // namespace cyberspec
