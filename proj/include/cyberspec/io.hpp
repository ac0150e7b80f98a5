#pragma once

// CSV and sidecar file formats: PSD dumps, per-cycle tallies, raw
// behavior-vector datasets and curated (normalized, partitioned) datasets.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyberspec/attacks.hpp"
#include "cyberspec/binary_json.hpp"
#include "cyberspec/catalog.hpp"
#include "cyberspec/curation.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/fingerprint.hpp"
#include "cyberspec/matrix.hpp"
#include "cyberspec/spectrum.hpp"

namespace cyberspec {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double_field(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ParseError("bad number '" + std::string(s) + "'", line);
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// ---- PSD dumps ----

/// One row per segment: segment start frequency followed by the bins.
/// The header lists bin-center offsets from the segment start, in Hz.
inline void write_psd_csv(std::ostream& out, const SpectrumConfig& config, const ScanCycle& cycle) {
    out << "segment_start_hz";
    for (std::size_t b = 0; b < config.bins_per_segment; ++b)
        out << ',' << format_double((static_cast<double>(b) + 0.5) * config.bin_resolution_hz());
    out << '\n';
    for (std::size_t s = 0; s < cycle.segments; ++s) {
        out << format_double(config.segment_start_hz(s));
        for (double v : cycle.segment(s)) out << ',' << format_double(v);
        out << '\n';
    }
}

inline ScanCycle read_psd_csv(std::istream& in, const SpectrumConfig& config, std::uint64_t cycle_index = 0,
                              std::string sensor_id = "sensor-0") {
    ScanCycle c;
    c.cycle_index = cycle_index;
    c.sensor_id = std::move(sensor_id);
    c.bins_per_segment = config.bins_per_segment;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty PSD file", 1);
    ++lineno;
    if (split_csv_line(line).size() != config.bins_per_segment + 1) throw ParseError("PSD header width mismatch", lineno);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != config.bins_per_segment + 1) throw ParseError("PSD row width mismatch", lineno);
        for (std::size_t i = 1; i < f.size(); ++i) c.psd.push_back(parse_double_field(f[i], lineno));
        ++c.segments;
    }
    if (c.segments != config.segment_count()) throw ParseError("PSD segment count does not match configuration", lineno);
    return c;
}

// ---- tallies ----

inline void write_tally_header(std::ostream& out) {
    out << "cycle,file_creates,psd_writes,psd_reads,rng_draws,substitutions\n";
}

inline void write_tally_row(std::ostream& out, std::uint64_t cycle, const OpTally& t) {
    out << cycle << ',' << t.file_creates << ',' << t.psd_writes << ',' << t.psd_reads << ',' << t.rng_draws << ','
        << t.substitutions << '\n';
}

// ---- raw behavior-vector datasets ----

/// Header: timestamp,sensor_id,window_s,<every catalog event>.
inline void write_vectors_header(std::ostream& out) {
    out << "timestamp,sensor_id,window_s";
    for (const auto& e : event_catalog()) out << ',' << e.name;
    out << '\n';
}

inline void write_vector_row(std::ostream& out, const BehaviorVector& v) {
    out << format_double(v.timestamp) << ',' << v.sensor_id << ',' << format_double(v.window_s);
    for (auto c : v.counts) out << ',' << c;
    out << '\n';
}

inline void write_vectors_csv(std::ostream& out, const std::vector<BehaviorVector>& rows) {
    write_vectors_header(out);
    for (const auto& v : rows) write_vector_row(out, v);
}

inline std::vector<BehaviorVector> read_vectors_csv(std::istream& in) {
    const auto& cat = event_catalog();
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("empty dataset", 1);
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "timestamp" || header[1] != "sensor_id" || header[2] != "window_s")
        throw ParseError("dataset header must start with timestamp,sensor_id,window_s", 1);
    std::vector<std::size_t> column_event;
    for (std::size_t i = 3; i < header.size(); ++i) {
        auto idx = cat.index_of(header[i]);
        if (!idx) throw ParseError("unknown event column '" + std::string(header[i]) + "'", 1);
        column_event.push_back(*idx);
    }
    if (column_event.size() != cat.size()) throw ParseError("dataset must carry every catalog event", 1);
    std::vector<BehaviorVector> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) throw ParseError("row width mismatch", lineno);
        BehaviorVector v;
        v.timestamp = parse_double_field(f[0], lineno);
        v.sensor_id = std::string(f[1]);
        v.window_s = parse_double_field(f[2], lineno);
        v.counts.assign(cat.size(), 0);
        for (std::size_t i = 0; i < column_event.size(); ++i) {
            std::int64_t c = 0;
            const auto s = f[i + 3];
            const auto r = std::from_chars(s.data(), s.data() + s.size(), c);
            if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || c < 0)
                throw ParseError("bad count '" + std::string(s) + "'", lineno);
            v.counts[column_event[i]] = c;
        }
        out.push_back(std::move(v));
    }
    return out;
}

inline void save_vectors_csv(const std::filesystem::path& path, const std::vector<BehaviorVector>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_vectors_csv(out, rows);
}

inline std::vector<BehaviorVector> load_vectors_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_vectors_csv(in);
}

/// Count matrix (rows x catalog events) of a vector list.
inline Matrix count_matrix(const std::vector<BehaviorVector>& rows) {
    Matrix m(rows.size(), event_catalog().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = static_cast<double>(rows[r].counts[c]);
    return m;
}

// ---- curated datasets ----

inline void write_matrix_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& m) {
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
}

inline Matrix read_matrix_csv(std::istream& in, const std::vector<std::string>& expected_names) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty matrix file", 1);
    const auto header = split_csv_line(line);
    if (header.size() != expected_names.size()) throw ParseError("header width does not match metadata", 1);
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] != expected_names[i]) throw ParseError("header column '" + std::string(header[i]) + "' unexpected", 1);
    Matrix m(0, expected_names.size());
    std::vector<double> row(expected_names.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != row.size()) throw ParseError("row width mismatch", lineno);
        for (std::size_t i = 0; i < f.size(); ++i) row[i] = parse_double_field(f[i], lineno);
        m.append_row(row);
    }
    return m;
}

/// Writes train.csv, val.csv, test.csv and metadata.json into `dir`.
inline void save_curated_dataset(const std::filesystem::path& dir, const CuratedDataset& ds) {
    std::filesystem::create_directories(dir);
    for (auto [name, m] : {std::pair{"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}}) {
        std::ofstream out(dir / (std::string(name) + ".csv"));
        if (!out) throw std::runtime_error("cannot write dataset into " + dir.string());
        write_matrix_csv(out, ds.feature_names, *m);
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& d : ds.curation_log) log.push_back({{"feature", d.name}, {"reason", d.reason}});
    nlohmann::json meta{{"feature_names", ds.feature_names},
                        {"normalization", {{"min", f64_array(ds.normalization.min)}, {"max", f64_array(ds.normalization.max)}}},
                        {"partitions", {{"train", ds.train.rows()}, {"val", ds.val.rows()}, {"test", ds.test.rows()}}},
                        {"curation_log", log}};
    std::ofstream(dir / "metadata.json") << meta.dump(1) << '\n';
}

inline CuratedDataset load_curated_dataset(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "metadata.json");
    if (!meta_in) throw std::runtime_error("no metadata.json in " + dir.string());
    CuratedDataset ds;
    try {
        const auto meta = nlohmann::json::parse(meta_in);
        ds.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
        ds.normalization = {read_f64_array(meta.at("normalization").at("min")),
                            read_f64_array(meta.at("normalization").at("max"))};
        for (const auto& d : meta.at("curation_log"))
            ds.curation_log.push_back({d.at("feature").get<std::string>(), d.at("reason").get<std::string>()});
        for (auto [name, m] : {std::pair{"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}}) {
            std::ifstream in(dir / (std::string(name) + ".csv"));
            if (!in) throw std::runtime_error("missing " + std::string(name) + ".csv in " + dir.string());
            *m = read_matrix_csv(in, ds.feature_names);
            if (m->rows() != meta.at("partitions").at(name).get<std::size_t>())
                throw SchemaError(std::string(name) + " partition size disagrees with metadata");
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed metadata.json: " + std::string(e.what()));
    }
    return ds;
}

}  // namespace cyberspec
