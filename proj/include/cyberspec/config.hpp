#pragma once

// INI-style scenario files.
//
// Spectrum scenario:
//   [spectrum]                 start_hz, end_hz, segment_width_hz, bins_per_segment,
//                              cycle_duration_s, noise_floor_db, noise_sigma_db
//   [transmission.<name>]      center_hz, bandwidth_hz, power_db, duty_cycle
//
// Attack scenario:
//   [attack.<name>]            kind, attacked_center_hz, attacked_bandwidth_hz,
//                              source_center_hz, source_bandwidth_hz,
//                              intensity_db, delay_s, seed
//
// Missing keys fall back to the defaults of the corresponding structs.

#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cyberspec/attacks.hpp"
#include "cyberspec/errors.hpp"
#include "cyberspec/spectrum.hpp"

namespace cyberspec {

using boost::property_tree::ptree;

inline ptree read_ini(std::istream& in, const std::string& origin = "<stream>") {
    ptree tree;
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError(origin + ": " + e.message(), e.line());
    }
    return tree;
}

inline ptree read_ini_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return read_ini(in, path.string());
}

template <typename T>
T ini_get(const ptree& section, const std::string& key, T fallback) {
    try {
        return section.get<T>(key, fallback);
    } catch (const boost::property_tree::ptree_bad_data&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

template <typename T>
T ini_require(const ptree& section, const std::string& key, const std::string& where) {
    auto v = section.get_optional<std::string>(key);
    if (!v) throw ConfigError(where + ": missing '" + key + "'");
    try {
        return section.get<T>(key);
    } catch (const boost::property_tree::ptree_bad_data&) {
        throw ConfigError(where + ": bad value for '" + key + "': " + *v);
    }
}

/// Comma-separated list value, whitespace trimmed.
inline std::vector<std::string> ini_list(const ptree& section, const std::string& key) {
    std::vector<std::string> out;
    const auto raw = section.get<std::string>(key, "");
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find(',', start);
        if (end == std::string::npos) end = raw.size();
        auto item = raw.substr(start, end - start);
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
        start = end + 1;
    }
    return out;
}

struct Scenario {
    SpectrumConfig spectrum = default_spectrum_config();
    SensorNoise noise{};
    std::vector<std::pair<std::string, Transmission>> transmissions;

    std::vector<Transmission> emitters() const {
        std::vector<Transmission> out;
        for (const auto& [name, t] : transmissions) out.push_back(t);
        return out;
    }
};

/// Broadcast FM, a DVB-T multiplex, GSM-900 downlink, ADS-B and a bursty ISM link.
inline Scenario default_scenario() {
    Scenario s;
    s.transmissions = {{"fm", {98.0e6, 200e3, 35.0, 1.0}},
                       {"dvbt", {498.0e6, 8e6, 25.0, 1.0}},
                       {"gsm900", {947.5e6, 200e3, 30.0, 0.9}},
                       {"adsb", {1090e6, 2e6, 15.0, 0.3}},
                       {"ism433", {433.92e6, 20e3, 20.0, 0.1}}};
    return s;
}

inline Scenario parse_scenario(const ptree& tree) {
    Scenario s;
    const auto defaults = default_spectrum_config();
    if (auto sp = tree.get_child_optional("spectrum")) {
        s.spectrum = make_spectrum_config(ini_get(*sp, "start_hz", defaults.start_hz), ini_get(*sp, "end_hz", defaults.end_hz),
                                          ini_get(*sp, "segment_width_hz", defaults.segment_width_hz),
                                          ini_get<std::size_t>(*sp, "bins_per_segment", defaults.bins_per_segment),
                                          ini_get(*sp, "cycle_duration_s", defaults.cycle_duration_s));
        s.noise.noise_floor_db = ini_get(*sp, "noise_floor_db", s.noise.noise_floor_db);
        s.noise.sigma_db = ini_get(*sp, "noise_sigma_db", s.noise.sigma_db);
    }
    for (const auto& [section, body] : tree) {
        if (section.rfind("transmission.", 0) != 0) continue;
        const std::string where = "[" + section + "]";
        Transmission t{ini_require<double>(body, "center_hz", where), ini_require<double>(body, "bandwidth_hz", where),
                       ini_get(body, "power_db", 20.0), ini_get(body, "duty_cycle", 1.0)};
        try {
            t.validate();
            segments_for_band(s.spectrum, t.center_hz, t.bandwidth_hz);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        s.transmissions.emplace_back(section.substr(13), t);
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_ini_file(path)); }

struct NamedAttack {
    std::string name;
    AttackConfig config;
};

inline std::vector<NamedAttack> parse_attack_scenario(const ptree& tree, const SpectrumConfig& spectrum) {
    std::vector<NamedAttack> out;
    for (const auto& [section, body] : tree) {
        if (section.rfind("attack.", 0) != 0) continue;
        const std::string where = "[" + section + "]";
        AttackConfig c;
        try {
            c.kind = parse_attack_kind(ini_require<std::string>(body, "kind", where));
            c.attacked = {ini_require<double>(body, "attacked_center_hz", where),
                          ini_require<double>(body, "attacked_bandwidth_hz", where)};
            if (body.get_optional<std::string>("source_center_hz"))
                c.source = Band{ini_require<double>(body, "source_center_hz", where),
                                ini_require<double>(body, "source_bandwidth_hz", where)};
            c.noise_intensity_db = ini_get(body, "intensity_db", 0.0);
            c.delay_s = ini_get(body, "delay_s", 0.0);
            c.seed = ini_get<std::uint64_t>(body, "seed", 0);
            resolve_attack(c, spectrum);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        out.push_back({section.substr(7), c});
    }
    if (out.empty()) throw ConfigError("attack scenario defines no [attack.<name>] section");
    return out;
}

inline std::vector<NamedAttack> load_attack_scenario(const std::filesystem::path& path, const SpectrumConfig& spectrum) {
    return parse_attack_scenario(read_ini_file(path), spectrum);
}

}  // namespace cyberspec
