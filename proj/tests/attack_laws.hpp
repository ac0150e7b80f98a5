#pragma once

// Attack-transformer laws checked against the brute-force trace oracle.
// Each check returns an empty string on success, else a description of the
// first violation.

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "cyberspec/attacks.hpp"
#include "cyberspec/evaluation.hpp"
#include "oracles.hpp"

namespace laws {

using namespace cyberspec;

/// Four segments of eight bins, 300 kHz per bin.
inline SpectrumConfig small_config() { return make_spectrum_config(400e6, 409.6e6, 2.4e6, 8, 50.0); }

inline Band bins_band(const SpectrumConfig& c, std::size_t first_bin, std::size_t count) {
    return Band::from_lower_edge(c.start_hz + static_cast<double>(first_bin) * c.bin_resolution_hz(),
                                 static_cast<double>(count) * c.bin_resolution_hz());
}

inline std::vector<ScanCycle> fixture_inputs(const SpectrumConfig& c, std::size_t cycles, std::uint64_t seed) {
    const std::vector<Transmission> tx{{c.start_hz + 3e6, 1.2e6, 25.0, 0.6}, {c.start_hz + 7.5e6, 0.9e6, 15.0, 0.5}};
    std::vector<ScanCycle> in;
    for (std::size_t t = 0; t < cycles; ++t) in.push_back(generate_scan_cycle(c, tx, {}, t, seed, "fx"));
    return in;
}

struct Trace {
    std::vector<ScanCycle> out;
    std::vector<OpTally> tallies;
    std::vector<std::size_t> max_fifo;
};

inline Trace run(const AttackConfig& cfg, const SpectrumConfig& c, const std::vector<ScanCycle>& in) {
    Attack a(cfg, c);
    Trace tr;
    for (const auto& s : in) {
        auto r = a.step(s);
        tr.out.push_back(std::move(r.cycle));
        tr.tallies.push_back(r.tally);
        std::size_t m = 0;
        for (const auto& [bin, fifo] : a.state().stored_psd) m = std::max(m, fifo.size());
        tr.max_fifo.push_back(m);
    }
    return tr;
}

inline std::string compare_to_oracle(const AttackConfig& cfg, const SpectrumConfig& c, const std::vector<ScanCycle>& in) {
    const auto resolved = resolve_attack(cfg, c);
    const auto want = oracle::expected_trace(resolved, in);
    const auto got = run(cfg, c, in);
    for (std::size_t t = 0; t < in.size(); ++t)
        for (std::size_t b = 0; b < want[t].size(); ++b)
            if (got.out[t].psd[b] != want[t][b]) {
                std::ostringstream s;
                s << to_string(cfg.kind) << ": cycle " << t << " bin " << b << " got " << got.out[t].psd[b] << " want "
                  << want[t][b];
                return s.str();
            }
    return {};
}

struct Layout {
    const char* name;
    std::size_t source_first, attacked_first, count;
};

/// Source before, after and inside the attacked segment; multi-segment spans.
inline const std::vector<Layout>& layouts() {
    static const std::vector<Layout> l{{"source-first", 1, 17, 3},
                                       {"source-later", 26, 9, 4},
                                       {"same-segment", 8, 12, 3},
                                       {"straddling", 5, 20, 6}};
    return l;
}

inline AttackConfig config_for(AttackKind k, const SpectrumConfig& c, const Layout& l) {
    AttackConfig cfg;
    cfg.kind = k;
    cfg.attacked = bins_band(c, l.attacked_first, l.count);
    if (needs_source(k)) cfg.source = bins_band(c, l.source_first, l.count);
    cfg.noise_intensity_db = 10.0;
    cfg.delay_s = 150.0;
    cfg.seed = 99;
    return cfg;
}

inline std::string freeze_constancy() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 1);
    for (const auto& l : layouts()) {
        const auto cfg = config_for(AttackKind::freeze, c, l);
        if (auto e = compare_to_oracle(cfg, c, in); !e.empty()) return std::string(l.name) + ": " + e;
        const auto tr = run(cfg, c, in);
        const auto r = resolve_attack(cfg, c).attacked;
        for (std::size_t t = 2; t < in.size(); ++t)
            for (std::size_t b = r.first; b < r.last; ++b)
                if (tr.out[t].psd[b] != tr.out[1].psd[b]) return "freeze output changed after cycle 2";
        for (std::size_t t = 1; t < in.size(); ++t)
            if (tr.tallies[t].psd_writes != 0 || tr.tallies[t].rng_draws != 0 || tr.tallies[t].psd_reads != r.count())
                return "freeze steady-state tally wrong";
    }
    return {};
}

inline std::string repeat_snapshot() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 2);
    for (const auto& l : layouts()) {
        const auto cfg = config_for(AttackKind::repeat, c, l);
        if (auto e = compare_to_oracle(cfg, c, in); !e.empty()) return std::string(l.name) + ": " + e;
        const auto tr = run(cfg, c, in);
        const auto r = resolve_attack(cfg, c);
        for (std::size_t t = 1; t < in.size(); ++t) {
            for (std::size_t j = 0; j < r.attacked.count(); ++j)
                if (tr.out[t].psd[r.attacked.first + j] != in[0].psd[r.source.first + j]) return "repeat output differs from snapshot";
            const auto& ty = tr.tallies[t];
            if (ty.psd_writes != 0 || ty.rng_draws != 0 || ty.psd_reads != r.attacked.count() || ty.substitutions != r.attacked.count())
                return "repeat steady-state tally wrong";
        }
    }
    return {};
}

inline std::string delay_lag() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 3);
    for (double delay_s : {150.0, 50.0, 120.0}) {
        for (const auto& l : layouts()) {
            auto cfg = config_for(AttackKind::delay, c, l);
            cfg.delay_s = delay_s;
            if (auto e = compare_to_oracle(cfg, c, in); !e.empty()) return std::string(l.name) + ": " + e;
            const auto d = resolve_attack(cfg, c).delay_cycles;
            const auto tr = run(cfg, c, in);
            for (auto m : tr.max_fifo)
                if (m > d) return "delay FIFO grew beyond " + std::to_string(d);
        }
    }
    // p1..p5 with a 3-cycle delay -> p1, p2, p3, p1, p2
    auto cfg = config_for(AttackKind::delay, c, layouts()[0]);
    const auto r = resolve_attack(cfg, c).attacked;
    const auto tr = run(cfg, c, in);
    const std::size_t expect[] = {0, 1, 2, 0, 1};
    for (std::size_t t = 0; t < 5; ++t)
        if (tr.out[t].psd[r.first] != in[expect[t]].psd[r.first]) return "delay hand trace mismatch at cycle " + std::to_string(t);
    return {};
}

inline std::string confusion_swap() {
    const auto c = small_config();
    for (const auto& l : layouts()) {
        const auto cfg = config_for(AttackKind::confusion, c, l);
        const auto r = resolve_attack(cfg, c);
        if (auto e = compare_to_oracle(cfg, c, fixture_inputs(c, 5, 4)); !e.empty()) return std::string(l.name) + ": " + e;
        auto in = fixture_inputs(c, 5, 5);
        for (auto& s : in)
            for (std::size_t j = 0; j < r.attacked.count(); ++j) {
                s.psd[r.attacked.first + j] = -80.0 - static_cast<double>(j);
                s.psd[r.source.first + j] = -40.0 + static_cast<double>(j);
            }
        const auto once = run(cfg, c, in);
        for (std::size_t t = 1; t < in.size(); ++t)
            for (std::size_t j = 0; j < r.attacked.count(); ++j)
                if (once.out[t].psd[r.attacked.first + j] != in[t].psd[r.source.first + j] ||
                    once.out[t].psd[r.source.first + j] != in[t].psd[r.attacked.first + j])
                    return std::string(l.name) + ": constant streams not swapped";
        // Swapping the swapped constant streams again restores them.
        std::vector<ScanCycle> again(once.out.begin() + 1, once.out.end());
        const auto twice = run(cfg, c, again);
        for (std::size_t t = 1; t < again.size(); ++t)
            for (std::size_t b = 0; b < in[0].psd.size(); ++b)
                if (twice.out[t].psd[b] != in[t + 1].psd[b]) return std::string(l.name) + ": double swap does not restore";
        const std::size_t both = 2 * r.attacked.count();
        for (std::size_t t = 1; t < in.size(); ++t) {
            const auto& ty = once.tallies[t];
            if (ty.psd_writes != both || ty.psd_reads != both || ty.substitutions != both) return "confusion tally wrong";
        }
    }
    return {};
}

inline std::string mimic_pairing() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 6);
    for (const auto& l : layouts()) {
        const auto cfg = config_for(AttackKind::mimic, c, l);
        if (auto e = compare_to_oracle(cfg, c, in); !e.empty()) return std::string(l.name) + ": " + e;
    }
    // Source scanned after the attacked band: nothing to copy on the first cycle.
    const auto cfg = config_for(AttackKind::mimic, c, layouts()[1]);
    const auto r = resolve_attack(cfg, c).attacked;
    const auto tr = run(cfg, c, in);
    for (std::size_t b = r.first; b < r.last; ++b)
        if (tr.out[0].psd[b] != in[0].psd[b]) return "mimic modified the first cycle without a recording";
    return {};
}

inline std::string noise_range() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 7);
    for (const auto& l : layouts()) {
        const auto cfg = config_for(AttackKind::noise, c, l);
        const auto r = resolve_attack(cfg, c).attacked;
        const auto tr = run(cfg, c, in);
        for (std::size_t t = 0; t < in.size(); ++t) {
            for (std::size_t b = 0; b < in[t].psd.size(); ++b) {
                const double d = tr.out[t].psd[b] - in[t].psd[b];
                if (r.contains(b) ? !(d >= 0.0 && d <= cfg.noise_intensity_db) : d != 0.0)
                    return std::string(l.name) + ": noise delta " + std::to_string(d) + " at bin " + std::to_string(b);
            }
            const auto& ty = tr.tallies[t];
            if (ty.rng_draws != r.count() || ty.substitutions != r.count() || ty.psd_writes != 0 || ty.psd_reads != 0)
                return "noise tally wrong";
        }
    }
    return {};
}

/// Spoof equals mimic run on a stream whose source band carries the same noise.
inline std::string spoof_is_mimic_of_noise() {
    const auto c = small_config();
    const auto in = fixture_inputs(c, 5, 8);
    for (const auto& l : layouts()) {
        const auto spoof = config_for(AttackKind::spoof, c, l);
        const auto rs = resolve_attack(spoof, c);
        AttackConfig noise = spoof;
        noise.kind = AttackKind::noise;
        noise.attacked = *spoof.source;
        noise.source.reset();
        auto mimic = spoof;
        mimic.kind = AttackKind::mimic;
        const auto noised = run(noise, c, in).out;
        const auto composed = run(mimic, c, noised).out;
        const auto got = run(spoof, c, in);
        for (std::size_t t = 0; t < in.size(); ++t)
            for (std::size_t b = 0; b < in[t].psd.size(); ++b) {
                const double want = rs.attacked.contains(b) ? composed[t].psd[b] : in[t].psd[b];
                if (got.out[t].psd[b] != want) return std::string(l.name) + ": spoof differs from mimic of noise at bin " + std::to_string(b);
            }
        const auto mimic_tr = run(mimic, c, in);
        for (std::size_t t = 0; t < in.size(); ++t) {
            auto want = mimic_tr.tallies[t];
            want.rng_draws += rs.source.count();
            if (got.tallies[t] != want) return "spoof tally is not mimic tally plus source draws";
        }
        // Attacked output minus the paired (lagged) source input lies in [0, intensity].
        const auto expected_mimic = oracle::expected_trace(resolve_attack(mimic, c), in);
        for (std::size_t t = 0; t < in.size(); ++t)
            for (std::size_t b = rs.attacked.first; b < rs.attacked.last; ++b) {
                const double d = got.out[t].psd[b] - expected_mimic[t][b];
                if (!(d >= 0.0 && d <= spoof.noise_intensity_db)) return "spoof delta outside [0, intensity]";
            }
    }
    return {};
}

/// Every bin outside the attack footprint is bitwise unchanged, for every
/// attack kind and bandwidth of the evaluation grid, over `cycles` sweeps.
inline std::string non_interference(std::size_t cycles = 100) {
    const auto scenario = default_scenario();
    const auto emitters = scenario.emitters();
    AttackGrid grid;
    const auto configs = make_attack_configs(grid, 5);
    std::vector<Attack> attacks;
    std::vector<std::vector<char>> outside;
    for (const auto& cfg : configs) {
        attacks.emplace_back(cfg, scenario.spectrum);
        std::vector<char> mask(scenario.spectrum.total_bins(), 1);
        for (const auto& r : attack_footprint(attacks.back().resolved()))
            for (std::size_t b = r.first; b < r.last; ++b) mask[b] = 0;
        outside.push_back(std::move(mask));
    }
    for (std::size_t t = 0; t < cycles; ++t) {
        const auto scan = generate_scan_cycle(scenario.spectrum, emitters, scenario.noise, t, 77, "ni");
        for (std::size_t a = 0; a < attacks.size(); ++a) {
            const auto out = attacks[a].step(scan).cycle;
            for (std::size_t b = 0; b < scan.psd.size(); ++b)
                if (outside[a][b] && std::memcmp(&out.psd[b], &scan.psd[b], sizeof(double)) != 0)
                    return std::string(to_string(configs[a].kind)) + " @ " + bandwidth_label(configs[a].attacked.bandwidth_hz) +
                           " changed bin " + std::to_string(b) + " at cycle " + std::to_string(t);
        }
    }
    return {};
}

}  // namespace laws
