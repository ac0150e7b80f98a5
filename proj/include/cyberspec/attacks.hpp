#pragma once

// The seven SSDF attacks as stateful per-sweep transformers.
//
// Each attack consumes one benign ScanCycle, returns the falsified cycle and an
// OpTally describing the I/O it performed. Attack "files" live in
// AttackState::stored_psd, keyed by the global bin whose sensed value was
// recorded, each holding a FIFO of values.
//
// Sweep semantics: segments are visited in ascending frequency order. Inside a
// segment the attack first records what it needs from the sensed values, then
// substitutes. A source bin therefore "precedes" an attacked bin when its
// segment index is less than or equal to the attacked bin's segment.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/rng.hpp"
#include "cyberspec/spectrum.hpp"

namespace cyberspec {

enum class AttackKind { repeat, mimic, confusion, noise, spoof, freeze, delay };

inline constexpr AttackKind kAllAttackKinds[] = {AttackKind::noise,  AttackKind::spoof,  AttackKind::repeat,
                                                 AttackKind::confusion, AttackKind::mimic, AttackKind::freeze,
                                                 AttackKind::delay};

constexpr std::string_view to_string(AttackKind k) {
    switch (k) {
        case AttackKind::repeat: return "repeat";
        case AttackKind::mimic: return "mimic";
        case AttackKind::confusion: return "confusion";
        case AttackKind::noise: return "noise";
        case AttackKind::spoof: return "spoof";
        case AttackKind::freeze: return "freeze";
        case AttackKind::delay: return "delay";
    }
    return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
    for (AttackKind k : kAllAttackKinds)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown attack kind '" + std::string(s) + "'");
}

constexpr bool needs_source(AttackKind k) {
    return k == AttackKind::repeat || k == AttackKind::mimic || k == AttackKind::spoof || k == AttackKind::confusion;
}

struct Band {
    double center_hz = 0.0;
    double bandwidth_hz = 0.0;

    /// Band whose lower edge sits at `lower_edge_hz`.
    static Band from_lower_edge(double lower_edge_hz, double bandwidth_hz) {
        return {lower_edge_hz + bandwidth_hz / 2.0, bandwidth_hz};
    }
};

struct AttackConfig {
    AttackKind kind = AttackKind::noise;
    Band attacked;
    std::optional<Band> source;  ///< SegS / Source_seg; SegY for confusion
    double noise_intensity_db = 0.0;
    double delay_s = 0.0;
    std::uint64_t seed = 0;
};

struct OpTally {
    std::uint64_t file_creates = 0;
    std::uint64_t psd_writes = 0;
    std::uint64_t psd_reads = 0;
    std::uint64_t rng_draws = 0;
    std::uint64_t substitutions = 0;

    OpTally& operator+=(const OpTally& o) {
        file_creates += o.file_creates;
        psd_writes += o.psd_writes;
        psd_reads += o.psd_reads;
        rng_draws += o.rng_draws;
        substitutions += o.substitutions;
        return *this;
    }
    friend OpTally operator+(OpTally a, const OpTally& b) { return a += b; }
    friend bool operator==(const OpTally&, const OpTally&) = default;
};

struct AttackState {
    std::map<std::size_t, std::deque<double>> stored_psd;
    std::uint64_t cycles_seen = 0;
    std::size_t delay_cycles = 0;
    /// When set, files are round-tripped through this directory every sweep.
    std::optional<std::filesystem::path> persist_dir;
};

struct StepResult {
    ScanCycle cycle;
    OpTally tally;
};

/// Validated attack with its bands resolved to bin ranges.
struct ResolvedAttack {
    AttackConfig config;
    BinRange attacked;
    BinRange source;  ///< empty when the kind has no source
    std::size_t bins_per_segment = 0;
    std::size_t delay_cycles = 0;
};

inline ResolvedAttack resolve_attack(const AttackConfig& config, const SpectrumConfig& spectrum) {
    ResolvedAttack r;
    r.config = config;
    r.bins_per_segment = spectrum.bins_per_segment;
    r.attacked = segments_for_band(spectrum, config.attacked.center_hz, config.attacked.bandwidth_hz);
    const auto name = std::string(to_string(config.kind));
    if (needs_source(config.kind)) {
        if (!config.source) throw ConfigError(name + " attack requires a source band");
        r.source = segments_for_band(spectrum, config.source->center_hz, config.source->bandwidth_hz);
        if (r.source.overlaps(r.attacked)) throw ConfigError(name + " source and attacked bands overlap");
        if (config.kind != AttackKind::repeat && r.source.count() != r.attacked.count())
            throw ConfigError(name + " source and attacked bands must cover the same number of bins (" +
                              std::to_string(r.source.count()) + " vs " + std::to_string(r.attacked.count()) + ")");
    }
    if ((config.kind == AttackKind::noise || config.kind == AttackKind::spoof) && !(config.noise_intensity_db > 0.0))
        throw ConfigError(name + " attack requires a positive noise intensity");
    if (config.kind == AttackKind::delay) {
        if (!(config.delay_s > 0.0)) throw ConfigError("delay attack requires delay_s > 0");
        r.delay_cycles = static_cast<std::size_t>(std::ceil(config.delay_s / spectrum.cycle_duration_s - 1e-12));
    }
    return r;
}

inline AttackState make_attack_state(const ResolvedAttack& attack) {
    AttackState s;
    s.delay_cycles = attack.delay_cycles;
    return s;
}

namespace detail {

/// Sub-range of `r` that falls inside segment `seg`.
inline BinRange clip_to_segment(const BinRange& r, std::size_t seg, std::size_t bps) {
    const std::size_t lo = std::max(r.first, seg * bps);
    const std::size_t hi = std::min(r.last, (seg + 1) * bps);
    return lo < hi ? BinRange{lo, hi} : BinRange{lo, lo};
}

/// Visits every segment touched by any of the ranges, in sweep order.
template <typename Fn>
void sweep(std::initializer_list<BinRange> ranges, std::size_t bps, Fn&& fn) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& r : ranges) {
        if (r.empty()) continue;
        lo = std::min(lo, r.first_segment(bps));
        hi = std::max(hi, r.last_segment(bps));
    }
    if (lo == SIZE_MAX) return;
    for (std::size_t seg = lo; seg <= hi; ++seg) fn(seg);
}

inline double uniform_noise(const ResolvedAttack& a, const ScanCycle& c, std::uint64_t cycle, std::size_t bin) {
    return a.config.noise_intensity_db *
           to_unit(hash_keys({a.config.seed, hash_string(c.sensor_id), cycle, static_cast<std::uint64_t>(bin)}));
}

inline void record_latest(AttackState& s, std::size_t bin, double v) {
    auto& fifo = s.stored_psd[bin];
    fifo.clear();
    fifo.push_back(v);
}

inline std::optional<double> latest(const AttackState& s, std::size_t bin) {
    auto it = s.stored_psd.find(bin);
    if (it == s.stored_psd.end() || it->second.empty()) return std::nullopt;
    return it->second.back();
}

inline std::string role_of(const ResolvedAttack& a, std::size_t bin) {
    switch (a.config.kind) {
        case AttackKind::repeat: return "File";
        case AttackKind::confusion: return a.attacked.contains(bin) ? "FileX" : "FileY";
        case AttackKind::freeze: return "FileA";
        case AttackKind::delay: return "FileA_seg" + std::to_string(bin / a.bins_per_segment);
        default: return "FileS_seg" + std::to_string(bin / a.bins_per_segment);
    }
}

inline void save_files(const ResolvedAttack& a, const AttackState& s) {
    const auto& dir = *s.persist_dir;
    std::filesystem::create_directories(dir);
    std::map<std::string, std::ostringstream> files;
    for (const auto& [bin, fifo] : s.stored_psd) {
        auto& out = files[role_of(a, bin)];
        out.precision(17);
        out << bin;
        for (double v : fifo) out << ' ' << v;
        out << '\n';
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".psd" && !files.count(entry.path().stem().string()))
            std::filesystem::remove(entry.path());
    for (auto& [name, body] : files) std::ofstream(dir / (name + ".psd"), std::ios::trunc) << body.str();
}

inline void load_files(AttackState& s) {
    const auto& dir = *s.persist_dir;
    s.stored_psd.clear();
    if (!std::filesystem::exists(dir)) return;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".psd") continue;
        std::ifstream in(entry.path());
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::size_t bin;
            if (!(ls >> bin)) continue;
            auto& fifo = s.stored_psd[bin];
            double v;
            while (ls >> v) fifo.push_back(v);
        }
    }
}

}  // namespace detail

inline StepResult repeat_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    OpTally t;
    const ScanCycle& in = cycle;
    std::vector<double> out = in.psd;
    const bool first = state.cycles_seen == 0;
    if (first) t.file_creates = 1;
    const std::size_t bps = a.bins_per_segment;
    detail::sweep({a.source, a.attacked}, bps, [&](std::size_t seg) {
        if (first) {
            const auto src = detail::clip_to_segment(a.source, seg, bps);
            for (std::size_t b = src.first; b < src.last; ++b) {
                detail::record_latest(state, b, in.psd[b]);
                ++t.psd_writes;
            }
        }
        const auto dst = detail::clip_to_segment(a.attacked, seg, bps);
        for (std::size_t b = dst.first; b < dst.last; ++b) {
            const std::size_t paired = a.source.first + (b - a.attacked.first) % a.source.count();
            if (auto v = detail::latest(state, paired)) {
                out[b] = *v;
                ++t.psd_reads;
                ++t.substitutions;
            }
        }
    });
    cycle.psd = std::move(out);
    ++state.cycles_seen;
    return {std::move(cycle), t};
}

namespace detail {

/// Shared body of mimic and spoof; spoof perturbs the recorded values.
inline StepResult mimic_like_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle, bool noisy) {
    OpTally t;
    std::vector<double> out = cycle.psd;
    const std::size_t bps = a.bins_per_segment;
    if (state.cycles_seen == 0) t.file_creates = a.source.segment_span(bps);
    sweep({a.source, a.attacked}, bps, [&](std::size_t seg) {
        const auto src = clip_to_segment(a.source, seg, bps);
        for (std::size_t b = src.first; b < src.last; ++b) {
            double v = cycle.psd[b];
            if (noisy) {
                v += uniform_noise(a, cycle, state.cycles_seen, b);
                ++t.rng_draws;
            }
            record_latest(state, b, v);
            ++t.psd_writes;
        }
        const auto dst = clip_to_segment(a.attacked, seg, bps);
        for (std::size_t b = dst.first; b < dst.last; ++b) {
            if (auto v = latest(state, a.source.first + (b - a.attacked.first))) {
                out[b] = *v;
                ++t.psd_reads;
                ++t.substitutions;
            }
        }
    });
    cycle.psd = std::move(out);
    ++state.cycles_seen;
    return {std::move(cycle), t};
}

}  // namespace detail

inline StepResult mimic_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    return detail::mimic_like_step(state, a, std::move(cycle), false);
}

inline StepResult spoof_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    return detail::mimic_like_step(state, a, std::move(cycle), true);
}

/// SegX is the attacked band, SegY the source band.
inline StepResult confusion_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    OpTally t;
    std::vector<double> out = cycle.psd;
    const std::size_t bps = a.bins_per_segment;
    const bool priming = state.cycles_seen == 0;
    if (priming) t.file_creates = 2;
    const BinRange& x = a.attacked;
    const BinRange& y = a.source;
    detail::sweep({x, y}, bps, [&](std::size_t seg) {
        const auto xs = detail::clip_to_segment(x, seg, bps);
        const auto ys = detail::clip_to_segment(y, seg, bps);
        for (auto r : {xs, ys})
            for (std::size_t b = r.first; b < r.last; ++b) {
                detail::record_latest(state, b, cycle.psd[b]);
                ++t.psd_writes;
            }
        if (priming) return;
        for (std::size_t b = xs.first; b < xs.last; ++b) {
            if (auto v = detail::latest(state, y.first + (b - x.first))) {
                out[b] = *v;
                ++t.psd_reads;
                ++t.substitutions;
            }
        }
        for (std::size_t b = ys.first; b < ys.last; ++b) {
            if (auto v = detail::latest(state, x.first + (b - y.first))) {
                out[b] = *v;
                ++t.psd_reads;
                ++t.substitutions;
            }
        }
    });
    cycle.psd = std::move(out);
    ++state.cycles_seen;
    return {std::move(cycle), t};
}

inline StepResult noise_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    OpTally t;
    for (std::size_t b = a.attacked.first; b < a.attacked.last; ++b) {
        cycle.psd[b] += detail::uniform_noise(a, cycle, state.cycles_seen, b);
        ++t.rng_draws;
        ++t.substitutions;
    }
    ++state.cycles_seen;
    return {std::move(cycle), t};
}

inline StepResult freeze_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    OpTally t;
    if (state.cycles_seen == 0) {
        t.file_creates = 1;
        for (std::size_t b = a.attacked.first; b < a.attacked.last; ++b) {
            detail::record_latest(state, b, cycle.psd[b]);
            ++t.psd_writes;
        }
    } else {
        for (std::size_t b = a.attacked.first; b < a.attacked.last; ++b) {
            if (auto v = detail::latest(state, b)) {
                cycle.psd[b] = *v;
                ++t.psd_reads;
                ++t.substitutions;
            }
        }
    }
    ++state.cycles_seen;
    return {std::move(cycle), t};
}

inline StepResult delay_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    OpTally t;
    if (state.cycles_seen == 0) t.file_creates = a.attacked.segment_span(a.bins_per_segment);
    ++state.cycles_seen;
    const bool window_over = state.cycles_seen > state.delay_cycles;
    for (std::size_t b = a.attacked.first; b < a.attacked.last; ++b) {
        auto& fifo = state.stored_psd[b];
        fifo.push_back(cycle.psd[b]);
        ++t.psd_writes;
        if (window_over) {
            cycle.psd[b] = fifo.front();
            fifo.pop_front();
            ++t.psd_reads;
            ++t.substitutions;
        }
    }
    return {std::move(cycle), t};
}

/// Dispatches on the attack kind; handles the optional on-disk file mirror.
inline StepResult attack_step(AttackState& state, const ResolvedAttack& a, ScanCycle cycle) {
    if (state.persist_dir) detail::load_files(state);
    StepResult r;
    switch (a.config.kind) {
        case AttackKind::repeat: r = repeat_step(state, a, std::move(cycle)); break;
        case AttackKind::mimic: r = mimic_step(state, a, std::move(cycle)); break;
        case AttackKind::confusion: r = confusion_step(state, a, std::move(cycle)); break;
        case AttackKind::noise: r = noise_step(state, a, std::move(cycle)); break;
        case AttackKind::spoof: r = spoof_step(state, a, std::move(cycle)); break;
        case AttackKind::freeze: r = freeze_step(state, a, std::move(cycle)); break;
        case AttackKind::delay: r = delay_step(state, a, std::move(cycle)); break;
    }
    if (state.persist_dir) detail::save_files(a, state);
    return r;
}

/// Bins an attack may read or write: attacked plus source.
inline std::vector<BinRange> attack_footprint(const ResolvedAttack& a) {
    std::vector<BinRange> f{a.attacked};
    if (!a.source.empty()) f.push_back(a.source);
    return f;
}

/// Convenience owner of a resolved attack and its state.
class Attack {
public:
    Attack(const AttackConfig& config, const SpectrumConfig& spectrum)
        : resolved_(resolve_attack(config, spectrum)), state_(make_attack_state(resolved_)) {}

    StepResult step(ScanCycle cycle) { return attack_step(state_, resolved_, std::move(cycle)); }

    const ResolvedAttack& resolved() const noexcept { return resolved_; }
    const AttackState& state() const noexcept { return state_; }
    AttackState& state() noexcept { return state_; }

private:
    ResolvedAttack resolved_;
    AttackState state_;
};

}  // namespace cyberspec
