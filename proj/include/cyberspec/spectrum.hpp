#pragma once

// RF band segmentation and synthetic benign PSD generation.
//
// The band [start_hz, end_hz) is cut into fixed-width segments scanned low to
// high; a trailing partial segment is discarded so PSD matrices stay
// rectangular. Each segment carries `bins_per_segment` PSD bins. Bins are
// addressed either by (segment, bin) or by a global index
// segment * bins_per_segment + bin, which is also the sweep order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/rng.hpp"

namespace cyberspec {

struct SpectrumConfig {
    double start_hz = 20e6;
    double end_hz = 1.6e9;
    double segment_width_hz = 2.4e6;
    std::size_t bins_per_segment = 240;
    double cycle_duration_s = 50.0;

    std::size_t segment_count() const {
        return static_cast<std::size_t>(std::floor((end_hz - start_hz) / segment_width_hz + 1e-9));
    }
    std::size_t total_bins() const { return segment_count() * bins_per_segment; }
    double bin_resolution_hz() const { return segment_width_hz / static_cast<double>(bins_per_segment); }
    /// Upper edge of the last full segment.
    double covered_end_hz() const { return start_hz + static_cast<double>(segment_count()) * segment_width_hz; }
    double segment_start_hz(std::size_t segment) const {
        return start_hz + static_cast<double>(segment) * segment_width_hz;
    }
    double bin_center_hz(std::size_t global_bin) const {
        return start_hz + (static_cast<double>(global_bin) + 0.5) * bin_resolution_hz();
    }

    friend bool operator==(const SpectrumConfig&, const SpectrumConfig&) = default;
};

inline SpectrumConfig make_spectrum_config(double start_hz, double end_hz, double segment_width_hz,
                                           std::size_t bins_per_segment, double cycle_duration_s) {
    if (!(std::isfinite(start_hz) && std::isfinite(end_hz)) || !(start_hz < end_hz))
        throw ConfigError("spectrum range must satisfy start_hz < end_hz");
    if (!(segment_width_hz > 0.0)) throw ConfigError("segment_width_hz must be positive");
    if (bins_per_segment == 0) throw ConfigError("bins_per_segment must be at least 1");
    if (!(cycle_duration_s > 0.0)) throw ConfigError("cycle_duration_s must be positive");
    SpectrumConfig c{start_hz, end_hz, segment_width_hz, bins_per_segment, cycle_duration_s};
    if (c.segment_count() == 0) throw ConfigError("spectrum range is narrower than one segment");
    return c;
}

/// The deployment's sweep: 20 MHz to 1.6 GHz in 2.4 MHz blocks, 240 bins each.
inline SpectrumConfig default_spectrum_config() { return make_spectrum_config(20e6, 1.6e9, 2.4e6, 240, 50.0); }

/// Contiguous half-open span [first, last) of global bin indices.
struct BinRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t count() const noexcept { return last - first; }
    bool empty() const noexcept { return last <= first; }
    bool contains(std::size_t bin) const noexcept { return bin >= first && bin < last; }
    bool overlaps(const BinRange& o) const noexcept { return first < o.last && o.first < last; }
    std::size_t first_segment(std::size_t bins_per_segment) const { return first / bins_per_segment; }
    std::size_t last_segment(std::size_t bins_per_segment) const { return (last - 1) / bins_per_segment; }
    std::size_t segment_span(std::size_t bins_per_segment) const {
        return empty() ? 0 : last_segment(bins_per_segment) - first_segment(bins_per_segment) + 1;
    }

    friend bool operator==(const BinRange&, const BinRange&) = default;
};

/// Bins whose support [lo, lo + res) overlaps [center - bw/2, center + bw/2]
/// with positive measure. A band edge that lands exactly on a bin edge does not
/// pull in the neighbouring bin.
inline BinRange segments_for_band(const SpectrumConfig& config, double center_hz, double bandwidth_hz) {
    if (!(bandwidth_hz > 0.0)) throw ConfigError("band bandwidth must be positive");
    const double lo = center_hz - bandwidth_hz / 2.0;
    const double hi = center_hz + bandwidth_hz / 2.0;
    constexpr double slack = 1e-6;  // in bins; absorbs decimal Hz round-off at aligned edges
    const double res = config.bin_resolution_hz();
    const double lo_pos = (lo - config.start_hz) / res;
    const double hi_pos = (hi - config.start_hz) / res;
    const auto total = static_cast<double>(config.total_bins());
    if (lo_pos < -slack || hi_pos > total + slack)
        throw ConfigError("band [" + std::to_string(lo) + ", " + std::to_string(hi) +
                          "] Hz lies outside the scanned range");
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(lo_pos + slack)));
    const auto last = static_cast<std::size_t>(std::min(total, std::ceil(hi_pos - slack)));
    if (last <= first) throw ConfigError("band covers no bins");
    return {first, last};
}

struct Transmission {
    double center_hz = 0.0;
    double bandwidth_hz = 0.0;
    double power_db = 0.0;   ///< above the noise floor
    double duty_cycle = 1.0; ///< probability the emitter is on during a sweep

    void validate() const {
        if (!(bandwidth_hz > 0.0)) throw ConfigError("transmission bandwidth must be positive");
        if (!(duty_cycle >= 0.0 && duty_cycle <= 1.0)) throw ConfigError("duty_cycle must lie in [0, 1]");
    }
};

struct SensorNoise {
    double noise_floor_db = -100.0;
    double sigma_db = 1.0;
};

/// One full sweep of the band as reported by one sensor.
struct ScanCycle {
    std::uint64_t cycle_index = 0;
    std::string sensor_id;
    std::size_t segments = 0;
    std::size_t bins_per_segment = 0;
    std::vector<double> psd;  ///< segments x bins_per_segment, row-major, dB

    double& at(std::size_t segment, std::size_t bin) { return psd[segment * bins_per_segment + bin]; }
    double at(std::size_t segment, std::size_t bin) const { return psd[segment * bins_per_segment + bin]; }
    std::span<const double> segment(std::size_t s) const { return {psd.data() + s * bins_per_segment, bins_per_segment}; }

    friend bool operator==(const ScanCycle&, const ScanCycle&) = default;
};

/// Synthetic benign sweep: floor + per-bin Gaussian noise + active emitters.
/// Every random quantity is keyed on (seed, sensor, cycle, bin or emitter), so
/// the result does not depend on evaluation order and bins outside all
/// emitter supports are identical to a noise-only sweep.
inline ScanCycle generate_scan_cycle(const SpectrumConfig& config, std::span<const Transmission> scenario,
                                     const SensorNoise& noise, std::uint64_t cycle_index, std::uint64_t seed,
                                     const std::string& sensor_id = "sensor-0") {
    ScanCycle cycle;
    cycle.cycle_index = cycle_index;
    cycle.sensor_id = sensor_id;
    cycle.segments = config.segment_count();
    cycle.bins_per_segment = config.bins_per_segment;
    cycle.psd.resize(config.total_bins());

    const std::uint64_t sensor_key = hash_string(sensor_id);
    const std::uint64_t base = hash_keys({seed, sensor_key, cycle_index});
    for (std::size_t b = 0; b < cycle.psd.size(); ++b)
        cycle.psd[b] = noise.noise_floor_db + noise.sigma_db * normal_from_key(hash_keys({base, b}));

    for (std::size_t t = 0; t < scenario.size(); ++t) {
        const Transmission& tx = scenario[t];
        tx.validate();
        const BinRange span = segments_for_band(config, tx.center_hz, tx.bandwidth_hz);
        const double on = to_unit(hash_keys({base, 0x7478ULL, t}));
        if (on >= tx.duty_cycle) continue;
        for (std::size_t b = span.first; b < span.last; ++b) cycle.psd[b] += tx.power_db;
    }

    const double lo = noise.noise_floor_db - 20.0;
    const double hi = noise.noise_floor_db + 120.0;
    for (double& v : cycle.psd) v = std::clamp(v, lo, hi);
    return cycle;
}

}  // namespace cyberspec
