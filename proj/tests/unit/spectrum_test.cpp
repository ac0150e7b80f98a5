#include <gtest/gtest.h>

#include <sstream>

#include "cyberspec/config.hpp"
#include "cyberspec/io.hpp"
#include "cyberspec/spectrum.hpp"
#include "oracles.hpp"

using namespace cyberspec;

TEST(SpectrumConfig, DeploymentSweepHas658Segments) {
    const auto c = make_spectrum_config(20e6, 1.6e9, 2.4e6, 240, 50);
    EXPECT_EQ(c.segment_count(), 658u);
    EXPECT_EQ(c.total_bins(), 157920u);
    EXPECT_DOUBLE_EQ(c.bin_resolution_hz(), 10e3);
}

TEST(SpectrumConfig, MinimalConfig) {
    const auto c = make_spectrum_config(0, 2.4e6, 2.4e6, 1, 50);
    EXPECT_EQ(c.segment_count(), 1u);
    EXPECT_EQ(c.total_bins(), 1u);
}

TEST(SpectrumConfig, RejectsInvalidInput) {
    EXPECT_THROW(make_spectrum_config(1e9, 1e8, 2.4e6, 240, 50), ConfigError);
    EXPECT_THROW(make_spectrum_config(0, 1e9, 0, 240, 50), ConfigError);
    EXPECT_THROW(make_spectrum_config(0, 1e9, -1, 240, 50), ConfigError);
    EXPECT_THROW(make_spectrum_config(0, 1e9, 2.4e6, 0, 50), ConfigError);
    EXPECT_THROW(make_spectrum_config(0, 1e6, 2.4e6, 240, 50), ConfigError);
    EXPECT_THROW(make_spectrum_config(0, 1e9, 2.4e6, 240, 0), ConfigError);
}

TEST(SegmentsForBand, WideBandAlignedTouches67Segments) {
    const auto c = default_spectrum_config();
    const auto r = segments_for_band(c, 800e6 + 80e6, 160e6);
    EXPECT_EQ(r.segment_span(c.bins_per_segment), 67u);
    EXPECT_EQ(r.count(), 16000u);
}

TEST(SegmentsForBand, WideBandStraddlingTouches68Segments) {
    const auto c = default_spectrum_config();
    const auto r = segments_for_band(c, 801.2e6 + 80e6, 160e6);
    EXPECT_EQ(r.segment_span(c.bins_per_segment), 68u);
}

TEST(SegmentsForBand, NarrowBandOnBinEdgeCoversTwoBins) {
    const auto c = default_spectrum_config();
    const double edge = c.start_hz + 1000 * c.bin_resolution_hz();
    const auto r = segments_for_band(c, edge, 20e3);
    EXPECT_EQ(r.count(), 2u);
    EXPECT_EQ(r.first_segment(240), r.last_segment(240));
}

TEST(SegmentsForBand, NarrowBandOnBinCenterCoversThreeBins) {
    const auto c = default_spectrum_config();
    const auto r = segments_for_band(c, c.bin_center_hz(1000), 20e3);
    EXPECT_EQ(r.count(), 3u);
    EXPECT_EQ(r.first, 999u);
}

TEST(SegmentsForBand, FullAlignedSegment) {
    const auto c = default_spectrum_config();
    const auto r = segments_for_band(c, c.segment_start_hz(10) + 1.2e6, 2.4e6);
    EXPECT_EQ(r, (BinRange{2400, 2640}));
}

TEST(SegmentsForBand, OutsideRangeRejected) {
    const auto c = default_spectrum_config();
    EXPECT_THROW(segments_for_band(c, 10e6, 2e6), ConfigError);
    EXPECT_THROW(segments_for_band(c, 1.59e9, 40e6), ConfigError);
    EXPECT_THROW(segments_for_band(c, 500e6, 0), ConfigError);
}

TEST(SegmentsForBand, MatchesIntervalIntersectionOracle) {
    const auto c = make_spectrum_config(100e6, 160e6, 2.4e6, 240, 50);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double bw = rng.uniform(5e3, 20e6);
        const double center = rng.uniform(c.start_hz + bw / 2, c.covered_end_hz() - bw / 2);
        const auto r = segments_for_band(c, center, bw);
        const auto want = oracle::bins_touched(c, center, bw);
        ASSERT_FALSE(want.empty());
        EXPECT_EQ(r.first, want.front()) << center << " " << bw;
        EXPECT_EQ(r.last, want.back() + 1) << center << " " << bw;
    }
}

TEST(ScanCycle, NoiseOnlyStaysWithinFiveSigma) {
    const auto c = default_spectrum_config();
    const SensorNoise noise{};
    const auto s = generate_scan_cycle(c, {}, noise, 0, 42);
    ASSERT_EQ(s.psd.size(), c.total_bins());
    EXPECT_EQ(s.segments, 658u);
    for (double v : s.psd) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_LE(std::abs(v - noise.noise_floor_db), 5 * noise.sigma_db);
    }
}

TEST(ScanCycle, TransmissionElevatesExactlyItsBins) {
    const auto c = make_spectrum_config(400e6, 424e6, 2.4e6, 240, 50);
    const std::vector<Transmission> tx{{410e6, 2e6, 30.0, 1.0}};
    const auto span = segments_for_band(c, 410e6, 2e6);
    std::vector<double> mean(c.total_bins(), 0.0);
    for (std::uint64_t k = 0; k < 100; ++k) {
        const auto s = generate_scan_cycle(c, tx, {}, k, 9);
        for (std::size_t b = 0; b < mean.size(); ++b) mean[b] += s.psd[b] / 100.0;
    }
    for (std::size_t b = 0; b < mean.size(); ++b) {
        if (span.contains(b)) {
            EXPECT_GE(mean[b] - (-100.0), 20.0) << b;
        } else {
            EXPECT_LT(mean[b] - (-100.0), 1.0) << b;
        }
    }
}

TEST(ScanCycle, DeterministicAndLocal) {
    const auto c = make_spectrum_config(400e6, 424e6, 2.4e6, 240, 50);
    const std::vector<Transmission> tx{{410e6, 2e6, 30.0, 1.0}, {402e6, 200e3, 10.0, 0.5}};
    const auto a = generate_scan_cycle(c, tx, {}, 7, 11, "s1");
    const auto b = generate_scan_cycle(c, tx, {}, 7, 11, "s1");
    EXPECT_EQ(a, b);
    EXPECT_NE(a.psd, generate_scan_cycle(c, tx, {}, 7, 11, "s2").psd);
    const auto empty = generate_scan_cycle(c, {}, {}, 7, 11, "s1");
    const auto r1 = segments_for_band(c, 410e6, 2e6), r2 = segments_for_band(c, 402e6, 200e3);
    for (std::size_t i = 0; i < a.psd.size(); ++i) {
        if (!r1.contains(i) && !r2.contains(i)) {
            ASSERT_EQ(a.psd[i], empty.psd[i]);
        }
    }
}

TEST(ScanCycle, ValuesClampedToDynamicRange) {
    const auto c = make_spectrum_config(400e6, 404.8e6, 2.4e6, 240, 50);
    const std::vector<Transmission> tx{{401.2e6, 2.4e6, 500.0, 1.0}};
    const auto s = generate_scan_cycle(c, tx, {}, 0, 1);
    for (double v : s.psd) {
        EXPECT_LE(v, 20.0);
        EXPECT_GE(v, -120.0);
    }
}

TEST(PsdCsv, RoundTrip) {
    const auto c = make_spectrum_config(400e6, 407.2e6, 2.4e6, 24, 50);
    const auto s = generate_scan_cycle(c, {}, {}, 3, 5, "x");
    std::stringstream io;
    write_psd_csv(io, c, s);
    std::string header;
    std::getline(io, header);
    EXPECT_EQ(header.substr(0, 24), "segment_start_hz,50000,1");
    io.seekg(0);
    EXPECT_EQ(read_psd_csv(io, c, 3, "x"), s);
}

TEST(ScenarioFile, ParsesTransmissionsAndRejectsBadBands) {
    std::istringstream good(
        "[spectrum]\nstart_hz = 20e6\nend_hz = 1.6e9\n"
        "[transmission.fm]\ncenter_hz = 98e6\nbandwidth_hz = 200e3\npower_db = 35\n");
    const auto s = parse_scenario(read_ini(good));
    ASSERT_EQ(s.transmissions.size(), 1u);
    EXPECT_EQ(s.transmissions[0].first, "fm");
    EXPECT_DOUBLE_EQ(s.transmissions[0].second.power_db, 35.0);

    std::istringstream bad("[transmission.x]\ncenter_hz = 5e6\nbandwidth_hz = 2e6\n");
    EXPECT_THROW(parse_scenario(read_ini(bad)), ConfigError);
    std::istringstream missing("[transmission.x]\nbandwidth_hz = 2e6\n");
    EXPECT_THROW(parse_scenario(read_ini(missing)), ConfigError);
    std::istringstream garbage("[spectrum\nstart_hz = 1\n");
    EXPECT_THROW(read_ini(garbage), ParseError);
}
