#include <gtest/gtest.h>

#include <random>

#include "cyberspec/curation.hpp"
#include "cyberspec/io.hpp"
#include "oracles.hpp"

using namespace cyberspec;

namespace {

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("f" + std::to_string(i));
    return out;
}

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double mean = 100, double sd = 10) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(mean, sd);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = n(g);
    return m;
}

/// Sup |F_a - F_b| evaluated at every sample point.
double ks_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    auto ecdf = [](const std::vector<double>& s, double x) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) / static_cast<double>(s.size());
    };
    double d = 0;
    for (const auto* s : {&a, &b})
        for (double x : *s) d = std::max(d, std::abs(ecdf(a, x) - ecdf(b, x)));
    return d;
}

double median_oracle(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Stats, MedianAndKsMatchOracles) {
    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> a(5 + t), b(3 + 2 * t);
        for (auto& v : a) v = std::round(u(g) * 10);
        for (auto& v : b) v = std::round(u(g) * 10 + 1);
        EXPECT_DOUBLE_EQ(stats::median(a), median_oracle(a));
        EXPECT_NEAR(stats::ks_statistic(a, b), ks_oracle(a, b), 1e-12);
    }
}

TEST(RemoveNoisyVectors, CleanMatrixUnchanged) {
    const auto m = gaussian(200, 6, 1);
    const auto r = remove_noisy_vectors(m);
    EXPECT_TRUE(r.dropped.empty());
    EXPECT_EQ(r.rows, m);
}

TEST(RemoveNoisyVectors, DropsHundredfoldRow) {
    auto m = gaussian(200, 6, 2);
    for (std::size_t c = 0; c < 6; ++c) m(17, c) = 100 * stats::median(m.column(c));
    const auto r = remove_noisy_vectors(m);
    EXPECT_EQ(r.dropped, (std::vector<std::size_t>{17}));
    EXPECT_EQ(r.rows.rows(), 199u);
}

TEST(RemoveNoisyVectors, SingleOutlyingFeatureBelowQuorumKept) {
    auto m = gaussian(200, 8, 3);
    m(5, 0) = 1e6;
    EXPECT_TRUE(remove_noisy_vectors(m).dropped.empty());
    m(5, 1) = 1e6;
    EXPECT_EQ(remove_noisy_vectors(m).dropped, (std::vector<std::size_t>{5}));
}

TEST(RemoveNoisyVectors, IdenticalRowsAndTooFewRows) {
    Matrix same(30, 4);
    for (auto& v : same.data()) v = 3.0;
    EXPECT_EQ(remove_noisy_vectors(same).rows, same);
    EXPECT_THROW(remove_noisy_vectors(gaussian(9, 3, 1)), ConfigError);
}

TEST(DropConstantAndLowInfo, Reasons) {
    Matrix m = gaussian(1000, 3, 5);
    for (std::size_t r = 0; r < 1000; ++r) {
        m(r, 0) = 7.0;
        m(r, 1) = r < 995 ? 0.0 : 1.0 + static_cast<double>(r);
    }
    const auto out = drop_constant_and_lowinfo({names(3), m});
    ASSERT_EQ(out.dropped.size(), 2u);
    EXPECT_EQ(out.dropped[0].name, "f0");
    EXPECT_EQ(out.dropped[0].reason, "constant");
    EXPECT_EQ(out.dropped[1].name, "f1");
    EXPECT_EQ(out.dropped[1].reason, "low-info");
    EXPECT_EQ(out.table.names, (std::vector<std::string>{"f2"}));
}

TEST(DropConstantAndLowInfo, IdenticalFractionBoundary) {
    Matrix m(1000, 2);
    for (std::size_t r = 0; r < 1000; ++r) {
        m(r, 0) = r < 990 ? 0.0 : static_cast<double>(r);
        m(r, 1) = r < 991 ? 0.0 : static_cast<double>(r);
    }
    const auto out = drop_constant_and_lowinfo({names(2), m});
    EXPECT_EQ(out.table.names, (std::vector<std::string>{"f0"}));
}

TEST(DropConstantAndLowInfo, TinyScaledVarianceDropped) {
    const std::size_t n = 1000000;
    Matrix m(n, 1);
    for (std::size_t r = 0; r < n; ++r) m(r, 0) = 0.5 + 1e-12 * static_cast<double>(r);
    m(0, 0) = 0.0;
    m(1, 0) = 1.0;
    const auto out = drop_constant_and_lowinfo({names(1), m});
    ASSERT_EQ(out.dropped.size(), 1u);
    EXPECT_EQ(out.dropped[0].reason, "low-info");
}

TEST(DropCorrelated, DuplicateAndNegation) {
    Matrix m = gaussian(500, 4, 6);
    for (std::size_t r = 0; r < 500; ++r) {
        m(r, 2) = m(r, 0);
        m(r, 3) = -m(r, 1);
    }
    const auto out = drop_correlated({names(4), m});
    EXPECT_EQ(out.table.names, (std::vector<std::string>{"f0", "f1"}));
    ASSERT_EQ(out.dropped.size(), 2u);
    EXPECT_EQ(out.dropped[0].name, "f2");
    EXPECT_NE(out.dropped[0].reason.find("f0"), std::string::npos);
    EXPECT_NE(out.dropped[1].reason.find("f1"), std::string::npos);
}

TEST(DropCorrelated, IndependentColumnsKept) {
    const auto m = gaussian(1000, 10, 7);
    EXPECT_TRUE(drop_correlated({names(10), m}).dropped.empty());
}

TEST(DropDrifting, MeanStepDropped) {
    Matrix m = gaussian(400, 2, 8, 0, 1);
    for (std::size_t r = 200; r < 400; ++r) m(r, 1) += 10.0;
    const auto d = drop_drifting({{"a", "g", m}}, names(2));
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].name, "f1");
    EXPECT_NEAR(stats::ks_statistic(m.slice_rows(0, 200).column(1), m.slice_rows(200, 400).column(1)), 1.0, 1e-12);
}

TEST(DropDrifting, DevicesComparedWithinGroupOnly) {
    const Matrix a = gaussian(300, 1, 9, 0, 1), b = gaussian(300, 1, 10, 5, 1), c = gaussian(300, 1, 11, 0.05, 1);
    EXPECT_TRUE(drop_drifting({{"a", "g1", a}, {"b", "g2", b}}, names(1)).empty());
    EXPECT_EQ(drop_drifting({{"a", "g1", a}, {"b", "g1", b}}, names(1)).size(), 1u);
    EXPECT_TRUE(drop_drifting({{"a", "g1", a}, {"c", "g1", c}}, names(1)).empty());
}

TEST(PartitionSizes, ExactFractions) {
    const auto p = partition_sizes(1000);
    EXPECT_EQ(p.train, 720u);
    EXPECT_EQ(p.val, 180u);
    EXPECT_EQ(p.test, 100u);
    for (std::size_t n = 50; n < 400; ++n) {
        const auto q = partition_sizes(n);
        EXPECT_EQ(q.train + q.val + q.test, n);
        EXPECT_LE(std::abs(static_cast<double>(q.train) - 0.72 * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(q.val) - 0.18 * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(q.test) - 0.10 * n), 1.0);
    }
}

TEST(SplitAndNormalize, MidpointAndNoClamp) {
    Matrix m(100, 1);
    for (std::size_t r = 0; r < 72; ++r) m(r, 0) = r == 0 ? 10.0 : (r == 1 ? 30.0 : 20.0);
    for (std::size_t r = 72; r < 100; ++r) m(r, 0) = 40.0;
    const auto ds = split_and_normalize(m, names(1));
    EXPECT_EQ(ds.train.rows(), 72u);
    EXPECT_DOUBLE_EQ(ds.train(2, 0), 0.5);
    EXPECT_DOUBLE_EQ(ds.test(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(ds.val(0, 0), 1.5);
}

TEST(SplitAndNormalize, ChronologicalAndTrainSpansUnitInterval) {
    const auto m = gaussian(1000, 5, 12);
    const auto ds = split_and_normalize(m, names(5));
    for (std::size_t c = 0; c < 5; ++c) {
        const auto col = ds.train.column(c);
        EXPECT_EQ(*std::min_element(col.begin(), col.end()), 0.0);
        EXPECT_EQ(*std::max_element(col.begin(), col.end()), 1.0);
    }
    auto expect_first = ds.normalization.apply(m.slice_rows(720, 721));
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(ds.val(0, c), expect_first(0, c));
}

TEST(SplitAndNormalize, NoLeakage) {
    auto m = gaussian(500, 4, 13);
    const auto a = split_and_normalize(m, names(4));
    for (std::size_t r = 360; r < 500; ++r)
        for (std::size_t c = 0; c < 4; ++c) m(r, c) = 1e9 * (c + 1);
    const auto b = split_and_normalize(m, names(4));
    EXPECT_EQ(a.normalization, b.normalization);
}

TEST(SplitAndNormalize, Errors) {
    EXPECT_THROW(split_and_normalize(gaussian(49, 2, 1), names(2)), ConfigError);
    Matrix flat = gaussian(100, 2, 1);
    for (std::size_t r = 0; r < 100; ++r) flat(r, 1) = 1.0;
    EXPECT_THROW(split_and_normalize(flat, names(2)), ConfigError);
    EXPECT_THROW(split_and_normalize(gaussian(100, 3, 1), names(2)), SchemaError);
}

TEST(CurateFleet, IdempotentAndDeterministic) {
    std::vector<DeviceRows> devs;
    for (int d = 0; d < 3; ++d) {
        Matrix m = gaussian(300, 6, 20 + d);
        for (std::size_t r = 0; r < 300; ++r) {
            m(r, 1) = 4.0;
            m(r, 3) = 2 * m(r, 0) + 1;
        }
        devs.push_back({"d" + std::to_string(d), "g", m});
    }
    const auto first = curate_fleet(devs, names(6));
    EXPECT_EQ(first.kept, (std::vector<std::string>{"f0", "f2", "f4", "f5"}));
    EXPECT_EQ(first.log.size(), 2u);
    const auto again = curate_fleet(devs, names(6));
    EXPECT_EQ(again.kept, first.kept);

    const auto second = curate_fleet(first.devices, first.kept);
    EXPECT_EQ(second.kept, first.kept);
    EXPECT_TRUE(second.log.empty());
    EXPECT_EQ(second.dropped_rows, 0u);
}

TEST(CuratedDatasetFiles, RoundTrip) {
    auto ds = split_and_normalize(gaussian(200, 3, 30), names(3));
    ds.curation_log = {{"x", "constant"}};
    const auto dir = oracle::scratch_dir("curated");
    save_curated_dataset(dir, ds);
    const auto back = load_curated_dataset(dir);
    EXPECT_EQ(back.feature_names, ds.feature_names);
    EXPECT_EQ(back.normalization, ds.normalization);
    EXPECT_EQ(back.train, ds.train);
    EXPECT_EQ(back.test, ds.test);
    ASSERT_EQ(back.curation_log.size(), 1u);
    EXPECT_EQ(back.curation_log[0].reason, "constant");
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_curated_dataset(dir), std::runtime_error);
}
