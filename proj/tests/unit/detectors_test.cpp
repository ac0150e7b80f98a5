#include <gtest/gtest.h>

#include <random>

#include "cyberspec/detectors/model.hpp"
#include "oracles.hpp"

using namespace cyberspec;

namespace {

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("f" + std::to_string(i));
    return out;
}

Matrix cluster(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 0.05, double center = 0.5) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(center, sd);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = n(g);
    return m;
}

}  // namespace

// ---- IQR ----

TEST(Iqr, HandExample) {
    const std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 100};
    const auto t = fit_iqr_threshold(s);
    EXPECT_DOUBLE_EQ(t.lo, -3.0);
    EXPECT_DOUBLE_EQ(t.hi, 13.0);
    EXPECT_EQ(threshold_side(t, 100), ThresholdSide::above);
    EXPECT_EQ(threshold_side(t, 13), ThresholdSide::within);
    EXPECT_EQ(threshold_side(t, -3), ThresholdSide::within);
    EXPECT_EQ(threshold_side(t, -3.0000001), ThresholdSide::below);
}

TEST(Iqr, ConstantScoresGiveZeroWidth) {
    const auto t = fit_iqr_threshold(std::vector<double>(10, 2.5));
    EXPECT_EQ(t, (Thresholds{2.5, 2.5}));
    EXPECT_EQ(threshold_side(t, 2.5), ThresholdSide::within);
    EXPECT_EQ(threshold_side(t, std::nextafter(2.5, 3.0)), ThresholdSide::above);
}

TEST(Iqr, MatchesOracleAndIsPermutationInvariant) {
    std::mt19937_64 g(11);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> s(4 + g() % 60);
        std::lognormal_distribution<double> d(0, 1);
        for (auto& v : s) v = d(g);
        const auto want = oracle::iqr_bounds(s);
        const auto got = fit_iqr_threshold(s);
        EXPECT_NEAR(got.lo, want.first, 1e-9);
        EXPECT_NEAR(got.hi, want.second, 1e-9);
        std::shuffle(s.begin(), s.end(), g);
        EXPECT_EQ(fit_iqr_threshold(s), got);
    }
}

TEST(Iqr, TooFewScores) { EXPECT_THROW(fit_iqr_threshold(std::vector<double>{1, 2, 3}), ConfigError); }

// ---- LOF ----

TEST(Lof, MatchesTextbookOracle) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto train = oracle::random_matrix(60 + 60 * seed, 3, seed);
        const auto lof = train_lof(train, 15);
        const oracle::Lof want(train, 15);
        for (std::size_t i = 0; i < train.rows(); ++i) EXPECT_NEAR(lof.training_scores()[i], want.lof(train.row(i), i), 1e-9);
        const auto queries = oracle::random_matrix(20, 3, seed + 100, -0.5, 1.5);
        for (std::size_t q = 0; q < queries.rows(); ++q) EXPECT_NEAR(lof.score(queries.row(q)), want.lof(queries.row(q)), 1e-9);
    }
}

TEST(Lof, DuplicateOfClusterMemberNearOneAndFarPointLarge) {
    const auto train = cluster(200, 4, 5);
    const auto lof = train_lof(train, 15);
    EXPECT_NEAR(lof.score(train.row(10)), 1.0, 0.1);
    const std::vector<double> far{5, 5, 5, 5};
    EXPECT_GT(lof.score(far), 10.0);
}

TEST(Lof, IdenticalPointsGuarded) {
    Matrix two(2, 2);
    two(0, 0) = two(1, 0) = 0.3;
    const auto lof = train_lof(two, 1);
    const std::vector<double> q{0.3, 0.0};
    EXPECT_DOUBLE_EQ(lof.score(q), 1.0);
    EXPECT_THROW(train_lof(two, 2), ConfigError);
}

// ---- autoencoder ----

TEST(Autoencoder, GradientMatchesFiniteDifferences) {
    AutoencoderOptions o;
    o.seed = 3;
    const auto net = Autoencoder::initialise(40, o);
    const auto data = oracle::random_matrix(16, 40, 8);
    std::vector<std::size_t> rows(16);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad;
    net.loss_and_gradient(data, rows, grad);
    auto params = net.parameters();
    ASSERT_EQ(grad.size(), params.size());
    std::mt19937_64 g(1);
    int checked = 0;
    for (int t = 0; t < 12; ++t) {
        const std::size_t k = g() % params.size();
        const double h = 1e-6, keep = params[k];
        Autoencoder probe = net;
        params[k] = keep + h;
        probe.set_parameters(params);
        const double up = probe.loss(data);
        params[k] = keep - h;
        probe.set_parameters(params);
        const double down = probe.loss(data);
        params[k] = keep;
        const double fd = (up - down) / (2 * h);
        if (std::abs(fd) < 1e-7 && std::abs(grad[k]) < 1e-7) continue;
        EXPECT_LT(std::abs(fd - grad[k]) / std::max(std::abs(fd), std::abs(grad[k])), 1e-4) << "param " << k;
        ++checked;
    }
    EXPECT_GE(checked, 5);
}

TEST(Autoencoder, LossDecreases) {
    AutoencoderOptions o;
    o.epochs = 30;
    o.seed = 4;
    const auto train = oracle::random_matrix(300, 10, 5);
    const auto r = train_autoencoder(train, o);
    ASSERT_EQ(r.loss_history.size(), 30u);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
    EXPECT_LT(r.loss_history.front(), r.initial_loss);
}

TEST(Autoencoder, LinearSmallStepIsMonotone) {
    AutoencoderOptions o;
    o.epochs = 20;
    o.seed = 6;
    o.activation = Activation::linear;
    o.adam = false;
    o.batch_size = 100000;
    o.learning_rate = 0.05;
    o.neurons = 4;
    const auto r = train_autoencoder(oracle::random_matrix(200, 6, 7), o);
    for (std::size_t e = 1; e < r.loss_history.size(); ++e) EXPECT_LE(r.loss_history[e], r.loss_history[e - 1]);
}

TEST(Autoencoder, IdentityNetReconstructsPerfectly) {
    const std::size_t n = 5;
    DenseLayer a{n, n, std::vector<double>(n * n, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) a.weights[i * n + i] = 1.0;
    const Autoencoder net({a, a}, Activation::relu);
    EXPECT_EQ(net.score(std::vector<double>(n, 0.0)), 0.0);
    EXPECT_EQ(net.score(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}), 0.0);
}

TEST(Autoencoder, DivergenceReportsTrainingError) {
    AutoencoderOptions o;
    o.adam = false;
    o.learning_rate = 1e6;
    o.epochs = 50;
    Matrix m = oracle::random_matrix(64, 4, 1, 0, 100);
    EXPECT_THROW(train_autoencoder(m, o), TrainingError);
}

// ---- one-class SVM ----

TEST(Ocsvm, MatchesQpOracle) {
    const auto x = oracle::random_matrix(20, 2, 21);
    OcsvmOptions o;
    o.kernel.gamma = 2.0;
    o.nu = 0.2;
    const auto r = train_ocsvm(x, o);
    EXPECT_LT(r.kkt_residual, 1e-3);
    Matrix K(20, 20);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 20; ++j) K(i, j) = o.kernel(x.row(i), x.row(j));
    const auto sol = oracle::solve_ocsvm_dual(K, o.nu, 20000);
    auto oracle_decision = [&](std::span<const double> p) {
        double s = 0;
        for (std::size_t i = 0; i < 20; ++i) s += sol.alpha[i] * o.kernel(x.row(i), p);
        return s - sol.rho;
    };
    const auto probes = oracle::random_matrix(30, 2, 22, -0.5, 1.5);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(r.model.decision(x.row(i)), oracle_decision(x.row(i)), 1e-3);
    for (std::size_t i = 0; i < probes.rows(); ++i) EXPECT_NEAR(r.model.decision(probes.row(i)), oracle_decision(probes.row(i)), 1e-3);
}

TEST(Ocsvm, NuPropertyAndKkt) {
    for (double nu : {0.05, 0.1, 0.3}) {
        const auto x = cluster(400, 5, 31, 0.2);
        OcsvmOptions o;
        o.nu = nu;
        o.kernel.gamma = 0.5;
        const auto r = train_ocsvm(x, o);
        EXPECT_LT(r.kkt_residual, o.tolerance);
        std::size_t negative = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) negative += r.model.decision(x.row(i)) < 0;
        EXPECT_LE(static_cast<double>(negative) / 400.0, nu + 1.0 / 400.0) << nu;
        EXPECT_LE(r.model.support_vectors().rows(), 400u);
        double sum = 0;
        for (double a : r.alpha) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, 1.0);
            sum += a;
        }
        EXPECT_NEAR(sum, nu * 400, 1e-9);
    }
}

TEST(Ocsvm, CenterScoresAboveFarProbe) {
    const auto x = cluster(200, 3, 41);
    const auto r = train_ocsvm(x);
    const std::vector<double> center{0.5, 0.5, 0.5}, far{3, 3, 3};
    EXPECT_GT(r.model.decision(center), r.model.decision(far));
}

TEST(Ocsvm, NonConvergenceReportsResidual) {
    OcsvmOptions o;
    o.max_iterations = 1;
    o.tolerance = 1e-12;
    o.kernel.gamma = 1.0;
    try {
        train_ocsvm(oracle::random_matrix(100, 3, 1), o);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("KKT residual"), std::string::npos);
    }
    EXPECT_THROW(train_ocsvm(oracle::random_matrix(1, 3, 1)), ConfigError);
}

// ---- isolation forest ----

TEST(IForest, ScoresInUnitIntervalAndFarPointHigher) {
    const auto x = cluster(500, 4, 51);
    IForestOptions o;
    o.seed = 2;
    const auto f = train_iforest(x, o);
    const std::vector<double> far{2, 2, 2, 2}, inside{0.5, 0.5, 0.5, 0.5};
    EXPECT_GT(f.score(far), f.score(inside));
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double s = f.score(x.row(i));
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
    EXPECT_EQ(f.trees().size(), 150u);
    EXPECT_EQ(f.subsample(), 256u);
}

TEST(IForest, SingleRowScoresHalf) {
    const auto f = train_iforest(oracle::random_matrix(1, 3, 1));
    EXPECT_EQ(f.score(std::vector<double>{9, 9, 9}), 0.5);
}

TEST(IForest, AveragePathLength) {
    EXPECT_EQ(average_path_length(1), 0.0);
    EXPECT_EQ(average_path_length(2), 1.0);
    EXPECT_NEAR(average_path_length(256), 2 * (std::log(255.0) + 0.5772156649015329) - 2 * 255.0 / 256.0, 1e-12);
}

// ---- COPOD ----

TEST(Copod, MedianMinimalMaximumMaximal) {
    std::mt19937_64 g(61);
    std::lognormal_distribution<double> d(0, 0.5);
    Matrix x(101, 3);
    for (auto& v : x.data()) v = d(g);
    const auto c = train_copod(x);
    std::vector<double> med(3), beyond(3), lo(3), hi(3);
    for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_EQ(c.skew_signs()[k], 1);
        auto col = x.column(k);
        std::sort(col.begin(), col.end());
        med[k] = col[50];
        lo[k] = col.front();
        hi[k] = col.back();
        beyond[k] = col.back() + 1.0;
    }
    const double at_median = c.score(med), at_max = c.score(beyond);
    const int steps = 12;
    for (int a = 0; a <= steps; ++a)
        for (int b = 0; b <= steps; ++b)
            for (int e = 0; e <= steps; ++e) {
                const int idx[] = {a, b, e};
                std::vector<double> p(3);
                for (std::size_t k = 0; k < 3; ++k) p[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / steps;
                EXPECT_GE(c.score(p) + 1e-12, at_median);
                EXPECT_LE(c.score(p), at_max + 1e-12);
            }
}

TEST(Copod, OneFeatureRule) {
    Matrix x(9, 1);
    const double v[] = {1, 2, 2, 3, 4, 5, 7, 10, 20};
    for (std::size_t i = 0; i < 9; ++i) x(i, 0) = v[i];
    const auto c = train_copod(x);
    ASSERT_EQ(c.skew_signs()[0], 1);
    for (double q : {0.0, 2.0, 4.5, 20.0, 30.0}) {
        const double le = static_cast<double>(std::count_if(std::begin(v), std::end(v), [&](double s) { return s <= q; }));
        const double ge = static_cast<double>(std::count_if(std::begin(v), std::end(v), [&](double s) { return s >= q; }));
        const double left = -std::log((1 + le) / 10.0), right = -std::log((1 + ge) / 10.0);
        EXPECT_NEAR(c.score(std::vector<double>{q}), std::max(right, (left + right) / 2), 1e-12) << q;
    }
}

// ---- model container ----

TEST(DetectorModel, JsonRoundTripIsBitExact) {
    const auto train = cluster(120, 3, 71, 0.2);
    DetectorOptions o;
    o.autoencoder.epochs = 3;
    o.iforest.trees = 10;
    o.ocsvm.kernel.gamma = 0.5;
    o.seed = 5;
    const auto probes = oracle::random_matrix(10, 3, 72);
    for (auto kind : kAllDetectorKinds) {
        auto m = train_detector(kind, train, names(3), o);
        m.normalization = Normalization{{0, 0, 0}, {1, 2, 3}};
        const auto back = detector_model_from_json(nlohmann::json::parse(to_json(m).dump()));
        EXPECT_EQ(back.kind, kind);
        EXPECT_EQ(back.thresholds, m.thresholds);
        EXPECT_EQ(back.training, m.training);
        EXPECT_EQ(back.normalization, m.normalization);
        EXPECT_EQ(back.feature_names, m.feature_names);
        for (std::size_t i = 0; i < probes.rows(); ++i) EXPECT_EQ(back.score(probes.row(i)), m.score(probes.row(i))) << to_string(kind);
        EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    }
}

TEST(DetectorModel, DeterministicTraining) {
    const auto train = cluster(150, 3, 81, 0.2);
    DetectorOptions o;
    o.autoencoder.epochs = 3;
    o.ocsvm.kernel.gamma = 0.5;
    o.seed = 9;
    for (auto kind : kAllDetectorKinds)
        EXPECT_EQ(to_json(train_detector(kind, train, names(3), o)).dump(), to_json(train_detector(kind, train, names(3), o)).dump());
}

TEST(DetectorModel, ClassifyBoundsAndSchema) {
    auto m = train_detector(DetectorKind::copod, cluster(50, 2, 91), names(2));
    m.thresholds = {-1.0, 2.0};
    EXPECT_FALSE(verdict_for(m, "s", 0, 2.0).anomalous);
    const auto above = verdict_for(m, "s", 0, std::nextafter(2.0, 3.0));
    EXPECT_TRUE(above.anomalous);
    EXPECT_EQ(above.side, ThresholdSide::above);
    EXPECT_EQ(verdict_for(m, "s", 0, -1.5).side, ThresholdSide::below);

    FeatureRow row{"s", 0, {"f0", "fx"}, {0.5, 0.5}};
    try {
        classify(m, row);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("fx"), std::string::npos);
    }
    row.names = names(2);
    EXPECT_NO_THROW(classify(m, row));
    EXPECT_THROW(train_detector(DetectorKind::copod, cluster(50, 3, 1), names(2)), SchemaError);
}

TEST(DetectorModel, BenignFixtureMostlyWithin) {
    const auto train = cluster(600, 5, 101, 0.1), test = cluster(200, 5, 102, 0.1);
    DetectorOptions o;
    o.autoencoder.epochs = 40;
    o.seed = 1;
    const auto m = train_detector(DetectorKind::autoencoder, train, names(5), o);
    std::size_t within = 0;
    for (std::size_t i = 0; i < test.rows(); ++i) within += !verdict_for(m, "s", 0, m.score(test.row(i))).anomalous;
    EXPECT_GE(within, 180u);
}

TEST(DetectorModel, LoadRejectsForeignFiles) {
    EXPECT_THROW(detector_model_from_json({{"format", "other"}}), SchemaError);
    EXPECT_THROW(detector_model_from_json({{"format", "cyberspec-model"}, {"version", 99}}), SchemaError);
    const auto dir = oracle::scratch_dir("model");
    std::ofstream(dir / "bad.json") << "{not json";
    EXPECT_THROW(load_model(dir / "bad.json"), SchemaError);
    std::filesystem::remove_all(dir);
}
