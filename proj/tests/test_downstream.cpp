#include <gtest/gtest.h>

#include <cmath>

#include "causim/downstream.hpp"
#include "gradcheck.hpp"

using namespace causim;
using namespace causim::downstream;
using num::Tensor;

namespace {

PredictorConfig gnn(Kind kind, const Tensor& skeleton, std::uint64_t seed = 1) {
    PredictorConfig c;
    c.kind = kind;
    c.skeleton = skeleton;
    c.seed = seed;
    c.hidden = 6;
    return c;
}

Tensor chain(std::size_t V) {
    Tensor s(V, V);
    for (std::size_t i = 0; i + 1 < V; ++i) s(i, i + 1) = 1.0;
    return s;
}

// Relabels nodes by `perm` (old i -> new perm[i]) in data, skeleton and per-node parameters.
Predictor relabel(const Predictor& p, const std::vector<std::size_t>& perm) {
    Predictor q = p;
    const std::size_t V = p.V, H = p.config.hidden;
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) q.config.skeleton(perm[i], perm[j]) = p.config.skeleton(i, j);
    q.target = perm[p.target];
    q.build_neighbourhood();
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t c = 0; c < H; ++c) q.params[q.in_node].value(perm[i], c) = p.params[p.in_node].value(i, c);
    if (p.config.kind == Kind::ecmpnn)
        for (const auto& L : p.layers)
            for (std::size_t i = 0; i < V; ++i)
                for (std::size_t a = 0; a < H * H; ++a)
                    q.params[L.w].value.data()[perm[i] * H * H + a] = p.params[L.w].value.data()[i * H * H + a];
    return q;
}

Tensor permute_cols(const Tensor& X, const std::vector<std::size_t>& perm) {
    Tensor out(X.rows(), X.cols());
    for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) out(r, perm[c]) = X(r, c);
    return out;
}

SiteData same_distribution_sites(std::size_t n, std::uint64_t seed) {
    num::Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    SiteData d;
    d.names = {"a", "b", "y"};
    d.target = 2;
    d.X = Tensor(2 * n, 3);
    for (std::size_t r = 0; r < 2 * n; ++r) {
        d.X(r, 0) = z(rng);
        d.X(r, 1) = z(rng);
        d.X(r, 2) = 0.8 * d.X(r, 0) + 0.6 * z(rng);
        d.site.push_back(r < n ? 0 : 1);
    }
    return d;
}

}  // namespace

TEST(GnnForward, IsolatedTargetIgnoresOtherNodes) {
    Tensor s(4, 4);
    s(0, 1) = s(1, 2) = 1.0;
    for (Kind k : {Kind::ecmpnn, Kind::sage}) {
        Predictor p = Predictor::create(gnn(k, s), 4, 3);
        num::Rng rng(2);
        Tensor X = num::randn(5, 4, rng), Y = num::randn(5, 4, rng);
        Tensor a = predict(p, X), b = predict(p, Y);
        for (std::size_t r = 0; r < 5; ++r) {
            EXPECT_EQ(a[r], a[0]);
            EXPECT_EQ(b[r], a[0]);
        }
    }
}

TEST(GnnForward, SageCombineWithOneNeighbour) {
    Tensor s(2, 2);
    s(0, 1) = 1.0;
    Predictor p = Predictor::create(gnn(Kind::sage, s), 2, 1);
    num::Tape t;
    Tensor h{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
    Tensor c = sage_combine(t.constant(h), p).value();
    EXPECT_EQ(c, (Tensor{{1, 2, 3, 0, 0, 0}, {4, 5, 6, 1, 2, 3}}));
    for (Aggregator a : {Aggregator::sum, Aggregator::max}) {
        PredictorConfig cfg = gnn(Kind::sage, s);
        cfg.aggregator = a;
        Predictor q = Predictor::create(cfg, 2, 1);
        EXPECT_EQ(sage_combine(t.constant(h), q).value(), c);
    }
}

TEST(GnnForward, PermutationOfNonTargetNodes) {
    Tensor s(4, 4);
    s(0, 3) = s(1, 3) = s(2, 1) = s(0, 2) = 1.0;
    const std::vector<std::size_t> perm{2, 0, 1, 3};
    num::Rng rng(5);
    const Tensor X = num::randn(6, 4, rng);
    for (Kind k : {Kind::ecmpnn, Kind::sage}) {
        Predictor p = Predictor::create(gnn(k, s, 7), 4, 3);
        Predictor q = relabel(p, perm);
        Tensor a = predict(p, X), b = predict(q, permute_cols(X, perm));
        for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(a[r], b[r], 1e-12) << to_string(k);
    }
}

TEST(GnnForward, RespectsSkeletonReach) {
    // 0 -> 1 -> 2 -> 3 (target), 4 -> 0. With two layers only nodes 1 and 2 reach the target.
    Tensor s = chain(4);
    Tensor s5(5, 5);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) s5(i, j) = s(i, j);
    s5(4, 0) = 1.0;
    num::Rng rng(1);
    const Tensor X = num::randn(8, 5, rng);
    for (Kind k : {Kind::ecmpnn, Kind::sage}) {
        PredictorConfig cfg = gnn(k, s5);
        cfg.layers = 2;
        Predictor p = Predictor::create(cfg, 5, 3);
        const Tensor base = predict(p, X);
        for (std::size_t zeroed : {0u, 4u, 3u}) {
            Tensor Z = X;
            for (std::size_t r = 0; r < Z.rows(); ++r) Z(r, zeroed) = 0.0;
            EXPECT_EQ(predict(p, Z), base) << to_string(k) << " node " << zeroed;
        }
        Tensor Z = X;
        for (std::size_t r = 0; r < Z.rows(); ++r) Z(r, 2) = 0.0;
        EXPECT_NE(predict(p, Z), base);
    }
}

TEST(GnnForward, GradientsMatchFiniteDifferences) {
    Tensor s(4, 4);
    s(0, 3) = s(1, 3) = s(2, 1) = 1.0;
    num::Rng rng(3);
    const Tensor X = num::randn(5, 4, rng);
    for (Kind k : {Kind::ecmpnn, Kind::sage, Kind::mlp}) {
        PredictorConfig cfg = gnn(k, s);
        Predictor p = Predictor::create(cfg, 4, 3);
        // Shift biases away from zero so few units sit on a ReLU kink.
        for (auto& prm : p.params.all())
            if (prm.name.find(".b") != std::string::npos) prm.value = Tensor(prm.value.rows(), prm.value.cols(), 0.1);
        auto r = causim::testing::gradcheck(p.params, [&](num::Tape& t, const num::ParameterSet& ps) {
            Predictor q = p;
            q.params = ps;
            return num::sum(num::square(forward(t, q, X)));
        }, 1e-6);
        EXPECT_LT(r.worst_rel, 1e-5) << to_string(k) << " " << r.worst_where;
    }
}

TEST(Fit, CopiesConnectedFeature) {
    num::Rng rng(4);
    Tensor X = num::randn(300, 3, rng);
    for (std::size_t r = 0; r < X.rows(); ++r) X(r, 2) = X(r, 0);
    Tensor s(3, 3);
    s(0, 2) = s(1, 2) = 1.0;
    for (Kind k : {Kind::ecmpnn, Kind::sage, Kind::mlp}) {
        PredictorConfig cfg = gnn(k, s, 2);
        cfg.hidden = 16;
        cfg.lr = 1e-2;
        cfg.epochs = 300;
        cfg.patience = 50;
        Predictor p = fit_predictor(cfg, X, 2);
        std::vector<double> y(X.rows());
        for (std::size_t r = 0; r < X.rows(); ++r) y[r] = X(r, 2);
        EXPECT_LT(mse(predict(p, X), y), 1e-3) << to_string(k);
    }
}

TEST(Fit, RandomGuessStoresTargetsOnly) {
    Tensor X{{1, 10}, {2, 20}, {3, 30}};
    PredictorConfig cfg;
    cfg.kind = Kind::random_guess;
    Predictor p = fit_predictor(cfg, X, 1);
    EXPECT_EQ(p.params.size(), 0u);
    EXPECT_EQ(p.train_targets, (std::vector<double>{10, 20, 30}));
    Tensor pr = predict(p, Tensor(50, 2));
    for (double v : pr.values()) EXPECT_TRUE(v == 10 || v == 20 || v == 30);
}

TEST(Fit, SameSeedSameParameters) {
    num::Rng rng(6);
    Tensor X = num::randn(60, 3, rng);
    PredictorConfig cfg = gnn(Kind::ecmpnn, chain(3), 9);
    cfg.epochs = 5;
    Predictor a = fit_predictor(cfg, X, 2), b = fit_predictor(cfg, X, 2);
    for (num::ParamId id = 0; id < a.params.size(); ++id) EXPECT_EQ(a.params[id].value, b.params[id].value);
    cfg.seed = 10;
    EXPECT_NE(fit_predictor(cfg, X, 2).params[0].value, a.params[0].value);
}

TEST(Fit, SingleRowProceeds) {
    PredictorConfig cfg = gnn(Kind::mlp, Tensor(), 1);
    cfg.epochs = 3;
    Predictor p = fit_predictor(cfg, Tensor{{0.5, 1.0}}, 1);
    EXPECT_EQ(p.epochs_run, 3u);
    EXPECT_THROW(fit_predictor(cfg, Tensor(0, 2), 1), num::ContractViolation);
}

TEST(Fit, GridPicksLowestValidation) {
    num::Rng rng(8);
    Tensor X = num::randn(80, 2, rng);
    PredictorConfig cfg = gnn(Kind::mlp, Tensor(), 1);
    cfg.epochs = 10;
    auto g = fit_grid(cfg, X, 1);
    ASSERT_EQ(g.cells.size(), 9u);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : g.cells) best = std::min(best, c.at("validation_mse").get<double>());
    EXPECT_EQ(g.predictor.best_validation, best);
}

TEST(Evaluate, ErrorsAndJensen) {
    std::vector<double> y{1.0, -2.0, 0.5};
    Tensor perfect(3, 1);
    for (std::size_t i = 0; i < 3; ++i) perfect[i] = y[i];
    auto e = prediction_errors(perfect, y);
    EXPECT_EQ(e.mse, 0.0);
    EXPECT_EQ(e.mae, 0.0);
    num::Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor p = num::randn(3, 1, rng);
        auto f = prediction_errors(p, y);
        EXPECT_GE(f.mse, 0.0);
        EXPECT_LE(f.mae * f.mae, f.mse + 1e-15);
    }
    EXPECT_THROW(prediction_errors(Tensor(0, 1), {}), num::ContractViolation);
}

TEST(Evaluate, RandomGuessIsTwiceTheVariance) {
    SiteData d = same_distribution_sites(4000, 11);
    PredictorConfig cfg;
    cfg.kind = Kind::random_guess;
    auto r = evaluate_ood(cfg, d, {{0}, {1}, 0.0, 3});
    // Target variance is 0.8² + 0.6² = 1.
    EXPECT_NEAR(r.errors.mse / 2.0, 1.0, 0.15);
}

TEST(Evaluate, ZeroShotEqualsFewShotAtZeroFraction) {
    SiteData d = same_distribution_sites(100, 2);
    PredictorConfig cfg = gnn(Kind::ecmpnn, Tensor{{0, 0, 1}, {0, 0, 1}, {0, 0, 0}}, 4);
    cfg.epochs = 5;
    auto a = evaluate_ood(cfg, d, {{0}, {1}, 0.0, 5});
    auto b = evaluate_ood(cfg, d, {{0}, {1}, 0.0, 5});
    EXPECT_EQ(a.errors.mse, b.errors.mse);
    EXPECT_EQ(a.test_rows, 100u);
    auto c = evaluate_ood(cfg, d, {{0}, {1}, 0.2, 5});
    EXPECT_EQ(c.train_rows, 120u);
    EXPECT_EQ(c.test_rows, 80u);
}

TEST(Split, DisjointAndSeeded) {
    SiteData d = same_distribution_sites(50, 1);
    auto s = make_split(d, {{0}, {1}, 0.2, 7});
    EXPECT_EQ(s.train.size(), 60u);
    EXPECT_EQ(s.test.size(), 40u);
    for (std::size_t r : s.test) EXPECT_EQ(std::count(s.train.begin(), s.train.end(), r), 0);
    EXPECT_EQ(make_split(d, {{0}, {1}, 0.2, 7}).test, s.test);
    EXPECT_NE(make_split(d, {{0}, {1}, 0.2, 8}).test, s.test);
    EXPECT_THROW(make_split(d, {{0}, {0}, 0.0, 1}), num::ContractViolation);
    PredictorConfig cfg;
    cfg.kind = Kind::random_guess;
    EXPECT_THROW(evaluate_ood(cfg, d, {{0}, {2}, 0.0, 1}), num::ContractViolation);
}

TEST(Split, RestrictsToCommonColumns) {
    SiteData d = same_distribution_sites(30, 3);
    for (std::size_t r = 30; r < 60; ++r) d.X(r, 1) = std::nan("");
    PredictorConfig cfg = gnn(Kind::ecmpnn, Tensor{{0, 0, 1}, {0, 0, 1}, {0, 0, 0}}, 4);
    cfg.epochs = 2;
    auto r = evaluate_ood(cfg, d, {{0}, {1}, 0.0, 1});
    EXPECT_EQ(r.features, (std::vector<std::string>{"a", "y"}));
    EXPECT_EQ(r.predictor.config.skeleton, (Tensor{{0, 1}, {0, 0}}));
    EXPECT_EQ(r.predictor.target, 1u);
}

TEST(Sites, TwoSiteGeneratorShiftsTestSite) {
    data::SyntheticSpec spec;
    spec.seed = 2;
    auto raw = data::generate_synthetic_raw(spec);
    const std::size_t target = static_cast<std::size_t>(
        std::find(raw.sem.names.begin(), raw.sem.names.end(), raw.target) - raw.sem.names.begin());
    TwoSiteSpec ts;
    ts.n_train_site = 400;
    ts.n_test_site = 300;
    SiteData d = two_site_data(raw.sem, spec.nodes, target, ts);
    ASSERT_EQ(d.X.rows(), 700u);
    ASSERT_EQ(d.X.cols(), spec.nodes);
    EXPECT_EQ(d.target, target);
    double m0 = 0, shift = 0;
    for (std::size_t c = 0; c < d.X.cols(); ++c) {
        double a = 0, b = 0;
        for (std::size_t r = 0; r < 400; ++r) a += d.X(r, c);
        for (std::size_t r = 400; r < 700; ++r) b += d.X(r, c);
        m0 = std::max(m0, std::abs(a / 400));
        shift = std::max(shift, std::abs(b / 300));
    }
    EXPECT_LT(m0, 1e-12);
    EXPECT_GT(shift, 0.5);
}

TEST(Skeleton, RestrictedByName) {
    Tensor g{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    Tensor s = restrict_skeleton({"a", "b", "c"}, g, {"c", "b", "z"});
    EXPECT_EQ(s, (Tensor{{0, 0, 0}, {1, 0, 0}, {0, 0, 0}}));
}
