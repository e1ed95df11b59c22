#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "causim/data.hpp"
#include "causim/trainer.hpp"
#include "composite_gradcheck.hpp"

using namespace causim;
using num::Tensor;

namespace {

// x1 -> x2 = 2 x1 + noise, x3 independent; the simulator reports all three with extra noise.
data::DualDataset two_variable_data(std::uint64_t seed, std::size_t n = 200) {
    num::Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Tensor raw(n, 3), sim(n, 3);
    for (std::size_t r = 0; r < n; ++r) {
        raw(r, 0) = z(rng);
        raw(r, 1) = 2.0 * raw(r, 0) + 0.5 * z(rng);
        raw(r, 2) = z(rng);
        for (std::size_t j = 0; j < 3; ++j) sim(r, j) = raw(r, j) + 0.1 * z(rng);
    }
    data::DualDataset ds;
    ds.obs_names = {"x1", "x2", "x3"};
    ds.sim_names = {"x1", "x2", "x3"};
    ds.overlap = {{0, 0}, {1, 1}, {2, 2}};
    ds.target = 1;
    ds.x_obs = Tensor(n, 3);
    ds.x_sim = Tensor(n, 3);
    ds.mask_obs = Tensor(n, 3, 1.0);
    for (std::size_t j = 0; j < 3; ++j) {
        double lo = raw(0, j), hi = raw(0, j);
        for (std::size_t r = 0; r < n; ++r) {
            lo = std::min({lo, raw(r, j), sim(r, j)});
            hi = std::max({hi, raw(r, j), sim(r, j)});
        }
        data::ColumnScale sc{lo, hi};
        ds.obs_scale.push_back(sc);
        ds.sim_scale.push_back(sc);
        for (std::size_t r = 0; r < n; ++r) {
            ds.x_obs(r, j) = sc.scale(raw(r, j));
            ds.x_sim(r, j) = sc.scale(sim(r, j));
        }
    }
    for (std::size_t r = 0; r < n; ++r)
        ds.dates.push_back(std::chrono::sys_days{std::chrono::days{static_cast<int>(r)}});
    return ds;
}

trainer::TrainConfig quick_config(std::uint64_t seed, std::size_t epochs) {
    trainer::TrainConfig c;
    c.seed = seed;
    c.epochs = epochs;
    c.lr = 1e-2;
    c.graph_lr = 1e-2;
    c.loss.sigma_rec = 0.02;
    c.model.hidden = 16;
    c.model.latent = 4;
    return c;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST(Train, CompositeGradientMatchesFiniteDifferences) {
    auto ds = causim::testing::composite_toy();
    ASSERT_EQ(data::NodeMap::build(ds).size(), 6u);
    ASSERT_EQ(ds.rows(), 32u);
    auto r = causim::testing::composite_gradcheck(ds, causim::testing::composite_config());
    EXPECT_LT(r.worst_rel, 1e-4) << r.worst_where;
    EXPECT_GT(r.coords, 100u);
}

TEST(Train, TwoVariableRecovery) {
    std::vector<double> margin, edges12;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto ds = two_variable_data(seed);
        auto run = trainer::train(ds, quick_config(seed, 300));
        const Tensor& P = run.probabilities;
        const double pair12 = P(0, 1) + P(1, 0);
        margin.push_back(pair12 - std::max(P(0, 2) + P(2, 0), P(1, 2) + P(2, 1)));
        auto g = trainer::extract_graph(P, 0.5, true);
        edges12.push_back(g.adjacency(0, 1) + g.adjacency(1, 0));
    }
    EXPECT_GT(median(margin), 0.0);
    EXPECT_EQ(median(edges12), 1.0);
}

TEST(Train, DeterministicTrajectory) {
    auto ds = two_variable_data(7, 80);
    auto cfg = quick_config(3, 6);
    auto a = trainer::train(ds, cfg);
    auto b = trainer::train(ds, cfg);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        EXPECT_EQ(a.log[e].loss.total, b.log[e].loss.total);
        EXPECT_EQ(a.log[e].loss.sim_loglik, b.log[e].loss.sim_loglik);
    }
    EXPECT_EQ(a.probabilities, b.probabilities);
    EXPECT_EQ(a.config_hash, b.config_hash);
    cfg.seed = 4;
    EXPECT_NE(trainer::train(ds, cfg).log.back().loss.total, a.log.back().loss.total);
}

TEST(Train, RejectsBadConfig) {
    auto ds = two_variable_data(1, 20);
    auto cfg = quick_config(0, 0);
    EXPECT_THROW(trainer::train(ds, cfg), num::ContractViolation);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    EXPECT_THROW(trainer::train(ds, cfg), num::ContractViolation);
    cfg.batch_size = 8;
    ds.overlap.clear();
    EXPECT_THROW(trainer::train(ds, cfg), num::ContractViolation);
    cfg.use_dm = false;
    EXPECT_NO_THROW(trainer::train(ds, cfg));
}

TEST(Train, LogIsFiniteAndAdditive) {
    auto ds = two_variable_data(2, 60);
    auto cfg = quick_config(1, 4);
    auto run = trainer::train(ds, cfg);
    ASSERT_EQ(run.log.size(), 4u);
    for (const auto& e : run.log) {
        const auto& b = e.loss;
        EXPECT_TRUE(std::isfinite(b.total));
        EXPECT_GE(b.sim_kl, 0.0);
        EXPECT_GE(b.obs_kl, 0.0);
        EXPECT_GE(b.graph_kl, 0.0);
        EXPECT_GE(b.loss_a, 0.0);
        EXPECT_NEAR(objective::total_loss(b, cfg.loss).total, b.total, 1e-10 * std::max(1.0, std::abs(b.total)));
    }
    EXPECT_DOUBLE_EQ(run.log.front().temperature, cfg.tau_start);
    EXPECT_DOUBLE_EQ(run.log.back().temperature, cfg.tau_end);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(run.probabilities(i, i), 0.0);
}

TEST(Train, ManifestMatchesCheckpoint) {
    auto ds = two_variable_data(2, 40);
    auto run = trainer::train(ds, quick_config(1, 2));
    EXPECT_EQ(run.manifest.at("config_hash"), run.config_hash);
    EXPECT_EQ(run.manifest.at("config").at("loss").at("lambda_dm"), 0.5);
    EXPECT_EQ(run.manifest.at("config").at("loss").at("lambda_sp"), 0.1);
    EXPECT_EQ(run.manifest.at("config").at("loss").at("lambda_a"), 1.0);
    const auto path = std::filesystem::temp_directory_path() / "causim_trainer_ckpt.json";
    vgae::save_checkpoint(path.string(), run.model, run.config_hash);
    std::string hash;
    auto back = vgae::load_checkpoint(path.string(), &hash);
    std::filesystem::remove(path);
    EXPECT_EQ(hash, run.config_hash);
    EXPECT_EQ(vgae::edge_probabilities(back), run.probabilities);
}

TEST(Train, DistributionMatchingReducesBiasFromInitialisation) {
    data::SyntheticSpec spec;
    spec.nodes = 5;
    spec.extra_sim_vars = 1;
    spec.shifted_columns = 2;
    spec.n_obs = 150;
    spec.n_sim = 300;
    spec.seed = 4;
    auto [ds, truth] = data::generate_synthetic_pair(spec);
    auto cfg = quick_config(2, 25);
    vgae::Model init = vgae::Model::create(data::NodeMap::build(ds), ds.p(), ds.d(), cfg.model, cfg.seed);
    init.fit_input_scaling(ds.x_obs, ds.x_sim);
    const double before = data::mean_kl(data::bias_report(ds, trainer::reconstruct_sim(init, ds), ds.x_obs, ds.mask_obs));
    auto run = trainer::train(ds, cfg);
    const double after =
        data::mean_kl(data::bias_report(ds, trainer::reconstruct_sim(run.model, ds), ds.x_obs, ds.mask_obs));
    EXPECT_LE(after, before);
}

TEST(ExtractGraph, Examples) {
    Tensor half(3, 3, 0.5);
    EXPECT_EQ(trainer::extract_graph(half, 0.5, false).adjacency.sum(), 0.0);

    Tensor P(3, 3, 0.1);
    P(0, 1) = 0.9;
    auto g = trainer::extract_graph(P, 0.5, false);
    EXPECT_EQ(g.adjacency.sum(), 1.0);
    EXPECT_EQ(g.adjacency(0, 1), 1.0);

    Tensor C(2, 2);
    C(0, 1) = 0.9;
    C(1, 0) = 0.6;
    auto soft = trainer::extract_graph(C, 0.5, false);
    EXPECT_EQ(soft.adjacency.sum(), 2.0);
    auto dag = trainer::extract_graph(C, 0.5, true);
    EXPECT_EQ(dag.adjacency(0, 1), 1.0);
    EXPECT_EQ(dag.adjacency(1, 0), 0.0);
    ASSERT_EQ(dag.deletions.size(), 1u);
    EXPECT_EQ(dag.deletions[0], (std::pair<std::size_t, std::size_t>{1, 0}));

    EXPECT_THROW(trainer::extract_graph(P, 0.0, false), num::ContractViolation);
    EXPECT_THROW(trainer::extract_graph(P, 1.0, false), num::ContractViolation);
}

TEST(ExtractGraph, ForceDagAlwaysSortable) {
    num::Rng rng(99);
    std::uniform_int_distribution<std::size_t> size(2, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t V = size(rng);
        Tensor P = num::uniform(V, V, rng, 0.0, 1.0);
        auto g = trainer::extract_graph(P, 0.3, true);
        EXPECT_TRUE(data::is_acyclic(g.adjacency)) << trial;
        for (auto [i, j] : g.deletions) EXPECT_GT(P(i, j), 0.3);
    }
}

TEST(Artifacts, MatrixCsvAndLossLog) {
    const auto dir = std::filesystem::temp_directory_path() / "causim_artifacts_test";
    std::filesystem::create_directories(dir);
    Tensor M{{0.0, 0.25}, {1.0 / 3.0, 0.0}};
    trainer::write_matrix_csv((dir / "g.csv").string(), {"a", "b"}, M);
    std::ifstream in(dir / "g.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), "a,b\n0,0.25\n0.333333333333,0\n");

    trainer::EpochLog e;
    e.epoch = 3;
    e.loss.total = 1.5;
    trainer::write_loss_log((dir / "loss.jsonl").string(), {e, e});
    std::ifstream lin(dir / "loss.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(lin, line)) {
        auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch"), 3);
        EXPECT_EQ(j.at("total"), 1.5);
        ++lines;
    }
    EXPECT_EQ(lines, 2);
    std::filesystem::remove_all(dir);
}

TEST(TrainConfig, TemperatureScheduleIsLinear) {
    trainer::TrainConfig c;
    c.epochs = 11;
    EXPECT_DOUBLE_EQ(c.temperature(0), 1.0);
    EXPECT_NEAR(c.temperature(5), 0.65, 1e-15);
    EXPECT_DOUBLE_EQ(c.temperature(10), 0.3);
}
