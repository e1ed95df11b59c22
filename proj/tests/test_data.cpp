#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "causim/data.hpp"

using namespace causim::data;
using causim::num::Tensor;

namespace {

RawTable table_from(const std::string& csv, Source s) {
    std::istringstream in(csv);
    return read_table_stream(in, s);
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    auto p = std::filesystem::temp_directory_path() / ("causim_test_" + name);
    std::ofstream(p) << content;
    return p;
}

}  // namespace

TEST(Table, ParsesDatesAndMissingCells) {
    auto t = table_from("date,a,b\n2020-01-01,1,\n2020-01-02T12:30:00,2.5,4\n", Source::Observed);
    ASSERT_EQ(t.rows(), 2u);
    EXPECT_TRUE(is_missing(t.columns[1][0]));
    EXPECT_EQ(t.columns[0][1], 2.5);
    EXPECT_EQ(format_timestamp(t.times[1]), "2020-01-02T12:30:00");
}

TEST(Table, RejectsBadInput) {
    EXPECT_THROW(table_from("date,a\n2020-13-01,1\n", Source::Observed), InputError);
    EXPECT_THROW(table_from("date,a\n2020-01-01,x\n", Source::Observed), InputError);
    EXPECT_THROW(table_from("date,a\n2020-01-02,1\n2020-01-01,2\n", Source::Observed), InputError);
    EXPECT_THROW(table_from("date,a,a\n2020-01-01,1,2\n", Source::Observed), InputError);
}

TEST(Table, RoundTrip) {
    auto t = table_from("date,a,b\n2020-01-01,1,\n2020-01-02,0.1,4\n", Source::Simulated);
    std::ostringstream out;
    write_table_stream(out, t);
    auto u = table_from(out.str(), Source::Simulated);
    EXPECT_EQ(u.columns[0], t.columns[0]);
    EXPECT_TRUE(is_missing(u.columns[1][0]));
    EXPECT_EQ(u.times, t.times);
}

TEST(Ingest, MinMaxAndConstantColumns) {
    auto obs = table_from("date,y,k\n2020-01-01,0,7\n2020-01-02,5,7\n2020-01-03,10,7\n", Source::Observed);
    auto sim = table_from("date,z,K\n2020-01-01,1,7\n2020-01-02,2,7\n2020-01-03,3,7\n", Source::Simulated);
    IngestConfig cfg;
    cfg.target = "y";
    auto ds = ingest(obs, sim, cfg);
    EXPECT_EQ(ds.x_obs(0, 0), 0.0);
    EXPECT_EQ(ds.x_obs(1, 0), 0.5);
    EXPECT_EQ(ds.x_obs(2, 0), 1.0);
    for (int r = 0; r < 3; ++r) EXPECT_EQ(ds.x_obs(r, 1), 0.0);
    ASSERT_EQ(ds.c(), 1u);  // k ~ K, case-insensitive
    EXPECT_EQ(ds.overlap[0], (std::pair<std::size_t, std::size_t>{1, 1}));
}

TEST(Ingest, DropsSparseColumnsAndTarget) {
    std::string obs_csv = "date,y,sparse,w\n";
    for (int d = 1; d <= 10; ++d)
        obs_csv += "2020-01-" + std::string(d < 10 ? "0" : "") + std::to_string(d) + "," + std::to_string(d) + "," +
                   (d <= 4 ? "1" : "") + "," + std::to_string(d * d) + "\n";
    std::string sim_csv = "date,w,sparse\n";
    for (int d = 1; d <= 10; ++d)
        sim_csv += "2020-01-" + std::string(d < 10 ? "0" : "") + std::to_string(d) + "," + std::to_string(d) + ",1\n";
    auto obs = table_from(obs_csv, Source::Observed);
    auto sim = table_from(sim_csv, Source::Simulated);
    IngestConfig cfg;
    cfg.target = "y";
    auto ds = ingest(obs, sim, cfg);
    EXPECT_EQ(ds.obs_names, (std::vector<std::string>{"y", "w"}));
    cfg.target = "sparse";
    EXPECT_THROW(ingest(obs, sim, cfg), InputError);
}

TEST(Ingest, NoOverlapIsAnError) {
    auto obs = table_from("date,y\n2020-01-01,1\n2020-01-02,2\n", Source::Observed);
    auto sim = table_from("date,z\n2020-01-01,1\n2020-01-02,2\n", Source::Simulated);
    IngestConfig cfg;
    cfg.target = "y";
    EXPECT_THROW(ingest(obs, sim, cfg), InputError);
    cfg.overlap_override = {{"y", "z"}};
    EXPECT_EQ(ingest(obs, sim, cfg).c(), 1u);
}

TEST(Ingest, OverrideFile) {
    auto p = temp_file("overlap.csv", "obs_name,sim_name\ny,z\n");
    auto pairs = read_overlap_file(p.string());
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0], (std::pair<std::string, std::string>{"y", "z"}));
}

TEST(Ingest, DailyMeanAndAlignment) {
    auto obs = table_from(
        "date,y\n2020-01-01T01:00,1\n2020-01-01T13:00,3\n2020-01-03,5\n2020-01-04,6\n", Source::Observed);
    auto sim = table_from("date,y\n2020-01-01,1\n2020-01-02,2\n2020-01-03,3\n", Source::Simulated);
    IngestConfig cfg;
    cfg.target = "y";
    auto ds = ingest(obs, sim, cfg);
    ASSERT_EQ(ds.rows(), 2u);
    const std::chrono::sys_days d1 = std::chrono::year{2020} / 1 / 1;
    EXPECT_EQ(ds.dates[0], d1);
    EXPECT_NEAR(ds.obs_scale[0].unscale(ds.x_obs(0, 0)), 2.0, 1e-12);
    cfg.align = Align::Union;
    auto du = ingest(obs, sim, cfg);
    EXPECT_EQ(du.rows(), 4u);
    EXPECT_EQ(du.mask_obs(1, 0), 0.0);  // 01-02 has no observation
    EXPECT_EQ(du.mask_obs(3, 0), 1.0);
}

TEST(Ingest, MaskMatchesRawPresenceAndImputationInRange) {
    SyntheticSpec spec;
    spec.seed = 4;
    spec.n_obs = 200;
    spec.n_sim = 400;
    auto raw = generate_synthetic_raw(spec);
    auto ds = ingest(raw.obs, raw.sim, raw.ingest);
    ASSERT_EQ(ds.rows(), 400u);
    std::map<std::chrono::sys_days, std::size_t> row_of;
    for (std::size_t r = 0; r < ds.rows(); ++r) row_of[ds.dates[r]] = r;
    std::size_t measured = 0;
    for (std::size_t r = 0; r < raw.obs.rows(); ++r) {
        const std::size_t rr = row_of.at(std::chrono::floor<std::chrono::days>(raw.obs.times[r]));
        for (std::size_t j = 0; j < raw.obs.cols(); ++j) {
            const bool present = !is_missing(raw.obs.columns[j][r]);
            EXPECT_EQ(ds.mask_obs(rr, j), present ? 1.0 : 0.0);
            measured += present;
            if (present) EXPECT_NEAR(ds.obs_scale[j].unscale(ds.x_obs(rr, j)), raw.obs.columns[j][r], 1e-9);
        }
    }
    double total = 0.0;
    for (double v : ds.mask_obs.values()) total += v;
    EXPECT_EQ(total, static_cast<double>(measured));
    ds.validate();
}

TEST(Scaling, RoundTrip) {
    ColumnScale s{-3.5, 12.25};
    for (double x : {-3.5, 0.0, 1.0 / 3.0, 7.7, 12.25}) EXPECT_NEAR(s.unscale(s.scale(x)), x, 1e-12);
    ColumnScale z{7, 7};
    EXPECT_EQ(z.scale(7), 0.0);
}

TEST(Generator, EmptyAndCompleteGraphs) {
    SyntheticSpec spec;
    spec.nodes = 5;
    spec.edge_prob = 0.0;
    spec.extra_sim_vars = 0;
    spec.shifted_columns = 0;
    spec.n_obs = 50;
    spec.n_sim = 60;
    auto raw = generate_synthetic_raw(spec);
    EXPECT_EQ(raw.truth.edge_count(), 0u);
    spec.nodes = 3;
    spec.edge_prob = 1.0;
    raw = generate_synthetic_raw(spec);
    EXPECT_EQ(raw.truth.edge_count(), 3u);
    EXPECT_TRUE(is_acyclic(raw.truth.adjacency));
}

TEST(Generator, Deterministic) {
    SyntheticSpec spec;
    spec.seed = 17;
    spec.n_obs = 100;
    spec.n_sim = 200;
    auto [a, ga] = generate_synthetic_pair(spec);
    auto [b, gb] = generate_synthetic_pair(spec);
    EXPECT_EQ(a.x_obs, b.x_obs);
    EXPECT_EQ(a.x_sim, b.x_sim);
    EXPECT_EQ(a.mask_obs, b.mask_obs);
    EXPECT_EQ(ga.adjacency, gb.adjacency);
}

TEST(Generator, GraphsAlwaysAcyclicAndUnionSized) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.edge_prob = 0.6;
        spec.n_obs = 10;
        spec.n_sim = 10;
        auto raw = generate_synthetic_raw(spec);
        EXPECT_TRUE(is_acyclic(raw.truth.adjacency));
        EXPECT_EQ(raw.truth.size(), 14u);
        EXPECT_EQ(raw.shifted.size(), 3u);
    }
}

TEST(BiasReport, IdenticalAndShifted) {
    DualDataset ds;
    ds.obs_names = {"a"};
    ds.sim_names = {"a"};
    ds.overlap = {{0, 0}};
    Tensor x(100, 1);
    for (std::size_t r = 0; r < 100; ++r) x(r, 0) = 0.005 + 0.7 * static_cast<double>(r) / 100.0;
    Tensor m(100, 1, 1.0);
    auto same = bias_report(ds, x, x, m);
    EXPECT_EQ(same[0].kl, 0.0);
    EXPECT_EQ(same[0].mean_difference, 0.0);
    Tensor y = x;
    for (double& v : y.values()) v += 0.2;
    auto shifted = bias_report(ds, y, x, m);
    EXPECT_NEAR(shifted[0].mean_difference, 0.2, 1e-12);
    EXPECT_GT(shifted[0].kl, 0.0);
}

TEST(BiasReport, ShiftedColumnsRankFirst) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SyntheticSpec spec;
        spec.seed = seed;
        auto raw = generate_synthetic_raw(spec);
        auto ds = ingest(raw.obs, raw.sim, raw.ingest);
        auto rep = bias_report(ds);
        std::set<std::string> top, want;
        for (std::size_t i = 0; i < raw.shifted.size(); ++i) {
            top.insert(rep[i].obs_name);
            want.insert(raw.sem.names[raw.shifted[i]]);
        }
        EXPECT_EQ(top, want) << "seed " << seed;
    }
}

TEST(GroundTruth, LoadsEdgeListAndJson) {
    auto csv = temp_file("gt.csv", "src,dst\na,b\nb,c\n");
    auto g = load_ground_truth(csv.string());
    EXPECT_EQ(g.names, (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(g.edge_count(), 2u);
    auto json = temp_file("gt.json", R"({"nodes":["x","y"],"adjacency":[[0,1],[0,0]]})");
    auto h = load_ground_truth(json.string());
    EXPECT_EQ(h.adjacency(0, 1), 1.0);
    auto cyc = temp_file("cyc.csv", "a,b\nb,a\n");
    EXPECT_THROW(load_ground_truth(cyc.string()), InputError);
}

TEST(GraphUtil, FindCycle) {
    Tensor a{{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    auto c = find_cycle(a);
    EXPECT_EQ(c.size(), 3u);
    Tensor b{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    EXPECT_TRUE(find_cycle(b).empty());
    EXPECT_EQ(*topological_order(b), (std::vector<std::size_t>{0, 1, 2}));
}
