#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "causim/cli.hpp"
#include "causim/graphsuite.hpp"

using namespace causim;
namespace fs = std::filesystem;
using nlohmann::json;
using num::Tensor;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("causim_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

struct Result {
    int code;
    std::string err;
};

Result run_cli(const std::string& args, const std::string& env = "") {
    const fs::path err = fs::temp_directory_path() / ("causim_cli_stderr_" + std::to_string(::getpid()));
    const std::string cmd = env + " \"" + CAUSIM_CLI_PATH + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, SynthIsByteIdenticalForAFixedSeed) {
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    ASSERT_EQ(run_cli("synth --seed 11 --out " + q(a)).code, 0);
    ASSERT_EQ(run_cli("synth --seed 11 --out " + q(b)).code, 0);
    for (const char* f : {"observed.csv", "simulated.csv", "truth.json", "truth_edges.csv", "dataset.json"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const auto c = scratch("synth_c");
    ASSERT_EQ(run_cli("synth --seed 12 --out " + q(c)).code, 0);
    EXPECT_NE(slurp(a / "observed.csv"), slurp(c / "observed.csv"));
}

TEST(Cli, EvalGraphOnTruthGivesFullRecall) {
    const auto s = scratch("eval_synth"), e = scratch("eval_out");
    ASSERT_EQ(run_cli("synth --seed 2 --out " + q(s)).code, 0);
    const auto truth = data::load_ground_truth((s / "truth.json").string());
    graphsuite::write_edge_matrix((s / "truth_matrix.csv").string(), {truth.names, truth.adjacency, "truth"});
    const auto r = run_cli("eval-graph --out " + q(e) + " --set paths.truth=" + q(s / "truth.json") +
                       " --set 'paths.predictions=[\"" + (s / "truth_matrix.csv").string() + "\"]'");
    ASSERT_EQ(r.code, 0) << r.err;
    const json rep = load(e / "eval_report.json");
    ASSERT_EQ(rep.size(), 1u);
    EXPECT_DOUBLE_EQ(rep[0]["recall"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(rep[0]["precision"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(rep[0]["auc"].get<double>(), 1.0);
    EXPECT_TRUE(fs::file_size(e / "l1_chart.svg") > 0);
}

TEST(Cli, UnknownKeyIsRejectedWithErrorJson) {
    const auto o = scratch("unknown_key");
    const auto r = run_cli("synth --out " + q(o) + " --set train.epochz=3");
    EXPECT_EQ(r.code, 2);
    const json e = json::parse(r.err);
    EXPECT_EQ(e["error"]["type"], "config");
    EXPECT_NE(e["error"]["message"].get<std::string>().find("train.epochz"), std::string::npos);
    EXPECT_FALSE(fs::exists(o / "manifest.json"));
}

TEST(Cli, WrongTypeIsAConfigError) {
    const auto r = run_cli("synth --out " + q(scratch("wrong_type")) + " --set train.epochs=\\\"many\\\"");
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, MissingInputFileExitsWithInputError) {
    const auto o = scratch("missing_input");
    const auto r = run_cli("discover --out " + q(o) + " --set paths.observed=/nonexistent/a.csv --set paths.simulated=/nonexistent/b.csv");
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(json::parse(r.err)["error"]["type"], "input");
    EXPECT_TRUE(fs::exists(o / "error.json"));
}

TEST(Cli, MissingConfigFileIsAnInputError) {
    EXPECT_EQ(run_cli("synth --config /nonexistent/run.json --out " + q(scratch("no_config"))).code, 3);
}

TEST(Cli, OverridesAreWrittenToEffectiveConfig) {
    const auto o = scratch("effective");
    ASSERT_EQ(run_cli("synth --seed 5 --out " + q(o) + " --set synth.nodes=6 --set synth.n_obs=40 --set synth.n_sim=40").code, 0);
    const json c = load(o / "config.json");
    EXPECT_EQ(c["seed"], 5);
    EXPECT_EQ(c["synth"]["nodes"], 6);
    EXPECT_EQ(c["synth"]["n_obs"], 40);
    EXPECT_TRUE(c["train"].contains("epochs"));
    const json m = load(o / "manifest.json");
    EXPECT_EQ(m["command"], "synth");
    EXPECT_EQ(m["config"], c);
    EXPECT_EQ(m["artifacts"].size(), 6u);
}

TEST(Cli, OutputRootComesFromEnvironment) {
    const auto root = scratch("env_root");
    ASSERT_EQ(run_cli("synth --seed 9", std::string(cli::kOutRootEnv) + "=" + q(root)).code, 0);
    EXPECT_TRUE(fs::exists(root / "synth-seed9" / "manifest.json"));
}

TEST(Cli, DiscoverIsDeterministicAndRerunsFromItsManifest) {
    const auto s = scratch("disc_synth"), a = scratch("disc_a"), b = scratch("disc_b");
    ASSERT_EQ(run_cli("synth --seed 4 --out " + q(s) + " --set synth.nodes=6 --set synth.n_obs=80 --set synth.n_sim=80").code, 0);
    const std::string common = " --config " + q(s / "run.json") + " --set train.epochs=3 --set train.model.hidden=8";
    ASSERT_EQ(run_cli("discover --out " + q(a) + common).code, 0);
    ASSERT_EQ(run_cli("discover --out " + q(b) + common).code, 0);
    for (const char* f : {"edge_probs.csv", "graph.csv", "loss_log.jsonl", "checkpoint.json", "eval_report.json"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

    const json m = load(a / "manifest.json");
    EXPECT_EQ(m["details"]["train_config_hash"], load(a / "checkpoint.json")["config_hash"]);
    const std::string probs = slurp(a / "edge_probs.csv");
    ASSERT_EQ(run_cli("discover --config " + q(a / "config.json")).code, 0);
    EXPECT_EQ(slurp(a / "edge_probs.csv"), probs);
}

TEST(Cli, BaselineWritesEveryMethod) {
    const auto s = scratch("base_synth"), o = scratch("base_out");
    ASSERT_EQ(run_cli("synth --seed 6 --out " + q(s) + " --set synth.nodes=5 --set synth.n_obs=60 --set synth.n_sim=60").code, 0);
    const auto r = run_cli("baseline --config " + q(s / "run.json") + " --out " + q(o) + " --set baseline.bootstrap_samples=3");
    ASSERT_EQ(r.code, 0) << r.err;
    const json rep = load(o / "baseline_report.json");
    for (const char* m : {"correlation", "notears", "bootstrap"}) {
        EXPECT_TRUE(fs::exists(o / (std::string(m) + ".csv"))) << m;
        EXPECT_TRUE(rep[m].contains("eval")) << m;
    }
    const auto pm = graphsuite::read_edge_matrix((o / "notears.csv").string());
    Tensor adj(pm.probs.rows(), pm.probs.cols());
    for (std::size_t i = 0; i < adj.size(); ++i) adj[i] = pm.probs[i] > 0.0;
    EXPECT_TRUE(data::is_acyclic(adj));
}

TEST(Cli, PredictReadsSitesAndSkeleton) {
    const auto d = scratch("pred_in"), o = scratch("pred_out");
    fs::create_directories(d);
    {
        std::ofstream sites(d / "sites.csv");
        sites << "a,b,y,site\n";
        num::Rng rng(1);
        std::normal_distribution<double> z(0.0, 1.0);
        for (int r = 0; r < 120; ++r) {
            const double a = z(rng), b = z(rng);
            sites << a << ',' << b << ',' << 1.5 * a + 0.1 * z(rng) << ',' << (r < 80 ? 0 : 1) << '\n';
        }
        std::ofstream sk(d / "skeleton.csv");
        sk << "a,b,y\n0,0,0.9\n0,0,0\n0,0,0\n";
    }
    const auto r = run_cli("predict --out " + q(o) + " --set paths.sites=" + q(d / "sites.csv") + " --set paths.skeleton=" +
                       q(d / "skeleton.csv") + " --set predict.target=y --set predict.grid=false --set predict.epochs=30");
    ASSERT_EQ(r.code, 0) << r.err;
    const json p = load(o / "predictions.json");
    for (const char* k : {"ecmpnn", "sage", "mlp", "random_guess"}) {
        EXPECT_EQ(p["results"][k]["zero_shot"]["test_rows"], 40) << k;
        EXPECT_EQ(p["results"][k]["few_shot"]["test_rows"], 32) << k;
    }
}

TEST(Cli, PredictWithoutSkeletonFailsForGraphModels) {
    const auto d = scratch("pred_noskel");
    fs::create_directories(d);
    std::ofstream(d / "sites.csv") << "a,y,site\n1,2,0\n2,3,1\n";
    const auto r = run_cli("predict --out " + q(d / "out") + " --set paths.sites=" + q(d / "sites.csv") + " --set predict.target=y");
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, AblateProducesOneRowPerToggleCombination) {
    const auto s = scratch("abl_synth"), o = scratch("abl_out");
    ASSERT_EQ(run_cli("synth --seed 8 --out " + q(s) + " --set synth.nodes=5 --set synth.n_obs=60 --set synth.n_sim=60").code, 0);
    ASSERT_EQ(run_cli("ablate --config " + q(s / "run.json") + " --out " + q(o) + " --set train.epochs=1 --set train.model.hidden=8").code, 0);
    std::ifstream in(o / "ablation.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "use_mask,use_dm,use_sp,recall,precision,auc,l1_edge_error,bias_kl");
    std::set<std::string> combos;
    while (std::getline(in, line)) combos.insert(line.substr(0, 5));
    EXPECT_EQ(combos.size(), 8u);
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_NE(run_cli("explode").code, 0); }
