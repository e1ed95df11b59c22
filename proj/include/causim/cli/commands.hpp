#pragma once

#include <chrono>
#include <cstdlib>
#include <future>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causim/cli/config.hpp"
#include "causim/data/bias.hpp"
#include "causim/vgae/checkpoint.hpp"

namespace causim::cli {

namespace fs = std::filesystem;
using num::Tensor;

inline constexpr const char* kOutRootEnv = "CAUSIM_OUT_ROOT";

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"synth", "discover", "eval-graph", "baseline", "predict", "ablate"};
    return c;
}

/// Output directory, written artifacts and the resolved config of one invocation.
struct Run {
    std::string command;
    RunConfig config;
    fs::path out;
    std::vector<std::string> artifacts;
    std::vector<std::string> inputs;
    json extra = json::object();
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    fs::path file(const std::string& name) {
        artifacts.push_back(name);
        return out / name;
    }
};

inline fs::path output_dir(const RunConfig& c, const std::string& command) {
    if (!c.out.empty()) return c.out;
    const char* root = std::getenv(kOutRootEnv);
    return fs::path(root && *root ? root : "runs") / (command + "-seed" + std::to_string(c.seed));
}

inline std::string file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw data::InputError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return trainer::fnv1a_hex(ss.str());
}

inline void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw data::InputError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

/// Writes config.json and manifest.json after checking every artifact exists and is non-empty.
inline void finish(Run& r) {
    const json cfg = effective_json(r.config);
    write_json(r.out / "config.json", cfg);
    json arts = json::array();
    for (const auto& a : r.artifacts) {
        const fs::path p = r.out / a;
        if (!fs::exists(p) || fs::file_size(p) == 0) throw std::runtime_error("artifact missing or empty: " + p.string());
        arts.push_back({{"file", a}, {"bytes", fs::file_size(p)}, {"fnv1a", file_hash(p)}});
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - r.started).count();
    json ins = json::object();
    for (const auto& i : r.inputs) ins[i] = file_hash(i);
    write_json(r.out / "manifest.json", {{"command", r.command},
                                         {"seed", r.config.seed},
                                         {"config_hash", trainer::config_hash(cfg)},
                                         {"config", cfg},
                                         {"inputs", ins},
                                         {"artifacts", arts},
                                         {"details", r.extra},
                                         {"wall_time_seconds", wall},
                                         {"rerun", "causim " + r.command + " --config config.json"}});
}

struct Source {
    data::DualDataset ds;
    std::optional<data::GroundTruthGraph> truth;
};

/// Tables from paths.observed/simulated, or a synthetic pair from the synth section when none are given.
inline Source load_source(Run& r) {
    const RunConfig& c = r.config;
    Source s;
    if (c.paths.observed.empty() && c.paths.simulated.empty()) {
        auto pair = data::generate_synthetic_pair(c.synth);
        s.ds = std::move(pair.first);
        s.truth = std::move(pair.second);
    } else {
        if (c.paths.observed.empty() || c.paths.simulated.empty())
            throw ConfigError("paths.observed and paths.simulated must be given together");
        data::IngestConfig ic = c.ingest;
        if (!c.paths.overlap.empty()) {
            ic.overlap_override = data::read_overlap_file(c.paths.overlap);
            r.inputs.push_back(c.paths.overlap);
        }
        s.ds = data::ingest(data::read_table(c.paths.observed, data::Source::Observed),
                            data::read_table(c.paths.simulated, data::Source::Simulated), ic);
        r.inputs.push_back(c.paths.observed);
        r.inputs.push_back(c.paths.simulated);
    }
    if (!c.paths.truth.empty()) {
        s.truth = data::load_ground_truth(c.paths.truth);
        r.inputs.push_back(c.paths.truth);
    }
    return s;
}

inline json bias_json(const std::vector<data::BiasEntry>& entries) {
    json a = json::array();
    for (const auto& e : entries)
        a.push_back({{"observed", e.obs_name}, {"simulated", e.sim_name}, {"mean_difference", e.mean_difference}, {"kl", e.kl}});
    return {{"mean_kl", data::mean_kl(entries)}, {"columns", a}};
}

inline void run_synth(Run& r) {
    auto raw = data::generate_synthetic_raw(r.config.synth);
    data::write_table(r.file("observed.csv").string(), raw.obs);
    data::write_table(r.file("simulated.csv").string(), raw.sim);
    data::save_ground_truth_json(r.file("truth.json").string(), raw.truth);
    data::save_edge_list(r.file("truth_edges.csv").string(), raw.truth);
    std::vector<std::string> shifted;
    for (auto j : raw.shifted) shifted.push_back(raw.sem.names[j]);
    const fs::path abs = fs::absolute(r.out);
    write_json(r.file("dataset.json"), {{"target", raw.target},
                                        {"shifted", shifted},
                                        {"observed_nodes", raw.obs.names},
                                        {"simulator_nodes", raw.sim.names}});
    // Ready-to-use config for the other commands on this dataset.
    write_json(r.file("run.json"), {{"seed", r.config.seed},
                                    {"paths",
                                     {{"observed", (abs / "observed.csv").string()},
                                      {"simulated", (abs / "simulated.csv").string()},
                                      {"truth", (abs / "truth.json").string()}}},
                                    {"ingest", {{"target", raw.target}, {"align", "union"}}}});
}

inline void run_discover(Run& r) {
    Source s = load_source(r);
    const auto& c = r.config;
    auto run = trainer::train(s.ds, c.train);
    const auto names = run.model.nodes.names;
    auto g = trainer::extract_graph(run.probabilities, c.eval.threshold, c.eval.force_dag);
    trainer::write_matrix_csv(r.file("edge_probs.csv").string(), names, run.probabilities);
    trainer::write_matrix_csv(r.file("graph.csv").string(), names, g.adjacency);
    trainer::write_loss_log(r.file("loss_log.jsonl").string(), run.log);
    vgae::save_checkpoint(r.file("checkpoint.json").string(), run.model, run.config_hash);
    r.extra["train_config_hash"] = run.config_hash;
    r.extra["loss_weights"] = {{"lambda_a", c.train.loss.lambda_a}, {"lambda_sp", c.train.loss.lambda_sp}, {"lambda_dm", c.train.loss.lambda_dm}};
    if (s.ds.c() > 0)
        write_json(r.file("bias.json"),
                   {{"before", bias_json(data::bias_report(s.ds))},
                    {"after", bias_json(data::bias_report(s.ds, trainer::reconstruct_sim(run.model, s.ds), s.ds.x_obs,
                                                          s.ds.mask_obs))}});
    if (s.truth) {
        graphsuite::EdgeProbMatrix pm{names, run.probabilities, "discover"};
        write_json(r.file("eval_report.json"), graphsuite::to_json(graphsuite::evaluate(pm, *s.truth, c.eval.threshold)));
    }
}

inline void run_eval_graph(Run& r) {
    const auto& c = r.config;
    if (c.paths.truth.empty()) throw ConfigError("eval-graph needs paths.truth");
    if (c.paths.predictions.empty()) throw ConfigError("eval-graph needs at least one entry in paths.predictions");
    auto truth = data::load_ground_truth(c.paths.truth);
    r.inputs.push_back(c.paths.truth);
    std::vector<graphsuite::EvalReport> reports;
    json arr = json::array();
    for (std::size_t k = 0; k < c.paths.predictions.size(); ++k) {
        const std::string& path = c.paths.predictions[k];
        std::string method = fs::path(path).stem().string();
        for (const auto& rep : reports)
            if (rep.method == method) method += "#" + std::to_string(k);
        auto pm = graphsuite::read_edge_matrix(path, method);
        r.inputs.push_back(path);
        reports.push_back(graphsuite::evaluate(pm, truth, c.eval.threshold));
        json j = graphsuite::to_json(reports.back());
        j["path"] = path;
        arr.push_back(j);
    }
    write_json(r.file("eval_report.json"), arr);
    std::ofstream(r.file("l1_chart.svg")) << graphsuite::l1_bar_chart_svg(reports);
}

inline Tensor standardize_columns(Tensor X) {
    for (std::size_t c = 0; c < X.cols(); ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t r = 0; r < X.rows(); ++r) m += X(r, c);
        m /= static_cast<double>(X.rows());
        for (std::size_t r = 0; r < X.rows(); ++r) v += (X(r, c) - m) * (X(r, c) - m);
        const double sd = std::sqrt(v / static_cast<double>(X.rows()));
        for (std::size_t r = 0; r < X.rows(); ++r) X(r, c) = sd > 1e-12 ? (X(r, c) - m) / sd : 0.0;
    }
    return X;
}

inline void run_baseline(Run& r) {
    Source s = load_source(r);
    const auto& c = r.config;
    const auto names = data::NodeMap::build(s.ds).names;
    const Tensor X = data::union_values(s.ds);
    json report = json::object();
    auto emit = [&](const std::string& method, const Tensor& P, json extra) {
        graphsuite::EdgeProbMatrix pm{names, P, method};
        graphsuite::write_edge_matrix(r.file(method + ".csv").string(), pm);
        if (s.truth) extra["eval"] = graphsuite::to_json(graphsuite::evaluate(pm, *s.truth, c.eval.threshold));
        report[method] = extra;
    };
    for (const auto& m : c.baseline.methods) {
        if (m == "correlation") {
            emit(m, graphsuite::correlation_graph(X), {{"edge_threshold", c.eval.correlation_threshold}});
        } else if (m == "notears") {
            auto res = graphsuite::notears_linear(standardize_columns(X), c.baseline.notears);
            emit(m, res.probs, {{"converged", res.converged}, {"h", res.h}, {"h_unthresholded", res.h_unthresholded}, {"outer_steps", res.outer_steps}});
        } else {
            auto quiet = c.baseline.notears;
            quiet.quiet = true;
            auto discoverer = [&](const Tensor& S) {
                auto res = graphsuite::notears_linear(standardize_columns(S), quiet);
                Tensor A(res.weights.rows(), res.weights.cols());
                for (std::size_t i = 0; i < A.size(); ++i) A[i] = res.weights[i] != 0.0;
                return A;
            };
            auto b = graphsuite::bootstrap_edge_probs(discoverer, X, c.baseline.bootstrap_samples, c.seed);
            emit(m, b.probs, {{"resamples", b.resamples}, {"failures", b.failures}, {"failure_rate", b.failure_rate()}});
        }
    }
    write_json(r.file("baseline_report.json"), report);
}

/// CSV with a header row, an integer `site` column and numeric feature columns.
inline downstream::SiteData read_sites(const std::string& path, const std::string& target) {
    std::ifstream in(path);
    if (!in) throw data::InputError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw data::InputError(path + ": empty file");
    const auto header = data::split_csv_line(line);
    auto site_it = std::find(header.begin(), header.end(), "site");
    if (site_it == header.end()) throw data::InputError(path + ": no 'site' column");
    const auto site_col = static_cast<std::size_t>(site_it - header.begin());
    downstream::SiteData d;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != site_col) d.names.push_back(header[c]);
    auto t_it = std::find(d.names.begin(), d.names.end(), target);
    if (t_it == d.names.end()) throw data::InputError(path + ": target column '" + target + "' not found");
    d.target = static_cast<std::size_t>(t_it - d.names.begin());
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (data::trim(line).empty()) continue;
        auto cells = data::split_csv_line(line);
        if (cells.size() != header.size()) throw data::InputError(path + ": ragged row " + std::to_string(line_no));
        std::vector<double> row;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double v = data::parse_cell(cells[c], path + ":" + std::to_string(line_no));
            if (c == site_col) {
                if (data::is_missing(v) || v != std::floor(v)) throw data::InputError(path + ": bad site id");
                d.site.push_back(static_cast<int>(v));
            } else {
                row.push_back(v);
            }
        }
        rows.push_back(row);
    }
    d.X = Tensor(rows.size(), d.names.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < d.names.size(); ++c) d.X(r, c) = rows[r][c];
    return d;
}

inline void run_predict(Run& r) {
    const auto& c = r.config;
    const auto& p = c.predict;
    downstream::SiteData d;
    std::optional<data::GroundTruthGraph> truth;
    if (!c.paths.sites.empty()) {
        if (p.target.empty()) throw ConfigError("predict.target is required with paths.sites");
        d = read_sites(c.paths.sites, p.target);
        r.inputs.push_back(c.paths.sites);
    } else {
        auto raw = data::generate_synthetic_raw(c.synth);
        const auto target = static_cast<std::size_t>(
            std::find(raw.sem.names.begin(), raw.sem.names.end(), raw.target) - raw.sem.names.begin());
        d = downstream::two_site_data(raw.sem, c.synth.nodes, target, p.two_site);
        truth = raw.truth;
    }
    Tensor skeleton;
    std::string skeleton_source = "none";
    if (!c.paths.skeleton.empty()) {
        auto pm = graphsuite::read_edge_matrix(c.paths.skeleton);
        r.inputs.push_back(c.paths.skeleton);
        Tensor adj(pm.probs.rows(), pm.probs.cols());
        for (std::size_t i = 0; i < adj.size(); ++i) adj[i] = pm.probs[i] > c.eval.threshold;
        skeleton = downstream::restrict_skeleton(pm.names, adj, d.names);
        skeleton_source = c.paths.skeleton;
    } else if (truth) {
        skeleton = downstream::restrict_skeleton(truth->names, truth->adjacency, d.names);
        skeleton_source = "synthetic ground truth";
    }
    json out = {{"skeleton", skeleton_source}, {"target", d.names[d.target]}, {"results", json::object()}};
    for (const auto& k : p.kinds) {
        downstream::PredictorConfig pc;
        pc.kind = downstream::parse_kind(k);
        if ((pc.kind == downstream::Kind::ecmpnn || pc.kind == downstream::Kind::sage) && skeleton.size() == 0)
            throw ConfigError("predictor '" + k + "' needs paths.skeleton");
        pc.skeleton = skeleton;
        pc.undirected = p.undirected;
        pc.layers = p.layers;
        pc.hidden = p.hidden;
        pc.aggregator = downstream::parse_aggregator(p.aggregator);
        pc.seed = c.seed;
        pc.lr = p.lr;
        pc.epochs = p.epochs;
        pc.patience = p.patience;
        downstream::SplitSpec zero{p.train_sites, p.test_sites, 0.0, c.seed};
        downstream::SplitSpec few{p.train_sites, p.test_sites, p.few_shot_fraction, c.seed};
        out["results"][k] = {{"zero_shot", downstream::to_json(downstream::evaluate_ood(pc, d, zero, p.grid), zero)},
                             {"few_shot", downstream::to_json(downstream::evaluate_ood(pc, d, few, p.grid), few)}};
    }
    write_json(r.file("predictions.json"), out);
}

inline void run_ablate(Run& r) {
    Source s = load_source(r);
    const auto& c = r.config;
    if (!s.truth) throw ConfigError("ablate needs paths.truth when running on supplied tables");
    std::ofstream csv(r.file("ablation.csv"));
    csv << "use_mask,use_dm,use_sp,recall,precision,auc,l1_edge_error,bias_kl\n";
    json rows = json::array();
    auto num = [](const std::optional<double>& v) { return v ? trainer::format_prob(*v) : std::string("NA"); };
    struct Cell {
        int mask, dm, sp;
        graphsuite::EvalReport report;
        double kl;
    };
    auto one = [&](int mask, int dm, int sp) {
        trainer::TrainConfig tc = c.train;
        tc.use_mask = mask;
        tc.use_dm = dm && s.ds.c() > 0;
        tc.use_sp = sp;
        auto run = trainer::train(s.ds, tc);
        graphsuite::EdgeProbMatrix pm{run.model.nodes.names, run.probabilities, "ablate"};
        const double kl = s.ds.c() > 0 ? data::mean_kl(data::bias_report(s.ds, trainer::reconstruct_sim(run.model, s.ds),
                                                                         s.ds.x_obs, s.ds.mask_obs))
                                       : 0.0;
        return Cell{mask, dm, sp, graphsuite::evaluate(pm, *s.truth, c.eval.threshold), kl};
    };
    // Each combination trains an independent model, so they run concurrently.
    std::vector<std::future<Cell>> jobs;
    for (int mask = 1; mask >= 0; --mask)
        for (int dm = 1; dm >= 0; --dm)
            for (int sp = 1; sp >= 0; --sp)
                jobs.push_back(std::async(c.parallel ? std::launch::async : std::launch::deferred, one, mask, dm, sp));
    for (auto& f : jobs) {
        const Cell x = f.get();
        csv << x.mask << ',' << x.dm << ',' << x.sp << ',' << num(x.report.recall) << ',' << num(x.report.precision) << ','
            << num(x.report.auc) << ',' << trainer::format_prob(x.report.l1) << ',' << trainer::format_prob(x.kl) << '\n';
        rows.push_back({{"use_mask", bool(x.mask)}, {"use_dm", bool(x.dm)}, {"use_sp", bool(x.sp)},
                        {"eval", graphsuite::to_json(x.report)}, {"bias_kl", x.kl}});
    }
    csv.close();
    write_json(r.file("ablation.json"), rows);
}

/// Runs one command; artifacts and the manifest land in the resolved output directory.
inline fs::path run(const std::string& command, const RunConfig& cfg) {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
        throw ConfigError("unknown command '" + command + "'");
    Run r{command, cfg, output_dir(cfg, command)};
    r.config.out = r.out.string();
    fs::create_directories(r.out);
    if (command == "synth") run_synth(r);
    else if (command == "discover") run_discover(r);
    else if (command == "eval-graph") run_eval_graph(r);
    else if (command == "baseline") run_baseline(r);
    else if (command == "predict") run_predict(r);
    else run_ablate(r);
    finish(r);
    return r.out;
}

}  // namespace causim::cli
