#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causim/data/generator.hpp"
#include "causim/data/ingest.hpp"
#include "causim/downstream.hpp"
#include "causim/graphsuite.hpp"
#include "causim/trainer.hpp"

namespace causim::cli {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Paths {
    std::string observed, simulated, truth, overlap, sites, skeleton;
    std::vector<std::string> predictions;
};

struct EvalOptions {
    double threshold = 0.5;
    bool force_dag = true;
    double correlation_threshold = 0.5;
};

struct BaselineOptions {
    std::vector<std::string> methods{"correlation", "notears", "bootstrap"};
    std::size_t bootstrap_samples = 20;
    graphsuite::NotearsConfig notears;
};

struct PredictOptions {
    std::vector<std::string> kinds{"ecmpnn", "sage", "mlp", "random_guess"};
    std::size_t layers = 2;
    std::size_t hidden = 16;
    std::string aggregator = "mean";
    bool undirected = false;
    std::size_t epochs = 200;
    std::size_t patience = 20;
    double lr = 3e-3;
    bool grid = true;
    double few_shot_fraction = 0.2;
    std::string target;
    std::vector<int> train_sites{0};
    std::vector<int> test_sites{1};
    downstream::TwoSiteSpec two_site;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out;
    std::string preset = "default";
    bool parallel = true;
    Paths paths;
    data::IngestConfig ingest;
    trainer::TrainConfig train;
    data::SyntheticSpec synth;
    EvalOptions eval;
    BaselineOptions baseline;
    PredictOptions predict;
};

namespace detail {

inline void allow_only(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& into, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
    }
}

inline const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    return j.contains(key) ? j.at(key) : empty;
}

inline std::string join(const std::string& a, const char* b) { return a.empty() ? b : a + "." + b; }

}  // namespace detail

/// Parses a merged config document. Unknown keys and wrong types are errors;
/// missing keys keep their defaults. A "benchmark" preset replaces the training
/// defaults before explicit train keys apply.
inline RunConfig parse_config(const json& j) {
    using detail::read;
    RunConfig c;
    detail::allow_only(j, "", {"seed", "out", "preset", "parallel", "paths", "ingest", "train", "synth", "eval", "baseline", "predict"});
    read(j, "seed", c.seed, "");
    read(j, "out", c.out, "");
    read(j, "preset", c.preset, "");
    read(j, "parallel", c.parallel, "");
    if (c.preset == "benchmark") c.train = trainer::benchmark_config(c.seed);
    else if (c.preset != "default") throw ConfigError("unknown preset '" + c.preset + "'");

    const json& p = detail::section(j, "paths");
    detail::allow_only(p, "paths", {"observed", "simulated", "truth", "overlap", "sites", "skeleton", "predictions"});
    read(p, "observed", c.paths.observed, "paths");
    read(p, "simulated", c.paths.simulated, "paths");
    read(p, "truth", c.paths.truth, "paths");
    read(p, "overlap", c.paths.overlap, "paths");
    read(p, "sites", c.paths.sites, "paths");
    read(p, "skeleton", c.paths.skeleton, "paths");
    read(p, "predictions", c.paths.predictions, "paths");

    const json& in = detail::section(j, "ingest");
    detail::allow_only(in, "ingest", {"target", "align", "max_missing_fraction", "impute_hidden", "impute_epochs", "impute_lr"});
    read(in, "target", c.ingest.target, "ingest");
    std::string align = "intersect";
    read(in, "align", align, "ingest");
    if (align == "union") c.ingest.align = data::Align::Union;
    else if (align != "intersect") throw ConfigError("ingest.align must be 'intersect' or 'union'");
    read(in, "max_missing_fraction", c.ingest.max_missing_fraction, "ingest");
    read(in, "impute_hidden", c.ingest.impute_hidden, "ingest");
    read(in, "impute_epochs", c.ingest.impute_epochs, "ingest");
    read(in, "impute_lr", c.ingest.impute_lr, "ingest");

    const json& t = detail::section(j, "train");
    detail::allow_only(t, "train", {"epochs", "batch_size", "lr", "graph_lr", "tau_start", "tau_end", "use_mask", "use_dm",
                                    "use_sp", "loss", "model"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "lr", c.train.lr, "train");
    read(t, "graph_lr", c.train.graph_lr, "train");
    read(t, "tau_start", c.train.tau_start, "train");
    read(t, "tau_end", c.train.tau_end, "train");
    read(t, "use_mask", c.train.use_mask, "train");
    read(t, "use_dm", c.train.use_dm, "train");
    read(t, "use_sp", c.train.use_sp, "train");
    const json& l = detail::section(t, "loss");
    detail::allow_only(l, "train.loss", {"lambda_dm", "lambda_sp", "lambda_a", "alpha", "m", "sigma_rec", "dm_empty_is_error"});
    read(l, "lambda_dm", c.train.loss.lambda_dm, "train.loss");
    read(l, "lambda_sp", c.train.loss.lambda_sp, "train.loss");
    read(l, "lambda_a", c.train.loss.lambda_a, "train.loss");
    read(l, "alpha", c.train.loss.alpha, "train.loss");
    read(l, "m", c.train.loss.m, "train.loss");
    read(l, "sigma_rec", c.train.loss.sigma_rec, "train.loss");
    read(l, "dm_empty_is_error", c.train.loss.dm_empty_is_error, "train.loss");
    const json& mo = detail::section(t, "model");
    detail::allow_only(mo, "train.model", {"latent", "hidden", "rounds", "self_in_readout", "linear", "init_logit", "embed_scale"});
    read(mo, "latent", c.train.model.latent, "train.model");
    read(mo, "hidden", c.train.model.hidden, "train.model");
    read(mo, "rounds", c.train.model.rounds, "train.model");
    read(mo, "self_in_readout", c.train.model.self_in_readout, "train.model");
    read(mo, "linear", c.train.model.linear, "train.model");
    read(mo, "init_logit", c.train.model.init_logit, "train.model");
    read(mo, "embed_scale", c.train.model.embed_scale, "train.model");

    const json& s = detail::section(j, "synth");
    detail::allow_only(s, "synth", {"nodes", "edge_prob", "nonlinear", "noise_scale", "shifted_columns", "shift_sigma",
                                    "extra_sim_vars", "n_obs", "n_sim", "missing_rate", "sim_noise_correlation"});
    read(s, "nodes", c.synth.nodes, "synth");
    read(s, "edge_prob", c.synth.edge_prob, "synth");
    read(s, "nonlinear", c.synth.nonlinear, "synth");
    read(s, "noise_scale", c.synth.noise_scale, "synth");
    read(s, "shifted_columns", c.synth.shifted_columns, "synth");
    read(s, "shift_sigma", c.synth.shift_sigma, "synth");
    read(s, "extra_sim_vars", c.synth.extra_sim_vars, "synth");
    read(s, "n_obs", c.synth.n_obs, "synth");
    read(s, "n_sim", c.synth.n_sim, "synth");
    read(s, "missing_rate", c.synth.missing_rate, "synth");
    read(s, "sim_noise_correlation", c.synth.sim_noise_correlation, "synth");

    const json& e = detail::section(j, "eval");
    detail::allow_only(e, "eval", {"threshold", "force_dag", "correlation_threshold"});
    read(e, "threshold", c.eval.threshold, "eval");
    read(e, "force_dag", c.eval.force_dag, "eval");
    read(e, "correlation_threshold", c.eval.correlation_threshold, "eval");

    const json& b = detail::section(j, "baseline");
    detail::allow_only(b, "baseline", {"methods", "bootstrap_samples", "notears"});
    read(b, "methods", c.baseline.methods, "baseline");
    read(b, "bootstrap_samples", c.baseline.bootstrap_samples, "baseline");
    const json& nt = detail::section(b, "notears");
    detail::allow_only(nt, "baseline.notears", {"lambda1", "max_iter", "inner_iter", "w_threshold"});
    read(nt, "lambda1", c.baseline.notears.lambda1, "baseline.notears");
    read(nt, "max_iter", c.baseline.notears.max_iter, "baseline.notears");
    read(nt, "inner_iter", c.baseline.notears.inner_iter, "baseline.notears");
    read(nt, "w_threshold", c.baseline.notears.w_threshold, "baseline.notears");
    for (const auto& m : c.baseline.methods)
        if (m != "correlation" && m != "notears" && m != "bootstrap") throw ConfigError("unknown baseline method '" + m + "'");

    const json& pr = detail::section(j, "predict");
    detail::allow_only(pr, "predict", {"kinds", "layers", "hidden", "aggregator", "undirected", "epochs", "patience", "lr",
                                       "grid", "few_shot_fraction", "target", "train_sites", "test_sites", "two_site"});
    read(pr, "kinds", c.predict.kinds, "predict");
    read(pr, "layers", c.predict.layers, "predict");
    read(pr, "hidden", c.predict.hidden, "predict");
    read(pr, "aggregator", c.predict.aggregator, "predict");
    read(pr, "undirected", c.predict.undirected, "predict");
    read(pr, "epochs", c.predict.epochs, "predict");
    read(pr, "patience", c.predict.patience, "predict");
    read(pr, "lr", c.predict.lr, "predict");
    read(pr, "grid", c.predict.grid, "predict");
    read(pr, "few_shot_fraction", c.predict.few_shot_fraction, "predict");
    read(pr, "target", c.predict.target, "predict");
    read(pr, "train_sites", c.predict.train_sites, "predict");
    read(pr, "test_sites", c.predict.test_sites, "predict");
    const json& ts = detail::section(pr, "two_site");
    detail::allow_only(ts, "predict.two_site", {"n_train_site", "n_test_site", "root_shift", "mechanism_offset"});
    read(ts, "n_train_site", c.predict.two_site.n_train_site, "predict.two_site");
    read(ts, "n_test_site", c.predict.two_site.n_test_site, "predict.two_site");
    read(ts, "root_shift", c.predict.two_site.root_shift, "predict.two_site");
    read(ts, "mechanism_offset", c.predict.two_site.mechanism_offset, "predict.two_site");

    // One seed drives every stage.
    c.train.seed = c.seed;
    c.synth.seed = c.seed;
    c.ingest.seed = c.seed;
    c.predict.two_site.seed = c.seed;
    try {
        c.train.validate();
        c.synth.validate();
        for (const auto& k : c.predict.kinds) downstream::parse_kind(k);
        downstream::parse_aggregator(c.predict.aggregator);
        num::require(c.eval.threshold > 0.0 && c.eval.threshold < 1.0, "eval.threshold must lie in (0,1)");
        num::require(c.predict.few_shot_fraction >= 0.0 && c.predict.few_shot_fraction < 1.0,
                     "predict.few_shot_fraction must lie in [0,1)");
        num::require(c.baseline.bootstrap_samples >= 1, "baseline.bootstrap_samples must be at least 1");
    } catch (const num::ContractViolation& ex) {
        throw ConfigError(ex.what());
    }
    return c;
}

/// The fully resolved configuration, defaults included.
inline json effective_json(const RunConfig& c) {
    const auto& s = c.synth;
    const auto& p = c.predict;
    return {{"seed", c.seed},
            {"out", c.out},
            {"preset", c.preset},
            {"parallel", c.parallel},
            {"paths",
             {{"observed", c.paths.observed},
              {"simulated", c.paths.simulated},
              {"truth", c.paths.truth},
              {"overlap", c.paths.overlap},
              {"sites", c.paths.sites},
              {"skeleton", c.paths.skeleton},
              {"predictions", c.paths.predictions}}},
            {"ingest",
             {{"target", c.ingest.target},
              {"align", c.ingest.align == data::Align::Union ? "union" : "intersect"},
              {"max_missing_fraction", c.ingest.max_missing_fraction},
              {"impute_hidden", c.ingest.impute_hidden},
              {"impute_epochs", c.ingest.impute_epochs},
              {"impute_lr", c.ingest.impute_lr}}},
            {"train", [&] {
                 json t = trainer::to_json(c.train);
                 t.erase("seed");
                 return t;
             }()},
            {"synth",
             {{"nodes", s.nodes},
              {"edge_prob", s.edge_prob},
              {"nonlinear", s.nonlinear},
              {"noise_scale", s.noise_scale},
              {"shifted_columns", s.shifted_columns},
              {"shift_sigma", s.shift_sigma},
              {"extra_sim_vars", s.extra_sim_vars},
              {"n_obs", s.n_obs},
              {"n_sim", s.n_sim},
              {"missing_rate", s.missing_rate},
              {"sim_noise_correlation", s.sim_noise_correlation}}},
            {"eval",
             {{"threshold", c.eval.threshold},
              {"force_dag", c.eval.force_dag},
              {"correlation_threshold", c.eval.correlation_threshold}}},
            {"baseline",
             {{"methods", c.baseline.methods},
              {"bootstrap_samples", c.baseline.bootstrap_samples},
              {"notears",
               {{"lambda1", c.baseline.notears.lambda1},
                {"max_iter", c.baseline.notears.max_iter},
                {"inner_iter", c.baseline.notears.inner_iter},
                {"w_threshold", c.baseline.notears.w_threshold}}}}},
            {"predict",
             {{"kinds", p.kinds},
              {"layers", p.layers},
              {"hidden", p.hidden},
              {"aggregator", p.aggregator},
              {"undirected", p.undirected},
              {"epochs", p.epochs},
              {"patience", p.patience},
              {"lr", p.lr},
              {"grid", p.grid},
              {"few_shot_fraction", p.few_shot_fraction},
              {"target", p.target},
              {"train_sites", p.train_sites},
              {"test_sites", p.test_sites},
              {"two_site",
               {{"n_train_site", p.two_site.n_train_site},
                {"n_test_site", p.two_site.n_test_site},
                {"root_shift", p.two_site.root_shift},
                {"mechanism_offset", p.two_site.mechanism_offset}}}}}};
}

/// Sets a dotted key ("train.loss.lambda_dm") to a value parsed as JSON, or as a
/// plain string when it does not parse.
inline void set_dotted(json& doc, const std::string& key, const std::string& text) {
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("bad override key '" + key + "'");
        if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

}  // namespace causim::cli
