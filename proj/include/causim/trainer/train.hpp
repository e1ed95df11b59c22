#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "causim/data/dataset.hpp"
#include "causim/data/graph.hpp"
#include "causim/objective/loss.hpp"
#include "causim/vgae/checkpoint.hpp"
#include "causim/vgae/model.hpp"

namespace causim::trainer {

using num::Tape;
using num::Tensor;
using num::Var;

struct TrainConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double graph_lr = 1e-2;
    double tau_start = 1.0;
    double tau_end = 0.3;
    bool use_mask = true;
    bool use_dm = true;
    bool use_sp = true;
    objective::LossConfig loss;
    vgae::ModelConfig model;

    void validate() const {
        num::require(epochs >= 1, "TrainConfig: epochs must be at least 1");
        num::require(batch_size >= 1, "TrainConfig: batch_size must be at least 1");
        num::require(lr > 0.0 && graph_lr > 0.0, "TrainConfig: learning rates must be positive");
        num::require(tau_start > 0.0 && tau_end > 0.0, "TrainConfig: temperatures must be positive");
        loss.validate();
        model.validate();
    }

    [[nodiscard]] double temperature(std::size_t epoch) const {
        if (epochs <= 1) return tau_end;
        const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
        return tau_start + (tau_end - tau_start) * f;
    }
};

/// Settings used for the 10-node synthetic benchmark.
inline TrainConfig benchmark_config(std::uint64_t seed = 0) {
    TrainConfig c;
    c.seed = seed;
    c.epochs = 100;
    c.lr = 1e-2;
    c.graph_lr = 1e-2;
    c.loss.sigma_rec = 0.005;
    return c;
}

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline nlohmann::json to_json(const objective::LossConfig& c) {
    return {{"lambda_dm", c.lambda_dm}, {"lambda_sp", c.lambda_sp}, {"lambda_a", c.lambda_a}, {"alpha", c.alpha},
            {"m", c.m},                 {"sigma_rec", c.sigma_rec}, {"dm_empty_is_error", c.dm_empty_is_error}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"seed", c.seed},
            {"lr", c.lr},               {"graph_lr", c.graph_lr},    {"tau_start", c.tau_start},   {"tau_end", c.tau_end},
            {"use_mask", c.use_mask},   {"use_dm", c.use_dm},         {"use_sp", c.use_sp},
            {"loss", to_json(c.loss)},  {"model", vgae::model_config_json(c.model)}};
}

/// 64-bit FNV-1a of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const nlohmann::json& j) { return fnv1a_hex(j.dump()); }

struct EpochLog {
    std::size_t epoch = 0;
    double temperature = 0.0;
    objective::LossBreakdown loss;
};

inline nlohmann::json to_json(const EpochLog& e) {
    const auto& b = e.loss;
    return {{"epoch", e.epoch},           {"temperature", e.temperature}, {"sim_loglik", b.sim_loglik},
            {"sim_kl", b.sim_kl},         {"obs_loglik", b.obs_loglik},   {"obs_kl", b.obs_kl},
            {"graph_kl", b.graph_kl},     {"loss_dm", b.loss_dm},         {"loss_sp", b.loss_sp},
            {"loss_a", b.loss_a},         {"total", b.total}};
}

struct RunArtifacts {
    vgae::Model model;
    Tensor probabilities;
    std::vector<EpochLog> log;
    nlohmann::json manifest;
    std::string config_hash;
};

/// Composite loss on one batch. Every random draw comes from `noise_seed`, so two
/// calls with the same arguments build identical tapes.
struct BatchResult {
    Var total;
    objective::LossBreakdown breakdown;
};

inline BatchResult batch_loss(Tape& t, const vgae::Model& m, const data::DualDataset& ds,
                              const std::vector<std::size_t>& rows, const TrainConfig& cfg, double temperature,
                              std::uint64_t noise_seed, bool zero_noise = false) {
    const std::size_t n = rows.size(), p = ds.p(), d = ds.d(), V = m.V();
    num::Rng rng(noise_seed);
    Tensor xo(n, p), xs(n, d), mo(n, p);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t j = 0; j < p; ++j) {
            xo(b, j) = ds.x_obs(rows[b], j);
            mo(b, j) = cfg.use_mask ? ds.mask_obs(rows[b], j) : 1.0;
        }
        for (std::size_t j = 0; j < d; ++j) xs(b, j) = ds.x_sim(rows[b], j);
    }
    vgae::Encoding eo = vgae::encode(t, m, vgae::Side::Observed, xo, rng, zero_noise);
    vgae::Encoding es = vgae::encode(t, m, vgae::Side::Simulated, xs, rng, zero_noise);
    Var logits = t.parameter(m.params, m.logits);
    Var G = vgae::sample_graph(t, logits, temperature, rng);
    Var P = vgae::edge_probabilities(t, m);

    std::vector<std::size_t> obs_rows;
    for (std::size_t b = 0; b < n; ++b) {
        bool any = false;
        for (std::size_t j = 0; j < p && !any; ++j) any = mo(b, j) != 0.0;
        if (any) obs_rows.push_back(b);
    }
    vgae::Reconstruction rec = vgae::decode_forward(t, m, G, eo, es, obs_rows);

    const double sr = cfg.loss.sigma_rec;
    objective::LossTerms terms;
    terms.sim_loglik = objective::gaussian_loglik(t, rec.x_sim, xs, Tensor(n, d, 1.0), sr);
    terms.sim_kl = objective::encoding_kl(t, es);
    terms.obs_kl = objective::encoding_kl(t, eo);
    terms.graph_kl = objective::graph_kl(t, P);
    const Var zero = t.constant(Tensor::scalar(0.0));
    if (!obs_rows.empty()) {
        Tensor xsub(obs_rows.size(), p), msub(obs_rows.size(), p);
        for (std::size_t b = 0; b < obs_rows.size(); ++b)
            for (std::size_t j = 0; j < p; ++j) {
                xsub(b, j) = xo(obs_rows[b], j);
                msub(b, j) = mo(obs_rows[b], j);
            }
        terms.obs_loglik = objective::gaussian_loglik(t, rec.x_obs, xsub, msub, sr);
        terms.loss_sp = cfg.use_sp ? objective::loss_sp(t, rec.x_obs, xsub, msub, ds.target, sr) : zero;
    } else {
        terms.obs_loglik = zero;
        terms.loss_sp = zero;
    }
    terms.loss_dm = cfg.use_dm ? objective::loss_dm(t, es, eo, ds.overlap, cfg.loss.dm_empty_is_error,
                                                          cfg.use_mask ? &mo : nullptr)
                               : zero;
    terms.loss_a = objective::loss_acyclicity(t, P, cfg.loss.alpha_for(V), cfg.loss.power(V));
    auto [total, breakdown] = objective::total_loss(t, terms, cfg.loss);
    return {total, breakdown};
}

namespace detail {

inline void check_finite(const objective::LossBreakdown& b, std::size_t epoch) {
    const std::pair<const char*, double> terms[] = {{"sim_loglik", b.sim_loglik}, {"sim_kl", b.sim_kl},
                                                    {"obs_loglik", b.obs_loglik}, {"obs_kl", b.obs_kl},
                                                    {"graph_kl", b.graph_kl},     {"loss_dm", b.loss_dm},
                                                    {"loss_sp", b.loss_sp},       {"loss_a", b.loss_a},
                                                    {"total", b.total}};
    for (auto [name, v] : terms)
        if (!std::isfinite(v))
            throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " in term " + name);
    for (auto [name, v] : {terms[1], terms[3], terms[4], terms[5], terms[7]})
        if (v < -1e-9)
            throw TrainingError("negative value " + std::to_string(v) + " for " + name + " at epoch " +
                                std::to_string(epoch));
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochLog&, const vgae::Model&)>;

inline RunArtifacts train(const data::DualDataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    ds.validate();
    if (cfg.use_dm && ds.overlap.empty()) throw num::ContractViolation("train: distribution matching needs overlap");
    const auto t0 = std::chrono::steady_clock::now();
    RunArtifacts run;
    run.model = vgae::Model::create(data::NodeMap::build(ds), ds.p(), ds.d(), cfg.model, cfg.seed);
    run.model.fit_input_scaling(ds.x_obs, ds.x_sim);
    num::AdamState adam(num::AdamConfig{cfg.lr});
    num::AdamState graph_adam(num::AdamConfig{cfg.graph_lr});
    num::Rng order_rng = num::derive(cfg.seed, 0x5EED);
    num::Rng noise_rng = num::derive(cfg.seed, 0x0015E);
    std::vector<std::size_t> perm(ds.rows());
    std::iota(perm.begin(), perm.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), order_rng);
        const double tau = cfg.temperature(epoch);
        EpochLog entry;
        entry.epoch = epoch;
        entry.temperature = tau;
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(perm.size(), start + cfg.batch_size);
            std::vector<std::size_t> rows(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                          perm.begin() + static_cast<std::ptrdiff_t>(stop));
            Tape tape;
            BatchResult br = batch_loss(tape, run.model, ds, rows, cfg, tau, noise_rng());
            detail::check_finite(br.breakdown, epoch);
            num::Gradients g = tape.backward(br.total);
            num::Gradients gg;
            gg.emplace(run.model.logits, std::move(g.at(run.model.logits)));
            g.erase(run.model.logits);
            num::adam_step(adam, run.model.params, g);
            num::adam_step(graph_adam, run.model.params, gg);
            entry.loss += br.breakdown;
        }
        detail::check_finite(entry.loss, epoch);
        run.log.push_back(entry);
        if (on_epoch) on_epoch(entry, run.model);
    }
    run.probabilities = vgae::edge_probabilities(run.model);
    nlohmann::json cj = to_json(cfg);
    run.config_hash = config_hash(cj);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.manifest = {{"config_hash", run.config_hash},
                    {"seed", cfg.seed},
                    {"wall_time_s", wall},
                    {"rows", ds.rows()},
                    {"nodes", run.model.nodes.names},
                    {"config", cj}};
    return run;
}

/// Simulated-side reconstructions of the full dataset with posterior-mean encodings
/// and the posterior edge probabilities as the decoding graph.
inline Tensor reconstruct_sim(const vgae::Model& m, const data::DualDataset& ds, std::size_t chunk = 256) {
    Tensor out(ds.rows(), ds.d());
    num::Rng unused(0);
    for (std::size_t start = 0; start < ds.rows(); start += chunk) {
        const std::size_t stop = std::min(ds.rows(), start + chunk), n = stop - start;
        Tensor xo(n, ds.p()), xs(n, ds.d());
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < ds.p(); ++j) xo(b, j) = ds.x_obs(start + b, j);
            for (std::size_t j = 0; j < ds.d(); ++j) xs(b, j) = ds.x_sim(start + b, j);
        }
        Tape t;
        auto eo = vgae::encode(t, m, vgae::Side::Observed, xo, unused, true);
        auto es = vgae::encode(t, m, vgae::Side::Simulated, xs, unused, true);
        auto rec = vgae::decode_forward(t, m, vgae::edge_probabilities(t, m), eo, es, {});
        const Tensor& v = rec.x_sim.value();
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < ds.d(); ++j) out(start + b, j) = v(b, j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph extraction

struct ExtractedGraph {
    Tensor adjacency;
    Tensor probabilities;
    std::vector<std::pair<std::size_t, std::size_t>> deletions;
};

/// Edge i->j iff P(i,j) > threshold. With force_dag, the weakest edge on a
/// remaining cycle is deleted until the graph is acyclic.
inline ExtractedGraph extract_graph(const Tensor& P, double threshold, bool force_dag) {
    num::require(threshold > 0.0 && threshold < 1.0, "extract_graph: threshold must lie in (0,1)");
    num::require(P.rows() == P.cols(), "extract_graph: matrix must be square");
    ExtractedGraph g;
    g.probabilities = P;
    g.adjacency = Tensor(P.rows(), P.cols());
    for (std::size_t i = 0; i < P.rows(); ++i)
        for (std::size_t j = 0; j < P.cols(); ++j)
            if (i != j && P(i, j) > threshold) g.adjacency(i, j) = 1.0;
    if (!force_dag) return g;
    for (;;) {
        auto cyc = data::find_cycle(g.adjacency);
        if (cyc.empty()) break;
        std::size_t bi = 0, bj = 0;
        double best = 2.0;
        for (std::size_t k = 0; k < cyc.size(); ++k) {
            const std::size_t a = cyc[k], b = cyc[(k + 1) % cyc.size()];
            if (P(a, b) < best) best = P(a, b), bi = a, bj = b;
        }
        g.adjacency(bi, bj) = 0.0;
        g.deletions.emplace_back(bi, bj);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Artifact files

inline std::string format_prob(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& names, const Tensor& M) {
    std::ofstream out(path);
    if (!out) throw data::InputError("cannot write " + path);
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (std::size_t r = 0; r < M.rows(); ++r) {
        for (std::size_t c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_prob(M(r, c));
        out << '\n';
    }
}

inline void write_loss_log(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    if (!out) throw data::InputError("cannot write " + path);
    for (const auto& e : log) out << to_json(e).dump() << '\n';
}

}  // namespace causim::trainer
