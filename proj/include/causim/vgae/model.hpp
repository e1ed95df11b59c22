#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "causim/data/dataset.hpp"
#include "causim/numcore.hpp"

namespace causim::vgae {

using num::ParamId;
using num::ParameterSet;
using num::Rng;
using num::Tape;
using num::Tensor;
using num::Var;

struct ModelConfig {
    std::size_t latent = 8;   // k, per feature
    std::size_t hidden = 64;  // encoder, message, update and readout width
    std::size_t rounds = 1;   // T
    bool self_in_readout = false;
    bool linear = false;      // identity activations in the decoder
    double init_logit = 0.0;  // P = 0.5
    double embed_scale = 0.1;

    void validate() const {
        num::require(latent >= 1 && hidden >= 1, "ModelConfig: widths must be positive");
        num::require(rounds >= 1, "ModelConfig: need at least one message-passing round");
    }
};

enum class Side { Observed, Simulated };

/// Per-feature MLP encoder shared across the features of one source. Each
/// feature gets a learned embedding added to the hidden pre-activation.
struct EncoderIds {
    ParamId w1, embed, w2, b2;
};

struct DecoderIds {
    ParamId msg_w1, msg_send, msg_recv, msg_recv_w, msg_w2, msg_b2;
    ParamId upd_w1, upd_b1, upd_w2, upd_b2;
    ParamId out_w1, out_node, out_w2, out_node_bias;
};

struct Model {
    ModelConfig config;
    data::NodeMap nodes;
    std::size_t p = 0;
    std::size_t d = 0;
    ParameterSet params;
    EncoderIds enc_obs{}, enc_sim{};
    DecoderIds dec{};
    ParamId logits = 0;
    // Fixed per-feature input standardisation applied before the encoders.
    Tensor obs_center, obs_spread, sim_center, sim_spread;

    [[nodiscard]] std::size_t V() const { return nodes.size(); }

    void fit_input_scaling(const Tensor& x_obs, const Tensor& x_sim) {
        auto stats = [](const Tensor& x, Tensor& c, Tensor& s) {
            c = Tensor(1, x.cols());
            s = Tensor(1, x.cols(), 1.0);
            if (x.rows() == 0) return;
            for (std::size_t j = 0; j < x.cols(); ++j) {
                double m = 0.0, v = 0.0;
                for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, j);
                m /= static_cast<double>(x.rows());
                for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, j) - m) * (x(r, j) - m);
                c[j] = m;
                s[j] = std::max(1e-3, std::sqrt(v / static_cast<double>(x.rows())));
            }
        };
        stats(x_obs, obs_center, obs_spread);
        stats(x_sim, sim_center, sim_spread);
    }

    static Model create(const data::NodeMap& nodes, std::size_t p, std::size_t d, const ModelConfig& cfg,
                        std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.config = cfg;
        m.nodes = nodes;
        m.p = p;
        m.d = d;
        Rng rng = num::derive(seed, 0xE11C);
        const std::size_t k = cfg.latent, H = cfg.hidden, V = nodes.size();
        auto enc = [&](const std::string& tag, std::size_t features) {
            EncoderIds e{};
            e.w1 = m.params.add(tag + ".w1", num::glorot(1, H, rng));
            e.embed = m.params.add(tag + ".embed", num::randn(features, H, rng, cfg.embed_scale));
            e.w2 = m.params.add(tag + ".w2", num::glorot(H, 2 * k, rng));
            e.b2 = m.params.add(tag + ".b2", Tensor(features, 2 * k));
            return e;
        };
        m.enc_obs = enc("enc_obs", p);
        m.enc_sim = enc("enc_sim", d);
        DecoderIds& D = m.dec;
        D.msg_w1 = m.params.add("msg.w1", num::glorot(2 * k, H, rng));
        D.msg_send = m.params.add("msg.send", num::randn(V, H, rng, cfg.embed_scale));
        D.msg_recv = m.params.add("msg.recv", num::randn(V, H, rng, cfg.embed_scale));
        D.msg_recv_w = m.params.add("msg.recv_w", num::glorot(k, H, rng));
        D.msg_w2 = m.params.add("msg.w2", num::glorot(H, H, rng));
        D.msg_b2 = m.params.add("msg.b2", Tensor(1, H));
        D.upd_w1 = m.params.add("upd.w1", num::glorot(H, H, rng));
        D.upd_b1 = m.params.add("upd.b1", Tensor(1, H));
        D.upd_w2 = m.params.add("upd.w2", num::glorot(H, k, rng));
        D.upd_b2 = m.params.add("upd.b2", Tensor(1, k));
        const std::size_t rin = cfg.self_in_readout ? 2 * k : k;
        D.out_w1 = m.params.add("out.w1", num::glorot(rin, H, rng));
        D.out_node = m.params.add("out.node", num::randn(V, H, rng, cfg.embed_scale));
        D.out_w2 = m.params.add("out.w2", num::glorot(H, 1, rng));
        D.out_node_bias = m.params.add("out.node_bias", Tensor(V, 1, 0.5));
        Tensor lg(V, V, cfg.init_logit);
        for (std::size_t i = 0; i < V; ++i) lg(i, i) = 0.0;
        m.logits = m.params.add("graph.logits", lg);
        m.obs_center = Tensor(1, p);
        m.obs_spread = Tensor(1, p, 1.0);
        m.sim_center = Tensor(1, d);
        m.sim_spread = Tensor(1, d, 1.0);
        return m;
    }
};

inline Tensor offdiag_mask(std::size_t V) {
    Tensor m(V, V, 1.0);
    for (std::size_t i = 0; i < V; ++i) m(i, i) = 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Encoder

struct Encoding {
    Var mu;     // (n*F) x k, node-major
    Var sigma;  // (n*F) x k
    Var z;      // reparameterised draw
    std::size_t rows = 0;
    std::size_t features = 0;
};

/// Encodes a batch (n x F). `zero_noise` forces epsilon = 0 so z equals mu.
inline Encoding encode(Tape& t, const Model& m, Side side, const Tensor& batch, Rng& rng, bool zero_noise = false) {
    const EncoderIds& e = side == Side::Observed ? m.enc_obs : m.enc_sim;
    const std::size_t F = side == Side::Observed ? m.p : m.d;
    num::require(batch.cols() == F, "encode: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                                        std::to_string(F));
    num::require(batch.all_finite(), "encode: batch contains NaN/Inf; ingest must impute first");
    const std::size_t n = batch.rows(), k = m.config.latent;
    const Tensor& center = side == Side::Observed ? m.obs_center : m.sim_center;
    const Tensor& spread = side == Side::Observed ? m.obs_spread : m.sim_spread;
    Tensor xs(n * F, 1);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < F; ++j) xs[r * F + j] = (batch(r, j) - center[j]) / spread[j];
    Encoding enc;
    enc.rows = n;
    enc.features = F;
    if (F == 0) {
        enc.mu = enc.sigma = enc.z = t.constant(Tensor(0, k));
        return enc;
    }
    Var x = t.constant(std::move(xs));
    Var h = num::relu(num::add_group_bias(num::matmul(x, t.parameter(m.params, e.w1)), t.parameter(m.params, e.embed)));
    Var out = num::add_group_bias(num::matmul(h, t.parameter(m.params, e.w2)), t.parameter(m.params, e.b2));
    enc.mu = num::slice_cols(out, 0, k);
    enc.sigma = num::add_scalar(num::softplus(num::slice_cols(out, k, k)), 1e-6);
    Tensor eps = zero_noise ? Tensor(n * F, k) : num::randn(n * F, k, rng);
    enc.z = num::add(enc.mu, num::mul(enc.sigma, t.constant(std::move(eps))));
    return enc;
}

// ---------------------------------------------------------------------------
// Graph posterior

inline Var edge_probabilities(Tape& t, const Model& m) {
    return num::mul(num::sigmoid(t.parameter(m.params, m.logits)), t.constant(offdiag_mask(m.V())));
}

inline Tensor edge_probabilities(const Model& m) {
    Tape t;
    return edge_probabilities(t, m).value();
}

namespace detail {
inline Tensor logistic_noise(std::size_t V, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor l(V, V);
    for (double& v : l.values()) {
        double a = u(rng);
        while (a <= 0.0 || a >= 1.0) a = u(rng);
        v = std::log(a) - std::log1p(-a);
    }
    return l;
}
}  // namespace detail

/// Binary-concrete relaxed adjacency sample; diagonal is exactly zero.
inline Var sample_graph(Tape& t, Var logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw num::DomainError("sample_graph: temperature must be positive");
    const std::size_t V = logits.rows();
    Var noisy = num::add(logits, t.constant(detail::logistic_noise(V, rng)));
    return num::mul(num::sigmoid(num::scale(noisy, 1.0 / temperature)), t.constant(offdiag_mask(V)));
}

inline Tensor sample_graph(const Tensor& logits, double temperature, Rng& rng) {
    Tape t;
    return sample_graph(t, t.constant(logits), temperature, rng).value();
}

// ---------------------------------------------------------------------------
// Decoder

enum class Pass { Observed, Simulated };

/// Row index into concat_rows(z_obs, z_sim) for every (batch row, node) of one decode pass.
/// The observed pass prefers observed-side encodings; the simulated pass prefers simulated ones.
inline std::vector<std::size_t> content_index(const Model& m, std::size_t n_batch, Pass pass,
                                              const std::vector<std::size_t>& rows) {
    const auto npos = data::NodeMap::npos;
    std::vector<std::size_t> idx;
    idx.reserve(rows.size() * m.V());
    for (std::size_t r : rows)
        for (std::size_t v = 0; v < m.V(); ++v) {
            const std::size_t o = m.nodes.node_obs[v], s = m.nodes.node_sim[v];
            const bool use_obs = pass == Pass::Observed ? o != npos : s == npos;
            idx.push_back(use_obs ? r * m.p + o : n_batch * m.p + r * m.d + s);
        }
    return idx;
}

struct DecodeTrace {
    Var output;  // n x V reconstructions in node order
    Var states;  // (n*V) x k final node states
};

/// T rounds of gated message passing over `graph` followed by the per-node readout.
/// `content` holds one k-wide encoding per (row, node), node-major.
inline DecodeTrace decode_pass(Tape& t, const Model& m, Var graph, Var content) {
    const std::size_t V = m.V(), k = m.config.latent;
    num::require(graph.rows() == V && graph.cols() == V, "decode: graph does not match the node map");
    num::require(content.cols() == k && content.rows() % V == 0, "decode: content does not cover all nodes");
    const std::size_t n = content.rows() / V;
    const DecoderIds& D = m.dec;
    auto P = [&](ParamId id) { return t.parameter(m.params, id); };
    auto act = [&](Var x) { return m.config.linear ? x : num::relu(x); };

    Var indeg = num::matmul(num::transpose(graph), t.constant(Tensor(V, 1, 1.0)));
    Var msg_bias = num::matmul(indeg, P(D.msg_b2));
    Var state = t.constant(Tensor(n * V, k));
    for (std::size_t round = 0; round < m.config.rounds; ++round) {
        Var sender = num::add_group_bias(num::matmul(num::concat_cols({content, state}), P(D.msg_w1)), P(D.msg_send));
        Var receiver = num::add_group_bias(num::matmul(state, P(D.msg_recv_w)), P(D.msg_recv));
        Var agg = num::pair_aggregate(sender, receiver, graph, !m.config.linear);
        Var msg = num::add_group_bias(num::matmul(agg, P(D.msg_w2)), msg_bias);
        Var h = act(num::add_row_bias(num::matmul(msg, P(D.upd_w1)), P(D.upd_b1)));
        state = num::add_row_bias(num::matmul(h, P(D.upd_w2)), P(D.upd_b2));
    }
    Var rin = m.config.self_in_readout ? num::concat_cols({state, content}) : state;
    Var h = act(num::add_group_bias(num::matmul(rin, P(D.out_w1)), P(D.out_node)));
    Var y = num::add_group_bias(num::matmul(h, P(D.out_w2)), P(D.out_node_bias));
    return {num::reshape(y, n, V), state};
}

struct Reconstruction {
    Var x_obs;  // rows(obs_rows) x p
    Var x_sim;  // n x d
    DecodeTrace obs_trace;
    DecodeTrace sim_trace;
};

/// Both decode passes. `obs_rows` restricts the observed pass to a subset of batch rows.
inline Reconstruction decode_forward(Tape& t, const Model& m, Var graph, const Encoding& obs, const Encoding& sim,
                                     const std::vector<std::size_t>& obs_rows) {
    num::require(obs.features == m.p && sim.features == m.d && obs.rows == sim.rows,
                 "decode_forward: encodings do not match the model");
    const std::size_t n = obs.rows;
    Var pool = num::concat_rows(obs.z, sim.z);
    std::vector<std::size_t> all(n);
    for (std::size_t r = 0; r < n; ++r) all[r] = r;

    Reconstruction rec;
    rec.sim_trace = decode_pass(t, m, graph, num::gather_rows(pool, content_index(m, n, Pass::Simulated, all)));
    std::vector<std::size_t> sim_cols(m.d);
    for (std::size_t s = 0; s < m.d; ++s) sim_cols[s] = m.nodes.sim_node[s];
    rec.x_sim = num::gather_cols(rec.sim_trace.output, sim_cols);

    if (!obs_rows.empty()) {
        rec.obs_trace = decode_pass(t, m, graph, num::gather_rows(pool, content_index(m, n, Pass::Observed, obs_rows)));
        std::vector<std::size_t> obs_cols(m.p);
        for (std::size_t j = 0; j < m.p; ++j) obs_cols[j] = m.nodes.obs_node[j];
        rec.x_obs = num::gather_cols(rec.obs_trace.output, obs_cols);
    }
    return rec;
}

inline Reconstruction decode_forward(Tape& t, const Model& m, Var graph, const Encoding& obs, const Encoding& sim) {
    std::vector<std::size_t> all(obs.rows);
    for (std::size_t r = 0; r < obs.rows; ++r) all[r] = r;
    return decode_forward(t, m, graph, obs, sim, all);
}

}  // namespace causim::vgae
