#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causim/numcore.hpp"

namespace causim::downstream {

using num::ParamId;
using num::ParameterSet;
using num::require;
using num::Tape;
using num::Tensor;
using num::Var;

enum class Kind { ecmpnn, sage, mlp, random_guess };
enum class Aggregator { mean, sum, max };

inline const char* to_string(Kind k) {
    switch (k) {
        case Kind::ecmpnn: return "ecmpnn";
        case Kind::sage: return "sage";
        case Kind::mlp: return "mlp";
        case Kind::random_guess: return "random_guess";
    }
    return "?";
}

inline const char* to_string(Aggregator a) {
    switch (a) {
        case Aggregator::mean: return "mean";
        case Aggregator::sum: return "sum";
        case Aggregator::max: return "max";
    }
    return "?";
}

inline Kind parse_kind(const std::string& s) {
    if (s == "ecmpnn") return Kind::ecmpnn;
    if (s == "sage") return Kind::sage;
    if (s == "mlp") return Kind::mlp;
    if (s == "random_guess") return Kind::random_guess;
    throw num::ContractViolation("unknown predictor kind '" + s + "'");
}

inline Aggregator parse_aggregator(const std::string& s) {
    if (s == "mean") return Aggregator::mean;
    if (s == "sum") return Aggregator::sum;
    if (s == "max") return Aggregator::max;
    throw num::ContractViolation("unknown aggregator '" + s + "'");
}

struct PredictorConfig {
    Kind kind = Kind::ecmpnn;
    Tensor skeleton;  // V×V, skeleton(j,i) != 0 means messages flow j -> i
    bool undirected = false;
    std::size_t layers = 2;
    std::size_t hidden = 16;
    Aggregator aggregator = Aggregator::mean;
    std::uint64_t seed = 0;
    double lr = 3e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::size_t patience = 20;
    double validation_fraction = 0.1;

    void validate(std::size_t V) const {
        require(layers >= 1 && hidden >= 1, "PredictorConfig: layers and hidden must be positive");
        require(lr > 0.0 && epochs >= 1 && batch_size >= 1, "PredictorConfig: bad optimiser settings");
        require(validation_fraction >= 0.0 && validation_fraction < 1.0,
                "PredictorConfig: validation_fraction outside [0,1)");
        if (kind == Kind::ecmpnn || kind == Kind::sage)
            require(skeleton.rows() == V && skeleton.cols() == V, "PredictorConfig: skeleton must be V x V");
    }
};

inline nlohmann::json to_json(const PredictorConfig& c) {
    return {{"kind", to_string(c.kind)},   {"undirected", c.undirected}, {"layers", c.layers},
            {"hidden", c.hidden},          {"aggregator", to_string(c.aggregator)},
            {"seed", c.seed},              {"lr", c.lr},                 {"epochs", c.epochs},
            {"batch_size", c.batch_size},  {"patience", c.patience},
            {"validation_fraction", c.validation_fraction}};
}

struct LayerIds {
    ParamId w, b;
};

struct Predictor {
    PredictorConfig config;
    std::size_t V = 0;
    std::size_t target = 0;
    ParameterSet params;
    ParamId in_w = 0, in_node = 0, head_w = 0, head_b = 0;
    std::vector<LayerIds> layers;
    Tensor message_weights;  // mean (or sum) aggregation weights, (j,i) layout
    Tensor neighbours;       // binary in-neighbour pattern used by max
    std::vector<double> train_targets;
    std::size_t epochs_run = 0;
    double best_validation = std::numeric_limits<double>::infinity();

    static Predictor create(const PredictorConfig& cfg, std::size_t V, std::size_t target) {
        require(V >= 1 && target < V, "Predictor: target out of range");
        cfg.validate(V);
        Predictor p;
        p.config = cfg;
        p.V = V;
        p.target = target;
        num::Rng rng = num::derive(cfg.seed, 0xD0);
        const std::size_t H = cfg.hidden;
        switch (cfg.kind) {
            case Kind::random_guess: return p;
            case Kind::mlp: {
                std::size_t din = V;
                for (std::size_t l = 0; l < cfg.layers; ++l) {
                    p.layers.push_back({p.params.add("mlp.w" + std::to_string(l), num::glorot(din, H, rng)),
                                        p.params.add("mlp.b" + std::to_string(l), Tensor(1, H))});
                    din = H;
                }
                break;
            }
            case Kind::ecmpnn:
            case Kind::sage: {
                p.in_w = p.params.add("in.w", num::glorot(1, H, rng));
                p.in_node = p.params.add("in.node", num::randn(V, H, rng, 0.1));
                for (std::size_t l = 0; l < cfg.layers; ++l) {
                    // ecmpnn: one H×H transform per source node, F(E_ji) selected by the edge's sender.
                    Tensor w = cfg.kind == Kind::ecmpnn ? Tensor(V * H, H) : num::glorot(2 * H, H, rng);
                    if (cfg.kind == Kind::ecmpnn)
                        for (std::size_t j = 0; j < V; ++j) {
                            Tensor blk = num::glorot(H, H, rng);
                            std::copy(blk.values().begin(), blk.values().end(), w.data() + j * H * H);
                        }
                    p.layers.push_back({p.params.add("layer" + std::to_string(l) + ".w", w),
                                        p.params.add("layer" + std::to_string(l) + ".b", Tensor(1, H))});
                }
                p.build_neighbourhood();
                break;
            }
        }
        p.head_w = p.params.add("head.w", num::glorot(H, 1, rng));
        p.head_b = p.params.add("head.b", Tensor(1, 1));
        return p;
    }

    void build_neighbourhood() {
        Tensor adj(V, V);
        for (std::size_t j = 0; j < V; ++j)
            for (std::size_t i = 0; i < V; ++i) {
                if (i == j) continue;
                if (config.skeleton(j, i) != 0.0 || (config.undirected && config.skeleton(i, j) != 0.0)) adj(j, i) = 1.0;
            }
        if (config.kind == Kind::ecmpnn)
            for (std::size_t i = 0; i < V; ++i) adj(i, i) = 1.0;
        neighbours = adj;
        message_weights = adj;
        if (config.kind == Kind::ecmpnn || config.aggregator == Aggregator::mean)
            for (std::size_t i = 0; i < V; ++i) {
                double deg = 0.0;
                for (std::size_t j = 0; j < V; ++j) deg += adj(j, i);
                if (deg > 0.0)
                    for (std::size_t j = 0; j < V; ++j) message_weights(j, i) /= deg;
            }
    }
};

/// Input rows with the target column zeroed.
inline Tensor mask_target(const Tensor& X, std::size_t target) {
    Tensor out = X;
    for (std::size_t r = 0; r < out.rows(); ++r) out(r, target) = 0.0;
    return out;
}

/// SAGE combination [h_i ‖ AGG({h_u : u → i})] before the layer's linear map.
inline Var sage_combine(Var h, const Predictor& p) {
    Var agg = p.config.aggregator == Aggregator::max ? num::graph_max(h, p.neighbours)
                                                     : num::graph_aggregate(h, p.message_weights);
    return num::concat_cols({h, agg});
}

/// Node embeddings after all message-passing layers, node-major ((n·V) × H).
inline Var node_embeddings(Tape& t, const Predictor& p, const Tensor& X) {
    const std::size_t n = X.rows(), V = p.V;
    Tensor x = mask_target(X, p.target);
    Var col = t.constant(x.reshaped(n * V, 1));
    Var h = num::add_group_bias(num::matmul(col, t.parameter(p.params, p.in_w)), t.parameter(p.params, p.in_node));
    for (const auto& L : p.layers) {
        Var pre = p.config.kind == Kind::ecmpnn
                      ? num::graph_aggregate(num::node_linear(h, t.parameter(p.params, L.w), V), p.message_weights)
                      : num::matmul(sage_combine(h, p), t.parameter(p.params, L.w));
        h = num::relu(num::add_row_bias(pre, t.parameter(p.params, L.b)));
    }
    return h;
}

/// Predictions (n × 1) on the tape. Not defined for random_guess.
inline Var forward(Tape& t, const Predictor& p, const Tensor& X) {
    require(X.cols() == p.V, "downstream::forward: feature width mismatch");
    require(p.config.kind != Kind::random_guess, "downstream::forward: random_guess has no network");
    Var h;
    if (p.config.kind == Kind::mlp) {
        h = t.constant(mask_target(X, p.target));
        for (const auto& L : p.layers)
            h = num::relu(num::add_row_bias(num::matmul(h, t.parameter(p.params, L.w)), t.parameter(p.params, L.b)));
    } else {
        std::vector<std::size_t> rows(X.rows());
        for (std::size_t b = 0; b < X.rows(); ++b) rows[b] = b * p.V + p.target;
        h = num::gather_rows(node_embeddings(t, p, X), rows);
    }
    return num::add_row_bias(num::matmul(h, t.parameter(p.params, p.head_w)), t.parameter(p.params, p.head_b));
}

inline Tensor predict(const Predictor& p, const Tensor& X) {
    if (p.config.kind == Kind::random_guess) {
        require(!p.train_targets.empty(), "random_guess: not fitted");
        num::Rng rng = num::derive(p.config.seed, 0x9E55);
        std::uniform_int_distribution<std::size_t> pick(0, p.train_targets.size() - 1);
        Tensor out(X.rows(), 1);
        for (std::size_t r = 0; r < X.rows(); ++r) out(r, 0) = p.train_targets[pick(rng)];
        return out;
    }
    Tape t;
    return forward(t, p, X).value();
}

inline double mse(const Tensor& pred, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) s += (pred[r] - y[r]) * (pred[r] - y[r]);
    return y.empty() ? 0.0 : s / static_cast<double>(y.size());
}

inline Tensor select_rows(const Tensor& X, const std::vector<std::size_t>& rows) {
    Tensor out(rows.size(), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < X.cols(); ++c) out(r, c) = X(rows[r], c);
    return out;
}

/// Fits on rows of X (target column included, masked at the input) by Adam on the
/// mean squared error, keeping the parameters with the best validation error.
inline Predictor fit_predictor(const PredictorConfig& cfg, const Tensor& X, std::size_t target) {
    require(X.rows() >= 1, "fit_predictor: empty training set");
    require(X.all_finite(), "fit_predictor: training rows contain missing values");
    Predictor p = Predictor::create(cfg, X.cols(), target);
    for (std::size_t r = 0; r < X.rows(); ++r) p.train_targets.push_back(X(r, target));
    if (cfg.kind == Kind::random_guess) return p;
    if (X.rows() == 1) std::cerr << "warning: fitting a predictor on a single row\n";

    num::Rng rng = num::derive(cfg.seed, 0xF17);
    std::vector<std::size_t> order(X.rows());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(X.rows())));
    if (cfg.validation_fraction > 0.0 && X.rows() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, X.rows() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    if (val.empty()) val = train;
    const Tensor Xv = select_rows(X, val);
    std::vector<double> yv;
    for (std::size_t r : val) yv.push_back(X(r, target));

    num::AdamState adam(num::AdamConfig{cfg.lr});
    ParameterSet best = p.params;
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        for (std::size_t s = 0; s < train.size(); s += cfg.batch_size) {
            std::vector<std::size_t> rows(train.begin() + static_cast<std::ptrdiff_t>(s),
                                          train.begin() + static_cast<std::ptrdiff_t>(std::min(train.size(), s + cfg.batch_size)));
            const Tensor Xb = select_rows(X, rows);
            Tensor yb(rows.size(), 1);
            for (std::size_t r = 0; r < rows.size(); ++r) yb(r, 0) = X(rows[r], target);
            Tape t;
            Var err = num::sub(forward(t, p, Xb), t.constant(yb));
            Var loss = num::scale(num::sum(num::square(err)), 1.0 / static_cast<double>(rows.size()));
            num::adam_step(adam, p.params, t.backward(loss));
        }
        p.epochs_run = epoch + 1;
        const double v = mse(predict(p, Xv), yv);
        if (v < p.best_validation) {
            p.best_validation = v;
            best = p.params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    p.params = best;
    return p;
}

struct GridResult {
    Predictor predictor;
    std::vector<nlohmann::json> cells;
};

/// Hidden width × learning rate grid; keeps the cell with the lowest validation error.
inline GridResult fit_grid(const PredictorConfig& base, const Tensor& X, std::size_t target,
                           const std::vector<std::size_t>& widths = {8, 16, 32},
                           const std::vector<double>& rates = {1e-3, 3e-3, 1e-2}) {
    GridResult out;
    if (base.kind == Kind::random_guess) {
        out.predictor = fit_predictor(base, X, target);
        return out;
    }
    bool have = false;
    for (std::size_t w : widths)
        for (double lr : rates) {
            PredictorConfig c = base;
            c.hidden = w;
            c.lr = lr;
            Predictor p = fit_predictor(c, X, target);
            out.cells.push_back({{"hidden", w}, {"lr", lr}, {"validation_mse", p.best_validation}, {"epochs", p.epochs_run}});
            if (!have || p.best_validation < out.predictor.best_validation) {
                out.predictor = std::move(p);
                have = true;
            }
        }
    return out;
}

}  // namespace causim::downstream
