#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "causim/data/dataset.hpp"
#include "causim/data/graph.hpp"
#include "causim/data/ingest.hpp"
#include "causim/data/table.hpp"
#include "causim/numcore/random.hpp"

namespace causim::data {

struct SyntheticSpec {
    std::size_t nodes = 10;
    double edge_prob = 0.3;
    bool nonlinear = false;
    double noise_scale = 1.0;
    std::size_t shifted_columns = 3;
    std::vector<std::size_t> shifted;  // explicit choice; overrides shifted_columns when non-empty
    double shift_sigma = 0.5;
    std::size_t extra_sim_vars = 4;
    std::size_t n_obs = 500;
    std::size_t n_sim = 2000;
    double missing_rate = 0.2;
    double sim_noise_correlation = 0.9;
    std::uint64_t seed = 0;

    void validate() const {
        require(nodes >= 2, "SyntheticSpec: need at least 2 nodes");
        require(edge_prob >= 0.0 && edge_prob <= 1.0, "SyntheticSpec: edge_prob outside [0,1]");
        require(missing_rate >= 0.0 && missing_rate <= 1.0, "SyntheticSpec: missing_rate outside [0,1]");
        require(sim_noise_correlation >= 0.0 && sim_noise_correlation <= 1.0,
                "SyntheticSpec: sim_noise_correlation outside [0,1]");
        require(noise_scale > 0.0, "SyntheticSpec: noise_scale must be positive");
        require(n_obs >= 2 && n_sim >= n_obs, "SyntheticSpec: need 2 <= n_obs <= n_sim");
        require(shifted_columns <= nodes, "SyntheticSpec: more shifted columns than nodes");
        for (auto s : shifted) require(s < nodes, "SyntheticSpec: shifted column out of range");
    }
};

/// Structural equation model x_j = b_j + Σ_i W(i,j)·f(x_i) + e_j, with f the identity or tanh.
struct Sem {
    std::vector<std::string> names;
    std::vector<std::size_t> order;  // topological
    Tensor weights;                  // V x V
    std::vector<double> intercept;
    bool nonlinear = false;
    double noise_scale = 1.0;

    [[nodiscard]] std::size_t size() const { return names.size(); }

    [[nodiscard]] Tensor adjacency() const {
        Tensor a(size(), size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = weights[i] != 0.0;
        return a;
    }

    /// Values from unit-variance noise `eps` (N x V), which is scaled by noise_scale.
    /// `mechanism_offset` adds a per-node constant after the parents are combined.
    [[nodiscard]] Tensor propagate(const Tensor& eps, const std::vector<double>& mechanism_offset = {}) const {
        require(eps.cols() == size(), "Sem::propagate: noise width mismatch");
        Tensor x(eps.rows(), size());
        for (std::size_t r = 0; r < eps.rows(); ++r)
            for (std::size_t j : order) {
                double v = intercept[j] + noise_scale * eps(r, j);
                for (std::size_t i = 0; i < size(); ++i) {
                    const double w = weights(i, j);
                    if (w != 0.0) v += w * (nonlinear ? std::tanh(x(r, i)) : x(r, i));
                }
                if (!mechanism_offset.empty()) v += mechanism_offset[j];
                x(r, j) = v;
            }
        return x;
    }

    [[nodiscard]] Tensor sample(std::size_t n, num::Rng& rng, const std::vector<double>& mechanism_offset = {}) const {
        return propagate(num::randn(n, size(), rng), mechanism_offset);
    }
};

struct SyntheticPair {
    RawTable obs;
    RawTable sim;
    GroundTruthGraph truth;
    Sem sem;                        // over the union node set, observed nodes first
    std::vector<std::size_t> shifted;  // observed node indices shifted in the simulator
    std::string target;
    IngestConfig ingest;
};

namespace detail {

inline double draw_weight(num::Rng& rng) {
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    std::bernoulli_distribution sign(0.5);
    const double m = mag(rng);
    return sign(rng) ? m : -m;
}

inline std::size_t pick_target(const Tensor& adj, std::size_t n) {
    std::size_t best = n;
    long best_score = -1;
    for (std::size_t j = 0; j < n; ++j) {
        long parents = 0, children = 0;
        for (std::size_t i = 0; i < adj.rows(); ++i) parents += adj(i, j) != 0.0;
        for (std::size_t k = 0; k < n; ++k) children += adj(j, k) != 0.0;
        const long score = (parents > 0 && children > 0 ? 1000 : 0) + parents;
        if (score > best_score) best_score = score, best = j;
    }
    return best;
}

}  // namespace detail

/// Raw observed/simulated tables from one random DAG. Days 0..n_sim-1 carry one SEM
/// draw each; the simulator sees every day with noise correlated to the field draw,
/// the observed table covers n_obs random days with cells missing at random.
inline SyntheticPair generate_synthetic_raw(const SyntheticSpec& spec) {
    spec.validate();
    num::Rng rng(spec.seed);
    const std::size_t n = spec.nodes;
    const std::size_t V = n + spec.extra_sim_vars;

    SyntheticPair out;
    Sem& sem = out.sem;
    for (std::size_t i = 0; i < n; ++i) sem.names.push_back("X" + std::to_string(i));
    for (std::size_t k = 0; k < spec.extra_sim_vars; ++k) sem.names.push_back("S" + std::to_string(k));
    sem.nonlinear = spec.nonlinear;
    sem.noise_scale = spec.noise_scale;
    sem.intercept.assign(V, 0.0);
    sem.weights = Tensor(V, V);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::bernoulli_distribution coin(spec.edge_prob);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (coin(rng)) sem.weights(perm[a], perm[b]) = detail::draw_weight(rng);
    sem.order = perm;
    for (std::size_t k = 0; k < spec.extra_sim_vars; ++k) {
        const std::size_t node = n + k;
        std::uniform_int_distribution<std::size_t> count(1, std::min<std::size_t>(2, n));
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t np = count(rng);
        for (std::size_t q = 0; q < np; ++q) sem.weights(pool[q], node) = detail::draw_weight(rng);
        sem.order.push_back(node);
    }

    out.truth.names = sem.names;
    out.truth.adjacency = sem.adjacency();
    out.truth.validate();

    const std::size_t target = detail::pick_target(out.truth.adjacency, n);
    out.target = sem.names[target];

    if (!spec.shifted.empty()) {
        out.shifted = spec.shifted;
    } else {
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng);
        out.shifted.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.shifted_columns));
        std::sort(out.shifted.begin(), out.shifted.end());
    }

    const Tensor eps_field = num::randn(spec.n_sim, V, rng);
    const Tensor eps_extra = num::randn(spec.n_sim, V, rng);
    Tensor eps_sim(spec.n_sim, V);
    const double rho = spec.sim_noise_correlation;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t i = 0; i < eps_sim.size(); ++i) eps_sim[i] = rho * eps_field[i] + rho_c * eps_extra[i];
    const Tensor x_field = sem.propagate(eps_field);
    Tensor x_sim = sem.propagate(eps_sim);
    for (std::size_t j : out.shifted) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < spec.n_sim; ++r) mean += x_sim(r, j);
        mean /= static_cast<double>(spec.n_sim);
        for (std::size_t r = 0; r < spec.n_sim; ++r) sq += (x_sim(r, j) - mean) * (x_sim(r, j) - mean);
        const double sd = std::sqrt(sq / static_cast<double>(spec.n_sim));
        for (std::size_t r = 0; r < spec.n_sim; ++r) x_sim(r, j) += spec.shift_sigma * sd;
    }

    std::vector<std::size_t> days(spec.n_sim);
    std::iota(days.begin(), days.end(), 0);
    std::shuffle(days.begin(), days.end(), rng);
    days.resize(spec.n_obs);
    std::sort(days.begin(), days.end());

    const std::chrono::sys_days start = std::chrono::year{2000} / std::chrono::January / 1;
    auto stamp = [&](std::size_t d) { return Timestamp(std::chrono::sys_days(start + std::chrono::days(d))); };

    out.sim.source = Source::Simulated;
    out.sim.names = sem.names;
    out.sim.columns.assign(V, {});
    for (std::size_t r = 0; r < spec.n_sim; ++r) {
        out.sim.times.push_back(stamp(r));
        for (std::size_t j = 0; j < V; ++j) out.sim.columns[j].push_back(x_sim(r, j));
    }

    std::bernoulli_distribution missing(spec.missing_rate);
    out.obs.source = Source::Observed;
    out.obs.names.assign(sem.names.begin(), sem.names.begin() + static_cast<std::ptrdiff_t>(n));
    out.obs.columns.assign(n, {});
    for (std::size_t d : days) {
        out.obs.times.push_back(stamp(d));
        for (std::size_t j = 0; j < n; ++j) {
            out.obs.columns[j].push_back(missing(rng) ? kMissing : x_field(d, j));
        }
    }

    out.ingest.target = out.target;
    out.ingest.align = Align::Union;
    out.ingest.seed = spec.seed;
    return out;
}

inline std::pair<DualDataset, GroundTruthGraph> generate_synthetic_pair(const SyntheticSpec& spec) {
    SyntheticPair raw = generate_synthetic_raw(spec);
    DualDataset ds = ingest(raw.obs, raw.sim, raw.ingest);
    return {std::move(ds), std::move(raw.truth)};
}

}  // namespace causim::data
