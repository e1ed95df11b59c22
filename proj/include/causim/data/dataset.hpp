#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "causim/data/table.hpp"
#include "causim/numcore/tensor.hpp"

namespace causim::data {

using num::Tensor;

struct ColumnScale {
    double min = 0.0;
    double max = 0.0;

    [[nodiscard]] double range() const { return max - min; }
    [[nodiscard]] double scale(double x) const { return range() > 0.0 ? (x - min) / range() : 0.0; }
    [[nodiscard]] double unscale(double u) const { return range() > 0.0 ? u * range() + min : min; }
};

/// Index-aligned observed and simulated tables in [0,1] units.
struct DualDataset {
    std::vector<std::string> obs_names;
    std::vector<std::string> sim_names;
    std::vector<std::chrono::sys_days> dates;
    Tensor x_obs;     // N x p
    Tensor x_sim;     // N x d
    Tensor mask_obs;  // N x p, 1 where the value was measured
    std::vector<std::pair<std::size_t, std::size_t>> overlap;  // (obs col, sim col)
    std::vector<ColumnScale> obs_scale;
    std::vector<ColumnScale> sim_scale;
    std::size_t target = 0;  // observed column supervised by the SP term
    std::vector<std::string> dropped;

    [[nodiscard]] std::size_t rows() const { return x_obs.rows(); }
    [[nodiscard]] std::size_t p() const { return obs_names.size(); }
    [[nodiscard]] std::size_t d() const { return sim_names.size(); }
    [[nodiscard]] std::size_t c() const { return overlap.size(); }

    void validate() const {
        const std::size_t n = dates.size();
        require(x_obs.rows() == n && x_sim.rows() == n && mask_obs.rows() == n, "DualDataset: row count mismatch");
        require(x_obs.cols() == p() && mask_obs.cols() == p() && x_sim.cols() == d(), "DualDataset: column mismatch");
        require(obs_scale.size() == p() && sim_scale.size() == d(), "DualDataset: scale vector mismatch");
        require(target < p(), "DualDataset: target out of range");
        require(c() <= std::min(p(), d()), "DualDataset: overlap larger than either side");
        std::set<std::size_t> so, ss;
        for (auto [o, s] : overlap) {
            require(o < p() && s < d(), "DualDataset: overlap index out of range");
            require(so.insert(o).second && ss.insert(s).second, "DualDataset: overlap not injective");
        }
        for (double v : x_obs.values()) require(v >= 0.0 && v <= 1.0, "DualDataset: observed value outside [0,1]");
        for (double v : x_sim.values()) require(v >= 0.0 && v <= 1.0, "DualDataset: simulated value outside [0,1]");
        for (double v : mask_obs.values()) require(v == 0.0 || v == 1.0, "DualDataset: mask must be 0/1");
    }

    [[nodiscard]] std::size_t sim_partner(std::size_t obs_col) const {
        for (auto [o, s] : overlap)
            if (o == obs_col) return s;
        return npos;
    }

    [[nodiscard]] DualDataset select_rows(const std::vector<std::size_t>& idx) const {
        DualDataset out = *this;
        out.dates.clear();
        out.x_obs = Tensor(idx.size(), p());
        out.x_sim = Tensor(idx.size(), d());
        out.mask_obs = Tensor(idx.size(), p());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            out.dates.push_back(dates.at(idx[r]));
            for (std::size_t j = 0; j < p(); ++j) {
                out.x_obs(r, j) = x_obs(idx[r], j);
                out.mask_obs(r, j) = mask_obs(idx[r], j);
            }
            for (std::size_t j = 0; j < d(); ++j) out.x_sim(r, j) = x_sim(idx[r], j);
        }
        return out;
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

/// Union variable set: every observed column, then simulator-only columns.
/// Overlap pairs are fused into the observed-side node.
struct NodeMap {
    std::vector<std::string> names;
    std::vector<std::size_t> obs_node;  // obs col -> node
    std::vector<std::size_t> sim_node;  // sim col -> node
    std::vector<std::size_t> node_obs;  // node -> obs col or npos
    std::vector<std::size_t> node_sim;  // node -> sim col or npos

    [[nodiscard]] std::size_t size() const { return names.size(); }
    static constexpr std::size_t npos = DualDataset::npos;

    static NodeMap build(const DualDataset& ds) {
        NodeMap m;
        m.obs_node.resize(ds.p());
        m.sim_node.assign(ds.d(), npos);
        for (std::size_t j = 0; j < ds.p(); ++j) {
            m.obs_node[j] = j;
            m.names.push_back(ds.obs_names[j]);
            m.node_obs.push_back(j);
            m.node_sim.push_back(npos);
        }
        for (auto [o, s] : ds.overlap) {
            m.sim_node[s] = o;
            m.node_sim[o] = s;
        }
        for (std::size_t s = 0; s < ds.d(); ++s) {
            if (m.sim_node[s] != npos) continue;
            m.sim_node[s] = m.names.size();
            m.names.push_back(ds.sim_names[s]);
            m.node_obs.push_back(npos);
            m.node_sim.push_back(s);
        }
        return m;
    }
};

/// Values on the union node set (NodeMap order): observed columns, overlap nodes
/// taking the observed side, then simulator-only columns.
inline Tensor union_values(const DualDataset& ds) {
    const NodeMap m = NodeMap::build(ds);
    Tensor out(ds.rows(), m.size());
    for (std::size_t v = 0; v < m.size(); ++v)
        for (std::size_t r = 0; r < ds.rows(); ++r)
            out(r, v) = m.node_obs[v] != NodeMap::npos ? ds.x_obs(r, m.node_obs[v]) : ds.x_sim(r, m.node_sim[v]);
    return out;
}

}  // namespace causim::data
