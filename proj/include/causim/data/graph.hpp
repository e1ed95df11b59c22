#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "causim/data/table.hpp"
#include "causim/numcore/tensor.hpp"

namespace causim::data {

using num::Tensor;

/// Kahn topological order of the digraph adj(i,j) != 0 meaning i -> j.
/// Returns nullopt when a directed cycle exists. Self-loops count as cycles.
inline std::optional<std::vector<std::size_t>> topological_order(const Tensor& adj) {
    require(adj.rows() == adj.cols(), "topological_order: adjacency must be square");
    const std::size_t n = adj.rows();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (adj(i, j) != 0.0) ++indeg[j];
    std::vector<std::size_t> ready, order;
    for (std::size_t j = n; j-- > 0;)
        if (indeg[j] == 0) ready.push_back(j);
    while (!ready.empty()) {
        const std::size_t i = ready.back();
        ready.pop_back();
        order.push_back(i);
        for (std::size_t j = n; j-- > 0;)
            if (adj(i, j) != 0.0 && --indeg[j] == 0) ready.push_back(j);
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

inline bool is_acyclic(const Tensor& adj) { return topological_order(adj).has_value(); }

/// Some directed cycle as a node sequence (first node not repeated), or empty.
inline std::vector<std::size_t> find_cycle(const Tensor& adj) {
    const std::size_t n = adj.rows();
    std::vector<int> color(n, 0);
    std::vector<std::size_t> parent(n, n);
    for (std::size_t root = 0; root < n; ++root) {
        if (color[root] != 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        color[root] = 1;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            if (next == n) {
                color[u] = 2;
                stack.pop_back();
                continue;
            }
            const std::size_t v = next++;
            if (adj(u, v) == 0.0) continue;
            if (color[v] == 1) {
                std::vector<std::size_t> cyc{v};
                for (std::size_t w = u; w != v; w = parent[w]) cyc.push_back(w);
                std::reverse(cyc.begin() + 1, cyc.end());
                return cyc;
            }
            if (color[v] == 0) {
                color[v] = 1;
                parent[v] = u;
                stack.emplace_back(v, 0);
            }
        }
    }
    return {};
}

struct GroundTruthGraph {
    std::vector<std::string> names;
    Tensor adjacency;

    [[nodiscard]] std::size_t size() const { return names.size(); }
    [[nodiscard]] std::size_t edge_count() const {
        std::size_t e = 0;
        for (double v : adjacency.values()) e += v != 0.0;
        return e;
    }

    void validate() const {
        require(adjacency.rows() == names.size() && adjacency.cols() == names.size(),
                "GroundTruthGraph: adjacency does not match node count");
        for (std::size_t i = 0; i < size(); ++i) {
            require(adjacency(i, i) == 0.0, "GroundTruthGraph: self-loop on " + names[i]);
            for (std::size_t j = 0; j < size(); ++j)
                require(adjacency(i, j) == 0.0 || adjacency(i, j) == 1.0, "GroundTruthGraph: entries must be 0/1");
        }
        if (!is_acyclic(adjacency)) throw InputError("ground-truth graph contains a directed cycle");
    }
};

inline GroundTruthGraph graph_from_edges(const std::vector<std::string>& nodes,
                                         const std::vector<std::pair<std::string, std::string>>& edges) {
    GroundTruthGraph g;
    g.names = nodes;
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < nodes.size(); ++i) idx[nodes[i]] = i;
    g.adjacency = Tensor(nodes.size(), nodes.size());
    for (const auto& [s, d] : edges) {
        auto a = idx.find(s), b = idx.find(d);
        if (a == idx.end() || b == idx.end()) throw InputError("edge references unknown node: " + s + "->" + d);
        g.adjacency(a->second, b->second) = 1.0;
    }
    g.validate();
    return g;
}

/// Edge-list CSV (`src,dst`, optional header) or JSON `{"nodes": [...], "adjacency": [[...]]}`.
/// Edge lists take their node set from first appearance; pass `nodes` to fix the order.
inline GroundTruthGraph load_ground_truth(const std::string& path, const std::vector<std::string>& nodes = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    if (is_json) {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ": " + e.what());
        }
        if (!j.contains("nodes") || !j.contains("adjacency")) throw InputError(path + ": need 'nodes' and 'adjacency'");
        GroundTruthGraph g;
        g.names = j.at("nodes").get<std::vector<std::string>>();
        const auto rows = j.at("adjacency").get<std::vector<std::vector<double>>>();
        if (rows.size() != g.names.size()) throw InputError(path + ": adjacency row count mismatch");
        g.adjacency = Tensor(g.names.size(), g.names.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != g.names.size()) throw InputError(path + ": adjacency column count mismatch");
            for (std::size_t c = 0; c < rows[r].size(); ++c) g.adjacency(r, c) = rows[r][c];
        }
        try {
            g.validate();
        } catch (const ContractViolation& e) {
            throw InputError(path + ": " + e.what());
        }
        return g;
    }
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<std::string> order = nodes;
    auto note = [&](const std::string& n) {
        if (std::find(order.begin(), order.end(), n) == order.end()) {
            if (!nodes.empty()) throw InputError(path + ": unknown node " + n);
            order.push_back(n);
        }
    };
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 2) throw InputError(path + ": edge lines must be src,dst");
        if (first && (cells[0] == "src" || cells[0] == "source")) {
            first = false;
            continue;
        }
        first = false;
        note(cells[0]);
        note(cells[1]);
        edges.emplace_back(cells[0], cells[1]);
    }
    try {
        return graph_from_edges(order, edges);
    } catch (const ContractViolation& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline void save_ground_truth_json(const std::string& path, const GroundTruthGraph& g) {
    nlohmann::json j;
    j["nodes"] = g.names;
    std::vector<std::vector<int>> rows(g.size(), std::vector<int>(g.size()));
    for (std::size_t r = 0; r < g.size(); ++r)
        for (std::size_t c = 0; c < g.size(); ++c) rows[r][c] = g.adjacency(r, c) != 0.0;
    j["adjacency"] = rows;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(1) << '\n';
}

inline void save_edge_list(const std::string& path, const GroundTruthGraph& g) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << "src,dst\n";
    for (std::size_t r = 0; r < g.size(); ++r)
        for (std::size_t c = 0; c < g.size(); ++c)
            if (g.adjacency(r, c) != 0.0) out << g.names[r] << ',' << g.names[c] << '\n';
}

}  // namespace causim::data
