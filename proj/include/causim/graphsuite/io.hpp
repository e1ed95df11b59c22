#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causim/data/graph.hpp"
#include "causim/data/table.hpp"
#include "causim/graphsuite/metrics.hpp"

namespace causim::graphsuite {

/// Reads a V×V edge matrix: header row of node names, then V rows of floats.
/// Values outside [0,1] and a nonzero diagonal are rejected.
inline EdgeProbMatrix read_edge_matrix(const std::string& path, const std::string& method = "") {
    std::ifstream in(path);
    if (!in) throw data::InputError("cannot open " + path);
    EdgeProbMatrix m;
    m.method = method.empty() ? path : method;
    std::string line;
    while (std::getline(in, line) && data::trim(line).empty()) {
    }
    if (data::trim(line).empty()) throw data::InputError(path + ": empty edge matrix");
    m.names = data::split_csv_line(line);
    const std::size_t V = m.names.size();
    m.probs = Tensor(V, V);
    std::size_t r = 0;
    while (std::getline(in, line)) {
        if (data::trim(line).empty()) continue;
        auto cells = data::split_csv_line(line);
        if (r >= V) throw data::InputError(path + ": more rows than nodes");
        if (cells.size() != V) throw data::InputError(path + ": row " + std::to_string(r + 1) + " has wrong width");
        for (std::size_t c = 0; c < V; ++c) {
            const double v = data::parse_cell(cells[c], path + " row " + std::to_string(r + 1));
            if (data::is_missing(v)) throw data::InputError(path + ": missing entry");
            m.probs(r, c) = v;
        }
        ++r;
    }
    if (r != V) throw data::InputError(path + ": expected " + std::to_string(V) + " rows");
    try {
        m.validate();
    } catch (const num::ContractViolation& e) {
        throw data::InputError(path + ": " + e.what());
    }
    return m;
}

inline void write_edge_matrix(const std::string& path, const EdgeProbMatrix& m) {
    std::ofstream out(path);
    if (!out) throw data::InputError("cannot write " + path);
    for (std::size_t i = 0; i < m.names.size(); ++i) out << (i ? "," : "") << m.names[i];
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < m.probs.rows(); ++r) {
        for (std::size_t c = 0; c < m.probs.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.12g", m.probs(r, c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
}

struct EvalReport {
    std::string method;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> auc;
    double l1 = 0.0;
    double l1_standardized = 0.0;
    double threshold = 0.5;
    std::vector<std::string> nodes;
    std::vector<std::string> dropped_pred;
    std::vector<std::string> dropped_truth;
    std::vector<std::pair<std::string, std::string>> true_positives, false_positives, false_negatives;
};

/// Scores a prediction against the truth over their shared nodes.
inline EvalReport evaluate(const EdgeProbMatrix& pred, const data::GroundTruthGraph& truth, double threshold = 0.5) {
    auto a = align_nodes(pred.names, pred.probs, truth.names, truth.adjacency);
    if (!a.dropped_pred.empty() || !a.dropped_truth.empty())
        std::cerr << "note: " << pred.method << ": scoring " << a.names.size() << " shared nodes ("
                  << a.dropped_pred.size() << " prediction-only, " << a.dropped_truth.size() << " truth-only dropped)\n";
    auto cm = classification_metrics(a.pred, a.truth, threshold);
    EvalReport r;
    r.method = pred.method;
    r.recall = cm.recall;
    r.precision = cm.precision;
    r.auc = cm.auc;
    r.l1 = l1_edge_error(a.pred, a.truth);
    r.l1_standardized = standardized_l1(a.pred, a.truth);
    r.threshold = threshold;
    r.nodes = a.names;
    r.dropped_pred = a.dropped_pred;
    r.dropped_truth = a.dropped_truth;
    auto named = [&](const auto& edges, auto& into) {
        for (auto [i, j] : edges) into.emplace_back(a.names[i], a.names[j]);
    };
    named(cm.tp_edges, r.true_positives);
    named(cm.fp_edges, r.false_positives);
    named(cm.fn_edges, r.false_negatives);
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    auto edges = [](const std::vector<std::pair<std::string, std::string>>& e) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& [s, d] : e) a.push_back({s, d});
        return a;
    };
    return {{"method", r.method},
            {"recall", opt(r.recall)},
            {"precision", opt(r.precision)},
            {"auc", opt(r.auc)},
            {"l1_edge_error", r.l1},
            {"l1_standardized", r.l1_standardized},
            {"threshold", r.threshold},
            {"nodes", r.nodes},
            {"dropped_pred", r.dropped_pred},
            {"dropped_truth", r.dropped_truth},
            {"true_positives", edges(r.true_positives)},
            {"false_positives", edges(r.false_positives)},
            {"false_negatives", edges(r.false_negatives)}};
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Bar chart of standardized L1 edge error, one bar per method.
inline std::string l1_bar_chart_svg(const std::vector<EvalReport>& reports) {
    const double bar = 48.0, gap = 24.0, left = 60.0, top = 30.0, height = 240.0;
    const double width = left + static_cast<double>(reports.size()) * (bar + gap) + gap;
    double mx = 0.0;
    for (const auto& r : reports) mx = std::max(mx, r.l1_standardized);
    if (mx <= 0.0) mx = 1.0;
    char buf[256];
    std::string svg;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                  "font-size=\"11\">\n",
                  width, top + height + 50.0);
    svg += buf;
    svg += "<text x=\"8\" y=\"18\">standardized L1 edge error</text>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n", left,
                  top + height, width, top + height);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%.0f\">%.3g</text>\n", top + 4.0, mx);
    svg += buf;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const double h = height * reports[k].l1_standardized / mx;
        const double x = left + gap + static_cast<double>(k) * (bar + gap);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.0f\" height=\"%.1f\" fill=\"#4a7ab5\"/>\n", x,
                      top + height - h, bar, h);
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3f</text>\n",
                      x + bar / 2.0, top + height - h - 4.0, reports[k].l1_standardized);
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">", x + bar / 2.0,
                      top + height + 16.0);
        svg += buf;
        svg += escape_xml(reports[k].method) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace causim::graphsuite
