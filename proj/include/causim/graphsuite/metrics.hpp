#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "causim/numcore/tensor.hpp"

namespace causim::graphsuite {

using num::require;
using num::Tensor;

/// Edge-probability matrix with node names and the method that produced it.
struct EdgeProbMatrix {
    std::vector<std::string> names;
    Tensor probs;
    std::string method;

    void validate() const {
        require(probs.rows() == names.size() && probs.cols() == names.size(), "EdgeProbMatrix: shape/name mismatch");
        for (std::size_t i = 0; i < names.size(); ++i) {
            require(probs(i, i) == 0.0, "EdgeProbMatrix: nonzero diagonal for " + names[i]);
            for (std::size_t j = 0; j < names.size(); ++j)
                require(probs(i, j) >= 0.0 && probs(i, j) <= 1.0, "EdgeProbMatrix: entry outside [0,1]");
        }
    }
};

struct Alignment {
    std::vector<std::string> names;
    Tensor pred;
    Tensor truth;
    std::vector<std::string> dropped_pred;
    std::vector<std::string> dropped_truth;
};

/// Restricts both matrices to the nodes they share, in truth order.
inline Alignment align_nodes(const std::vector<std::string>& pred_names, const Tensor& pred,
                             const std::vector<std::string>& truth_names, const Tensor& truth) {
    Alignment a;
    std::vector<std::size_t> pi, ti;
    for (std::size_t t = 0; t < truth_names.size(); ++t) {
        auto it = std::find(pred_names.begin(), pred_names.end(), truth_names[t]);
        if (it == pred_names.end()) {
            a.dropped_truth.push_back(truth_names[t]);
            continue;
        }
        a.names.push_back(truth_names[t]);
        ti.push_back(t);
        pi.push_back(static_cast<std::size_t>(it - pred_names.begin()));
    }
    for (const auto& n : pred_names)
        if (std::find(truth_names.begin(), truth_names.end(), n) == truth_names.end()) a.dropped_pred.push_back(n);
    const std::size_t V = a.names.size();
    a.pred = Tensor(V, V);
    a.truth = Tensor(V, V);
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) {
            a.pred(i, j) = pred(pi[i], pi[j]);
            a.truth(i, j) = truth(ti[i], ti[j]);
        }
    return a;
}

struct ClassificationMetrics {
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> auc;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    std::vector<std::pair<std::size_t, std::size_t>> tp_edges, fp_edges, fn_edges;
};

/// Mann-Whitney AUC over scores with binary labels; ties count one half.
inline std::optional<double> auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the rank, so tied groups get integer values.
    std::vector<double> rank2(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double r2 = static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = r2;
        i = j + 1;
    }
    double pos = 0.0, neg = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i]) pos += 1.0, sum2 += rank2[i];
        else neg += 1.0;
    }
    if (pos == 0.0 || neg == 0.0) return std::nullopt;
    const double u2 = sum2 - pos * (pos + 1.0);  // 2·U
    return u2 / (2.0 * pos * neg);
}

inline ClassificationMetrics classification_metrics(const Tensor& pred, const Tensor& truth, double threshold = 0.5) {
    require(pred.same_shape(truth) && pred.rows() == pred.cols(), "classification_metrics: shape mismatch");
    ClassificationMetrics m;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            if (i == j) continue;
            const bool t = truth(i, j) != 0.0;
            const bool p = pred(i, j) > threshold;
            scores.push_back(pred(i, j));
            labels.push_back(t);
            if (t && p) ++m.true_positive, m.tp_edges.emplace_back(i, j);
            if (!t && p) ++m.false_positive, m.fp_edges.emplace_back(i, j);
            if (t && !p) ++m.false_negative, m.fn_edges.emplace_back(i, j);
        }
    const double tp = static_cast<double>(m.true_positive);
    if (m.true_positive + m.false_negative > 0) m.recall = tp / static_cast<double>(m.true_positive + m.false_negative);
    if (m.true_positive + m.false_positive > 0)
        m.precision = tp / static_cast<double>(m.true_positive + m.false_positive);
    m.auc = auc_score(scores, labels);
    return m;
}

/// Σ over unordered pairs of the probability mass the prediction puts on the wrong
/// pair state, with P(i ⟂ j) = (1 - P_ij)(1 - P_ji).
inline double l1_edge_error(const Tensor& pred, const Tensor& truth) {
    require(pred.same_shape(truth) && pred.rows() == pred.cols(), "l1_edge_error: shape mismatch");
    double err = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        for (std::size_t j = i + 1; j < pred.cols(); ++j) {
            const bool ij = truth(i, j) != 0.0, ji = truth(j, i) != 0.0;
            if (ij) err += 1.0 - pred(i, j);
            if (ji) err += 1.0 - pred(j, i);
            if (!ij && !ji) err += (1.0 - pred(i, j)) * (1.0 - pred(j, i));
        }
    return err;
}

inline double standardized_l1(const Tensor& pred, const Tensor& truth) {
    const double V = static_cast<double>(pred.rows());
    const double pairs = V * (V - 1.0) / 2.0;
    return pairs > 0 ? l1_edge_error(pred, truth) / pairs : 0.0;
}

}  // namespace causim::graphsuite
