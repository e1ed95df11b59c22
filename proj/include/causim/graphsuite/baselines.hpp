#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include "causim/data/graph.hpp"
#include "causim/graphsuite/metrics.hpp"
#include "causim/numcore.hpp"
#include "causim/objective/loss.hpp"

namespace causim::graphsuite {

/// |Pearson r| in both directions; constant columns get zeros.
inline Tensor correlation_graph(const Tensor& X) {
    require(X.rows() >= 2, "correlation_graph: need at least 2 rows");
    const std::size_t n = X.rows(), V = X.cols();
    std::vector<double> mean(V, 0.0), sd(V, 0.0);
    for (std::size_t j = 0; j < V; ++j) {
        for (std::size_t r = 0; r < n; ++r) mean[j] += X(r, j);
        mean[j] /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) sd[j] += (X(r, j) - mean[j]) * (X(r, j) - mean[j]);
        sd[j] = std::sqrt(sd[j]);
    }
    Tensor P(V, V);
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = i + 1; j < V; ++j) {
            if (sd[i] <= 1e-12 * std::max(1.0, std::abs(mean[i])) || sd[j] <= 1e-12 * std::max(1.0, std::abs(mean[j])))
                continue;
            double c = 0.0;
            for (std::size_t r = 0; r < n; ++r) c += (X(r, i) - mean[i]) * (X(r, j) - mean[j]);
            const double v = std::min(1.0, std::abs(c / (sd[i] * sd[j])));
            P(i, j) = v;
            P(j, i) = v;
        }
    return P;
}

using Discoverer = std::function<Tensor(const Tensor&)>;

struct BootstrapResult {
    Tensor probs;
    std::size_t resamples = 0;
    std::size_t failures = 0;
    [[nodiscard]] double failure_rate() const {
        return resamples ? static_cast<double>(failures) / static_cast<double>(resamples) : 0.0;
    }
};

/// Fraction of row-bootstrap resamples whose discovered graph contains each edge.
/// Resamples on which the discoverer throws are skipped and counted.
inline BootstrapResult bootstrap_edge_probs(const Discoverer& discoverer, const Tensor& X, std::size_t B,
                                            std::uint64_t seed) {
    require(B >= 1, "bootstrap_edge_probs: B must be at least 1");
    require(X.rows() >= 1, "bootstrap_edge_probs: empty dataset");
    const std::size_t n = X.rows(), V = X.cols();
    BootstrapResult res;
    res.resamples = B;
    res.probs = Tensor(V, V);
    std::size_t ok = 0;
    for (std::size_t b = 0; b < B; ++b) {
        num::Rng rng = num::derive(seed, b);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        Tensor S(n, V);
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t src = pick(rng);
            for (std::size_t j = 0; j < V; ++j) S(r, j) = X(src, j);
        }
        Tensor adj;
        try {
            adj = discoverer(S);
            require(adj.rows() == V && adj.cols() == V, "bootstrap: discoverer returned wrong shape");
        } catch (const std::exception& e) {
            ++res.failures;
            continue;
        }
        ++ok;
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t j = 0; j < V; ++j)
                if (i != j && adj(i, j) != 0.0) res.probs(i, j) += 1.0;
    }
    if (ok > 0)
        for (double& v : res.probs.values()) v /= static_cast<double>(ok);
    return res;
}

struct NotearsConfig {
    double lambda1 = 0.1;
    std::size_t max_iter = 100;  // outer augmented-Lagrangian steps
    std::size_t inner_iter = 2000;
    double h_tol = 1e-8;
    double rho_max = 1e16;
    double w_threshold = 0.3;
    bool quiet = false;
};

struct NotearsResult {
    Tensor weights;  // thresholded, acyclic
    Tensor probs;    // |W| / max|W|
    double h = 0.0;              // after thresholding
    double h_unthresholded = 0.0;
    bool converged = false;
    std::size_t outer_steps = 0;
};

namespace detail {

/// h(W) = tr[(I + α W∘W)^m] − m and its gradient with respect to W.
inline double acyclicity_with_grad(const Tensor& W, double alpha, std::size_t m, Tensor* grad) {
    const std::size_t V = W.rows();
    Tensor M = Tensor::identity(V);
    for (std::size_t i = 0; i < W.size(); ++i) M[i] += alpha * W[i] * W[i];
    Tensor Pm1 = Tensor::identity(V);
    for (std::size_t i = 1; i < m; ++i) Pm1 = num::matmul(Pm1, M);
    const Tensor Pm = num::matmul(Pm1, M);
    double tr = 0.0;
    for (std::size_t i = 0; i < V; ++i) tr += Pm(i, i);
    if (grad) {
        *grad = Tensor(V, V);
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t j = 0; j < V; ++j)
                (*grad)(i, j) = static_cast<double>(m) * Pm1(j, i) * 2.0 * alpha * W(i, j);
    }
    return tr - static_cast<double>(V);
}

}  // namespace detail

/// Linear NOTEARS: least squares + L1 under the matrix-power acyclicity constraint,
/// solved by an augmented Lagrangian whose inner problem uses proximal gradient
/// steps with backtracking (soft-thresholding handles the L1 term).
inline NotearsResult notears_linear(const Tensor& X, const NotearsConfig& cfg = {}) {
    require(X.all_finite(), "notears_linear: data must be complete");
    const std::size_t n = X.rows(), V = X.cols();
    require(n >= 1 && V >= 1, "notears_linear: empty dataset");
    const double alpha = 1.0 / static_cast<double>(V);
    const std::size_t m = V;
    const Tensor XtX = num::matmul(X.transposed(), X);
    const double inv_n = 1.0 / static_cast<double>(n);
    Tensor W(V, V);
    double rho = 1.0, lag = 0.0, h_prev = std::numeric_limits<double>::infinity();
    NotearsResult res;

    // Smooth part (1/2n)‖X − XW‖² + (ρ/2)h² + λh and its gradient.
    auto smooth = [&](const Tensor& Wc, Tensor* grad) {
        const Tensor XtXW = num::matmul(XtX, Wc);
        double ls = 0.0;
        for (std::size_t i = 0; i < V; ++i) ls += XtX(i, i) - 2.0 * XtXW(i, i);
        for (std::size_t i = 0; i < Wc.size(); ++i) ls += Wc[i] * XtXW[i];
        Tensor gh;
        const double h = detail::acyclicity_with_grad(Wc, alpha, m, grad ? &gh : nullptr);
        if (grad) {
            *grad = Tensor(V, V);
            for (std::size_t i = 0; i < Wc.size(); ++i) (*grad)[i] = (XtXW[i] - XtX[i]) * inv_n + (rho * h + lag) * gh[i];
        }
        return 0.5 * ls * inv_n + 0.5 * rho * h * h + lag * h;
    };
    auto prox = [&](const Tensor& Wc, const Tensor& g, double step) {
        Tensor out(V, V);
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t j = 0; j < V; ++j) {
                if (i == j) continue;
                const double v = Wc(i, j) - step * g(i, j);
                out(i, j) = std::copysign(std::max(0.0, std::abs(v) - step * cfg.lambda1), v);
            }
        return out;
    };
    auto solve_inner = [&](Tensor Wc) {
        double step = 1.0;
        Tensor g;
        double f = smooth(Wc, &g);
        for (std::size_t it = 0; it < cfg.inner_iter; ++it) {
            Tensor next;
            double fn = 0.0, moved = 0.0;
            for (int ls = 0; ls < 60; ++ls) {
                next = prox(Wc, g, step);
                fn = smooth(next, nullptr);
                double lin = 0.0, sq = 0.0;
                moved = 0.0;
                for (std::size_t i = 0; i < next.size(); ++i) {
                    const double d = next[i] - Wc[i];
                    lin += g[i] * d;
                    sq += d * d;
                    moved = std::max(moved, std::abs(d));
                }
                if (fn <= f + lin + sq / (2.0 * step) + 1e-15 * std::abs(f)) break;
                step *= 0.5;
            }
            Wc = next;
            f = smooth(Wc, &g);
            step *= 1.5;
            if (moved < 1e-10) break;
        }
        return Wc;
    };

    for (std::size_t outer = 0; outer < cfg.max_iter; ++outer) {
        res.outer_steps = outer + 1;
        double h = 0.0;
        for (;;) {
            Tensor Wn = solve_inner(W);
            h = detail::acyclicity_with_grad(Wn, alpha, m, nullptr);
            if (h > 0.25 * h_prev && rho < cfg.rho_max) {
                rho *= 10.0;
                continue;
            }
            W = Wn;
            break;
        }
        h_prev = h;
        lag += rho * h;
        if (h <= cfg.h_tol || rho >= cfg.rho_max) break;
    }
    res.h_unthresholded = detail::acyclicity_with_grad(W, alpha, m, nullptr);
    res.converged = res.h_unthresholded <= cfg.h_tol;
    if (!res.converged && !cfg.quiet)
        std::cerr << "warning: notears did not reach h <= " << cfg.h_tol << " (h=" << res.h_unthresholded << ")\n";
    for (double& v : W.values())
        if (std::abs(v) < cfg.w_threshold) v = 0.0;
    // Drop the weakest edge on any remaining cycle so the result is a DAG.
    for (;;) {
        Tensor adj(V, V);
        for (std::size_t i = 0; i < W.size(); ++i) adj[i] = W[i] != 0.0;
        auto cyc = data::find_cycle(adj);
        if (cyc.empty()) break;
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cyc.size(); ++k) {
            const std::size_t a = cyc[k], b = cyc[(k + 1) % cyc.size()];
            if (std::abs(W(a, b)) < best) best = std::abs(W(a, b)), bi = a, bj = b;
        }
        W(bi, bj) = 0.0;
    }
    res.weights = W;
    res.h = detail::acyclicity_with_grad(W, alpha, m, nullptr);
    double mx = 0.0;
    for (double v : W.values()) mx = std::max(mx, std::abs(v));
    res.probs = Tensor(V, V);
    if (mx > 0.0)
        for (std::size_t i = 0; i < W.size(); ++i) res.probs[i] = std::abs(W[i]) / mx;
    return res;
}

}  // namespace causim::graphsuite
