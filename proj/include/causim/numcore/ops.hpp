#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "causim/numcore/tape.hpp"
#include "causim/numcore/tensor.hpp"

namespace causim::num {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> view(const Tensor& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline Eigen::Map<RowMat> view(Tensor& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline Tape* tape_of(Var a) {
    require(a.tape != nullptr, "op on a detached Var");
    return a.tape;
}

inline Tape* tape_of(Var a, Var b) {
    require(a.tape != nullptr && a.tape == b.tape, "op operands live on different tapes");
    return a.tape;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <class F>
Tensor map(const Tensor& a, F f) {
    std::vector<double> out(a.size());
    const double* src = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
    return Tensor::unchecked(a.rows(), a.cols(), std::move(out));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain tensor arithmetic (no tape).

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch " + shape_str(a) + shape_str(b));
    Tensor out(a.rows(), b.cols());
    if (a.cols() == 0) return out;
    detail::view(out).noalias() = detail::view(a) * detail::view(b);
    return out;
}

inline double gaussian_kl(double mu1, double sigma1, double mu2, double sigma2) {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw DomainError("gaussian_kl: sigma must be positive");
    const double d = mu1 - mu2;
    return std::log(sigma2 / sigma1) + (sigma1 * sigma1 + d * d) / (2.0 * sigma2 * sigma2) - 0.5;
}

/// KL( Bernoulli(p) || Bernoulli(0.5) ) with the 0·log 0 = 0 convention.
inline double bernoulli_kl_half(double p) {
    double kl = 0.0;
    if (p > 0.0) kl += p * std::log(2.0 * p);
    if (p < 1.0) kl += (1.0 - p) * std::log(2.0 * (1.0 - p));
    return kl;
}

// ---------------------------------------------------------------------------
// Differentiable ops.

inline Var matmul(Var a, Var b) {
    Tape* t = detail::tape_of(a, b);
    Tensor out = matmul(a.value(), b.value());
    return t->record(OpKind::MatMul, {a.id, b.id}, std::move(out), [ai = a.id, bi = b.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        const Tensor& bv = tp.value(bi);
        if (Tensor* ga = tp.grad_slot(ai)) detail::view(*ga).noalias() += detail::view(g) * detail::view(bv).transpose();
        if (Tensor* gb = tp.grad_slot(bi)) detail::view(*gb).noalias() += detail::view(av).transpose() * detail::view(g);
    });
}

inline Var add(Var a, Var b) {
    Tape* t = detail::tape_of(a, b);
    require(a.value().same_shape(b.value()), "add: shape mismatch");
    Tensor out = a.value();
    out += b.value();
    return t->record(OpKind::Add, {a.id, b.id}, std::move(out), [ai = a.id, bi = b.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai)) *ga += g;
        if (Tensor* gb = tp.grad_slot(bi)) *gb += g;
    });
}

inline Var sub(Var a, Var b) {
    Tape* t = detail::tape_of(a, b);
    require(a.value().same_shape(b.value()), "sub: shape mismatch");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t->record(OpKind::Sub, {a.id, b.id}, std::move(out), [ai = a.id, bi = b.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai)) *ga += g;
        if (Tensor* gb = tp.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

inline Var mul(Var a, Var b) {
    Tape* t = detail::tape_of(a, b);
    require(a.value().same_shape(b.value()), "mul: shape mismatch");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return t->record(OpKind::Mul, {a.id, b.id}, std::move(out), [ai = a.id, bi = b.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        const Tensor& bv2 = tp.value(bi);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv2[i];
        if (Tensor* gb = tp.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    });
}

inline Var scale(Var a, double s) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), [s](double x) { return s * x; });
    return t->record(OpKind::Scale, {a.id}, std::move(out), [ai = a.id, s](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
    });
}

inline Var add_scalar(Var a, double s) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), [s](double x) { return x + s; });
    return t->record(OpKind::AddScalar, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai)) *ga += g;
    });
}

/// a (n×c) + bias (1×c) broadcast over rows.
inline Var add_row_bias(Var a, Var bias) {
    Tape* t = detail::tape_of(a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    require(bv.rows() == 1 && bv.cols() == av.cols(), "add_row_bias: bias must be 1x" + std::to_string(av.cols()));
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
    return t->record(OpKind::AddRowBias, {a.id, bias.id}, std::move(out), [ai = a.id, bi = bias.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai)) *ga += g;
        if (Tensor* gb = tp.grad_slot(bi))
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
    });
}

/// Node-major broadcast: a has n·G rows, row r receives bias row (r mod G).
inline Var add_group_bias(Var a, Var bias) {
    Tape* t = detail::tape_of(a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    const std::size_t groups = bv.rows();
    require(groups > 0 && bv.cols() == av.cols() && av.rows() % groups == 0,
            "add_group_bias: bias " + shape_str(bv) + " incompatible with " + shape_str(av));
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        const std::size_t gidx = r % groups;
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(gidx, c);
    }
    return t->record(OpKind::AddGroupBias, {a.id, bias.id}, std::move(out),
                     [ai = a.id, bi = bias.id, groups](Tape& tp, const Tensor& g) {
                         if (Tensor* ga = tp.grad_slot(ai)) *ga += g;
                         if (Tensor* gb = tp.grad_slot(bi))
                             for (std::size_t r = 0; r < g.rows(); ++r)
                                 for (std::size_t c = 0; c < g.cols(); ++c) (*gb)(r % groups, c) += g(r, c);
                     });
}

inline Var relu(Var a) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
    return t->record(OpKind::Relu, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i)
                if (av[i] > 0.0) (*ga)[i] += g[i];
    });
}

inline Var sigmoid(Var a) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), detail::sigmoid);
    return t->record(OpKind::Sigmoid, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = detail::sigmoid(av[i]);
                (*ga)[i] += g[i] * s * (1.0 - s);
            }
    });
}

inline Var softplus(Var a) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), detail::softplus);
    return t->record(OpKind::Softplus, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * detail::sigmoid(av[i]);
    });
}

inline Var exp(Var a) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), [](double x) { return std::exp(x); });
    return t->record(OpKind::Exp, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * std::exp(av[i]);
    });
}

inline Var log(Var a) {
    Tape* t = detail::tape_of(a);
    for (double v : a.value().values())
        if (!(v > 0.0)) throw DomainError("log: non-positive argument");
    Tensor out = detail::map(a.value(), [](double x) { return std::log(x); });
    return t->record(OpKind::Log, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / av[i];
    });
}

inline Var square(Var a) {
    Tape* t = detail::tape_of(a);
    Tensor out = detail::map(a.value(), [](double x) { return x * x; });
    return t->record(OpKind::Square, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ai);
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * av[i] * g[i];
    });
}

inline Var sum(Var a) {
    Tape* t = detail::tape_of(a);
    return t->record(OpKind::Sum, {a.id}, Tensor::scalar(a.value().sum()), [ai = a.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai)) {
            const double s = g[0];
            for (double& v : ga->values()) v += s;
        }
    });
}

/// Σ a ∘ w for a constant weight tensor (masks, selectors).
inline Var weighted_sum(Var a, const Tensor& w) {
    Tape* t = detail::tape_of(a);
    require(a.value().same_shape(w), "weighted_sum: shape mismatch");
    double s = 0.0;
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
    return t->record(OpKind::WeightedSum, {a.id}, Tensor::scalar(s), [ai = a.id, w](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < w.size(); ++i) (*ga)[i] += g[0] * w[i];
    });
}

/// Treats the operand as a constant from here on.
inline Var detach(Var a) { return detail::tape_of(a)->constant(a.value()); }

inline Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no operands");
    Tape* t = detail::tape_of(parts.front());
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<NodeId> ids;
    for (Var p : parts) {
        require(p.tape == t && p.rows() == rows, "concat_cols: row count mismatch");
        cols += p.cols();
        ids.push_back(p.id);
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& v = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
        offset += v.cols();
    }
    return t->record(OpKind::ConcatCols, ids, std::move(out), [ids](Tape& tp, const Tensor& g) {
        std::size_t off = 0;
        for (NodeId id : ids) {
            const std::size_t c = tp.value(id).cols();
            if (Tensor* gp = tp.grad_slot(id))
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t j = 0; j < c; ++j) (*gp)(r, j) += g(r, off + j);
            off += c;
        }
    });
}

inline Var concat_rows(Var a, Var b) {
    Tape* t = detail::tape_of(a, b);
    require(a.cols() == b.cols(), "concat_rows: column count mismatch");
    std::vector<double> v(a.value().values().begin(), a.value().values().end());
    v.insert(v.end(), b.value().values().begin(), b.value().values().end());
    Tensor out = Tensor::unchecked(a.rows() + b.rows(), a.cols(), std::move(v));
    return t->record(OpKind::ConcatRows, {a.id, b.id}, std::move(out), [ai = a.id, bi = b.id](Tape& tp, const Tensor& g) {
        const std::size_t na = tp.value(ai).size();
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < na; ++i) (*ga)[i] += g[i];
        if (Tensor* gb = tp.grad_slot(bi))
            for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g[na + i];
    });
}

inline Var gather_rows(Var a, std::vector<std::size_t> index) {
    Tape* t = detail::tape_of(a);
    const Tensor& av = a.value();
    Tensor out(index.size(), av.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        require(index[r] < av.rows(), "gather_rows: index out of range");
        std::copy(av.row(index[r]).begin(), av.row(index[r]).end(), out.row(r).begin());
    }
    return t->record(OpKind::GatherRows, {a.id}, std::move(out), [ai = a.id, index = std::move(index)](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t r = 0; r < index.size(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(index[r], c) += g(r, c);
    });
}

inline Var gather_cols(Var a, std::vector<std::size_t> index) {
    Tape* t = detail::tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.rows(), index.size());
    for (std::size_t c = 0; c < index.size(); ++c) require(index[c] < av.cols(), "gather_cols: index out of range");
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < index.size(); ++c) out(r, c) = av(r, index[c]);
    return t->record(OpKind::GatherCols, {a.id}, std::move(out), [ai = a.id, index = std::move(index)](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < index.size(); ++c) (*ga)(r, index[c]) += g(r, c);
    });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    return gather_cols(a, std::move(idx));
}

/// Row-major reshape; node-major layouts (n·V × k) ↔ (n × V·k) share storage order.
inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
    Tape* t = detail::tape_of(a);
    Tensor out = a.value().reshaped(rows, cols);
    return t->record(OpKind::Reshape, {a.id}, std::move(out), [ai = a.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

inline Var transpose(Var a) {
    Tape* t = detail::tape_of(a);
    return t->record(OpKind::Transpose, {a.id}, a.value().transposed(), [ai = a.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(c, r) += g(r, c);
    });
}

inline Var trace(Var a) {
    Tape* t = detail::tape_of(a);
    const Tensor& av = a.value();
    require(av.rows() == av.cols(), "trace: matrix must be square");
    double s = 0.0;
    for (std::size_t i = 0; i < av.rows(); ++i) s += av(i, i);
    return t->record(OpKind::Trace, {a.id}, Tensor::scalar(s), [ai = a.id](Tape& tp, const Tensor& g) {
        if (Tensor* ga = tp.grad_slot(ai))
            for (std::size_t i = 0; i < ga->rows(); ++i) (*ga)(i, i) += g[0];
    });
}

/// Edge-gated message aggregation over a dense graph.
///
/// `sender` holds n·V rows in node-major order (row b·V+q is node q of sample b),
/// `receiver` holds either one row per node or one row per (sample, node), `gate`
/// is V×V. Output row b·V+i is
///   Σ_{q≠i} gate(q,i) · act(sender(b·V+q) + receiver(i or b·V+i))
/// with act = relu when `rectify`, identity otherwise. The V²·H pair tensor is
/// never materialized; backward recomputes it.
inline Var pair_aggregate(Var sender, Var receiver, Var gate, bool rectify = true) {
    Tape* t = detail::tape_of(sender, receiver);
    require(gate.tape == t, "pair_aggregate: gate lives on another tape");
    const Tensor& s = sender.value();
    const Tensor& rcv = receiver.value();
    const Tensor& gm = gate.value();
    const std::size_t V = gm.rows();
    const std::size_t H = s.cols();
    require(gm.cols() == V && V > 0 && s.rows() % V == 0 && rcv.cols() == H &&
                (rcv.rows() == V || rcv.rows() == s.rows()),
            "pair_aggregate: incompatible shapes " + shape_str(s) + shape_str(rcv) + shape_str(gm));
    const std::size_t n = s.rows() / V;
    const bool per_sample = rcv.rows() != V || n == 1;
    Tensor out(s.rows(), H);
    std::vector<double> pre(H);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < V; ++i) {
            double* acc = out.data() + (b * V + i) * H;
            const double* ri = rcv.data() + (per_sample ? b * V + i : i) * H;
            for (std::size_t q = 0; q < V; ++q) {
                const double w = gm(q, i);
                if (q == i || w == 0.0) continue;
                const double* sq = s.data() + (b * V + q) * H;
                if (rectify) {
                    for (std::size_t h = 0; h < H; ++h) {
                        const double v = sq[h] + ri[h];
                        acc[h] += w * (v > 0.0 ? v : 0.0);
                    }
                } else {
                    for (std::size_t h = 0; h < H; ++h) acc[h] += w * (sq[h] + ri[h]);
                }
            }
        }
    }
    return t->record(OpKind::PairAggregate, {sender.id, receiver.id, gate.id}, std::move(out),
                     [si = sender.id, ri_id = receiver.id, gi = gate.id, rectify, V, H, n, per_sample](Tape& tp,
                                                                                                      const Tensor& g) {
                         const Tensor& s2 = tp.value(si);
                         const Tensor& r2 = tp.value(ri_id);
                         const Tensor& g2 = tp.value(gi);
                         Tensor* gs = tp.grad_slot(si);
                         Tensor* gr = tp.grad_slot(ri_id);
                         Tensor* gg = tp.grad_slot(gi);
                         std::vector<double> local(H);
                         for (std::size_t b = 0; b < n; ++b) {
                             for (std::size_t i = 0; i < V; ++i) {
                                 const double* go = g.data() + (b * V + i) * H;
                                 const std::size_t rrow = per_sample ? b * V + i : i;
                                 const double* ri = r2.data() + rrow * H;
                                 for (std::size_t q = 0; q < V; ++q) {
                                     if (q == i) continue;
                                     const double w = g2(q, i);
                                     const double* sq = s2.data() + (b * V + q) * H;
                                     double dw = 0.0;
                                     for (std::size_t h = 0; h < H; ++h) {
                                         const double v = sq[h] + ri[h];
                                         const bool on = !rectify || v > 0.0;
                                         const double act = rectify ? (on ? v : 0.0) : v;
                                         dw += go[h] * act;
                                         local[h] = on ? w * go[h] : 0.0;
                                     }
                                     if (gg) (*gg)(q, i) += dw;
                                     if (w == 0.0) continue;
                                     if (gs) {
                                         double* d = gs->data() + (b * V + q) * H;
                                         for (std::size_t h = 0; h < H; ++h) d[h] += local[h];
                                     }
                                     if (gr) {
                                         double* d = gr->data() + rrow * H;
                                         for (std::size_t h = 0; h < H; ++h) d[h] += local[h];
                                     }
                                 }
                             }
                         }
                     });
}

/// Elementwise KL( N(mu1, s1²) || N(mu2, s2²) ).
inline Var gaussian_kl(Var mu1, Var s1, Var mu2, Var s2) {
    Tape* t = detail::tape_of(mu1, s1);
    require(mu2.tape == t && s2.tape == t, "gaussian_kl: operands on different tapes");
    const Tensor& m1 = mu1.value();
    const Tensor& v1 = s1.value();
    const Tensor& m2 = mu2.value();
    const Tensor& v2 = s2.value();
    require(m1.same_shape(v1) && m1.same_shape(m2) && m1.same_shape(v2), "gaussian_kl: shape mismatch");
    Tensor out(m1.rows(), m1.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gaussian_kl(m1[i], v1[i], m2[i], v2[i]);
    return t->record(OpKind::GaussianKL, {mu1.id, s1.id, mu2.id, s2.id}, std::move(out),
                     [a = mu1.id, b = s1.id, c = mu2.id, d = s2.id](Tape& tp, const Tensor& g) {
                         const Tensor& m1v = tp.value(a);
                         const Tensor& s1v = tp.value(b);
                         const Tensor& m2v = tp.value(c);
                         const Tensor& s2v = tp.value(d);
                         Tensor* gm1 = tp.grad_slot(a);
                         Tensor* gs1 = tp.grad_slot(b);
                         Tensor* gm2 = tp.grad_slot(c);
                         Tensor* gs2 = tp.grad_slot(d);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const double diff = m1v[i] - m2v[i];
                             const double inv2 = 1.0 / (s2v[i] * s2v[i]);
                             if (gm1) (*gm1)[i] += g[i] * diff * inv2;
                             if (gm2) (*gm2)[i] -= g[i] * diff * inv2;
                             if (gs1) (*gs1)[i] += g[i] * (-1.0 / s1v[i] + s1v[i] * inv2);
                             if (gs2)
                                 (*gs2)[i] += g[i] * (1.0 / s2v[i] - (s1v[i] * s1v[i] + diff * diff) * inv2 / s2v[i]);
                         }
                     });
}

/// Σ over entries with mask ≠ 0 of KL( Bernoulli(p) || Bernoulli(0.5) ).
inline Var bernoulli_kl_half(Var p, const Tensor& mask) {
    Tape* t = detail::tape_of(p);
    const Tensor& pv = p.value();
    require(pv.same_shape(mask), "bernoulli_kl_half: mask shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (mask[i] == 0.0) continue;
        if (pv[i] < 0.0 || pv[i] > 1.0) throw DomainError("bernoulli_kl_half: probability outside [0,1]");
        s += bernoulli_kl_half(pv[i]);
    }
    return t->record(OpKind::BernoulliKLHalf, {p.id}, Tensor::scalar(s), [pi = p.id, mask](Tape& tp, const Tensor& g) {
        const Tensor& pv2 = tp.value(pi);
        if (Tensor* gp = tp.grad_slot(pi))
            for (std::size_t i = 0; i < pv2.size(); ++i) {
                if (mask[i] == 0.0) continue;
                const double q = std::clamp(pv2[i], 1e-300, 1.0 - 1e-16);
                (*gp)[i] += g[0] * (std::log(q) - std::log1p(-q));
            }
    });
}

/// Per-node linear map: row b·V+j of `h` is multiplied by the j-th (din×dout)
/// block of `weights` (V·din rows).
inline Var node_linear(Var h, Var weights, std::size_t nodes) {
    Tape* t = detail::tape_of(h, weights);
    const Tensor& hv = h.value();
    const Tensor& wv = weights.value();
    const std::size_t din = hv.cols();
    const std::size_t dout = wv.cols();
    require(nodes > 0 && hv.rows() % nodes == 0 && wv.rows() == nodes * din, "node_linear: incompatible shapes");
    Tensor out(hv.rows(), dout);
    for (std::size_t r = 0; r < hv.rows(); ++r) {
        const std::size_t j = r % nodes;
        for (std::size_t a = 0; a < din; ++a) {
            const double x = hv(r, a);
            if (x == 0.0) continue;
            const double* w = wv.data() + (j * din + a) * dout;
            double* o = out.data() + r * dout;
            for (std::size_t c = 0; c < dout; ++c) o[c] += x * w[c];
        }
    }
    return t->record(OpKind::NodeLinear, {h.id, weights.id}, std::move(out),
                     [hi = h.id, wi = weights.id, nodes, din, dout](Tape& tp, const Tensor& g) {
                         const Tensor& hv2 = tp.value(hi);
                         const Tensor& wv2 = tp.value(wi);
                         Tensor* gh = tp.grad_slot(hi);
                         Tensor* gw = tp.grad_slot(wi);
                         for (std::size_t r = 0; r < hv2.rows(); ++r) {
                             const std::size_t j = r % nodes;
                             const double* go = g.data() + r * dout;
                             for (std::size_t a = 0; a < din; ++a) {
                                 const double* w = wv2.data() + (j * din + a) * dout;
                                 if (gh) {
                                     double s = 0.0;
                                     for (std::size_t c = 0; c < dout; ++c) s += go[c] * w[c];
                                     (*gh)(r, a) += s;
                                 }
                                 if (gw) {
                                     const double x = hv2(r, a);
                                     double* d = gw->data() + (j * din + a) * dout;
                                     for (std::size_t c = 0; c < dout; ++c) d[c] += x * go[c];
                                 }
                             }
                         }
                     });
}

/// Fixed-weight graph aggregation: row b·V+i of the output is Σ_j w(j,i) · h(b·V+j).
inline Var graph_aggregate(Var h, const Tensor& weights) {
    Tape* t = detail::tape_of(h);
    const Tensor& hv = h.value();
    const std::size_t V = weights.rows();
    require(weights.cols() == V && V > 0 && hv.rows() % V == 0, "graph_aggregate: incompatible shapes");
    const std::size_t n = hv.rows() / V;
    const std::size_t d = hv.cols();
    Tensor out(hv.rows(), d);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < V; ++j)
            for (std::size_t i = 0; i < V; ++i) {
                const double w = weights(j, i);
                if (w == 0.0) continue;
                const double* src = hv.data() + (b * V + j) * d;
                double* dst = out.data() + (b * V + i) * d;
                for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
            }
    return t->record(OpKind::GraphMean, {h.id}, std::move(out), [hi = h.id, weights, n, V, d](Tape& tp, const Tensor& g) {
        if (Tensor* gh = tp.grad_slot(hi))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t j = 0; j < V; ++j)
                    for (std::size_t i = 0; i < V; ++i) {
                        const double w = weights(j, i);
                        if (w == 0.0) continue;
                        const double* src = g.data() + (b * V + i) * d;
                        double* dst = gh->data() + (b * V + j) * d;
                        for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
                    }
    });
}

/// Elementwise max over in-neighbours (adjacency(j,i) ≠ 0 means j → i); zero rows for
/// nodes without neighbours.
inline Var graph_max(Var h, const Tensor& adjacency) {
    Tape* t = detail::tape_of(h);
    const Tensor& hv = h.value();
    const std::size_t V = adjacency.rows();
    require(adjacency.cols() == V && V > 0 && hv.rows() % V == 0, "graph_max: incompatible shapes");
    const std::size_t n = hv.rows() / V;
    const std::size_t d = hv.cols();
    Tensor out(hv.rows(), d);
    std::vector<std::size_t> argmax(hv.rows() * d, static_cast<std::size_t>(-1));
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t who = static_cast<std::size_t>(-1);
                for (std::size_t j = 0; j < V; ++j) {
                    if (adjacency(j, i) == 0.0) continue;
                    const double v = hv(b * V + j, c);
                    if (v > best) {
                        best = v;
                        who = b * V + j;
                    }
                }
                if (who != static_cast<std::size_t>(-1)) {
                    out(b * V + i, c) = best;
                    argmax[(b * V + i) * d + c] = who;
                }
            }
    return t->record(OpKind::Custom, {h.id}, std::move(out), [hi = h.id, argmax = std::move(argmax), d](Tape& tp, const Tensor& g) {
        if (Tensor* gh = tp.grad_slot(hi))
            for (std::size_t k = 0; k < argmax.size(); ++k)
                if (argmax[k] != static_cast<std::size_t>(-1)) (*gh)(argmax[k], k % d) += g[k];
    });
}

}  // namespace causim::num
