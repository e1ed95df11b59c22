#pragma once

#include <cmath>
#include <iostream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "causim/numcore.hpp"
#include "causim/vgae/model.hpp"

namespace causim::objective {

using num::Tape;
using num::Tensor;
using num::Var;

struct LossConfig {
    double lambda_dm = 0.5;
    double lambda_sp = 0.1;
    double lambda_a = 1.0;
    double alpha = 0.0;     // <= 0 selects 1/m
    std::size_t m = 0;      // 0 selects V
    double sigma_rec = 0.1;
    bool dm_empty_is_error = false;

    void validate() const {
        for (double w : {lambda_dm, lambda_sp, lambda_a})
            num::require(std::isfinite(w) && w >= 0.0, "LossConfig: loss weights must be finite and non-negative");
        num::require(std::isfinite(alpha), "LossConfig: alpha must be finite");
        num::require(sigma_rec > 0.0 && std::isfinite(sigma_rec), "LossConfig: sigma_rec must be positive");
    }

    [[nodiscard]] std::size_t power(std::size_t V) const { return m == 0 ? V : m; }
    [[nodiscard]] double alpha_for(std::size_t V) const {
        return alpha > 0.0 ? alpha : 1.0 / static_cast<double>(power(V));
    }
};

struct LossBreakdown {
    double sim_loglik = 0.0;
    double sim_kl = 0.0;
    double obs_loglik = 0.0;
    double obs_kl = 0.0;
    double graph_kl = 0.0;
    double loss_dm = 0.0;
    double loss_sp = 0.0;
    double loss_a = 0.0;
    double total = 0.0;

    [[nodiscard]] double elbo() const { return sim_loglik - sim_kl + obs_loglik - obs_kl - graph_kl; }

    LossBreakdown& operator+=(const LossBreakdown& o) {
        sim_loglik += o.sim_loglik;
        sim_kl += o.sim_kl;
        obs_loglik += o.obs_loglik;
        obs_kl += o.obs_kl;
        graph_kl += o.graph_kl;
        loss_dm += o.loss_dm;
        loss_sp += o.loss_sp;
        loss_a += o.loss_a;
        total += o.total;
        return *this;
    }
};

/// total = -ELBO + λ_DM·dm + λ_SP·sp + λ_A·a on already computed pieces.
inline LossBreakdown total_loss(LossBreakdown b, const LossConfig& c) {
    b.total = -b.elbo() + c.lambda_dm * b.loss_dm + c.lambda_sp * b.loss_sp + c.lambda_a * b.loss_a;
    return b;
}

// ---------------------------------------------------------------------------
// Scalar reference forms.

/// Reference form by repeated multiplication.
inline double loss_acyclicity(const Tensor& P, double alpha, std::size_t m) {
    num::require(P.rows() == P.cols(), "loss_acyclicity: matrix must be square");
    num::require(m >= 1, "loss_acyclicity: m must be at least 1");
    Tensor M = Tensor::identity(P.rows());
    for (std::size_t i = 0; i < P.size(); ++i) M[i] += alpha * P[i] * P[i];
    Tensor R = M;
    for (std::size_t i = 1; i < m; ++i) R = num::matmul(R, M);
    double tr = 0.0;
    for (std::size_t i = 0; i < R.rows(); ++i) tr += R(i, i);
    return tr - static_cast<double>(P.rows());
}

inline double graph_kl(const Tensor& P) {
    double s = 0.0;
    for (std::size_t i = 0; i < P.rows(); ++i)
        for (std::size_t j = 0; j < P.cols(); ++j)
            if (i != j) s += num::bernoulli_kl_half(P(i, j));
    return s;
}

inline double gaussian_loglik(double x, double mean, double sigma) {
    const double e = (x - mean) / sigma;
    return -0.5 * e * e - 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

// ---------------------------------------------------------------------------
// Differentiable terms.

/// Σ w · log N(x | x̂, σ²) over cells; w is a 0/1 (or general) weight mask.
inline Var gaussian_loglik(Tape& t, Var xhat, const Tensor& x, const Tensor& w, double sigma) {
    num::require(xhat.value().same_shape(x) && x.same_shape(w), "gaussian_loglik: shape mismatch");
    double count = 0.0;
    for (double v : w.values()) count += v;
    Var diff = num::sub(xhat, t.constant(x));
    Var sq = num::weighted_sum(num::square(diff), w);
    const double c = -0.5 * count * std::log(2.0 * std::numbers::pi * sigma * sigma);
    return num::add_scalar(num::scale(sq, -0.5 / (sigma * sigma)), c);
}

/// Σ KL( N(μ,σ²) || N(0,1) ) over every entry of an encoding.
inline Var encoding_kl(Tape& t, const vgae::Encoding& e) {
    const auto& mu = e.mu.value();
    Var zero = t.constant(Tensor(mu.rows(), mu.cols()));
    Var one = t.constant(Tensor(mu.rows(), mu.cols(), 1.0));
    return num::sum(num::gaussian_kl(e.mu, e.sigma, zero, one));
}

inline Var graph_kl(Tape& t, Var P) {
    (void)t;
    return num::bernoulli_kl_half(P, vgae::offdiag_mask(P.rows()));
}

/// Σ_n Σ_{(o,s)∈overlap} KL( q_sim(n,s) || sg[q_obs(n,o)] ), summed over latent dims.
/// With `obs_mask` (n×p), pairs whose observed cell is 0 are skipped.
inline Var loss_dm(Tape& t, const vgae::Encoding& sim, const vgae::Encoding& obs,
                   const std::vector<std::pair<std::size_t, std::size_t>>& overlap, bool empty_is_error = false,
                   const Tensor* obs_mask = nullptr) {
    if (overlap.empty()) {
        if (empty_is_error) throw num::ContractViolation("loss_dm: empty overlap");
        std::cerr << "warning: loss_dm with empty overlap is 0\n";
        return t.constant(Tensor::scalar(0.0));
    }
    num::require(sim.rows == obs.rows, "loss_dm: sample alignment mismatch");
    std::vector<std::size_t> si, oi;
    num::require(!obs_mask || (obs_mask->rows() == obs.rows && obs_mask->cols() == obs.features),
                 "loss_dm: mask shape mismatch");
    for (std::size_t n = 0; n < sim.rows; ++n)
        for (auto [o, s] : overlap) {
            if (obs_mask && (*obs_mask)(n, o) == 0.0) continue;
            si.push_back(n * sim.features + s);
            oi.push_back(n * obs.features + o);
        }
    if (si.empty()) return t.constant(Tensor::scalar(0.0));
    Var mu_s = num::gather_rows(sim.mu, si), sg_s = num::gather_rows(sim.sigma, si);
    Var mu_o = num::detach(num::gather_rows(obs.mu, oi)), sg_o = num::detach(num::gather_rows(obs.sigma, oi));
    return num::sum(num::gaussian_kl(mu_s, sg_s, mu_o, sg_o));
}

/// Negative Gaussian log-likelihood of the target column on rows with weight 1.
inline Var loss_sp(Tape& t, Var xhat, const Tensor& x, const Tensor& mask, std::size_t target, double sigma) {
    num::require(target < x.cols(), "loss_sp: target index out of range");
    num::require(xhat.value().same_shape(x) && x.same_shape(mask), "loss_sp: shape mismatch");
    Tensor w(x.rows(), x.cols());
    double rows = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        w(r, target) = mask(r, target);
        rows += mask(r, target);
    }
    if (rows == 0.0) {
        std::cerr << "warning: loss_sp has no observed target rows; term is 0\n";
        return t.constant(Tensor::scalar(0.0));
    }
    return num::scale(gaussian_loglik(t, xhat, x, w, sigma), -1.0);
}

/// tr[(I + α P∘P)^m] − V by binary powering (equals the usual − m when m = V).
inline Var loss_acyclicity(Tape& t, Var P, double alpha, std::size_t m) {
    num::require(P.rows() == P.cols(), "loss_acyclicity: matrix must be square");
    num::require(m >= 1, "loss_acyclicity: m must be at least 1");
    const std::size_t V = P.rows();
    Var M = num::add(t.constant(Tensor::identity(V)), num::scale(num::square(P), alpha));
    Var result{};
    bool have = false;
    Var base = M;
    for (std::size_t e = m; e > 0; e >>= 1) {
        if (e & 1) {
            result = have ? num::matmul(result, base) : base;
            have = true;
        }
        if (e > 1) base = num::matmul(base, base);
    }
    return num::add_scalar(num::trace(result), -static_cast<double>(V));
}

struct LossTerms {
    Var sim_loglik, sim_kl, obs_loglik, obs_kl, graph_kl, loss_dm, loss_sp, loss_a;
};

/// Composite objective on the tape, plus the matching breakdown values.
inline std::pair<Var, LossBreakdown> total_loss(Tape& t, const LossTerms& x, const LossConfig& c) {
    (void)t;
    Var neg_elbo = num::scale(num::sub(num::add(x.sim_loglik, x.obs_loglik),
                                       num::add(num::add(x.sim_kl, x.obs_kl), x.graph_kl)),
                              -1.0);
    Var total = num::add(num::add(neg_elbo, num::scale(x.loss_dm, c.lambda_dm)),
                         num::add(num::scale(x.loss_sp, c.lambda_sp), num::scale(x.loss_a, c.lambda_a)));
    LossBreakdown b;
    b.sim_loglik = x.sim_loglik.value().item();
    b.sim_kl = x.sim_kl.value().item();
    b.obs_loglik = x.obs_loglik.value().item();
    b.obs_kl = x.obs_kl.value().item();
    b.graph_kl = x.graph_kl.value().item();
    b.loss_dm = x.loss_dm.value().item();
    b.loss_sp = x.loss_sp.value().item();
    b.loss_a = x.loss_a.value().item();
    b.total = total.value().item();
    return {total, b};
}

}  // namespace causim::objective
