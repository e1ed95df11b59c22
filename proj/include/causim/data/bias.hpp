#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "causim/data/dataset.hpp"

namespace causim::data {

inline constexpr std::size_t kBiasBins = 20;

/// KL(p || q) between 20-bin histograms on [0,1] with add-one smoothing.
/// `pw` / `qw` are optional per-sample weights (0 excludes a sample).
inline double histogram_kl(const std::vector<double>& p_samples, const std::vector<double>& q_samples,
                           const std::vector<double>& pw = {}, const std::vector<double>& qw = {}) {
    auto hist = [](const std::vector<double>& x, const std::vector<double>& w) {
        std::array<double, kBiasBins> h{};
        h.fill(1.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!w.empty() && w[i] == 0.0) continue;
            const double v = std::clamp(x[i], 0.0, 1.0);
            const auto b = std::min<std::size_t>(kBiasBins - 1, static_cast<std::size_t>(v * kBiasBins));
            h[b] += 1.0;
        }
        double s = 0.0;
        for (double v : h) s += v;
        for (double& v : h) v /= s;
        return h;
    };
    const auto p = hist(p_samples, pw);
    const auto q = hist(q_samples, qw);
    double kl = 0.0;
    for (std::size_t b = 0; b < kBiasBins; ++b) kl += p[b] * std::log(p[b] / q[b]);
    return std::max(0.0, kl);
}

struct BiasEntry {
    std::string obs_name;
    std::string sim_name;
    std::size_t obs_col = 0;
    std::size_t sim_col = 0;
    double mean_difference = 0.0;  // mean(sim) - mean(obs)
    double kl = 0.0;               // KL(sim || obs) on the histogram partition
};

/// Per-overlap divergence of `sim` (N x d) against observed values of `obs` (N x p),
/// counting only observed cells with mask 1. Sorted by KL, largest first.
inline std::vector<BiasEntry> bias_report(const DualDataset& ds, const Tensor& sim, const Tensor& obs,
                                          const Tensor& mask) {
    require(ds.c() >= 1, "bias_report: no overlap columns");
    require(sim.cols() == ds.d() && obs.cols() == ds.p() && mask.same_shape(obs) && sim.rows() == obs.rows(),
            "bias_report: shape mismatch");
    std::vector<BiasEntry> out;
    for (auto [o, s] : ds.overlap) {
        std::vector<double> xs(sim.rows()), xo(obs.rows()), w(obs.rows());
        double ms = 0.0, mo = 0.0, n_obs = 0.0;
        for (std::size_t r = 0; r < sim.rows(); ++r) {
            xs[r] = sim(r, s);
            ms += xs[r];
            xo[r] = obs(r, o);
            w[r] = mask(r, o);
            if (w[r] != 0.0) mo += xo[r], n_obs += 1.0;
        }
        BiasEntry e;
        e.obs_name = ds.obs_names[o];
        e.sim_name = ds.sim_names[s];
        e.obs_col = o;
        e.sim_col = s;
        e.mean_difference = (sim.rows() ? ms / static_cast<double>(sim.rows()) : 0.0) - (n_obs > 0 ? mo / n_obs : 0.0);
        e.kl = histogram_kl(xs, xo, {}, w);
        out.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const BiasEntry& a, const BiasEntry& b) { return a.kl > b.kl; });
    return out;
}

inline std::vector<BiasEntry> bias_report(const DualDataset& ds) {
    return bias_report(ds, ds.x_sim, ds.x_obs, ds.mask_obs);
}

inline double mean_kl(const std::vector<BiasEntry>& entries) {
    if (entries.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : entries) s += e.kl;
    return s / static_cast<double>(entries.size());
}

}  // namespace causim::data
