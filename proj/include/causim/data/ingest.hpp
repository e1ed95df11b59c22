#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "causim/data/dataset.hpp"
#include "causim/data/table.hpp"
#include "causim/numcore.hpp"

namespace causim::data {

enum class Align { Intersect, Union };

struct IngestConfig {
    std::string target;
    Align align = Align::Intersect;
    double max_missing_fraction = 0.5;
    std::vector<std::pair<std::string, std::string>> overlap_override;  // (obs name, sim name)
    std::size_t impute_hidden = 32;
    std::size_t impute_epochs = 200;
    double impute_lr = 1e-2;
    std::uint64_t seed = 0;
};

inline std::vector<std::pair<std::string, std::string>> read_overlap_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 2) throw InputError(path + ": expected obs_name,sim_name");
        if (first && cells[0] == "obs_name") {
            first = false;
            continue;
        }
        first = false;
        out.emplace_back(cells[0], cells[1]);
    }
    return out;
}

namespace detail {

inline std::string lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

/// Drops columns whose missing fraction exceeds the limit. Returns the dropped names.
inline std::vector<std::string> drop_sparse_columns(RawTable& t, double limit) {
    std::vector<std::string> dropped;
    RawTable kept;
    kept.source = t.source;
    kept.times = t.times;
    for (std::size_t j = 0; j < t.cols(); ++j) {
        std::size_t miss = 0;
        for (double v : t.columns[j]) miss += is_missing(v);
        const double frac = t.rows() == 0 ? 1.0 : static_cast<double>(miss) / static_cast<double>(t.rows());
        if (frac > limit) {
            dropped.push_back(t.names[j]);
        } else {
            kept.names.push_back(t.names[j]);
            kept.columns.push_back(std::move(t.columns[j]));
        }
    }
    t = std::move(kept);
    return dropped;
}

struct DailyTable {
    std::map<std::chrono::sys_days, std::vector<double>> rows;  // day -> cells (NaN missing)
};

inline DailyTable resample_daily(const RawTable& t) {
    std::map<std::chrono::sys_days, std::pair<std::vector<double>, std::vector<std::size_t>>> acc;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto day = std::chrono::floor<std::chrono::days>(t.times[r]);
        auto& [sum, cnt] = acc[day];
        if (sum.empty()) {
            sum.assign(t.cols(), 0.0);
            cnt.assign(t.cols(), 0);
        }
        for (std::size_t j = 0; j < t.cols(); ++j) {
            const double v = t.columns[j][r];
            if (is_missing(v)) continue;
            sum[j] += v;
            cnt[j] += 1;
        }
    }
    DailyTable out;
    for (auto& [day, sc] : acc) {
        std::vector<double> cells(t.cols(), kMissing);
        for (std::size_t j = 0; j < t.cols(); ++j)
            if (sc.second[j] > 0) cells[j] = sc.first[j] / static_cast<double>(sc.second[j]);
        out.rows.emplace(day, std::move(cells));
    }
    return out;
}

/// One-hidden-layer regressor from complete columns to incomplete ones, trained on
/// the cells that are present. Imputed values are clipped to [0,1].
inline void impute(std::vector<std::vector<double>*>& columns, const IngestConfig& cfg) {
    std::vector<std::size_t> complete, partial;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto& c = *columns[j];
        const bool any_missing = std::any_of(c.begin(), c.end(), is_missing);
        (any_missing ? partial : complete).push_back(j);
    }
    if (partial.empty()) return;
    const std::size_t n = columns.front()->size();
    auto column_mean = [&](std::size_t j) {
        double s = 0.0;
        std::size_t k = 0;
        for (double v : *columns[j])
            if (!is_missing(v)) s += v, ++k;
        return k ? s / static_cast<double>(k) : 0.0;
    };
    if (complete.empty() || n == 0) {
        for (std::size_t j : partial) {
            const double m = column_mean(j);
            for (double& v : *columns[j])
                if (is_missing(v)) v = m;
        }
        return;
    }
    num::Tensor x(n, complete.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < complete.size(); ++a) x(r, a) = (*columns[complete[a]])[r];
    num::Tensor y(n, partial.size()), m(n, partial.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t b = 0; b < partial.size(); ++b) {
            const double v = (*columns[partial[b]])[r];
            if (!is_missing(v)) {
                y(r, b) = v;
                m(r, b) = 1.0;
            }
        }
    num::Rng rng = num::derive(cfg.seed, 0x1317);
    num::ParameterSet ps;
    const auto w1 = ps.add("w1", num::glorot(complete.size(), cfg.impute_hidden, rng));
    const auto b1 = ps.add("b1", num::Tensor(1, cfg.impute_hidden));
    const auto w2 = ps.add("w2", num::glorot(cfg.impute_hidden, partial.size(), rng));
    num::Tensor b2_init(1, partial.size());
    for (std::size_t b = 0; b < partial.size(); ++b) b2_init[b] = column_mean(partial[b]);
    const auto b2 = ps.add("b2", b2_init);
    num::AdamState adam(num::AdamConfig{cfg.impute_lr});
    double observed = 0.0;
    for (double v : m.values()) observed += v;
    const double norm = observed > 0 ? 1.0 / observed : 0.0;
    auto forward = [&](num::Tape& t) {
        num::Var h = num::relu(num::add_row_bias(num::matmul(t.constant(x), t.parameter(ps, w1)), t.parameter(ps, b1)));
        return num::add_row_bias(num::matmul(h, t.parameter(ps, w2)), t.parameter(ps, b2));
    };
    for (std::size_t e = 0; e < cfg.impute_epochs; ++e) {
        num::Tape t;
        num::Var diff = num::sub(forward(t), t.constant(y));
        num::Var loss = num::scale(num::weighted_sum(num::square(diff), m), norm);
        num::adam_step(adam, ps, t.backward(loss));
    }
    num::Tape t;
    const num::Tensor pred = forward(t).value();
    for (std::size_t b = 0; b < partial.size(); ++b) {
        auto& col = *columns[partial[b]];
        for (std::size_t r = 0; r < n; ++r)
            if (is_missing(col[r])) col[r] = std::clamp(pred(r, b), 0.0, 1.0);
    }
}

}  // namespace detail

/// Preprocessing pipeline: sparse-column drop, daily mean resampling, date alignment,
/// min-max scaling (shared range across overlap pairs), imputation, overlap map.
inline DualDataset ingest(RawTable raw_obs, RawTable raw_sim, const IngestConfig& cfg) {
    raw_obs.validate();
    raw_sim.validate();
    if (raw_obs.rows() == 0 || raw_obs.cols() == 0) throw InputError("observed table is empty");
    if (raw_sim.rows() == 0 || raw_sim.cols() == 0) throw InputError("simulated table is empty");
    if (cfg.target.empty()) throw InputError("config does not name a target column");
    if (std::find(raw_obs.names.begin(), raw_obs.names.end(), cfg.target) == raw_obs.names.end())
        throw InputError("target column '" + cfg.target + "' not found in observed table");

    DualDataset ds;
    auto d_obs = detail::drop_sparse_columns(raw_obs, cfg.max_missing_fraction);
    auto d_sim = detail::drop_sparse_columns(raw_sim, cfg.max_missing_fraction);
    for (auto& n : d_obs) ds.dropped.push_back("observed:" + n);
    for (auto& n : d_sim) ds.dropped.push_back("simulated:" + n);
    if (std::find(d_obs.begin(), d_obs.end(), cfg.target) != d_obs.end())
        throw InputError("target column '" + cfg.target + "' has more than " +
                         std::to_string(static_cast<int>(cfg.max_missing_fraction * 100)) + "% missing values");
    if (raw_sim.cols() == 0) throw InputError("every simulated column was dropped");

    ds.obs_names = raw_obs.names;
    ds.sim_names = raw_sim.names;
    ds.target = raw_obs.index_of(cfg.target);

    // Overlap map.
    if (!cfg.overlap_override.empty()) {
        for (const auto& [o, s] : cfg.overlap_override) {
            auto oi = std::find(ds.obs_names.begin(), ds.obs_names.end(), o);
            auto si = std::find(ds.sim_names.begin(), ds.sim_names.end(), s);
            if (oi == ds.obs_names.end() || si == ds.sim_names.end())
                throw InputError("overlap override references a missing column: " + o + "," + s);
            ds.overlap.emplace_back(oi - ds.obs_names.begin(), si - ds.sim_names.begin());
        }
    } else {
        for (std::size_t o = 0; o < ds.p(); ++o)
            for (std::size_t s = 0; s < ds.d(); ++s)
                if (detail::lower(ds.obs_names[o]) == detail::lower(ds.sim_names[s])) {
                    ds.overlap.emplace_back(o, s);
                    break;
                }
    }
    if (ds.overlap.empty()) throw InputError("no overlapping columns between observed and simulated tables");
    {
        std::set<std::size_t> so, ss;
        for (auto [o, s] : ds.overlap)
            if (!so.insert(o).second || !ss.insert(s).second) throw InputError("overlap map is not one-to-one");
    }

    // Daily cadence and alignment.
    auto obs_daily = detail::resample_daily(raw_obs);
    auto sim_daily = detail::resample_daily(raw_sim);
    std::set<std::chrono::sys_days> days;
    for (auto& [day, _] : obs_daily.rows)
        if (cfg.align == Align::Union || sim_daily.rows.count(day)) days.insert(day);
    if (cfg.align == Align::Union)
        for (auto& [day, _] : sim_daily.rows) days.insert(day);
    if (days.empty()) throw InputError("observed and simulated tables share no dates");
    ds.dates.assign(days.begin(), days.end());
    const std::size_t n = ds.dates.size();

    std::vector<std::vector<double>> obs_cols(ds.p(), std::vector<double>(n, kMissing));
    std::vector<std::vector<double>> sim_cols(ds.d(), std::vector<double>(n, kMissing));
    for (std::size_t r = 0; r < n; ++r) {
        if (auto it = obs_daily.rows.find(ds.dates[r]); it != obs_daily.rows.end())
            for (std::size_t j = 0; j < ds.p(); ++j) obs_cols[j][r] = it->second[j];
        if (auto it = sim_daily.rows.find(ds.dates[r]); it != sim_daily.rows.end())
            for (std::size_t j = 0; j < ds.d(); ++j) sim_cols[j][r] = it->second[j];
    }

    ds.mask_obs = Tensor(n, ds.p());
    for (std::size_t j = 0; j < ds.p(); ++j) {
        std::size_t present = 0;
        for (std::size_t r = 0; r < n; ++r)
            if (!is_missing(obs_cols[j][r])) {
                ds.mask_obs(r, j) = 1.0;
                ++present;
            }
        if (present == 0) throw InputError("observed column '" + ds.obs_names[j] + "' has no values on aligned dates");
    }

    // Scaling. Overlap pairs share one range so that a simulator offset survives scaling.
    auto col_range = [](const std::vector<double>& c) {
        ColumnScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (double v : c)
            if (!is_missing(v)) s.min = std::min(s.min, v), s.max = std::max(s.max, v);
        if (s.min > s.max) s = {0.0, 0.0};
        return s;
    };
    for (auto& c : obs_cols) ds.obs_scale.push_back(col_range(c));
    for (auto& c : sim_cols) ds.sim_scale.push_back(col_range(c));
    for (auto [o, s] : ds.overlap) {
        ColumnScale joint{std::min(ds.obs_scale[o].min, ds.sim_scale[s].min),
                          std::max(ds.obs_scale[o].max, ds.sim_scale[s].max)};
        ds.obs_scale[o] = joint;
        ds.sim_scale[s] = joint;
    }
    for (std::size_t j = 0; j < ds.p(); ++j)
        for (double& v : obs_cols[j])
            if (!is_missing(v)) v = ds.obs_scale[j].scale(v);
    for (std::size_t j = 0; j < ds.d(); ++j)
        for (double& v : sim_cols[j])
            if (!is_missing(v)) v = ds.sim_scale[j].scale(v);

    std::vector<std::vector<double>*> all;
    for (auto& c : obs_cols) all.push_back(&c);
    for (auto& c : sim_cols) all.push_back(&c);
    detail::impute(all, cfg);

    ds.x_obs = Tensor(n, ds.p());
    ds.x_sim = Tensor(n, ds.d());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < ds.p(); ++j) ds.x_obs(r, j) = obs_cols[j][r];
        for (std::size_t j = 0; j < ds.d(); ++j) ds.x_sim(r, j) = sim_cols[j][r];
    }
    ds.validate();
    return ds;
}

}  // namespace causim::data
