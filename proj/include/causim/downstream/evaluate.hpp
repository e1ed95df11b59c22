#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causim/data/generator.hpp"
#include "causim/downstream/predictor.hpp"

namespace causim::downstream {

/// Rows from several sites over one column set; NaN marks a column a site lacks.
struct SiteData {
    std::vector<std::string> names;
    Tensor X;
    std::vector<int> site;
    std::size_t target = 0;

    [[nodiscard]] std::size_t rows() const { return X.rows(); }
};

struct SplitSpec {
    std::vector<int> train_sites;
    std::vector<int> test_sites;
    double few_shot_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Train = rows of the train sites plus a seeded fraction of test-site rows; the
/// moved rows leave the test set.
inline Split make_split(const SiteData& d, const SplitSpec& s) {
    require(s.few_shot_fraction >= 0.0 && s.few_shot_fraction < 1.0, "make_split: few_shot_fraction outside [0,1)");
    for (int a : s.train_sites)
        require(std::find(s.test_sites.begin(), s.test_sites.end(), a) == s.test_sites.end(),
                "make_split: site " + std::to_string(a) + " is both train and test");
    auto in = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    Split out;
    std::vector<std::size_t> test_pool;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        if (in(s.train_sites, d.site[r])) out.train.push_back(r);
        else if (in(s.test_sites, d.site[r])) test_pool.push_back(r);
    }
    num::Rng rng = num::derive(s.seed, 0x5B17);
    std::vector<std::size_t> shuffled = test_pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto moved = static_cast<std::size_t>(std::floor(s.few_shot_fraction * static_cast<double>(test_pool.size())));
    std::set<std::size_t> few(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(moved));
    for (std::size_t r : test_pool) (few.count(r) ? out.train : out.test).push_back(r);
    std::sort(out.train.begin(), out.train.end());
    return out;
}

/// Columns with no missing cell on any of the given rows.
inline std::vector<std::size_t> common_columns(const SiteData& d, const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < d.X.cols(); ++c) {
        bool ok = true;
        for (std::size_t r : rows) ok = ok && !std::isnan(d.X(r, c));
        if (ok) keep.push_back(c);
    }
    return keep;
}

/// Skeleton over `names` taken from a graph over `graph_names`; nodes the graph lacks are isolated.
inline Tensor restrict_skeleton(const std::vector<std::string>& graph_names, const Tensor& adjacency,
                                const std::vector<std::string>& names) {
    Tensor s(names.size(), names.size());
    for (std::size_t a = 0; a < names.size(); ++a)
        for (std::size_t b = 0; b < names.size(); ++b) {
            auto ia = std::find(graph_names.begin(), graph_names.end(), names[a]);
            auto ib = std::find(graph_names.begin(), graph_names.end(), names[b]);
            if (a != b && ia != graph_names.end() && ib != graph_names.end())
                s(a, b) = adjacency(static_cast<std::size_t>(ia - graph_names.begin()),
                                    static_cast<std::size_t>(ib - graph_names.begin())) != 0.0;
        }
    return s;
}

struct ErrorPair {
    double mse = 0.0;
    double mae = 0.0;
};

inline ErrorPair prediction_errors(const Tensor& pred, const std::vector<double>& y) {
    require(!y.empty(), "prediction_errors: empty test set");
    require(pred.size() == y.size(), "prediction_errors: size mismatch");
    ErrorPair e;
    for (std::size_t r = 0; r < y.size(); ++r) {
        const double d = pred[r] - y[r];
        e.mse += d * d;
        e.mae += std::abs(d);
    }
    e.mse /= static_cast<double>(y.size());
    e.mae /= static_cast<double>(y.size());
    return e;
}

struct OodResult {
    ErrorPair errors;
    std::vector<std::string> features;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    Predictor predictor;
    std::vector<nlohmann::json> grid;
};

/// Fits `cfg` on the split's training rows and scores the test rows, using only
/// columns present on every train and test row. `grid` selects width and rate.
inline OodResult evaluate_ood(const PredictorConfig& cfg, const SiteData& d, const SplitSpec& spec, bool grid = false) {
    const Split split = make_split(d, spec);
    require(!split.test.empty(), "evaluate_ood: empty test set");
    require(!split.train.empty(), "evaluate_ood: empty training set");
    std::vector<std::size_t> all = split.train;
    all.insert(all.end(), split.test.begin(), split.test.end());
    const std::vector<std::size_t> cols = common_columns(d, all);
    auto t_it = std::find(cols.begin(), cols.end(), d.target);
    require(t_it != cols.end(), "evaluate_ood: target column has missing values");
    const std::size_t target = static_cast<std::size_t>(t_it - cols.begin());

    OodResult res;
    for (std::size_t c : cols) res.features.push_back(d.names[c]);
    auto sub = [&](const std::vector<std::size_t>& rows) {
        Tensor out(rows.size(), cols.size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = d.X(rows[r], cols[c]);
        return out;
    };
    PredictorConfig c = cfg;
    if (c.skeleton.rows() == d.X.cols() && cols.size() != d.X.cols()) {
        Tensor s(cols.size(), cols.size());
        for (std::size_t a = 0; a < cols.size(); ++a)
            for (std::size_t b = 0; b < cols.size(); ++b) s(a, b) = cfg.skeleton(cols[a], cols[b]);
        c.skeleton = s;
    }
    const Tensor Xtr = sub(split.train), Xte = sub(split.test);
    if (grid) {
        auto g = fit_grid(c, Xtr, target);
        res.predictor = std::move(g.predictor);
        res.grid = std::move(g.cells);
    } else {
        res.predictor = fit_predictor(c, Xtr, target);
    }
    std::vector<double> y;
    for (std::size_t r = 0; r < Xte.rows(); ++r) y.push_back(Xte(r, target));
    res.errors = prediction_errors(predict(res.predictor, Xte), y);
    res.train_rows = Xtr.rows();
    res.test_rows = Xte.rows();
    return res;
}

inline nlohmann::json to_json(const OodResult& r, const SplitSpec& s) {
    return {{"mse", r.errors.mse},
            {"mae", r.errors.mae},
            {"features", r.features},
            {"train_rows", r.train_rows},
            {"test_rows", r.test_rows},
            {"train_sites", s.train_sites},
            {"test_sites", s.test_sites},
            {"few_shot_fraction", s.few_shot_fraction},
            {"seed", s.seed},
            {"config", to_json(r.predictor.config)},
            {"epochs_run", r.predictor.epochs_run},
            {"grid", r.grid}};
}

struct TwoSiteSpec {
    std::size_t n_train_site = 500;
    std::size_t n_test_site = 500;
    double root_shift = 1.0;         // in units of each root's noise scale
    double mechanism_offset = 2.0;   // added to the target's children at the test site
    std::uint64_t seed = 0;
};

/// Site 0 samples the SEM as is; site 1 shifts the root variables and offsets the
/// mechanisms of the target's children. Columns are the first `keep` SEM nodes,
/// standardised with site-0 statistics.
inline SiteData two_site_data(const data::Sem& sem, std::size_t keep, std::size_t target, const TwoSiteSpec& spec) {
    require(keep >= 1 && keep <= sem.size() && target < keep, "two_site_data: bad column selection");
    num::Rng rng(spec.seed);
    const Tensor adj = sem.adjacency();
    data::Sem shifted = sem;
    std::vector<double> offset(sem.size(), 0.0);
    for (std::size_t j = 0; j < sem.size(); ++j) {
        bool root = true;
        for (std::size_t i = 0; i < sem.size(); ++i) root = root && adj(i, j) == 0.0;
        if (root) shifted.intercept[j] += spec.root_shift * sem.noise_scale;
        if (adj(target, j) != 0.0) offset[j] = spec.mechanism_offset;
    }
    const Tensor a = sem.sample(spec.n_train_site, rng);
    const Tensor b = shifted.sample(spec.n_test_site, rng, offset);
    SiteData d;
    d.names.assign(sem.names.begin(), sem.names.begin() + static_cast<std::ptrdiff_t>(keep));
    d.target = target;
    d.X = Tensor(a.rows() + b.rows(), keep);
    for (std::size_t c = 0; c < keep; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) m += a(r, c);
        m /= static_cast<double>(a.rows());
        for (std::size_t r = 0; r < a.rows(); ++r) v += (a(r, c) - m) * (a(r, c) - m);
        const double sd = std::max(1e-12, std::sqrt(v / static_cast<double>(a.rows())));
        for (std::size_t r = 0; r < a.rows(); ++r) d.X(r, c) = (a(r, c) - m) / sd;
        for (std::size_t r = 0; r < b.rows(); ++r) d.X(a.rows() + r, c) = (b(r, c) - m) / sd;
    }
    d.site.assign(a.rows(), 0);
    d.site.insert(d.site.end(), b.rows(), 1);
    return d;
}

}  // namespace causim::downstream
