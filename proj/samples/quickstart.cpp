// Generate a small observed/simulated pair, learn a graph and score it.

#include <cstdio>

#include "causim/data.hpp"
#include "causim/graphsuite.hpp"
#include "causim/trainer.hpp"

using namespace causim;

int main() {
    data::SyntheticSpec spec;
    spec.nodes = 6;
    spec.extra_sim_vars = 2;
    spec.n_obs = 200;
    spec.n_sim = 600;
    spec.seed = 1;
    auto [ds, truth] = data::generate_synthetic_pair(spec);

    trainer::TrainConfig cfg = trainer::benchmark_config(1);
    cfg.epochs = 30;
    auto run = trainer::train(ds, cfg);

    graphsuite::EdgeProbMatrix pm{run.model.nodes.names, run.probabilities, "quickstart"};
    auto rep = graphsuite::evaluate(pm, truth);
    std::printf("recall %.3f  precision %.3f  auc %.3f  l1 %.3f\n", rep.recall.value_or(0.0), rep.precision.value_or(0.0),
                rep.auc.value_or(0.0), rep.l1);

    auto g = trainer::extract_graph(run.probabilities, 0.5, true);
    for (std::size_t i = 0; i < g.adjacency.rows(); ++i)
        for (std::size_t j = 0; j < g.adjacency.cols(); ++j)
            if (g.adjacency(i, j) != 0.0)
                std::printf("%s -> %s  (%.2f)\n", pm.names[i].c_str(), pm.names[j].c_str(), run.probabilities(i, j));
}
