#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "causim/data/table.hpp"
#include "causim/vgae/model.hpp"

namespace causim::vgae {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json model_config_json(const ModelConfig& c) {
    return {{"latent", c.latent},          {"hidden", c.hidden}, {"rounds", c.rounds},
            {"self_in_readout", c.self_in_readout}, {"linear", c.linear}, {"init_logit", c.init_logit},
            {"embed_scale", c.embed_scale}};
}

inline nlohmann::json checkpoint_json(const Model& m, const std::string& config_hash) {
    nlohmann::json j;
    j["format"] = "causim-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config_hash"] = config_hash;
    j["model"] = model_config_json(m.config);
    j["nodes"] = m.nodes.names;
    j["node_obs"] = m.nodes.node_obs;
    j["node_sim"] = m.nodes.node_sim;
    j["p"] = m.p;
    j["d"] = m.d;
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& prm : m.params.all()) {
        std::vector<double> vals(prm.value.values().begin(), prm.value.values().end());
        ps.push_back({{"name", prm.name}, {"rows", prm.value.rows()}, {"cols", prm.value.cols()}, {"values", vals}});
    }
    j["params"] = ps;
    auto vec = [](const num::Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
    j["input_scaling"] = {{"obs_center", vec(m.obs_center)},
                          {"obs_spread", vec(m.obs_spread)},
                          {"sim_center", vec(m.sim_center)},
                          {"sim_spread", vec(m.sim_spread)}};
    return j;
}

inline void save_checkpoint(const std::string& path, const Model& m, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw data::InputError("cannot write " + path);
    out << checkpoint_json(m, config_hash).dump() << '\n';
}

/// Rebuilds a model from a checkpoint. Parameter names and shapes must match the
/// architecture implied by the stored config.
inline Model load_checkpoint(const std::string& path, std::string* config_hash = nullptr) {
    std::ifstream in(path);
    if (!in) throw data::InputError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format") != "causim-checkpoint") throw data::InputError(path + ": not a checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw data::InputError(path + ": unsupported version");
        ModelConfig c;
        const auto& mj = j.at("model");
        c.latent = mj.at("latent");
        c.hidden = mj.at("hidden");
        c.rounds = mj.at("rounds");
        c.self_in_readout = mj.at("self_in_readout");
        c.linear = mj.at("linear");
        c.init_logit = mj.at("init_logit");
        c.embed_scale = mj.at("embed_scale");
        data::NodeMap nm;
        nm.names = j.at("nodes").get<std::vector<std::string>>();
        nm.node_obs = j.at("node_obs").get<std::vector<std::size_t>>();
        nm.node_sim = j.at("node_sim").get<std::vector<std::size_t>>();
        const std::size_t p = j.at("p"), d = j.at("d");
        nm.obs_node.assign(p, data::NodeMap::npos);
        nm.sim_node.assign(d, data::NodeMap::npos);
        for (std::size_t v = 0; v < nm.names.size(); ++v) {
            if (nm.node_obs[v] != data::NodeMap::npos) nm.obs_node.at(nm.node_obs[v]) = v;
            if (nm.node_sim[v] != data::NodeMap::npos) nm.sim_node.at(nm.node_sim[v]) = v;
        }
        Model m = Model::create(nm, p, d, c, 0);
        const auto& ps = j.at("params");
        if (ps.size() != m.params.size()) throw data::InputError(path + ": parameter count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto& prm = m.params[i];
            if (ps[i].at("name") != prm.name) throw data::InputError(path + ": unexpected parameter " + prm.name);
            const std::size_t r = ps[i].at("rows"), cc = ps[i].at("cols");
            prm.value = num::Tensor(r, cc, ps[i].at("values").get<std::vector<double>>());
        }
        const auto& sc = j.at("input_scaling");
        m.obs_center = num::Tensor(1, p, sc.at("obs_center").get<std::vector<double>>());
        m.obs_spread = num::Tensor(1, p, sc.at("obs_spread").get<std::vector<double>>());
        m.sim_center = num::Tensor(1, d, sc.at("sim_center").get<std::vector<double>>());
        m.sim_spread = num::Tensor(1, d, sc.at("sim_spread").get<std::vector<double>>());
        if (config_hash) *config_hash = j.at("config_hash");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw data::InputError(path + ": " + e.what());
    }
}

}  // namespace causim::vgae
