#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "causim/cli.hpp"

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string preset;
    std::vector<std::string> sets;
};

nlohmann::json merged_config(const Options& o) {
    nlohmann::json doc = nlohmann::json::object();
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw causim::data::InputError("cannot open config " + o.config_path);
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw causim::cli::ConfigError(o.config_path + ": " + e.what());
        }
    }
    if (o.seed) doc["seed"] = *o.seed;
    if (!o.out.empty()) doc["out"] = o.out;
    if (!o.preset.empty()) doc["preset"] = o.preset;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw causim::cli::ConfigError("--set expects key=value, got '" + s + "'");
        causim::cli::set_dotted(doc, s.substr(0, eq), s.substr(eq + 1));
    }
    return doc;
}

int fail(const std::string& command, const char* type, const std::string& message, int code,
         const std::filesystem::path& dir = {}) {
    nlohmann::json e = {{"error", {{"type", type}, {"message", message}, {"command", command}, {"exit_code", code}}}};
    std::cerr << e.dump() << std::endl;
    if (!dir.empty() && std::filesystem::is_directory(dir)) std::ofstream(dir / "error.json") << e.dump(2) << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal discovery from observed and simulated tables"};
    app.require_subcommand(1);
    Options opt;
    std::string chosen;
    for (const auto& name : causim::cli::commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config_path, "JSON run configuration");
        sub->add_option("--seed", opt.seed, "Global seed");
        sub->add_option("--out", opt.out, std::string("Output directory (default $") + causim::cli::kOutRootEnv + "/<command>-seed<N>)");
        sub->add_option("--preset", opt.preset, "Training preset: default or benchmark");
        sub->add_option("--set", opt.sets, "Override a config key, e.g. --set train.epochs=50");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail(chosen, "usage", e.what(), 2);
    }
    std::filesystem::path dir;
    try {
        const auto cfg = causim::cli::parse_config(merged_config(opt));
        dir = causim::cli::output_dir(cfg, chosen);
        std::filesystem::remove(dir / "error.json");
        causim::cli::run(chosen, cfg);
        std::cout << dir.string() << '\n';
        return 0;
    } catch (const causim::cli::ConfigError& e) {
        return fail(chosen, "config", e.what(), 2, dir);
    } catch (const causim::data::InputError& e) {
        return fail(chosen, "input", e.what(), 3, dir);
    } catch (const causim::num::ContractViolation& e) {
        return fail(chosen, "contract", e.what(), 4, dir);
    } catch (const std::exception& e) {
        return fail(chosen, "runtime", e.what(), 5, dir);
    }
}
