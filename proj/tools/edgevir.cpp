// Command-line runner: one subcommand per experiment, plus run / validate / presets / defaults.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgevir/experiments.hpp"

using namespace edgevir;

namespace {

struct Options {
    std::string config;
    std::string out;
    int workers = 1;
    bool paper_scale = false;
};

ExperimentConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

ExperimentConfig resolve(const Options& o, const std::string& experiment) {
    ExperimentConfig c;
    if (!o.config.empty()) {
        c = load(o.config);
        if (!experiment.empty() && to_string(c.experiment) != experiment)
            throw ConfigError("config " + o.config + " is for " + to_string(c.experiment) + ", not " + experiment);
    } else if (!experiment.empty()) {
        c = default_config(experiment_from_string(experiment), o.paper_scale);
    } else {
        throw ConfigError("--config is required");
    }
    if (!o.out.empty()) c.out = o.out;
    return c;
}

int execute(const ExperimentConfig& c, int workers) {
    std::fprintf(stderr, "%s: writing %s\n", to_string(c.experiment).c_str(), c.out.c_str());
    RunResult r = run_and_write(c, c.out, workers);
    int gated = 0, failed = 0;
    for (const auto& rec : r.records) {
        if (!rec.passed) continue;
        ++gated;
        if (!*rec.passed) {
            ++failed;
            std::fprintf(stderr, "  FAIL %s [%s] measured %.10g predicted %.10g\n", rec.quantity.c_str(), rec.param.c_str(),
                         rec.measured, rec.predicted);
        }
    }
    std::fprintf(stderr, "%zu records, %d gated, %d failed, %.1f s\n", r.records.size(), gated, failed, r.wall_time_s);
    return r.all_passed ? 0 : 1;
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--paper-scale", o.paper_scale, "Paper-size lattices (slow)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Edge Virasoro experiments on lattice ground states"};
    app.require_subcommand(1);
    Options o;
    std::string action;

    for (const auto& name : experiment_names()) {
        auto* cmd = app.add_subcommand(name, "Run the " + name + " experiment");
        add_common(cmd, o);
        cmd->callback([&, name] { action = name; });
    }
    auto* run_cmd = app.add_subcommand("run", "Run the experiment named in --config");
    add_common(run_cmd, o);
    run_cmd->callback([&] { action = "run"; });

    std::string target;
    auto* val = app.add_subcommand("validate", "Check a config and print the resolved geometry");
    add_common(val, o);
    val->add_option("experiment", target, "Experiment name (its default config) when --config is absent");
    val->callback([&] { action = "validate"; });

    auto* defaults = app.add_subcommand("defaults", "Print the default config of an experiment");
    defaults->add_option("experiment", target, "Experiment name")->required();
    defaults->add_flag("--paper-scale", o.paper_scale, "Paper-size lattices");
    defaults->callback([&] { action = "defaults"; });

    app.add_subcommand("list-presets", "List region presets")->callback([&] { action = "list-presets"; });
    app.add_subcommand("list-experiments", "List experiments")->callback([&] { action = "list-experiments"; });

    CLI11_PARSE(app, argc, argv);

    try {
        if (action == "list-presets") {
            for (const auto& p : runner_presets()) std::cout << p << '\n';
            return 0;
        }
        if (action == "list-experiments") {
            for (const auto& e : experiment_names()) std::cout << e << '\n';
            return 0;
        }
        if (action == "defaults") {
            std::cout << config_to_json(default_config(experiment_from_string(target), o.paper_scale)).dump(2) << '\n';
            return 0;
        }
        if (action == "validate") {
            ExperimentConfig c = resolve(o, o.config.empty() ? target : std::string());
            std::cout << validate(c).dump(2) << '\n';
            return 0;
        }
        if (action == "run") return execute(resolve(o, ""), o.workers);
        return execute(resolve(o, action), o.workers);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const MemoryGuardError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
