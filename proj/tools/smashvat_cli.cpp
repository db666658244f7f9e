// Command-line front end: train / ablate / sweep / render / oracle / report.
#include <CLI11.hpp>
#include <iostream>

#include "smashvat/experiments.hpp"
#include "smashvat/maps.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Safe/altruistic RL on the vat gridworld"};
    app.require_subcommand(1);

    std::string config_path, env_name, checkpoint_path, run_dir, output_dir = "runs";
    std::vector<double> weight_values = {1, 5, 10, 20};

    auto* train = app.add_subcommand("train", "train per the config file");
    train->add_option("config", config_path, "JSON run configuration")->required();

    auto* ablate = app.add_subcommand("ablate", "four reward ablations on one environment");
    ablate->add_option("env", env_name, "layout name")->required();
    ablate->add_option("--config", config_path, "base JSON configuration");
    ablate->add_option("--out", output_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "alpha=beta sweep on one environment");
    sweep->add_option("env", env_name, "layout name")->required();
    sweep->add_option("--weights", weight_values, "alpha=beta values");
    sweep->add_option("--config", config_path, "base JSON configuration");
    sweep->add_option("--out", output_dir, "output directory");

    auto* render = app.add_subcommand("render", "greedy rollout of a checkpoint");
    render->add_option("checkpoint", checkpoint_path, "network checkpoint")->required();
    render->add_option("env", env_name, "layout name")->required();
    render->add_option("--out", output_dir, "output directory for the SVG");

    auto* oracle = app.add_subcommand("oracle", "value-iteration solution under r_env");
    oracle->add_option("env", env_name, "layout name")->required();

    auto* report = app.add_subcommand("report", "aggregate CSVs in a run directory");
    report->add_option("dir", run_dir, "directory of run CSVs")->required();

    auto* envs = app.add_subcommand("envs", "list the canonical layouts");

    CLI11_PARSE(app, argc, argv);
    try {
        if (train->parsed()) return smashvat::cmd_train(config_path);
        if (ablate->parsed()) return smashvat::cmd_ablate(env_name, config_path, output_dir);
        if (sweep->parsed())
            return smashvat::cmd_sweep(env_name, weight_values, config_path, output_dir);
        if (render->parsed())
            return smashvat::cmd_render(checkpoint_path, env_name, output_dir);
        if (oracle->parsed()) return smashvat::cmd_oracle(env_name);
        if (report->parsed()) return smashvat::cmd_report(run_dir);
        if (envs->parsed()) {
            for (const auto& name : smashvat::layout_names()) std::cout << name << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
