#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfgnn/cli.hpp"

namespace {

int dispatch(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const sfgnn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SF-GNN lab: dual-representation GNNs with self-filter gating"};
    app.require_subcommand(1);

    // gen ---------------------------------------------------------------
    sfgnn::cli::GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen_cmd->add_option("kind", gen.kind, "Dataset kind: nc | kg")->required();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");
    gen_cmd->add_option("--nodes", gen.nc.nodes, "[nc] node count");
    gen_cmd->add_option("--classes", gen.nc.classes, "[nc] class count");
    gen_cmd->add_option("--homophily", gen.nc.homophily, "[nc] intra-class edge fraction");
    gen_cmd->add_option("--noise", gen.nc.noise_fraction, "[nc] fraction of pure-noise nodes");
    gen_cmd->add_option("--dim", gen.nc.feature_dim, "[nc] feature dimension");
    gen_cmd->add_option("--avg-degree", gen.nc.avg_degree, "[nc] average degree");
    gen_cmd->add_option("--entities", gen.kg.entities, "[kg] entity count");
    gen_cmd->add_option("--relations", gen.kg.relations, "[kg] relation count");
    gen_cmd->add_option("--pattern", gen.kg.pattern, "[kg] rule pattern (ring)");

    // train -------------------------------------------------------------
    sfgnn::cli::TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
    train_cmd->add_option("--config", train.config_path, "Config JSON file")->required();
    train_cmd->add_option("--set", train.sets, "Override config values (key=value, repeatable)");
    train_cmd->add_option("--out", train.out_dir, "Output directory for checkpoint + metrics");

    // eval --------------------------------------------------------------
    sfgnn::cli::EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval.dataset_override, "Dataset directory override");
    eval_cmd->add_option("--split", eval.split, "Split to score: test | valid");
    eval_cmd->add_option("--out", eval.out_json, "Write the JSON report here");

    // sweep ---------------------------------------------------------------
    sfgnn::cli::SweepArgs sweep;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Layer/variant/seed sweep");
    sweep_cmd->add_option("--config", sweep.config_path, "Base config JSON file")->required();
    sweep_cmd->add_option("--set", sweep.sets, "Override config values (key=value, repeatable)");
    sweep_cmd->add_option("--layers", sweep.layers, "Layer counts")->required()->delimiter(',');
    sweep_cmd->add_option("--variants", sweep.variants, "Variants (base, sfgnn)")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds")->required()->delimiter(',');
    sweep_cmd->add_option("--out", sweep.out_dir, "Output directory for sweep.csv");
    sweep_cmd->add_option("--jobs", sweep.jobs, "Parallel runs");

    // analyze-sfm ---------------------------------------------------------
    sfgnn::cli::AnalyzeArgs analyze;
    CLI::App* an_cmd = app.add_subcommand("analyze-sfm", "Gate-trace category analysis");
    an_cmd->add_option("--checkpoint", analyze.checkpoint, "Checkpoint file")->required();
    an_cmd->add_option("--data", analyze.dataset_override, "Dataset directory override");
    an_cmd->add_option("--out", analyze.out_prefix, "Output prefix (<prefix>.csv/.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (gen_cmd->parsed()) return dispatch([&] { return sfgnn::cli::cmd_gen(gen); });
    if (train_cmd->parsed()) return dispatch([&] { return sfgnn::cli::cmd_train(train); });
    if (eval_cmd->parsed()) return dispatch([&] { return sfgnn::cli::cmd_eval(eval); });
    if (sweep_cmd->parsed()) return dispatch([&] { return sfgnn::cli::cmd_sweep(sweep); });
    if (an_cmd->parsed()) return dispatch([&] { return sfgnn::cli::cmd_analyze_sfm(analyze); });
    return 2;
}
