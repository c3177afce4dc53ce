// Command-line surface: train / infer / eval / visualize.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (non-finite loss).

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <lanedet/config.hpp>
#include <lanedet/runner.hpp>

namespace {

struct CommonFlags {
    std::string config_file;
    std::string preset;
    std::string scale;
    std::string dataset;
    std::string out_dir;
    std::string checkpoint;
    uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> overrides;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_file, "key=value config file");
    cmd->add_option("--preset", f.preset, "experiment preset: exp1 | exp2 | exp3")
        ->check(CLI::IsMember({"exp1", "exp2", "exp3"}));
    cmd->add_option("--scale", f.scale, "model scale: desk | full")->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--seed", f.seed)->each([&f](const std::string&) { f.seed_given = true; });
    cmd->add_option("--dataset", f.dataset, "label file, dataset directory, or 'synth'");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file to load");
    cmd->add_option("--set", f.overrides, "extra key=value override (repeatable)");
}

// Precedence: command-line flags > config file > preset defaults.
lanedet::RunConfig build_config(const CommonFlags& f) {
    lanedet::RunConfig cfg = lanedet::make_preset_config("exp3", "desk");
    if (!f.config_file.empty())
        cfg = lanedet::load_config_file(f.config_file);
    if (!f.preset.empty()) lanedet::apply_preset(cfg, f.preset);
    if (!f.scale.empty()) lanedet::apply_scale(cfg, f.scale);
    if (f.seed_given) cfg.seed = f.seed;
    if (!f.dataset.empty()) cfg.dataset = f.dataset;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
    for (const auto& kv : f.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        lanedet::config_apply_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatiotemporal highway lane detection: train, infer, eval, visualize"};
    app.require_subcommand(1);

    CommonFlags train_f, infer_f, eval_f, vis_f;
    std::string eval_predictions, vis_predictions, vis_losslog;

    CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints + a loss log");
    add_common_flags(train_cmd, train_f);

    CLI::App* infer_cmd = app.add_subcommand("infer", "Run a checkpoint over clips, writing prediction JSON lines");
    add_common_flags(infer_cmd, infer_f);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Score prediction JSON lines against labels");
    add_common_flags(eval_cmd, eval_f);
    eval_cmd->add_option("--predictions", eval_predictions, "prediction JSON-lines file")->required();

    CLI::App* vis_cmd = app.add_subcommand("visualize", "Render lane overlays and loss-curve plots");
    add_common_flags(vis_cmd, vis_f);
    vis_cmd->add_option("--predictions", vis_predictions, "prediction JSON-lines file");
    vis_cmd->add_option("--losslog", vis_losslog, "loss log from a training run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return lanedet::kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            return lanedet::run_train(build_config(train_f), std::cout).exit_code;
        }
        if (infer_cmd->parsed()) {
            return lanedet::run_infer(build_config(infer_f), std::cout);
        }
        if (eval_cmd->parsed()) {
            return lanedet::run_eval(build_config(eval_f), eval_predictions, std::cout);
        }
        return lanedet::run_visualize(build_config(vis_f), vis_predictions, vis_losslog, std::cout);
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return lanedet::kExitUsage;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return lanedet::kExitData;
    }
}
