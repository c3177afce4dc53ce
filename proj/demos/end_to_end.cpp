// Usage example: the full pipeline in-process at micro scale.
//
// Builds the synthetic clip fixture, trains the baseline preset for a handful
// of Adam steps, runs inference through the post-processing pipeline, and
// scores the predictions — the same path the `lanedet` CLI drives, called as
// a library.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <lanedet/config.hpp>
#include <lanedet/runner.hpp>

int main() {
    using namespace lanedet;

    RunConfig cfg = make_preset_config("exp1", "desk");
    config_apply_kv(cfg, "model.input_h", "32");
    config_apply_kv(cfg, "model.input_w", "64");
    config_apply_kv(cfg, "model.stage_channels", "4,8,16,32");
    config_apply_kv(cfg, "model.temporal_depth", "2");
    config_apply_kv(cfg, "data.dataset", "synth");
    config_apply_kv(cfg, "train.steps", "20");
    config_apply_kv(cfg, "train.batch_size", "2");
    config_apply_kv(cfg, "train.log_every", "5");
    cfg.out_dir = "demo_out";

    std::printf("== train ==\n");
    TrainResult train = run_train(cfg, std::cout);
    if (train.exit_code != kExitOk) return train.exit_code;
    std::printf("loss: step 1 %.4f -> step %zu %.4f\n", train.history.front().total, train.history.size(),
                train.history.back().total);

    std::printf("== infer ==\n");
    RunConfig infer_cfg = cfg;
    infer_cfg.checkpoint = train.final_checkpoint;
    infer_cfg.out_dir = "demo_out/infer";
    const int rc = run_infer(infer_cfg, std::cout);
    if (rc != kExitOk) return rc;

    std::printf("== eval ==\n");
    RunConfig eval_cfg = cfg;
    eval_cfg.out_dir = "demo_out/eval";
    return run_eval(eval_cfg, "demo_out/infer/predictions.json", std::cout);
}
