#pragma once

// Command implementations behind the CLI: deterministic training with
// periodic checkpoints, inference to TuSimple-format prediction lines,
// metric evaluation with the experiment comparator, and PNG visualization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lanedet/adam.hpp"
#include "lanedet/checkpoint.hpp"
#include "lanedet/config.hpp"
#include "lanedet/image.hpp"
#include "lanedet/image_io.hpp"
#include "lanedet/losses.hpp"
#include "lanedet/metrics.hpp"
#include "lanedet/network.hpp"
#include "lanedet/postprocess.hpp"
#include "lanedet/synthetic.hpp"
#include "lanedet/tusimple.hpp"

namespace lanedet {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct LoadedClip {
    std::vector<Image> frames;  // chronological; the annotated frame is last
    ClipAnnotation annotation;  // coordinates in the original frame
};

// ---------------------------------------------------------------------------
// Dataset loading. `dataset` is either the literal "synth" (built-in fixture),
// a JSON-lines label file, or a directory containing such files. Frames for a
// record live under the dataset root at raw_file, with the preceding frames of
// the clip numbered downward from it.

namespace detail {

inline std::vector<std::string> clip_frame_paths(const std::string& root, const std::string& raw_file, int count) {
    namespace fs = std::filesystem;
    const fs::path annotated = fs::path(root) / raw_file;
    if (count <= 1) return {annotated.string()};
    const std::string stem = annotated.stem().string();
    const std::string ext = annotated.extension().string();
    bool numeric = !stem.empty();
    for (char ch : stem) numeric &= ch >= '0' && ch <= '9';
    require(numeric, str_printf("dataset: cannot derive preceding frames of '%s' (frame stem is not a number)",
                                raw_file.c_str()));
    const long long last = std::stoll(stem);
    require(last >= count, str_printf("dataset: clip '%s' has no %d preceding frames", raw_file.c_str(), count - 1));
    std::vector<std::string> paths;
    for (long long i = last - count + 1; i <= last; ++i)
        paths.push_back((annotated.parent_path() / (std::to_string(i) + ext)).string());
    return paths;
}

inline std::vector<std::string> dataset_label_files(const std::string& dataset) {
    namespace fs = std::filesystem;
    require(fs::exists(dataset), str_printf("dataset: '%s' does not exist", dataset.c_str()));
    if (fs::is_regular_file(dataset)) return {dataset};
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dataset))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    require(!files.empty(), str_printf("dataset: no .json label files in '%s'", dataset.c_str()));
    return files;
}

}  // namespace detail

// Loads the dataset named by cfg. For "synth" the fixture is generated at the
// model input resolution and cfg's frame dimensions are updated to match.
inline std::vector<LoadedClip> load_dataset(RunConfig& cfg, std::ostream& log, bool need_frames = true) {
    std::vector<LoadedClip> clips;
    require(!cfg.dataset.empty(), "dataset: no dataset given (use --dataset PATH or --dataset synth)");
    if (cfg.dataset == "synth") {
        SyntheticSpec spec;
        spec.frame_h = cfg.model.input_h;
        spec.frame_w = cfg.model.input_w;
        spec.frames_per_clip = std::max(2, cfg.model.temporal_depth);
        auto fixture = make_synthetic_fixture(spec);
        cfg.frame_w = spec.frame_w;
        cfg.frame_h = spec.frame_h;
        for (auto& c : fixture) clips.push_back({std::move(c.frames), std::move(c.annotation)});
    } else {
        namespace fs = std::filesystem;
        const auto files = detail::dataset_label_files(cfg.dataset);
        const std::string root =
            fs::is_regular_file(cfg.dataset) ? fs::path(cfg.dataset).parent_path().string() : cfg.dataset;
        for (const auto& file : files) {
            std::ifstream is(file);
            require(is.good(), str_printf("dataset: cannot open '%s'", file.c_str()));
            std::vector<std::string> lines;
            std::string line;
            while (std::getline(is, line)) lines.push_back(line);
            auto parsed = parse_tusimple(lines);
            for (const auto& d : parsed.diagnostics) log << file << ": " << d << "\n";
            for (auto& ann : parsed.annotations) {
                LoadedClip clip;
                clip.annotation = std::move(ann);
                if (need_frames) {
                    const auto paths =
                        detail::clip_frame_paths(root, clip.annotation.raw_file, cfg.model.temporal_depth);
                    for (const auto& p : paths) clip.frames.push_back(load_image(p));
                }
                clips.push_back(std::move(clip));
                if (cfg.clip_limit > 0 && static_cast<int>(clips.size()) >= cfg.clip_limit) break;
            }
            if (cfg.clip_limit > 0 && static_cast<int>(clips.size()) >= cfg.clip_limit) break;
        }
    }
    if (cfg.clip_limit > 0 && static_cast<int>(clips.size()) > cfg.clip_limit)
        clips.resize(static_cast<size_t>(cfg.clip_limit));
    return clips;
}

// Writes the synthetic fixture to disk in the TuSimple layout (numbered frame
// images per clip directory + a JSON-lines label file) and returns the label
// file path.
inline std::string write_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec = SyntheticSpec{}) {
    namespace fs = std::filesystem;
    const auto clips = make_synthetic_fixture(spec);
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, str_printf("dataset: cannot create '%s'", dir.c_str()));
    const std::string label_path = (fs::path(dir) / "label_data.json").string();
    std::ofstream label(label_path, std::ios::binary);
    require(label.good(), str_printf("dataset: cannot write '%s'", label_path.c_str()));
    for (size_t ci = 0; ci < clips.size(); ++ci) {
        const fs::path clip_dir = fs::path(dir) / clips[ci].annotation.raw_file;
        fs::create_directories(clip_dir.parent_path());
        for (size_t t = 0; t < clips[ci].frames.size(); ++t) {
            const fs::path frame_path = clip_dir.parent_path() / (std::to_string(t + 1) + ".png");
            save_image(frame_path.string(), clips[ci].frames[t]);
        }
        label << serialize_annotation(clips[ci].annotation) << "\n";
    }
    require(label.good(), "dataset: label write failed");
    return label_path;
}

// ---------------------------------------------------------------------------
// Coordinate plumbing shared by training and inference.

// Transform from encoder-input pixel coordinates to working-frame pixel
// coordinates, without running a forward pass. Mirrors model_forward.
inline CoordTransform model_input_transform(const EncoderConfig& mc, int work_h, int work_w) {
    if (mc.variant != Variant::network2) return CoordTransform{};
    const int64_t x_lo = llround(mc.roi.x1 * work_w), x_hi = llround(mc.roi.x2 * work_w);
    const int64_t y_lo = llround(mc.roi.y1 * work_h), y_hi = llround(mc.roi.y2 * work_h);
    const double fx = static_cast<double>(x_hi - x_lo) / mc.input_w;
    const double fy = static_cast<double>(y_hi - y_lo) / mc.input_h;
    return compose(CoordTransform{1.0, static_cast<double>(x_lo), 1.0, static_cast<double>(y_lo)},
                   CoordTransform{fx, 0.5 * fx - 0.5, fy, 0.5 * fy - 0.5});
}

struct RunGeometry {
    int work_h = 0, work_w = 0;     // clip-tensor resolution fed to the model
    int dec_h = 0, dec_w = 0;       // decoder map resolution
    CoordTransform to_annotation;   // encoder-input px -> original-frame px
};

inline RunGeometry run_geometry(const RunConfig& cfg) {
    RunGeometry g;
    // Network 2 crops its ROI out of the original frame, so the clip tensor
    // keeps the original resolution; Network 1 consumes the input resolution.
    if (cfg.model.variant == Variant::network2) {
        g.work_h = cfg.frame_h;
        g.work_w = cfg.frame_w;
    } else {
        g.work_h = cfg.model.input_h;
        g.work_w = cfg.model.input_w;
    }
    g.dec_h = cfg.model.input_h / 4;
    g.dec_w = cfg.model.input_w / 4;
    const CoordTransform work_to_ann = frame_scale(g.work_w, g.work_h, cfg.frame_w, cfg.frame_h);
    g.to_annotation = compose(work_to_ann, model_input_transform(cfg.model, g.work_h, g.work_w));
    return g;
}

// Stacks N single-clip tensors into one batch.
inline Tensor concat_clips(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_clips: empty batch");
    const Shape s0 = parts[0].shape;
    int64_t n = 0;
    for (const auto& p : parts) {
        require(p.shape.rank == 5, "concat_clips: clips must be rank-5");
        for (int d = 1; d < 5; ++d)
            require(p.shape[d] == s0[d], "concat_clips: mismatched clip shapes");
        n += p.shape[0];
    }
    Tensor out(Shape{n, s0[1], s0[2], s0[3], s0[4]});
    float* dst = out.data.data();
    for (const auto& p : parts) {
        std::copy(p.data.begin(), p.data.end(), dst);
        dst += p.data.size();
    }
    return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainResult {
    int exit_code = kExitOk;
    std::vector<LossBreakdown> history;
    std::string final_checkpoint;
};

inline std::string loss_log_line(int step, const LossBreakdown& b) {
    return str_printf("step %d total %.9g focal %.9g offset %.9g embed %.9g lineiou %.9g", step, b.total, b.focal,
                      b.offset, b.embed, b.lineiou);
}

inline TrainResult run_train(RunConfig cfg, std::ostream& log) {
    TrainResult result;
    namespace fs = std::filesystem;
    validate_run_config(cfg);

    auto clips = load_dataset(cfg, log);
    require(!clips.empty(), "train: dataset is empty");
    for (const auto& c : clips)
        require(static_cast<int>(c.frames.size()) >= cfg.model.temporal_depth,
                str_printf("train: clip '%s' has %zu frames, need %d", c.annotation.raw_file.c_str(),
                           c.frames.size(), cfg.model.temporal_depth));

    fs::create_directories(cfg.out_dir);
    save_config_file((fs::path(cfg.out_dir) / "config.txt").string(), cfg);

    const RunGeometry geo = run_geometry(cfg);
    Model model = make_model<float>(cfg.model, cfg.seed);
    set_training(model, true);

    std::vector<Tensor*> trainable;
    for (auto& p : model_params(model))
        if (p.trainable) trainable.push_back(p.tensor);
    AdamState adam = adam_init(trainable, cfg.lr);

    log << str_printf("train: preset %s scale %s variant %s seed %llu", cfg.preset.c_str(), cfg.scale.c_str(),
                      variant_name(cfg.model.variant), static_cast<unsigned long long>(cfg.seed))
        << "\n";
    log << str_printf("train: %zu clips, %d steps, batch %d, params %lld", clips.size(), cfg.steps, cfg.batch_size,
                      static_cast<long long>(count_params(model)))
        << "\n";

    const LossMode mode = loss_mode_from_string(cfg.loss_mode);
    std::vector<std::string> log_lines;
    bool warned_empty_offsets = false;

    // epoch-style deterministic ordering: reshuffle clip indices when exhausted
    Rng order_rng(mix_seed(cfg.seed, 0x6f72646572));
    std::vector<size_t> order(clips.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();  // trigger shuffle on first use
    auto next_clip = [&]() {
        if (cursor >= order.size()) {
            for (size_t i = order.size(); i > 1; --i) {
                const size_t j = static_cast<size_t>(order_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
                std::swap(order[i - 1], order[j]);
            }
            cursor = 0;
        }
        return order[cursor++];
    };

    auto checkpoint_path = [&](const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); };

    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Tensor> batch_clips;
        std::vector<TrainingTargets> batch_targets;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t idx = next_clip();
            const LoadedClip& src = clips[idx];
            ClipAnnotation ann = src.annotation;
            Tensor clip_tensor;
            if (cfg.augment_enabled) {
                std::vector<Image> frames = src.frames;
                AugmentConfig aug = cfg.aug;
                aug.seed = mix_seed(cfg.seed, 0x6175670000ull + static_cast<uint64_t>(step) * 256u +
                                                  static_cast<uint64_t>(b));
                augment(frames, ann, aug);
                clip_tensor = make_clip_tensor(frames, cfg.model.temporal_depth, geo.work_h, geo.work_w);
            } else {
                clip_tensor = make_clip_tensor(src.frames, cfg.model.temporal_depth, geo.work_h, geo.work_w);
            }
            batch_clips.push_back(std::move(clip_tensor));
            batch_targets.push_back(rasterize_targets(ann, geo.dec_h, geo.dec_w, geo.to_annotation));
        }
        Tensor batch = concat_clips(batch_clips);
        TrainingTargets targets = stack_targets(batch_targets);

        model.dropout_seed = mix_seed(cfg.seed, 0x64726f7000ull + static_cast<uint64_t>(step));
        ForwardCache cache;
        ForwardResultT<float> fwd = model_forward(model, batch, cache);

        LossGradsT<float> grads;
        LossBreakdown breakdown =
            total_loss(fwd.out, targets, cfg.loss, cfg.model.variant, mode, &grads);
        if (!std::isfinite(breakdown.total)) {
            const std::string line = str_printf("numeric failure: non-finite loss at step %d", step);
            log << line << "\n";
            log_lines.push_back(line);
            result.exit_code = kExitNumeric;
            break;
        }
        if (breakdown.offset_empty && !warned_empty_offsets) {
            log << "warning: offset loss saw no valid cells this step\n";
            warned_empty_offsets = true;
        }
        result.history.push_back(breakdown);

        zero_grads(model);
        model_backward(model, cache, grads.d_conf, grads.d_off, grads.d_emb);
        adam_step(trainable, adam);

        const std::string line = loss_log_line(step, breakdown);
        log_lines.push_back(line);
        if (step == 1 || step == cfg.steps || (cfg.log_every > 0 && step % cfg.log_every == 0))
            log << line << "\n";
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps)
            save_checkpoint(checkpoint_path(str_printf("checkpoint_step%05d.ldck", step)), model);
    }

    set_training(model, false);
    result.final_checkpoint = checkpoint_path("checkpoint_final.ldck");
    save_checkpoint(result.final_checkpoint, model);
    log << "train: wrote " << result.final_checkpoint << "\n";

    std::ofstream losslog((fs::path(cfg.out_dir) / "loss_log.txt").string(), std::ios::binary);
    require(losslog.good(), "train: cannot write loss log");
    losslog << "# per-step loss breakdown\n";
    for (const auto& l : log_lines) losslog << l << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// infer

// Runs the model on one clip tensor and returns lanes in original-frame
// coordinates, sampled onto the annotation's h_samples grid.
inline std::vector<std::vector<double>> infer_clip(Model& model, const Tensor& clip, const RunGeometry& geo,
                                                   const PostprocessConfig& post,
                                                   const std::vector<int>& h_samples,
                                                   std::vector<LaneInstance>* instances_out = nullptr) {
    ForwardCache cache;
    ForwardResultT<float> fwd = model_forward(model, clip, cache);
    std::vector<LaneInstance> instances = postprocess_pipeline(fwd.out, post, geo.to_annotation);
    std::vector<std::vector<double>> lanes;
    for (const auto& inst : instances) {
        std::vector<double> xs = sample_lane_rows(inst.points, h_samples);
        bool any = false;
        for (double x : xs) any |= x >= -1;
        if (any) lanes.push_back(std::move(xs));
    }
    if (instances_out) *instances_out = std::move(instances);
    return lanes;
}

inline int run_infer(RunConfig cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    validate_run_config(cfg);
    require(!cfg.checkpoint.empty(), "infer: --checkpoint is required");

    LoadedCheckpoint loaded = load_checkpoint(cfg.checkpoint);
    const auto diff = config_diff(loaded.config, cfg.model);
    if (!diff.empty()) {
        log << "infer: checkpoint architecture does not match the requested config:\n";
        for (const auto& d : diff) log << "  " << d << "\n";
        return kExitUsage;
    }
    Model model = model_from_checkpoint<float>(loaded);
    set_training(model, false);

    auto clips = load_dataset(cfg, log);
    fs::create_directories(cfg.out_dir);
    save_config_file((fs::path(cfg.out_dir) / "config.txt").string(), cfg);

    const RunGeometry geo = run_geometry(cfg);
    const std::string pred_path = (fs::path(cfg.out_dir) / "predictions.json").string();
    std::ofstream out(pred_path, std::ios::binary);
    require(out.good(), str_printf("infer: cannot write '%s'", pred_path.c_str()));
    log << str_printf("infer: %zu clips -> %s", clips.size(), pred_path.c_str()) << "\n";

    for (size_t i = 0; i < clips.size(); ++i) {
        const LoadedClip& c = clips[i];
        Tensor clip_tensor = make_clip_tensor(c.frames, cfg.model.temporal_depth, geo.work_h, geo.work_w);
        PostprocessConfig post = cfg.post;
        post.seed = mix_seed(cfg.seed, 0x696e666572ull + i);
        PredictionRecord rec;
        rec.raw_file = c.annotation.raw_file;
        rec.h_samples = c.annotation.h_samples;
        rec.lanes = infer_clip(model, clip_tensor, geo, post, c.annotation.h_samples);
        out << serialize_prediction(rec) << "\n";
    }
    require(out.good(), "infer: write failed");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

inline int run_eval(RunConfig cfg, const std::string& predictions_path, std::ostream& log) {
    namespace fs = std::filesystem;
    require(!predictions_path.empty(), "eval: predictions file is required");
    auto clips = load_dataset(cfg, log, /*need_frames=*/false);
    require(!clips.empty(), "eval: dataset is empty");

    std::ifstream pf(predictions_path);
    require(pf.good(), str_printf("eval: cannot open '%s'", predictions_path.c_str()));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(pf, line))
        if (!line.empty()) lines.push_back(line);
    const std::vector<PredictionRecord> preds = parse_predictions(lines);
    std::map<std::string, const PredictionRecord*> by_file;
    for (const auto& p : preds) by_file[p.raw_file] = &p;

    ConfusionCounts counts;
    std::vector<LaneBenchmark> benches;
    for (const auto& c : clips) {
        static const std::vector<std::vector<double>> kNoLanes;
        const auto it = by_file.find(c.annotation.raw_file);
        const auto& lanes = it == by_file.end() ? kNoLanes : it->second->lanes;
        if (it != by_file.end())
            require(it->second->h_samples == c.annotation.h_samples,
                    str_printf("eval: prediction h_samples differ from labels for '%s'",
                               c.annotation.raw_file.c_str()));
        counts += point_confusion(lanes, c.annotation.lanes, c.annotation.h_samples, cfg.x_tol);
        benches.push_back(tusimple_accuracy(lanes, c.annotation.lanes, c.annotation.h_samples, cfg.x_tol));
    }

    MetricReport report;
    try {
        report = metrics_from_counts(counts);
    } catch (const std::invalid_argument& ex) {
        log << "eval: " << ex.what() << "\n";
        return kExitData;
    }
    const LaneBenchmark bench = combine_benchmarks(benches);
    report.label = "this run (" + cfg.preset + ")";
    report.lane_accuracy = bench.accuracy;
    report.fp_rate = bench.fp_rate;
    report.fn_rate = bench.fn_rate;

    fs::create_directories(cfg.out_dir);
    save_config_file((fs::path(cfg.out_dir) / "config.txt").string(), cfg);

    const std::string table = compare_experiments({report});
    log << table;
    std::ofstream tf((fs::path(cfg.out_dir) / "report.txt").string(), std::ios::binary);
    require(tf.good(), "eval: cannot write report.txt");
    tf << table;

    nlohmann::json j;
    j["label"] = report.label;
    j["accuracy"] = report.accuracy;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["lane_accuracy"] = bench.accuracy;
    j["lane_fp_rate"] = bench.fp_rate;
    j["lane_fn_rate"] = bench.fn_rate;
    j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
    std::ofstream jf((fs::path(cfg.out_dir) / "report.json").string(), std::ios::binary);
    require(jf.good(), "eval: cannot write report.json");
    jf << j.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// visualize

inline std::vector<std::vector<double>> parse_loss_log(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), str_printf("visualize: cannot open loss log '%s'", path.c_str()));
    std::vector<std::vector<double>> series(5);  // total focal offset embed lineiou
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string word;
        double value = 0;
        std::map<std::string, double> row;
        std::string key;
        bool expect_value = false;
        while (ls >> word) {
            if (expect_value) {
                value = std::stod(word);
                row[key] = value;
                expect_value = false;
            } else {
                key = word;
                expect_value = true;
            }
        }
        if (!row.count("total")) continue;
        series[0].push_back(row["total"]);
        series[1].push_back(row.count("focal") ? row["focal"] : 0.0);
        series[2].push_back(row.count("offset") ? row["offset"] : 0.0);
        series[3].push_back(row.count("embed") ? row["embed"] : 0.0);
        series[4].push_back(row.count("lineiou") ? row["lineiou"] : 0.0);
    }
    return series;
}

inline int run_visualize(RunConfig cfg, const std::string& predictions_path, const std::string& loss_log_path,
                         std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    save_config_file((fs::path(cfg.out_dir) / "config.txt").string(), cfg);
    int made = 0;
    if (!cfg.dataset.empty()) {
        auto clips = load_dataset(cfg, log);
        std::map<std::string, const PredictionRecord*> by_file;
        std::vector<PredictionRecord> preds;
        if (!predictions_path.empty()) {
            std::ifstream pf(predictions_path);
            require(pf.good(), str_printf("visualize: cannot open '%s'", predictions_path.c_str()));
            std::vector<std::string> lines;
            std::string line;
            while (std::getline(pf, line))
                if (!line.empty()) lines.push_back(line);
            preds = parse_predictions(lines);
            for (const auto& p : preds) by_file[p.raw_file] = &p;
        }
        for (size_t i = 0; i < clips.size(); ++i) {
            const LoadedClip& c = clips[i];
            Image gt_img = c.frames.back();
            draw_lanes(gt_img, c.annotation.lanes, c.annotation.h_samples, 2.0);
            Image panel = gt_img;
            const auto it = by_file.find(c.annotation.raw_file);
            if (it != by_file.end()) {
                Image pred_img = c.frames.back();
                draw_lanes(pred_img, it->second->lanes, it->second->h_samples, 2.0);
                panel = hconcat(gt_img, pred_img);
            }
            const std::string path = (fs::path(cfg.out_dir) / str_printf("vis_%04zu.png", i)).string();
            save_image(path, panel);
            ++made;
        }
    }
    if (!loss_log_path.empty()) {
        const auto series = parse_loss_log(loss_log_path);
        require(!series[0].empty(), str_printf("visualize: no loss rows in '%s'", loss_log_path.c_str()));
        Image plot = plot_curves(series);
        save_image((fs::path(cfg.out_dir) / "loss_curve.png").string(), plot);
        ++made;
    }
    require(made > 0, "visualize: nothing to render (need --dataset and/or --losslog)");
    log << str_printf("visualize: wrote %d image(s) to %s", made, cfg.out_dir.c_str()) << "\n";
    return kExitOk;
}

}  // namespace lanedet
