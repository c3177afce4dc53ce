#pragma once

// Run configuration: experiment presets, flat key=value serialization, and
// override precedence (flags > config file > preset defaults).

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lanedet/common.hpp"
#include "lanedet/losses.hpp"
#include "lanedet/network.hpp"
#include "lanedet/postprocess.hpp"
#include "lanedet/tusimple.hpp"

namespace lanedet {

struct RunConfig {
    std::string preset = "exp3";  // exp1 | exp2 | exp3
    std::string scale = "desk";   // desk | full
    uint64_t seed = 1;

    EncoderConfig model;

    // training
    int steps = 200;
    int batch_size = 2;
    float lr = 1e-3f;
    int checkpoint_every = 100;  // 0 disables periodic checkpoints (final one is always written)
    int log_every = 1;
    std::string loss_mode = "default";  // default | eq8

    LossWeights loss;

    // data
    std::string dataset;  // label-file path, dataset directory, or "synth"
    int frame_w = 1280;   // annotation frame (TuSimple original resolution)
    int frame_h = 720;
    int clip_limit = 0;  // 0 = use every clip
    bool augment_enabled = false;
    AugmentConfig aug;

    PostprocessConfig post;

    // evaluation
    double x_tol = 20.0;  // point-match tolerance, original-frame px

    // paths
    std::string out_dir = "out";
    std::string checkpoint;  // input checkpoint (infer / resume)
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"exp1", "exp2", "exp3"};
    return names;
}

// Architecture selection for the three experiment presets:
//   exp1: baseline family — no attention, no FPN (transposed-conv decoder), all three heads
//   exp2: Network 1 — adds self-attention and the FPN decoder
//   exp3: Network 2 — ROI crop, confidence head only, focal+LineIoU training
inline void apply_preset(RunConfig& cfg, const std::string& preset) {
    bool known = false;
    for (const auto& n : preset_names()) known |= n == preset;
    require(known, str_printf("config: unknown preset '%s' (expected exp1, exp2, or exp3)", preset.c_str()));
    cfg.preset = preset;
    if (preset == "exp1") {
        cfg.model.variant = Variant::network1;
        cfg.model.attention_enabled = false;
        cfg.model.fpn_enabled = false;
    } else if (preset == "exp2") {
        cfg.model.variant = Variant::network1;
        cfg.model.attention_enabled = true;
        cfg.model.fpn_enabled = true;
    } else {
        cfg.model.variant = Variant::network2;
        cfg.model.attention_enabled = false;
        cfg.model.fpn_enabled = false;
    }
}

// Desk scale keeps every architectural choice but shrinks resolution, clip
// length, and widths so a full train/infer/eval cycle runs on one CPU core.
inline void apply_scale(RunConfig& cfg, const std::string& scale) {
    require(scale == "desk" || scale == "full",
            str_printf("config: unknown scale '%s' (expected desk or full)", scale.c_str()));
    cfg.scale = scale;
    if (scale == "desk") {
        cfg.model.input_h = 64;
        cfg.model.input_w = 128;
        cfg.model.temporal_depth = 2;
        cfg.model.stage_channels = {16, 32, 64, 128};
    } else {
        cfg.model.input_h = 256;
        cfg.model.input_w = 512;
        cfg.model.temporal_depth = 4;
        cfg.model.stage_channels = {64, 128, 256, 512};
    }
    cfg.model.d_k = 0;  // re-derive from stage widths
}

inline RunConfig make_preset_config(const std::string& preset, const std::string& scale = "desk") {
    RunConfig cfg;
    apply_preset(cfg, preset);
    apply_scale(cfg, scale);
    return cfg;
}

namespace detail {

inline std::string format_f(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string join_channels(const std::array<int, 4>& ch) {
    return str_printf("%d,%d,%d,%d", ch[0], ch[1], ch[2], ch[3]);
}

inline std::array<int, 4> parse_channels(const std::string& s) {
    std::array<int, 4> out{};
    std::istringstream is(s);
    std::string tok;
    int i = 0;
    while (std::getline(is, tok, ',')) {
        require(i < 4, "config: stage_channels needs exactly 4 comma-separated values");
        out[i++] = std::stoi(tok);
    }
    require(i == 4, "config: stage_channels needs exactly 4 comma-separated values");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument(str_printf("config: key '%s' expects true/false, got '%s'", key.c_str(), v.c_str()));
}

}  // namespace detail

// Every tunable as a flat key=value list, in a stable order.
inline std::vector<std::pair<std::string, std::string>> config_to_kv(const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    auto s = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    auto f = [&](const std::string& k, double v) { kv.emplace_back(k, detail::format_f(v)); };
    auto i = [&](const std::string& k, int64_t v) { kv.emplace_back(k, std::to_string(v)); };
    auto b = [&](const std::string& k, bool v) { kv.emplace_back(k, v ? "true" : "false"); };

    s("preset", c.preset);
    s("scale", c.scale);
    i("seed", static_cast<int64_t>(c.seed));

    s("model.variant", variant_name(c.model.variant));
    i("model.input_h", c.model.input_h);
    i("model.input_w", c.model.input_w);
    i("model.temporal_depth", c.model.temporal_depth);
    s("model.stage_channels", detail::join_channels(c.model.stage_channels));
    i("model.blocks_per_stage", c.model.blocks_per_stage);
    b("model.factorized", c.model.factorized);
    b("model.attention", c.model.attention_enabled);
    b("model.fpn", c.model.fpn_enabled);
    i("model.fpn_width", c.model.fpn_width);
    i("model.decoder_width", c.model.decoder_width);
    i("model.embed_dim", c.model.embed_dim);
    i("model.d_k", c.model.d_k);
    f("model.dropout_p", c.model.dropout_p);
    i("model.attention_max_positions", c.model.attention_max_positions);
    f("model.roi.x1", c.model.roi.x1);
    f("model.roi.x2", c.model.roi.x2);
    f("model.roi.y1", c.model.roi.y1);
    f("model.roi.y2", c.model.roi.y2);

    i("train.steps", c.steps);
    i("train.batch_size", c.batch_size);
    f("train.lr", c.lr);
    i("train.checkpoint_every", c.checkpoint_every);
    i("train.log_every", c.log_every);
    s("train.loss_mode", c.loss_mode);

    f("loss.w_focal", c.loss.w_focal);
    f("loss.w_offset", c.loss.w_offset);
    f("loss.w_lineiou", c.loss.w_lineiou);
    f("loss.w_embed", c.loss.w_embed);
    f("loss.focal_alpha", c.loss.focal_alpha);
    f("loss.focal_gamma", c.loss.focal_gamma);
    f("loss.lineiou_e", c.loss.lineiou_e);
    f("loss.delta_pull", c.loss.delta_pull);
    f("loss.delta_push", c.loss.delta_push);

    s("data.dataset", c.dataset);
    i("data.frame_w", c.frame_w);
    i("data.frame_h", c.frame_h);
    i("data.clip_limit", c.clip_limit);
    b("data.augment", c.augment_enabled);
    f("aug.flip_prob", c.aug.flip_prob);
    f("aug.brightness_delta", c.aug.brightness_delta);
    f("aug.noise_sigma", c.aug.noise_sigma);
    f("aug.rotation_deg", c.aug.rotation_deg);

    f("post.threshold", c.post.threshold);
    f("post.dist_threshold", c.post.dist_threshold);
    f("post.embed_weight", c.post.embed_weight);
    i("post.min_points", c.post.min_points);
    i("post.ransac_iters", c.post.ransac_iters);
    f("post.inlier_tol", c.post.inlier_tol);
    i("post.min_inliers", c.post.min_inliers);
    i("post.candidates_per_row", c.post.candidates_per_row);
    f("post.lambda", c.post.lambda);

    f("eval.x_tol", c.x_tol);

    s("out.dir", c.out_dir);
    s("out.checkpoint", c.checkpoint);
    return kv;
}

// Applies a single key=value override. Unknown keys and malformed values
// throw std::invalid_argument naming the key.
inline void config_apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
    auto bad_value = [&]() {
        return std::invalid_argument(
            str_printf("config: bad value '%s' for key '%s'", value.c_str(), key.c_str()));
    };
    auto to_i = [&]() {
        try {
            size_t pos = 0;
            const long long v = std::stoll(value, &pos);
            if (pos != value.size()) throw bad_value();
            return v;
        } catch (const std::invalid_argument&) {
            throw bad_value();
        } catch (const std::out_of_range&) {
            throw bad_value();
        }
    };
    auto to_f = [&]() {
        try {
            size_t pos = 0;
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw bad_value();
            return v;
        } catch (const std::invalid_argument&) {
            throw bad_value();
        } catch (const std::out_of_range&) {
            throw bad_value();
        }
    };

    if (key == "preset") {
        apply_preset(c, value);
    } else if (key == "scale") {
        apply_scale(c, value);
    } else if (key == "seed") {
        c.seed = static_cast<uint64_t>(to_i());
    } else if (key == "model.variant") {
        if (value == variant_name(Variant::network1)) {
            c.model.variant = Variant::network1;
        } else if (value == variant_name(Variant::network2)) {
            c.model.variant = Variant::network2;
        } else {
            throw bad_value();
        }
    } else if (key == "model.input_h") {
        c.model.input_h = static_cast<int>(to_i());
    } else if (key == "model.input_w") {
        c.model.input_w = static_cast<int>(to_i());
    } else if (key == "model.temporal_depth") {
        c.model.temporal_depth = static_cast<int>(to_i());
    } else if (key == "model.stage_channels") {
        c.model.stage_channels = detail::parse_channels(value);
    } else if (key == "model.blocks_per_stage") {
        c.model.blocks_per_stage = static_cast<int>(to_i());
    } else if (key == "model.factorized") {
        c.model.factorized = detail::parse_bool(key, value);
    } else if (key == "model.attention") {
        c.model.attention_enabled = detail::parse_bool(key, value);
    } else if (key == "model.fpn") {
        c.model.fpn_enabled = detail::parse_bool(key, value);
    } else if (key == "model.fpn_width") {
        c.model.fpn_width = static_cast<int>(to_i());
    } else if (key == "model.decoder_width") {
        c.model.decoder_width = static_cast<int>(to_i());
    } else if (key == "model.embed_dim") {
        c.model.embed_dim = static_cast<int>(to_i());
    } else if (key == "model.d_k") {
        c.model.d_k = static_cast<int>(to_i());
    } else if (key == "model.dropout_p") {
        c.model.dropout_p = static_cast<float>(to_f());
    } else if (key == "model.attention_max_positions") {
        c.model.attention_max_positions = to_i();
    } else if (key == "model.roi.x1") {
        c.model.roi.x1 = to_f();
    } else if (key == "model.roi.x2") {
        c.model.roi.x2 = to_f();
    } else if (key == "model.roi.y1") {
        c.model.roi.y1 = to_f();
    } else if (key == "model.roi.y2") {
        c.model.roi.y2 = to_f();
    } else if (key == "train.steps") {
        c.steps = static_cast<int>(to_i());
    } else if (key == "train.batch_size") {
        c.batch_size = static_cast<int>(to_i());
    } else if (key == "train.lr") {
        c.lr = static_cast<float>(to_f());
    } else if (key == "train.checkpoint_every") {
        c.checkpoint_every = static_cast<int>(to_i());
    } else if (key == "train.log_every") {
        c.log_every = static_cast<int>(to_i());
    } else if (key == "train.loss_mode") {
        if (value != "default" && value != "eq8") throw bad_value();
        c.loss_mode = value;
    } else if (key == "loss.w_focal") {
        c.loss.w_focal = static_cast<float>(to_f());
    } else if (key == "loss.w_offset") {
        c.loss.w_offset = static_cast<float>(to_f());
    } else if (key == "loss.w_lineiou") {
        c.loss.w_lineiou = static_cast<float>(to_f());
    } else if (key == "loss.w_embed") {
        c.loss.w_embed = static_cast<float>(to_f());
    } else if (key == "loss.focal_alpha") {
        c.loss.focal_alpha = static_cast<float>(to_f());
    } else if (key == "loss.focal_gamma") {
        c.loss.focal_gamma = static_cast<float>(to_f());
    } else if (key == "loss.lineiou_e") {
        c.loss.lineiou_e = static_cast<float>(to_f());
    } else if (key == "loss.delta_pull") {
        c.loss.delta_pull = static_cast<float>(to_f());
    } else if (key == "loss.delta_push") {
        c.loss.delta_push = static_cast<float>(to_f());
    } else if (key == "data.dataset") {
        c.dataset = value;
    } else if (key == "data.frame_w") {
        c.frame_w = static_cast<int>(to_i());
    } else if (key == "data.frame_h") {
        c.frame_h = static_cast<int>(to_i());
    } else if (key == "data.clip_limit") {
        c.clip_limit = static_cast<int>(to_i());
    } else if (key == "data.augment") {
        c.augment_enabled = detail::parse_bool(key, value);
    } else if (key == "aug.flip_prob") {
        c.aug.flip_prob = static_cast<float>(to_f());
    } else if (key == "aug.brightness_delta") {
        c.aug.brightness_delta = static_cast<float>(to_f());
    } else if (key == "aug.noise_sigma") {
        c.aug.noise_sigma = static_cast<float>(to_f());
    } else if (key == "aug.rotation_deg") {
        c.aug.rotation_deg = static_cast<float>(to_f());
    } else if (key == "post.threshold") {
        c.post.threshold = to_f();
    } else if (key == "post.dist_threshold") {
        c.post.dist_threshold = to_f();
    } else if (key == "post.embed_weight") {
        c.post.embed_weight = to_f();
    } else if (key == "post.min_points") {
        c.post.min_points = static_cast<int>(to_i());
    } else if (key == "post.ransac_iters") {
        c.post.ransac_iters = static_cast<int>(to_i());
    } else if (key == "post.inlier_tol") {
        c.post.inlier_tol = to_f();
    } else if (key == "post.min_inliers") {
        c.post.min_inliers = static_cast<int>(to_i());
    } else if (key == "post.candidates_per_row") {
        c.post.candidates_per_row = static_cast<int>(to_i());
    } else if (key == "post.lambda") {
        c.post.lambda = to_f();
    } else if (key == "eval.x_tol") {
        c.x_tol = to_f();
    } else if (key == "out.dir") {
        c.out_dir = value;
    } else if (key == "out.checkpoint") {
        c.checkpoint = value;
    } else {
        throw std::invalid_argument(str_printf("config: unknown key '%s'", key.c_str()));
    }
}

inline std::string serialize_config(const RunConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_to_kv(c)) {
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

// Applies key=value lines to an existing config. '#' starts a comment; blank
// lines are skipped. `preset`/`scale` lines re-apply their template first, so
// later keys in the same file still override them.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& source_name = "config") {
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        require(eq != std::string::npos && eq > 0,
                str_printf("%s line %d: expected key=value, got '%s'", source_name.c_str(), line_no, line.c_str()));
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto ke = key.find_last_not_of(" \t");
        key = key.substr(0, ke + 1);
        const auto vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        try {
            config_apply_kv(c, key, value);
        } catch (const std::invalid_argument& ex) {
            throw std::invalid_argument(str_printf("%s line %d: %s", source_name.c_str(), line_no, ex.what()));
        }
    }
}

inline RunConfig parse_config_text(const std::string& text, const std::string& source_name = "config") {
    RunConfig c = make_preset_config("exp3", "desk");
    apply_config_text(c, text, source_name);
    return c;
}

inline void save_config_file(const std::string& path, const RunConfig& c) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), str_printf("config: cannot open '%s' for writing", path.c_str()));
    os << serialize_config(c);
    require(os.good(), str_printf("config: write to '%s' failed", path.c_str()));
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), str_printf("cannot open '%s'", path.c_str()));
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline RunConfig load_config_file(const std::string& path) {
    return parse_config_text(read_text_file(path), path);
}

inline void validate_run_config(const RunConfig& c) {
    validate_config(c.model);
    validate_weights(c.loss);
    validate_augment(c.aug);
    require(c.steps >= 0, "config: train.steps must be >= 0");
    require(c.batch_size >= 1, "config: train.batch_size must be >= 1");
    require(c.lr > 0, "config: train.lr must be > 0");
    require(c.log_every >= 1, "config: train.log_every must be >= 1");
    require(c.checkpoint_every >= 0, "config: train.checkpoint_every must be >= 0");
    require(c.clip_limit >= 0, "config: data.clip_limit must be >= 0");
    require(c.frame_w > 0 && c.frame_h > 0, "config: data.frame_w/frame_h must be positive");
    require(c.loss_mode == "default" || c.loss_mode == "eq8", "config: train.loss_mode must be default or eq8");
    require(c.post.threshold > 0 && c.post.threshold < 1, "config: post.threshold must be in (0,1)");
    require(c.x_tol > 0, "config: eval.x_tol must be > 0");
}

inline LossMode loss_mode_from_string(const std::string& s) {
    return s == "eq8" ? LossMode::eq8 : LossMode::variant_default;
}

}  // namespace lanedet
