#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lanedet/image.hpp"
#include "lanedet/postprocess.hpp"
#include "lanedet/targets.hpp"

namespace lanedet {

// Constant stamped into prediction records in place of wall-clock time, so
// re-runs stay bit-identical.
inline constexpr double kReportedRunTimeMs = 10.0;

// One annotated clip: per-lane x positions sampled on the shared h_samples
// rows; -2 marks "no point at this row".
struct ClipAnnotation {
    std::string raw_file;
    std::vector<std::vector<double>> lanes;
    std::vector<int> h_samples;
};

inline void validate_annotation(const ClipAnnotation& ann) {
    for (size_t i = 1; i < ann.h_samples.size(); ++i)
        require(ann.h_samples[i] > ann.h_samples[i - 1], "annotation: h_samples must be strictly increasing");
    for (size_t l = 0; l < ann.lanes.size(); ++l) {
        require(ann.lanes[l].size() == ann.h_samples.size(),
                str_printf("annotation: lane %zu has %zu entries for %zu h_samples", l, ann.lanes[l].size(),
                           ann.h_samples.size()));
        for (double x : ann.lanes[l])
            require(x == -2 || x >= 0, str_printf("annotation: lane %zu holds x=%g (must be -2 or >= 0)", l, x));
    }
}

// ---------------------------------------------------------------------------
// JSON-lines parsing. Malformed records are rejected individually; each
// diagnostic names the line number and the offending field.

struct ParseResult {
    std::vector<ClipAnnotation> annotations;
    std::vector<std::string> diagnostics;
};

inline ParseResult parse_tusimple(const std::vector<std::string>& lines) {
    ParseResult out;
    for (size_t i = 0; i < lines.size(); ++i) {
        const int line_no = static_cast<int>(i) + 1;
        const std::string& line = lines[i];
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) {
            out.diagnostics.push_back(str_printf("line %d: not valid JSON", line_no));
            continue;
        }
        ClipAnnotation ann;
        std::string field = "raw_file";
        try {
            ann.raw_file = j.at("raw_file").get<std::string>();
            field = "h_samples";
            ann.h_samples = j.at("h_samples").get<std::vector<int>>();
            field = "lanes";
            ann.lanes = j.at("lanes").get<std::vector<std::vector<double>>>();
        } catch (const nlohmann::json::exception&) {
            out.diagnostics.push_back(str_printf("line %d: missing or malformed field '%s'", line_no, field.c_str()));
            continue;
        }
        try {
            validate_annotation(ann);
        } catch (const std::exception& e) {
            out.diagnostics.push_back(str_printf("line %d: %s", line_no, e.what()));
            continue;
        }
        out.annotations.push_back(std::move(ann));
    }
    return out;
}

inline std::string serialize_annotation(const ClipAnnotation& ann) {
    nlohmann::json j;
    j["lanes"] = ann.lanes;
    j["h_samples"] = ann.h_samples;
    j["raw_file"] = ann.raw_file;
    return j.dump();
}

// Prediction record in the same row-sampled convention plus a runtime field.
struct PredictionRecord {
    std::string raw_file;
    std::vector<std::vector<double>> lanes;
    std::vector<int> h_samples;
    double run_time = kReportedRunTimeMs;
};

inline std::string serialize_prediction(const PredictionRecord& rec) {
    nlohmann::json j;
    j["lanes"] = rec.lanes;
    j["h_samples"] = rec.h_samples;
    j["raw_file"] = rec.raw_file;
    j["run_time"] = rec.run_time;
    return j.dump();
}

inline std::vector<PredictionRecord> parse_predictions(const std::vector<std::string>& lines) {
    std::vector<PredictionRecord> out;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(lines[i]);
            PredictionRecord rec;
            rec.raw_file = j.at("raw_file").get<std::string>();
            rec.h_samples = j.at("h_samples").get<std::vector<int>>();
            rec.lanes = j.at("lanes").get<std::vector<std::vector<double>>>();
            if (j.contains("run_time")) rec.run_time = j.at("run_time").get<double>();
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(str_printf("predictions line %zu: %s", i + 1, e.what()));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Target rasterization at decoder resolution. `to_annotation` maps decoder-
// input pixel coordinates to the annotation frame (identity when the
// annotation is already at input resolution); it absorbs both the input
// resize and, for the ROI variant, the crop.

inline CoordTransform frame_scale(int from_w, int from_h, int to_w, int to_h) {
    return CoordTransform{static_cast<double>(to_w) / from_w, 0.0, static_cast<double>(to_h) / from_h, 0.0};
}

inline TrainingTargets rasterize_targets(const ClipAnnotation& ann, int decoder_h, int decoder_w,
                                         const CoordTransform& to_annotation = CoordTransform{}, int stride = 4) {
    validate_annotation(ann);
    require(decoder_h >= 1 && decoder_w >= 1, "rasterize_targets: bad decoder resolution");
    TrainingTargets t;
    const int64_t H = decoder_h, W = decoder_w;
    t.confidence = Tensor(Shape{1, 1, 1, H, W});
    t.offsets = Tensor(Shape{1, 2, 1, H, W});
    t.labels = Tensor(Shape{1, 1, 1, H, W});
    t.valid = Tensor(Shape{1, 1, 1, H, W});
    t.lanes_cells.resize(1);
    const CoordTransform to_input = to_annotation.inverse();
    int next_label = 1;
    for (size_t lane_i = 0; lane_i < ann.lanes.size(); ++lane_i) {
        // annotation points -> continuous decoder-cell coordinates
        std::vector<std::pair<double, double>> cells;  // (cy, cx)
        for (size_t r = 0; r < ann.h_samples.size(); ++r) {
            const double ax = ann.lanes[lane_i][r];
            if (ax < -1) continue;
            double ix, iy;
            to_input.apply(ax, static_cast<double>(ann.h_samples[r]), ix, iy);
            const double cx = ix / stride, cy = iy / stride;
            if (cx < 0 || cx >= static_cast<double>(W) || cy < 0 || cy >= static_cast<double>(H)) {
                ++t.dropped_points;
                continue;
            }
            cells.push_back({cy, cx});
        }
        if (cells.empty()) continue;
        // one marker per decoder row: annotation points exactly, intervening
        // rows by linear interpolation at the row center
        std::map<int64_t, std::pair<double, double>> row_marks;  // row -> (cx, cy)
        for (const auto& [cy, cx] : cells) {
            const int64_t row = static_cast<int64_t>(std::floor(cy));
            row_marks.emplace(row, std::make_pair(cx, cy));
        }
        for (size_t k = 0; k + 1 < cells.size(); ++k) {
            const auto [cy0, cx0] = cells[k];
            const auto [cy1, cx1] = cells[k + 1];
            if (cy1 <= cy0) continue;
            const int64_t r0 = static_cast<int64_t>(std::floor(cy0)), r1 = static_cast<int64_t>(std::floor(cy1));
            for (int64_t r = r0 + 1; r < r1; ++r) {
                const double yc = static_cast<double>(r) + 0.5;
                if (yc < cy0 || yc > cy1) continue;
                const double s = (yc - cy0) / (cy1 - cy0);
                const double cx = cx0 + s * (cx1 - cx0);
                if (cx < 0 || cx >= static_cast<double>(W)) continue;
                row_marks.emplace(r, std::make_pair(cx, yc));
            }
        }
        if (row_marks.empty()) continue;
        const int label = next_label++;
        LaneCellPoints chain;
        for (const auto& [row, mark] : row_marks) {
            const auto [cx, cy] = mark;
            const int64_t col = static_cast<int64_t>(std::floor(cx));
            const size_t cell = static_cast<size_t>(row * W + col);
            t.confidence.data[cell] = 1;
            t.valid.data[cell] = 1;
            t.labels.data[cell] = static_cast<float>(label);
            t.offsets.data[cell] = static_cast<float>(cx - static_cast<double>(col));
            t.offsets.data[static_cast<size_t>((H + row) * W + col)] = static_cast<float>(cy - static_cast<double>(row));
            chain.rows.push_back(static_cast<int>(row));
            chain.xs.push_back(static_cast<float>(cx));
        }
        t.lanes_cells[0].push_back(std::move(chain));
    }
    return t;
}

// Concatenates single-sample targets into one batch.
inline TrainingTargets stack_targets(const std::vector<TrainingTargets>& parts) {
    require(!parts.empty(), "stack_targets: empty batch");
    const Shape base = parts[0].confidence.shape;
    const int64_t N = static_cast<int64_t>(parts.size());
    const int64_t H = base[3], W = base[4];
    TrainingTargets out;
    out.confidence = Tensor(Shape{N, 1, 1, H, W});
    out.offsets = Tensor(Shape{N, 2, 1, H, W});
    out.labels = Tensor(Shape{N, 1, 1, H, W});
    out.valid = Tensor(Shape{N, 1, 1, H, W});
    for (int64_t n = 0; n < N; ++n) {
        const TrainingTargets& p = parts[static_cast<size_t>(n)];
        require(p.confidence.shape == base && p.confidence.shape[0] == 1, "stack_targets: mismatched part shapes");
        const int64_t hw = H * W;
        std::copy(p.confidence.data.begin(), p.confidence.data.end(), out.confidence.data.begin() + n * hw);
        std::copy(p.offsets.data.begin(), p.offsets.data.end(), out.offsets.data.begin() + n * 2 * hw);
        std::copy(p.labels.data.begin(), p.labels.data.end(), out.labels.data.begin() + n * hw);
        std::copy(p.valid.data.begin(), p.valid.data.end(), out.valid.data.begin() + n * hw);
        out.lanes_cells.push_back(p.lanes_cells.empty() ? std::vector<LaneCellPoints>{} : p.lanes_cells[0]);
        out.dropped_points += p.dropped_points;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation: geometric transforms move pixels and lane coordinates
// together; photometric ones touch pixels only. Deterministic per seed.

struct AugmentConfig {
    float flip_prob = 0.5f;
    float brightness_delta = 0.2f;  // uniform in +-delta, normalized units
    float noise_sigma = 0.02f;
    float rotation_deg = 3.0f;  // uniform in +-range
    uint64_t seed = 0;
};

inline void validate_augment(const AugmentConfig& c) {
    require(c.flip_prob >= 0 && c.flip_prob <= 1, "augment: flip probability must be in [0,1]");
    require(c.noise_sigma >= 0, "augment: noise sigma must be >= 0");
    require(c.brightness_delta >= 0 && c.rotation_deg >= 0, "augment: ranges must be >= 0");
}

namespace detail {

// Re-samples a rotated lane polyline back onto the h_samples row grid.
inline std::vector<double> resample_rows(const std::vector<std::pair<double, double>>& pts,
                                         const std::vector<int>& h_samples, int frame_w) {
    std::vector<double> out(h_samples.size(), -2.0);
    if (pts.size() < 2) return out;
    for (size_t r = 0; r < h_samples.size(); ++r) {
        const double y = h_samples[r];
        for (size_t k = 0; k + 1 < pts.size(); ++k) {
            const double y0 = pts[k].second, y1 = pts[k + 1].second;
            if (y1 == y0 || y < std::min(y0, y1) || y > std::max(y0, y1)) continue;
            const double s = (y - y0) / (y1 - y0);
            const double x = pts[k].first + s * (pts[k + 1].first - pts[k].first);
            if (x >= 0 && x < frame_w) out[r] = x;
            break;
        }
    }
    return out;
}

}  // namespace detail

// Applies one clip's augmentation. All frames share the geometric draw; the
// annotation follows the same transform and is re-sampled onto its rows.
inline void augment(std::vector<Image>& frames, ClipAnnotation& ann, const AugmentConfig& cfg) {
    validate_augment(cfg);
    require(!frames.empty(), "augment: no frames");
    const int W = frames[0].w, H = frames[0].h;
    Rng rng(mix_seed(cfg.seed, 0x617567));
    const bool flip = rng.uniform() < cfg.flip_prob;
    const float angle_deg = cfg.rotation_deg > 0 ? rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) : 0.0f;
    const float delta = cfg.brightness_delta > 0 ? rng.uniform(-cfg.brightness_delta, cfg.brightness_delta) : 0.0f;

    if (flip) {
        for (Image& img : frames)
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w / 2; ++x)
                    for (int c = 0; c < img.channels; ++c) std::swap(img.at(y, x, c), img.at(y, img.w - 1 - x, c));
        for (auto& lane : ann.lanes)
            for (double& x : lane)
                if (x >= -1) x = W - 1 - x;
    }
    if (angle_deg != 0.0f) {
        const double rad = static_cast<double>(angle_deg) * 3.14159265358979323846 / 180.0;
        const double cs = std::cos(rad), sn = std::sin(rad);
        const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
        for (Image& img : frames) {
            Image src = img;
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    // inverse map: rotate by -angle about the center
                    const double dx = x - cx, dy = y - cy;
                    const double sx = cs * dx + sn * dy + cx;
                    const double sy = -sn * dx + cs * dy + cy;
                    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
                    const double wx = sx - x0, wy = sy - y0;
                    for (int c = 0; c < img.channels; ++c) {
                        auto sample = [&](int yy, int xx) {
                            return src.inside(yy, xx) ? static_cast<double>(src.at(yy, xx, c)) : 0.0;
                        };
                        img.at(y, x, c) = static_cast<float>((1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                                                             wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1)));
                    }
                }
        }
        for (auto& lane : ann.lanes) {
            std::vector<std::pair<double, double>> pts;
            for (size_t r = 0; r < ann.h_samples.size(); ++r) {
                if (lane[r] < -1) continue;
                const double dx = lane[r] - cx, dy = ann.h_samples[r] - cy;
                pts.push_back({cs * dx - sn * dy + cx, sn * dx + cs * dy + cy});
            }
            lane = detail::resample_rows(pts, ann.h_samples, W);
        }
    }
    if (delta != 0.0f)
        for (Image& img : frames)
            for (float& v : img.data) v = std::clamp(v + delta, 0.0f, 1.0f);
    if (cfg.noise_sigma > 0)
        for (Image& img : frames)
            for (float& v : img.data) v = std::clamp(v + rng.normal(0.0f, cfg.noise_sigma), 0.0f, 1.0f);
}

// ---------------------------------------------------------------------------
// Clip assembly: the last T frames (the annotated frame is the final one),
// resized and stacked as [1,3,T,H,W] in [0,1].
inline Tensor make_clip_tensor(const std::vector<Image>& frames, int T, int h, int w) {
    require(T >= 1, "make_clip_tensor: T must be >= 1");
    require(static_cast<int>(frames.size()) >= T,
            str_printf("make_clip_tensor: need %d frames, have %zu", T, frames.size()));
    Tensor clip(Shape{1, 3, T, h, w});
    for (int t = 0; t < T; ++t) {
        const Image& raw = frames[frames.size() - static_cast<size_t>(T) + static_cast<size_t>(t)];
        require(raw.channels == 3, "make_clip_tensor: frames must be RGB");
        const Image img = resize_image(raw, h, w);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) clip.at5(0, c, t, y, x) = img.at(y, x, c);
    }
    return clip;
}

// Interpolates a detected lane chain onto the TuSimple row grid. Rows
// outside the chain's vertical span stay absent (-2).
inline std::vector<double> sample_lane_rows(const std::vector<Keypoint>& points, const std::vector<int>& h_samples) {
    std::vector<double> out(h_samples.size(), -2.0);
    if (points.size() < 2) return out;
    for (size_t r = 0; r < h_samples.size(); ++r) {
        const double y = h_samples[r];
        if (y < points.front().y || y > points.back().y) continue;
        for (size_t k = 0; k + 1 < points.size(); ++k) {
            const double y0 = points[k].y, y1 = points[k + 1].y;
            if (y < y0 || y > y1) continue;
            out[r] = y1 == y0 ? points[k].x : points[k].x + (y - y0) / (y1 - y0) * (points[k + 1].x - points[k].x);
            break;
        }
    }
    return out;
}

}  // namespace lanedet
