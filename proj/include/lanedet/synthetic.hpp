#pragma once

#include <vector>

#include "lanedet/image.hpp"
#include "lanedet/tusimple.hpp"

namespace lanedet {

// Small deterministic fixture: straight bright lanes on a textured dark
// road, positioned on decoder-cell centers so the supervision is exact.
struct SyntheticSpec {
    int frame_h = 64;
    int frame_w = 128;
    int num_clips = 4;
    int frames_per_clip = 2;
    int lanes_per_clip = 2;
    int stride = 4;               // decoder stride the lanes align to
    double min_y_frac = 0.45;     // annotations start below this height, so
                                  // the default ROI crop keeps every point
    uint64_t seed = 17;
};

struct SyntheticClip {
    std::vector<Image> frames;
    ClipAnnotation annotation;
};

inline std::vector<SyntheticClip> make_synthetic_fixture(const SyntheticSpec& spec) {
    require(spec.frame_h % spec.stride == 0 && spec.frame_w % spec.stride == 0,
            "synthetic fixture: frame size must be a stride multiple");
    require(spec.num_clips >= 1 && spec.frames_per_clip >= 1 && spec.lanes_per_clip >= 1,
            "synthetic fixture: counts must be >= 1");
    const int cols = spec.frame_w / spec.stride;
    require(cols >= 2 * spec.lanes_per_clip + 2, "synthetic fixture: frame too narrow for the lane count");
    Rng rng(mix_seed(spec.seed, 0x73796e74));
    std::vector<SyntheticClip> clips;
    std::vector<int> h_samples;
    const double min_y = spec.min_y_frac * spec.frame_h;
    for (int y = spec.stride / 2; y < spec.frame_h; y += spec.stride) {
        if (y >= min_y) h_samples.push_back(y);
    }
    require(h_samples.size() >= 2, "synthetic fixture: no annotated rows below min_y_frac");

    for (int ci = 0; ci < spec.num_clips; ++ci) {
        SyntheticClip clip;
        clip.annotation.raw_file = str_printf("clips/clip_%04d/%d.png", ci, spec.frames_per_clip);
        clip.annotation.h_samples = h_samples;

        // distinct lane columns, at least two cells apart, on cell centers
        std::vector<int> lane_cols;
        while (static_cast<int>(lane_cols.size()) < spec.lanes_per_clip) {
            const int c = rng.uniform_int(1, cols - 2);
            bool ok = true;
            for (int used : lane_cols)
                if (std::abs(used - c) < 2) ok = false;
            if (ok) lane_cols.push_back(c);
        }
        std::sort(lane_cols.begin(), lane_cols.end());

        std::vector<double> lane_xs;
        for (int c : lane_cols) lane_xs.push_back((c + 0.5) * spec.stride);
        for (double x : lane_xs) {
            std::vector<double> lane(h_samples.size(), x);
            clip.annotation.lanes.push_back(lane);
        }

        for (int t = 0; t < spec.frames_per_clip; ++t) {
            Image img(spec.frame_h, spec.frame_w, 3);
            // dark road with a mild vertical gradient and per-pixel texture
            Rng tex(mix_seed(spec.seed, 0x746578 + static_cast<uint64_t>(ci * 251 + t)));
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    const float base = 0.15f + 0.10f * static_cast<float>(y) / img.h + 0.03f * tex.uniform();
                    img.at(y, x, 0) = base;
                    img.at(y, x, 1) = base;
                    img.at(y, x, 2) = base * 1.05f;
                }
            const float glow = t + 1 == spec.frames_per_clip ? 1.0f : 0.9f;  // earlier frames slightly dimmer
            for (double x : lane_xs)
                draw_segment(img, x, 0, x, img.h - 1, Rgb{0.95f * glow, 0.9f * glow, 0.55f * glow}, 2.0);
            clip.frames.push_back(std::move(img));
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace lanedet
