#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lanedet/tensor.hpp"

namespace lanedet {

// Float image, HWC layout, values in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int height, int width, int ch, float fill = 0.0f)
        : h(height), w(width), channels(ch), data(static_cast<size_t>(height) * width * ch, fill) {
        require(height >= 1 && width >= 1 && (ch == 1 || ch == 3), "Image: bad dimensions");
    }

    float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * w + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * w + x) * channels + c]; }
    bool inside(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

struct Rgb {
    float r, g, b;
};

// Fixed lane palette; lane i draws with lane_palette()[i % size].
inline const std::vector<Rgb>& lane_palette() {
    static const std::vector<Rgb> palette = {
        {0.0f, 0.9f, 0.2f},  // green
        {0.9f, 0.1f, 0.1f},  // red
        {0.1f, 0.4f, 1.0f},  // blue
        {1.0f, 0.8f, 0.0f},  // yellow
        {0.9f, 0.2f, 0.9f},  // magenta
        {0.1f, 0.9f, 0.9f},  // cyan
    };
    return palette;
}

inline void set_pixel(Image& img, int y, int x, const Rgb& c) {
    if (!img.inside(y, x)) return;
    if (img.channels == 1) {
        img.at(y, x, 0) = (c.r + c.g + c.b) / 3.0f;
    } else {
        img.at(y, x, 0) = c.r;
        img.at(y, x, 1) = c.g;
        img.at(y, x, 2) = c.b;
    }
}

// Paints every pixel whose center lies within thickness/2 of the segment.
inline void draw_segment(Image& img, double x0, double y0, double x1, double y1, const Rgb& color,
                         double thickness = 3.0) {
    const double r = thickness / 2.0;
    const int ylo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - r)));
    const int yhi = std::min(img.h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + r)));
    const int xlo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - r)));
    const int xhi = std::min(img.w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + r)));
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = ylo; y <= yhi; ++y)
        for (int x = xlo; x <= xhi; ++x) {
            double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = x0 + t * dx, py = y0 + t * dy;
            if (std::hypot(x - px, y - py) <= r) set_pixel(img, y, x, color);
        }
}

struct PointXY {
    double x, y;
};

inline void draw_polyline(Image& img, const std::vector<PointXY>& pts, const Rgb& color, double thickness = 3.0) {
    if (pts.size() == 1) {
        draw_segment(img, pts[0].x, pts[0].y, pts[0].x, pts[0].y, color, thickness);
        return;
    }
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        draw_segment(img, pts[i].x, pts[i].y, pts[i + 1].x, pts[i + 1].y, color, thickness);
}

// Lanes as row-sampled x lists (-2 = absent), drawn in palette order.
inline void draw_lanes(Image& img, const std::vector<std::vector<double>>& lanes, const std::vector<int>& h_samples,
                       double thickness = 3.0) {
    const auto& palette = lane_palette();
    for (size_t i = 0; i < lanes.size(); ++i) {
        std::vector<PointXY> pts;
        for (size_t r = 0; r < h_samples.size() && r < lanes[i].size(); ++r)
            if (lanes[i][r] >= -1) pts.push_back({lanes[i][r], static_cast<double>(h_samples[r])});
        if (!pts.empty()) draw_polyline(img, pts, palette[i % palette.size()], thickness);
    }
}

inline Image hconcat(const Image& a, const Image& b) {
    require(a.h == b.h && a.channels == b.channels, "hconcat: incompatible images");
    Image out(a.h, a.w + b.w, a.channels);
    for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x)
            for (int c = 0; c < a.channels; ++c) out.at(y, x, c) = a.at(y, x, c);
        for (int x = 0; x < b.w; ++x)
            for (int c = 0; c < a.channels; ++c) out.at(y, a.w + x, c) = b.at(y, x, c);
    }
    return out;
}

// Bilinear resize, pixel-center convention (matches the volume resize used
// on clips).
inline Image resize_image(const Image& src, int oh, int ow) {
    require(oh >= 1 && ow >= 1, "resize_image: bad output size");
    if (oh == src.h && ow == src.w) return src;
    Image out(oh, ow, src.channels);
    const double fy = static_cast<double>(src.h) / oh;
    const double fx = static_cast<double>(src.w) / ow;
    for (int y = 0; y < oh; ++y) {
        const double sy = (y + 0.5) * fy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = std::clamp(sy - y0, 0.0, 1.0);
        for (int x = 0; x < ow; ++x) {
            const double sx = (x + 0.5) * fx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = std::clamp(sx - x0, 0.0, 1.0);
            for (int c = 0; c < src.channels; ++c) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                                 wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
                out.at(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

// Simple line plot for training curves: white background, gray frame, one
// polyline per series in palette order.
inline Image plot_curves(const std::vector<std::vector<double>>& series, int h = 360, int w = 640) {
    Image img(h, w, 3, 1.0f);
    const Rgb frame{0.6f, 0.6f, 0.6f};
    const int margin = 24;
    draw_segment(img, margin, margin, margin, h - margin, frame, 1.0);
    draw_segment(img, margin, h - margin, w - margin, h - margin, frame, 1.0);
    double lo = 0, hi = 1e-12;
    size_t longest = 2;
    for (const auto& s : series)
        for (double v : s) hi = std::max(hi, v);
    for (const auto& s : series) longest = std::max(longest, s.size());
    const auto& palette = lane_palette();
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.empty()) continue;
        std::vector<PointXY> pts;
        for (size_t i = 0; i < s.size(); ++i) {
            const double tx = s.size() > 1 ? static_cast<double>(i) / (s.size() - 1) : 0.0;
            const double ty = (s[i] - lo) / (hi - lo);
            pts.push_back({margin + tx * (w - 2 * margin), (h - margin) - ty * (h - 2 * margin)});
        }
        draw_polyline(img, pts, palette[si % palette.size()], 1.5);
    }
    return img;
}

// Clip tensor [1,3,T,H,W] <-> per-frame images.
inline Image frame_from_clip(const Tensor& clip, int64_t t) {
    require(clip.shape.rank == 5 && clip.shape[0] == 1 && clip.shape[1] == 3, "frame_from_clip: clip must be [1,3,T,H,W]");
    require(t >= 0 && t < clip.shape[2], "frame_from_clip: frame index out of range");
    const int64_t H = clip.shape[3], W = clip.shape[4];
    Image img(static_cast<int>(H), static_cast<int>(W), 3);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) = clip.at5(0, c, t, y, x);
    return img;
}

}  // namespace lanedet
