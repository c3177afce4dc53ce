// Usage example: the geometric post-processing toolkit on hand-built points.
//
// Shows RANSAC quadratic fitting under outliers, instance clustering, and
// graph-based smoothing — each callable on plain point lists, independent of
// any network.

#include <cstdio>
#include <vector>

#include <lanedet/common.hpp>
#include <lanedet/postprocess.hpp>

int main() {
    using namespace lanedet;

    // A planted quadratic x = 0.002 y^2 - 0.3 y + 420 with 30% gross outliers.
    Rng rng(7);
    std::vector<Keypoint> pts;
    for (int i = 0; i < 40; ++i) {
        const double y = 200 + 12 * i;
        double x = 0.002 * y * y - 0.3 * y + 420;
        if (i % 3 == 2) x += 150 + 40 * rng.uniform();  // outlier
        pts.push_back({x, y, 1.0f});
    }
    RansacResult fit = ransac_fit(pts, 200, 2.0, 3, /*seed=*/11);
    std::printf("ransac: x = %.6f y^2 + %.4f y + %.2f  (%d inliers, low_confidence=%d)\n", fit.coeffs.a2,
                fit.coeffs.a1, fit.coeffs.a0, fit.inlier_count, fit.low_confidence ? 1 : 0);

    // Two parallel lanes, clustered by spatial proximity alone.
    std::vector<Keypoint> two_lanes;
    for (int r = 0; r < 12; ++r) {
        two_lanes.push_back({100.0 + r, 300.0 + 10 * r, 1.0f});
        two_lanes.push_back({400.0 - r, 300.0 + 10 * r, 1.0f});
    }
    auto instances = cluster_lanes(two_lanes, nullptr, 30.0, 10.0, 3);
    std::printf("clustering: %zu points -> %zu instances\n", two_lanes.size(), instances.size());

    // Smooth a zig-zag lane along its fitted curve.
    LaneInstance wobble;
    for (int r = 0; r < 10; ++r)
        wobble.points.push_back({200.0 + ((r % 2 == 0) ? 6.0 : -6.0), 400.0 + 15 * r, 1.0f});
    RansacResult wf = ransac_fit(wobble.points, 100, 8.0, 3, 5);
    wobble.coeffs = wf.coeffs;
    wobble.fitted = true;
    LaneInstance smooth = graph_smooth(wobble, 3, 2.0);
    double before = 0, worst = 0;
    for (size_t i = 0; i + 2 < wobble.points.size(); ++i) {
        before = std::max(before, std::abs(wobble.points[i].x - 2 * wobble.points[i + 1].x + wobble.points[i + 2].x));
        worst = std::max(worst, std::abs(smooth.points[i].x - 2 * smooth.points[i + 1].x + smooth.points[i + 2].x));
    }
    std::printf("smoothing: max |second difference| %.2f -> %.2f (smoothed=%d)\n", before, worst,
                smooth.smoothed ? 1 : 0);
    return 0;
}
