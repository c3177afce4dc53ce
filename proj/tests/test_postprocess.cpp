#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <lanedet/postprocess.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace lanedet;
using Catch::Approx;

namespace {

DecoderOutputsT<float> blank_outputs(int64_t h, int64_t w, bool with_offsets, bool with_embeddings, int64_t embed_dim = 2) {
    DecoderOutputsT<float> out;
    out.confidence = Tensor(Shape{1, 1, 1, h, w});
    if (with_offsets) out.offsets = Tensor(Shape{1, 2, 1, h, w});
    if (with_embeddings) out.embeddings = Tensor(Shape{1, embed_dim, 1, h, w});
    return out;
}

void set_cell(DecoderOutputsT<float>& o, int64_t i, int64_t j, float conf, float dx = 0.5f, float dy = 0.5f) {
    const int64_t H = o.confidence.shape[3], W = o.confidence.shape[4];
    o.confidence.data[static_cast<size_t>(i * W + j)] = conf;
    if (!o.offsets.empty()) {
        o.offsets.data[static_cast<size_t>(i * W + j)] = dx;
        o.offsets.data[static_cast<size_t>((H + i) * W + j)] = dy;
    }
}

// canonical form of a grouping: each group is its sorted (x, y) pairs, and the
// groups themselves are sorted, so partitions compare independent of order
using Grouping = std::vector<std::vector<std::pair<double, double>>>;

Grouping canon_instances(const std::vector<LaneInstance>& instances) {
    Grouping g;
    for (const auto& inst : instances) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : inst.points) pts.emplace_back(p.x, p.y);
        std::sort(pts.begin(), pts.end());
        g.push_back(std::move(pts));
    }
    std::sort(g.begin(), g.end());
    return g;
}

Grouping canon_index_groups(const std::vector<std::vector<int>>& groups,
                            const std::vector<std::pair<double, double>>& pts) {
    Grouping g;
    for (const auto& members : groups) {
        std::vector<std::pair<double, double>> p;
        for (int i : members) p.push_back(pts[static_cast<size_t>(i)]);
        std::sort(p.begin(), p.end());
        g.push_back(std::move(p));
    }
    std::sort(g.begin(), g.end());
    return g;
}

}  // namespace

TEST_CASE("keypoint extraction finds offset-refined local maxima") {
    SECTION("all-zero confidence yields no points") {
        auto o = blank_outputs(8, 8, true, false);
        CHECK(extract_keypoints(o, 0.5, CoordTransform{}).empty());
    }
    SECTION("single peak lands at (cell + offset) * stride") {
        auto o = blank_outputs(16, 32, true, false);
        set_cell(o, 10, 20, 0.9f, 0.5f, 0.25f);
        auto pts = extract_keypoints(o, 0.5, CoordTransform{}, 4);
        REQUIRE(pts.size() == 1);
        CHECK(pts[0].x == Approx(82.0));
        CHECK(pts[0].y == Approx(41.0));
        CHECK(pts[0].score == Approx(0.9f));
    }
    SECTION("threshold and 3x3 maximum filter both apply") {
        auto o = blank_outputs(16, 16, true, false);
        set_cell(o, 3, 3, 0.8f);
        set_cell(o, 3, 4, 0.7f);   // suppressed: larger neighbor at (3,3)
        set_cell(o, 10, 10, 0.6f);
        set_cell(o, 12, 3, 0.4f);  // below threshold
        auto pts = extract_keypoints(o, 0.5, CoordTransform{}, 4);
        REQUIRE(pts.size() == 2);
        CHECK(pts[0].x == Approx((3 + 0.5) * 4));
        CHECK(pts[0].y == Approx((3 + 0.5) * 4));
        CHECK(pts[1].x == Approx((10 + 0.5) * 4));
        CHECK(pts[1].y == Approx((10 + 0.5) * 4));
    }
    SECTION("without an offset head, cell centers are used and mapped through the transform") {
        auto o = blank_outputs(8, 8, false, false);
        set_cell(o, 2, 5, 0.7f);
        CoordTransform tf{2.0, 10.0, 1.5, -3.0};
        auto pts = extract_keypoints(o, 0.5, tf, 4);
        REQUIRE(pts.size() == 1);
        CHECK(pts[0].x == Approx(2.0 * (5 + 0.5) * 4 + 10.0));
        CHECK(pts[0].y == Approx(1.5 * (2 + 0.5) * 4 - 3.0));
    }
    SECTION("embeddings are gathered per emitted point") {
        auto o = blank_outputs(8, 8, true, true, 3);
        set_cell(o, 2, 2, 0.9f);
        set_cell(o, 6, 6, 0.8f);
        const int64_t H = 8, W = 8;
        for (int64_t d = 0; d < 3; ++d) {
            o.embeddings.data[static_cast<size_t>((d * H + 2) * W + 2)] = 1.0f + static_cast<float>(d);
            o.embeddings.data[static_cast<size_t>((d * H + 6) * W + 6)] = -2.0f * static_cast<float>(d);
        }
        std::vector<std::vector<float>> emb;
        auto pts = extract_keypoints(o, 0.5, CoordTransform{}, 4, &emb);
        REQUIRE(pts.size() == 2);
        REQUIRE(emb.size() == 2);
        CHECK(emb[0] == std::vector<float>{1.0f, 2.0f, 3.0f});
        CHECK(emb[1] == std::vector<float>{0.0f, -2.0f, -4.0f});
    }
    SECTION("threshold must lie strictly inside (0,1)") {
        auto o = blank_outputs(4, 4, false, false);
        CHECK_THROWS_AS(extract_keypoints(o, 0.0, CoordTransform{}), std::invalid_argument);
        CHECK_THROWS_AS(extract_keypoints(o, 1.0, CoordTransform{}), std::invalid_argument);
    }
}

TEST_CASE("clustering matches brute-force single linkage on random point sets") {
    int with_multiple_groups = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(mix_seed(4200, static_cast<uint64_t>(trial)));
        const int n = rng.uniform_int(2, 12);
        const bool use_embeddings = trial % 2 == 1;

        std::vector<Keypoint> points;
        std::vector<std::pair<double, double>> raw;
        std::vector<std::vector<float>> embeds;
        for (int i = 0; i < n; ++i) {
            Keypoint k;
            k.x = rng.uniform(0.0, 100.0);
            k.y = rng.uniform(0.0, 100.0);
            k.score = 1.0f;
            points.push_back(k);
            raw.emplace_back(k.x, k.y);
            if (use_embeddings)
                embeds.push_back({static_cast<float>(rng.uniform(0.0, 1.0)), static_cast<float>(rng.uniform(0.0, 1.0))});
        }
        const double threshold = rng.uniform(5.0, 40.0);
        const double embed_weight = 10.0;

        auto mine = cluster_lanes(points, use_embeddings ? &embeds : nullptr, threshold, embed_weight,
                                  /*min_points=*/1);
        auto ref = oracle::brute_cluster(raw, use_embeddings ? &embeds : nullptr, threshold, embed_weight);

        INFO("trial " << trial << " n=" << n << " threshold=" << threshold
                      << (use_embeddings ? " with embeddings" : ""));
        REQUIRE(canon_instances(mine) == canon_index_groups(ref, raw));
        if (ref.size() > 1) ++with_multiple_groups;

        // partition property: with min_points=1 every input point is retained once
        size_t total = 0;
        for (const auto& inst : mine) total += inst.points.size();
        CHECK(total == points.size());
        for (const auto& inst : mine)
            for (size_t i = 1; i < inst.points.size(); ++i) {
                CHECK(inst.points[i - 1].y <= inst.points[i].y);
            }
    }
    CHECK(with_multiple_groups > 10);  // the suite exercised non-trivial splits
}

TEST_CASE("clustering size filter and separation behave as documented") {
    std::vector<Keypoint> pts;
    for (int i = 0; i < 4; ++i) pts.push_back({static_cast<double>(i), 0.0, 1.0f});       // chain near origin
    for (int i = 0; i < 4; ++i) pts.push_back({static_cast<double>(i) + 500.0, 0.0, 1.0f});  // far away group
    auto two = cluster_lanes(pts, nullptr, 12.0);
    CHECK(two.size() == 2);

    std::vector<Keypoint> isolated{{0, 0, 1.0f}, {100, 100, 1.0f}};
    CHECK(cluster_lanes(isolated, nullptr, 12.0).empty());  // below the 3-point minimum

    CHECK_THROWS_AS(cluster_lanes(pts, nullptr, 0.0), std::invalid_argument);
    std::vector<std::vector<float>> short_embeds(3);
    CHECK_THROWS_AS(cluster_lanes(pts, &short_embeds, 12.0), std::invalid_argument);
}

TEST_CASE("ransac recovers planted quadratics against the inlier least-squares reference") {
    int good = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(mix_seed(9000, static_cast<uint64_t>(trial)));
        const double a2 = rng.uniform(-0.004, 0.004);
        const double a1 = rng.uniform(-0.5, 0.5);
        const double a0 = rng.uniform(150.0, 250.0);
        auto curve = [&](double y) { return (a2 * y + a1) * y + a0; };

        std::vector<Keypoint> points;
        std::vector<std::pair<double, double>> true_inliers;
        for (int i = 0; i < 70; ++i) {
            const double y = rng.uniform(0.0, 100.0);
            const double x = curve(y) + rng.uniform(-0.2, 0.2);
            points.push_back({x, y, 1.0f});
            true_inliers.emplace_back(y, x);
        }
        for (int i = 0; i < 30; ++i) {  // 30% outliers, kept clear of the curve
            double y, x;
            do {
                y = rng.uniform(0.0, 100.0);
                x = rng.uniform(0.0, 400.0);
            } while (std::abs(x - curve(y)) < 6.0);
            points.push_back({x, y, 1.0f});
        }

        RansacResult fit = ransac_fit(points, /*iters=*/100, /*inlier_tol=*/2.0, /*min_inliers=*/3,
                                      /*seed=*/static_cast<uint64_t>(trial));
        oracle::Quad ref = oracle::ls_quadratic(true_inliers);
        const double err = std::max({std::abs(fit.coeffs[0] - ref.a2), std::abs(fit.coeffs[1] - ref.a1),
                                     std::abs(fit.coeffs[2] - ref.a0)});
        if (!fit.low_confidence && err < 1e-3) ++good;
    }
    INFO("recovered " << good << " of 100 planted quadratics");
    CHECK(good >= 95);
}

TEST_CASE("ransac edge behaviors") {
    SECTION("exact quadratic with no outliers is recovered to machine precision") {
        std::vector<Keypoint> pts;
        for (int i = 0; i < 10; ++i) {
            const double y = i;
            pts.push_back({2 * y * y + 3 * y + 1, y, 1.0f});
        }
        auto fit = ransac_fit(pts, 50, 1e-6, 3, 7);
        CHECK(fit.coeffs[0] == Approx(2.0).margin(1e-9));
        CHECK(fit.coeffs[1] == Approx(3.0).margin(1e-8));
        CHECK(fit.coeffs[2] == Approx(1.0).margin(1e-8));
        CHECK(fit.inliers.size() == pts.size());
        CHECK_FALSE(fit.low_confidence);
    }
    SECTION("huge tolerance reduces to plain least squares") {
        Rng rng(4600);
        std::vector<Keypoint> pts;
        std::vector<std::pair<double, double>> yx;
        for (int i = 0; i < 25; ++i) {
            const double y = rng.uniform(0.0, 50.0);
            const double x = 0.01 * y * y - 0.4 * y + 80 + rng.uniform(-1.0, 1.0);
            pts.push_back({x, y, 1.0f});
            yx.emplace_back(y, x);
        }
        auto fit = ransac_fit(pts, 10, 1e9, 3, 3);
        oracle::Quad ref = oracle::ls_quadratic(yx);
        CHECK(fit.coeffs[0] == Approx(ref.a2).margin(1e-6));
        CHECK(fit.coeffs[1] == Approx(ref.a1).margin(1e-6));
        CHECK(fit.coeffs[2] == Approx(ref.a0).margin(1e-6));
        CHECK(fit.inliers.size() == pts.size());
    }
    SECTION("collinear points give an exact line with zero curvature") {
        std::vector<Keypoint> pts{{1, 0, 1.0f}, {3, 1, 1.0f}, {5, 2, 1.0f}, {7, 3, 1.0f}};
        auto fit = ransac_fit(pts, 50, 0.5, 3, 3);
        CHECK(fit.coeffs[0] == Approx(0.0).margin(1e-9));
        CHECK(fit.coeffs[1] == Approx(2.0).margin(1e-9));
        CHECK(fit.coeffs[2] == Approx(1.0).margin(1e-9));
    }
    SECTION("consensus below the floor raises the low-confidence flag") {
        std::vector<Keypoint> pts;
        for (int i = 0; i < 8; ++i) pts.push_back({static_cast<double>(2 * i), static_cast<double>(i), 1.0f});
        auto fit = ransac_fit(pts, 50, 0.5, /*min_inliers=*/50, 3);
        CHECK(fit.low_confidence);
    }
    SECTION("determinism per seed") {
        Rng rng(4700);
        std::vector<Keypoint> pts;
        for (int i = 0; i < 30; ++i)
            pts.push_back({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0), 1.0f});
        auto a = ransac_fit(pts, 40, 5.0, 3, 11);
        auto b = ransac_fit(pts, 40, 5.0, 3, 11);
        CHECK(a.coeffs == b.coeffs);
        CHECK(a.inliers == b.inliers);
    }
    SECTION("fewer than three points is an error") {
        std::vector<Keypoint> pts{{0, 0, 1.0f}, {1, 1, 1.0f}};
        CHECK_THROWS_AS(ransac_fit(pts, 10, 1.0, 3, 0), std::invalid_argument);
    }
}

TEST_CASE("dijkstra equals exhaustive enumeration on random layered graphs") {
    int reachable_count = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(mix_seed(5150, static_cast<uint64_t>(trial)));
        // up to 7 nodes total: source + sink + at most 5 interior nodes in layers
        const int n_layers = rng.uniform_int(1, 3);
        std::vector<int> sizes(static_cast<size_t>(n_layers));
        int budget = 5;
        for (int l = 0; l < n_layers; ++l) {
            const int remaining_layers = n_layers - l - 1;
            const int hi = std::min(3, budget - remaining_layers);
            sizes[static_cast<size_t>(l)] = rng.uniform_int(1, hi);
            budget -= sizes[static_cast<size_t>(l)];
        }

        SmoothingGraph g;
        std::vector<std::array<double, 3>> edge_list;
        const int source = g.add_node();
        const int sink = g.add_node();
        g.source = source;
        g.sink = sink;
        std::vector<std::vector<int>> layer_ids(static_cast<size_t>(n_layers));
        for (int l = 0; l < n_layers; ++l)
            for (int k = 0; k < sizes[static_cast<size_t>(l)]; ++k) layer_ids[static_cast<size_t>(l)].push_back(g.add_node());
        auto maybe_edge = [&](int from, int to, double p) {
            if (rng.uniform(0.0, 1.0) < p) {
                const double w = rng.uniform(0.0, 10.0);
                g.add_edge(from, to, w);
                edge_list.push_back({static_cast<double>(from), static_cast<double>(to), w});
            }
        };
        for (int v : layer_ids[0]) maybe_edge(source, v, 0.8);
        for (int l = 0; l + 1 < n_layers; ++l)
            for (int u : layer_ids[static_cast<size_t>(l)])
                for (int v : layer_ids[static_cast<size_t>(l + 1)]) maybe_edge(u, v, 0.7);
        for (int u : layer_ids[static_cast<size_t>(n_layers - 1)]) maybe_edge(u, sink, 0.8);

        REQUIRE(g.num_nodes <= 7);
        PathResult mine = dijkstra_path(g);
        const double ref = oracle::exhaustive_min_path(g.num_nodes, edge_list, source, sink);

        INFO("trial " << trial << " nodes=" << g.num_nodes << " edges=" << edge_list.size());
        if (!std::isfinite(ref)) {
            CHECK_FALSE(mine.reachable);
            continue;
        }
        ++reachable_count;
        REQUIRE(mine.reachable);
        CHECK(mine.cost == Approx(ref).margin(1e-9));
        // the reported node chain must itself be a valid path of the same cost
        REQUIRE(mine.nodes.front() == source);
        REQUIRE(mine.nodes.back() == sink);
        double walked = 0;
        for (size_t i = 0; i + 1 < mine.nodes.size(); ++i) {
            double best_edge = std::numeric_limits<double>::infinity();
            for (const auto& e : g.adj[static_cast<size_t>(mine.nodes[i])])
                if (e.to == mine.nodes[i + 1]) best_edge = std::min(best_edge, e.w);
            REQUIRE(std::isfinite(best_edge));
            walked += best_edge;
        }
        CHECK(walked <= mine.cost + 1e-9);
    }
    CHECK(reachable_count > 30);
}

TEST_CASE("dijkstra agrees with full enumeration on a dense 4x3 layer stack") {
    // 4 layers x 3 candidates, fully connected: 81 distinct interior routes
    const double w01[3][3] = {{4, 2, 7}, {1, 9, 3}, {6, 5, 8}};
    const double w12[3][3] = {{2, 8, 1}, {7, 3, 9}, {4, 6, 2}};
    const double w23[3][3] = {{5, 1, 6}, {3, 8, 2}, {9, 4, 7}};
    const double into[3] = {1, 2, 3};
    const double out[3] = {2, 1, 3};

    SmoothingGraph g;
    std::vector<std::array<double, 3>> edges;
    g.source = g.add_node();
    g.sink = g.add_node();
    int ids[4][3];
    for (auto& layer : ids)
        for (int& v : layer) v = g.add_node();
    auto connect = [&](int from, int to, double w) {
        g.add_edge(from, to, w);
        edges.push_back({static_cast<double>(from), static_cast<double>(to), w});
    };
    for (int k = 0; k < 3; ++k) connect(g.source, ids[0][k], into[k]);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            connect(ids[0][a], ids[1][b], w01[a][b]);
            connect(ids[1][a], ids[2][b], w12[a][b]);
            connect(ids[2][a], ids[3][b], w23[a][b]);
        }
    for (int k = 0; k < 3; ++k) connect(ids[3][k], g.sink, out[k]);

    PathResult mine = dijkstra_path(g);
    REQUIRE(mine.reachable);
    CHECK(mine.cost == Approx(oracle::exhaustive_min_path(g.num_nodes, edges, g.source, g.sink)).margin(1e-12));
    CHECK(mine.nodes.size() == 6);  // source, one per layer, sink
}

TEST_CASE("smoothing graph rejects malformed input") {
    SmoothingGraph g;
    const int a = g.add_node();
    CHECK_THROWS_AS(g.add_edge(a, a + 5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(g.add_edge(a, a, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(dijkstra_path(g), std::invalid_argument);  // source/sink unset
}

TEST_CASE("graph smoothing straightens noisy chains and never roughens") {
    SECTION("collinear points with a single candidate per row pass through unchanged") {
        LaneInstance inst;
        for (int i = 0; i < 5; ++i) inst.points.push_back({10.0 + 2 * i, 4.0 * i, 0.9f});
        LaneInstance out = graph_smooth(inst, 1);
        REQUIRE(out.smoothed);
        REQUIRE(out.points.size() == inst.points.size());
        for (size_t i = 0; i < out.points.size(); ++i) {
            CHECK(out.points[i].x == Approx(inst.points[i].x));
            CHECK(out.points[i].y == Approx(inst.points[i].y));
        }
    }
    SECTION("two rows, one node each: the single edge is the path") {
        LaneInstance inst;
        inst.points = {{1, 0, 1.0f}, {2, 1, 1.0f}};
        LaneInstance out = graph_smooth(inst, 3);
        CHECK(out.smoothed);
        CHECK(out.points.size() == 2);
    }
    SECTION("a fitted curve pulls zig-zag points toward its projection") {
        LaneInstance inst;
        // raw points alternate +-3 px around the straight line x = 50
        for (int i = 0; i < 7; ++i)
            inst.points.push_back({50.0 + (i % 2 == 0 ? 3.0 : -3.0), 10.0 * i, 0.8f});
        inst.fitted = true;
        inst.coeffs = {0.0, 0.0, 50.0};
        auto second_diff = [](const std::vector<Keypoint>& pts) {
            double m = 0;
            for (size_t i = 1; i + 1 < pts.size(); ++i)
                m = std::max(m, std::abs(pts[i - 1].x - 2 * pts[i].x + pts[i + 1].x));
            return m;
        };
        LaneInstance out = graph_smooth(inst, 3, 2.0);
        REQUIRE(out.smoothed);
        CHECK(second_diff(out.points) < second_diff(inst.points));
        for (const auto& p : out.points) CHECK(std::abs(p.x - 50.0) <= 3.0);
    }
    SECTION("a path that would roughen the chain is rejected and the input kept") {
        // rows at y = 0, 1, 10 with raw x = 0, 1, 2 (zero second difference).
        // The fitted line x = y projects the last row to x = 10; with a heavy
        // direction penalty the straight diagonal 0,1,10 is the cheapest path,
        // but its second difference (8) exceeds the raw chain's (0).
        LaneInstance inst;
        inst.points = {{0, 0, 1.0f}, {1, 1, 1.0f}, {2, 10, 1.0f}};
        inst.fitted = true;
        inst.coeffs = {0.0, 1.0, 0.0};
        LaneInstance out = graph_smooth(inst, 2, /*lambda=*/20.0);
        CHECK_FALSE(out.smoothed);
        REQUIRE(out.points.size() == 3);
        CHECK(out.points[2].x == Approx(2.0));

        // with no direction penalty the short raw chain wins and is kept
        LaneInstance accepted = graph_smooth(inst, 2, /*lambda=*/0.0);
        CHECK(accepted.smoothed);
        CHECK(accepted.points[2].x == Approx(2.0));
    }
    SECTION("input validation") {
        LaneInstance flat;
        flat.points = {{0, 5, 1.0f}, {1, 5, 1.0f}};  // a single row
        CHECK_THROWS_AS(graph_smooth(flat, 3), std::invalid_argument);
        LaneInstance ok;
        ok.points = {{0, 0, 1.0f}, {1, 1, 1.0f}};
        CHECK_THROWS_AS(graph_smooth(ok, 0), std::invalid_argument);
        CHECK_THROWS_AS(graph_smooth(ok, 3, -1.0), std::invalid_argument);
    }
}

TEST_CASE("full postprocess pipeline recovers planted lanes") {
    const int64_t H = 40, W = 64;
    const int stride = 4;

    auto plant_lane = [&](DecoderOutputsT<float>& o, double a2, double a1, double a0, float emb0, float emb1) {
        for (int64_t i = 4; i < 36; ++i) {
            const double y = (static_cast<double>(i) + 0.5) * stride;
            const double x = (a2 * y + a1) * y + a0;
            const int64_t j = static_cast<int64_t>(std::floor(x / stride));
            REQUIRE(j >= 0);
            REQUIRE(j < W);
            const float dx = static_cast<float>(x / stride - static_cast<double>(j));
            set_cell(o, i, j, 0.9f, dx, 0.5f);
            if (!o.embeddings.empty()) {
                o.embeddings.data[static_cast<size_t>((0 * H + i) * W + j)] = emb0;
                o.embeddings.data[static_cast<size_t>((1 * H + i) * W + j)] = emb1;
            }
        }
    };

    SECTION("empty maps give an empty lane list") {
        auto o = blank_outputs(H, W, true, false);
        PostprocessConfig cfg;
        CHECK(postprocess_pipeline(o, cfg).empty());
    }

    SECTION("two separated curved lanes come back fitted and smoothed") {
        auto o = blank_outputs(H, W, true, false);
        const double la2 = 1e-4, la1 = -0.05, la0 = 60.0;
        const double ra2 = -1e-4, ra1 = 0.08, ra0 = 170.0;
        plant_lane(o, la2, la1, la0, 0, 0);
        plant_lane(o, ra2, ra1, ra0, 0, 0);

        PostprocessConfig cfg;
        auto lanes = postprocess_pipeline(o, cfg);
        REQUIRE(lanes.size() == 2);
        std::sort(lanes.begin(), lanes.end(),
                  [](const LaneInstance& a, const LaneInstance& b) { return a.points[0].x < b.points[0].x; });
        const double want[2][3] = {{la2, la1, la0}, {ra2, ra1, ra0}};
        for (int k = 0; k < 2; ++k) {
            const auto& lane = lanes[static_cast<size_t>(k)];
            REQUIRE(lane.fitted);
            CHECK(lane.inlier_count == 32);
            CHECK_FALSE(lane.low_confidence);
            // every planted point sits exactly on the quadratic, so recovery is sharp
            CHECK(lane.coeffs[0] == Approx(want[k][0]).margin(1e-7));
            CHECK(lane.coeffs[1] == Approx(want[k][1]).margin(1e-5));
            CHECK(lane.coeffs[2] == Approx(want[k][2]).margin(1e-3));
            double mean_err = 0;
            for (const auto& p : lane.points) {
                const double truth = (want[k][0] * p.y + want[k][1]) * p.y + want[k][2];
                mean_err += std::abs(p.x - truth);
            }
            mean_err /= static_cast<double>(lane.points.size());
            CHECK(mean_err < 1.0);
        }

        // byte-for-byte determinism across reruns
        auto again = postprocess_pipeline(o, cfg);
        REQUIRE(again.size() == 2);
        std::sort(again.begin(), again.end(),
                  [](const LaneInstance& a, const LaneInstance& b) { return a.points[0].x < b.points[0].x; });
        for (int k = 0; k < 2; ++k) {
            CHECK(again[static_cast<size_t>(k)].coeffs == lanes[static_cast<size_t>(k)].coeffs);
            REQUIRE(again[static_cast<size_t>(k)].points.size() == lanes[static_cast<size_t>(k)].points.size());
            for (size_t i = 0; i < again[static_cast<size_t>(k)].points.size(); ++i) {
                CHECK(again[static_cast<size_t>(k)].points[i].x == lanes[static_cast<size_t>(k)].points[i].x);
                CHECK(again[static_cast<size_t>(k)].points[i].y == lanes[static_cast<size_t>(k)].points[i].y);
            }
        }
    }

    SECTION("embeddings separate lanes that spatial distance alone would merge") {
        // two parallel lanes 8 px apart: closer than the 12 px threshold
        auto with = blank_outputs(H, W, true, true, 2);
        plant_lane(with, 0, 0, 100.0, 0.0f, 0.0f);
        plant_lane(with, 0, 0, 108.0, 4.0f, -4.0f);
        PostprocessConfig cfg;
        CHECK(postprocess_pipeline(with, cfg).size() == 2);

        auto without = blank_outputs(H, W, true, false);
        plant_lane(without, 0, 0, 100.0, 0, 0);
        plant_lane(without, 0, 0, 108.0, 0, 0);
        CHECK(postprocess_pipeline(without, cfg).size() == 1);
    }

    SECTION("instances that fail the consensus floor are dropped") {
        auto o = blank_outputs(H, W, true, false);
        plant_lane(o, 0, 0, 100.0, 0, 0);
        PostprocessConfig cfg;
        cfg.min_inliers = 99;  // unreachable floor
        CHECK(postprocess_pipeline(o, cfg).empty());
    }

    SECTION("the transform maps grid points back to work-frame coordinates") {
        auto o = blank_outputs(8, 8, false, false);
        // equal scores so the 3x3 maximum filter keeps the whole chain
        set_cell(o, 2, 3, 0.9f);
        set_cell(o, 3, 3, 0.9f);
        set_cell(o, 4, 3, 0.9f);
        PostprocessConfig cfg;
        cfg.dist_threshold = 8.0;
        CoordTransform tf{2.0, 0.5, 1.5, 32.25};
        auto lanes = postprocess_pipeline(o, cfg, tf);
        REQUIRE(lanes.size() == 1);
        REQUIRE(lanes[0].points.size() == 3);
        CHECK(lanes[0].points[0].x == Approx(2.0 * (3 + 0.5) * 4 + 0.5));
        CHECK(lanes[0].points[0].y == Approx(1.5 * (2 + 0.5) * 4 + 32.25));
    }
}
