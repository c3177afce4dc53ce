#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "lanedet/network.hpp"
#include "lanedet/targets.hpp"

namespace lanedet {

// A refined lane point in full-frame pixel coordinates.
struct Keypoint {
    double x = 0;
    double y = 0;
    float score = 0;
};

// One detected lane: its points ordered by increasing y and, once fitted,
// the coefficients of x = a2*y^2 + a1*y + a0.
struct LaneInstance {
    std::vector<Keypoint> points;
    std::array<double, 3> coeffs{{0, 0, 0}};  // a2, a1, a0
    bool fitted = false;
    int inlier_count = 0;
    bool low_confidence = false;     // RANSAC consensus below the floor
    bool smoothed = false;           // graph smoothing applied and accepted
    bool smooth_disconnected = false;

    double curve_x(double y) const { return (coeffs[0] * y + coeffs[1]) * y + coeffs[2]; }
};

// ---------------------------------------------------------------------------
// Keypoint extraction: 3x3 local maxima of the confidence map at or above
// the threshold become points at (cell + offset) * stride, mapped through
// the ROI transform. Without an offset head, cell centers are used.
template <class Real>
std::vector<Keypoint> extract_keypoints(const DecoderOutputsT<Real>& outputs, double threshold,
                                        const CoordTransform& transform, int stride = 4,
                                        std::vector<std::vector<float>>* embeddings_out = nullptr) {
    require(threshold > 0 && threshold < 1, "extract_keypoints: threshold must be in (0,1)");
    const TensorT<Real>& conf = outputs.confidence;
    require(conf.shape.rank == 5 && conf.shape[0] == 1 && conf.shape[1] == 1,
            "extract_keypoints: confidence must be [1,1,1,H,W]");
    const int64_t H = conf.shape[3], W = conf.shape[4];
    const bool has_off = !outputs.offsets.empty();
    const bool has_emb = !outputs.embeddings.empty() && embeddings_out != nullptr;
    const int64_t D = has_emb ? outputs.embeddings.shape[1] : 0;
    if (embeddings_out) embeddings_out->clear();
    std::vector<Keypoint> out;
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            const Real v = conf.data[static_cast<size_t>(i * W + j)];
            if (static_cast<double>(v) < threshold) continue;
            bool is_max = true;
            for (int64_t di = -1; di <= 1 && is_max; ++di)
                for (int64_t dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int64_t ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
                    if (conf.data[static_cast<size_t>(ni * W + nj)] > v) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max) continue;
            const double dx = has_off ? static_cast<double>(outputs.offsets.data[static_cast<size_t>(i * W + j)]) : 0.5;
            const double dy =
                has_off ? static_cast<double>(outputs.offsets.data[static_cast<size_t>((H + i) * W + j)]) : 0.5;
            double px = (static_cast<double>(j) + dx) * stride;
            double py = (static_cast<double>(i) + dy) * stride;
            double fx, fy;
            transform.apply(px, py, fx, fy);
            Keypoint k;
            k.x = fx;
            k.y = fy;
            k.score = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
            out.push_back(k);
            if (has_emb) {
                std::vector<float> e(static_cast<size_t>(D));
                for (int64_t d = 0; d < D; ++d)
                    e[static_cast<size_t>(d)] =
                        static_cast<float>(outputs.embeddings.data[static_cast<size_t>((d * H + i) * W + j)]);
                embeddings_out->push_back(std::move(e));
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Single-linkage clustering. Points join one instance when their distance
// D = ||p1 - p2|| (+ embed_weight * ||e1 - e2|| when embeddings exist) stays
// within the threshold; transitive closure defines the instance. Instances
// below min_points are discarded.

namespace detail {

class UnionFind {
public:
    explicit UnionFind(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), size_t{0}); }
    size_t find(size_t a) {
        while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
        return a;
    }
    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<size_t> parent_;
};

}  // namespace detail

inline double pair_distance(const Keypoint& a, const Keypoint& b, const std::vector<float>* ea,
                            const std::vector<float>* eb, double embed_weight) {
    double d = std::hypot(a.x - b.x, a.y - b.y);
    if (ea && eb) {
        double e2 = 0;
        for (size_t i = 0; i < ea->size(); ++i) {
            const double de = static_cast<double>((*ea)[i]) - (*eb)[i];
            e2 += de * de;
        }
        d += embed_weight * std::sqrt(e2);
    }
    return d;
}

inline std::vector<LaneInstance> cluster_lanes(const std::vector<Keypoint>& points,
                                               const std::vector<std::vector<float>>* embeddings,
                                               double dist_threshold, double embed_weight = 10.0,
                                               int min_points = 3) {
    require(dist_threshold > 0, "cluster_lanes: distance threshold must be positive");
    if (embeddings)
        require(embeddings->size() == points.size(), "cluster_lanes: one embedding per point required");
    detail::UnionFind uf(points.size());
    for (size_t a = 0; a < points.size(); ++a)
        for (size_t b = a + 1; b < points.size(); ++b) {
            const double d = pair_distance(points[a], points[b], embeddings ? &(*embeddings)[a] : nullptr,
                                           embeddings ? &(*embeddings)[b] : nullptr, embed_weight);
            if (d <= dist_threshold) uf.unite(a, b);
        }
    std::vector<std::vector<size_t>> groups(points.size());
    for (size_t i = 0; i < points.size(); ++i) groups[uf.find(i)].push_back(i);
    std::vector<LaneInstance> out;
    for (auto& g : groups) {
        if (static_cast<int>(g.size()) < min_points) continue;
        LaneInstance inst;
        inst.points.reserve(g.size());
        for (size_t i : g) inst.points.push_back(points[i]);
        std::sort(inst.points.begin(), inst.points.end(), [](const Keypoint& a, const Keypoint& b) {
            if (a.y != b.y) return a.y < b.y;
            if (a.x != b.x) return a.x < b.x;
            return a.score > b.score;
        });
        out.push_back(std::move(inst));
    }
    return out;
}

// ---------------------------------------------------------------------------
// RANSAC quadratic fit x = a2*y^2 + a1*y + a0.

struct RansacResult {
    std::array<double, 3> coeffs{{0, 0, 0}};
    std::vector<int> inliers;  // indices into the input points
    bool low_confidence = false;
};

namespace detail {

// Gaussian elimination with partial pivoting on an n x (n+1) augmented system.
inline bool solve_linear(std::vector<double>& a, int n, double* x) {
    const int m = n + 1;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<size_t>(r * m + col)]) > std::abs(a[static_cast<size_t>(piv * m + col)])) piv = r;
        if (std::abs(a[static_cast<size_t>(piv * m + col)]) < 1e-12) return false;
        if (piv != col)
            for (int c = 0; c < m; ++c) std::swap(a[static_cast<size_t>(col * m + c)], a[static_cast<size_t>(piv * m + c)]);
        for (int r = col + 1; r < n; ++r) {
            const double f = a[static_cast<size_t>(r * m + col)] / a[static_cast<size_t>(col * m + col)];
            for (int c = col; c < m; ++c) a[static_cast<size_t>(r * m + c)] -= f * a[static_cast<size_t>(col * m + c)];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = a[static_cast<size_t>(r * m + n)];
        for (int c = r + 1; c < n; ++c) s -= a[static_cast<size_t>(r * m + c)] * x[c];
        x[r] = s / a[static_cast<size_t>(r * m + r)];
    }
    return true;
}

// Exact quadratic through three points with distinct y.
inline bool quad_through(const Keypoint& p0, const Keypoint& p1, const Keypoint& p2, std::array<double, 3>& coeffs) {
    std::vector<double> a = {p0.y * p0.y, p0.y, 1, p0.x,  //
                             p1.y * p1.y, p1.y, 1, p1.x,  //
                             p2.y * p2.y, p2.y, 1, p2.x};
    double x[3];
    if (!solve_linear(a, 3, x)) return false;
    coeffs = {x[0], x[1], x[2]};
    return true;
}

}  // namespace detail

// Least squares for x = a2*y^2 + a1*y + a0, solved around the mean of y for
// conditioning. Needs >= 3 points (or >= 1 with degenerate spread handled by
// the pivot test upstream).
inline std::array<double, 3> least_squares_quadratic(const std::vector<Keypoint>& pts) {
    require(pts.size() >= 3, "least_squares_quadratic: need at least 3 points");
    double ym = 0;
    for (const auto& p : pts) ym += p.y;
    ym /= static_cast<double>(pts.size());
    double s0 = static_cast<double>(pts.size()), s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    double t0 = 0, t1 = 0, t2 = 0;
    for (const auto& p : pts) {
        const double u = p.y - ym, u2 = u * u;
        s1 += u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        t0 += p.x;
        t1 += p.x * u;
        t2 += p.x * u2;
    }
    std::vector<double> a = {s4, s3, s2, t2,  //
                             s3, s2, s1, t1,  //
                             s2, s1, s0, t0};
    double b[3];
    require(detail::solve_linear(a, 3, b), "least_squares_quadratic: degenerate point configuration");
    // expand b2*(y-ym)^2 + b1*(y-ym) + b0 back to powers of y
    return {b[0], b[1] - 2 * b[0] * ym, b[2] - b[1] * ym + b[0] * ym * ym};
}

// Repeatedly samples 3 points, keeps the consensus-maximal quadratic, and
// refits by least squares on its inliers. Deterministic given the seed.
inline RansacResult ransac_fit(const std::vector<Keypoint>& points, int iters, double inlier_tol, int min_inliers,
                               uint64_t seed) {
    require(points.size() >= 3, "ransac_fit: need at least 3 points");
    require(iters >= 1 && inlier_tol > 0, "ransac_fit: bad iteration count or tolerance");
    const int n = static_cast<int>(points.size());
    Rng rng(mix_seed(seed, 0x72616e73));
    std::array<double, 3> best{{0, 0, 0}};
    std::vector<int> best_inliers;
    for (int it = 0; it < iters; ++it) {
        int i0 = rng.uniform_int(0, n - 1);
        int i1 = rng.uniform_int(0, n - 1);
        int i2 = rng.uniform_int(0, n - 1);
        if (i0 == i1 || i0 == i2 || i1 == i2) continue;
        std::array<double, 3> c;
        if (!detail::quad_through(points[static_cast<size_t>(i0)], points[static_cast<size_t>(i1)],
                                  points[static_cast<size_t>(i2)], c))
            continue;
        std::vector<int> inliers;
        for (int i = 0; i < n; ++i) {
            const auto& p = points[static_cast<size_t>(i)];
            if (std::abs((c[0] * p.y + c[1]) * p.y + c[2] - p.x) <= inlier_tol) inliers.push_back(i);
        }
        if (inliers.size() > best_inliers.size()) {
            best = c;
            best_inliers = std::move(inliers);
        }
    }
    RansacResult r;
    if (best_inliers.size() < 3) {
        // no usable consensus; fall back to a plain fit over everything
        r.coeffs = least_squares_quadratic(points);
        r.inliers.resize(points.size());
        std::iota(r.inliers.begin(), r.inliers.end(), 0);
        r.low_confidence = true;
        return r;
    }
    std::vector<Keypoint> sel;
    sel.reserve(best_inliers.size());
    for (int i : best_inliers) sel.push_back(points[static_cast<size_t>(i)]);
    r.coeffs = least_squares_quadratic(sel);
    r.inliers = std::move(best_inliers);
    r.low_confidence = static_cast<int>(r.inliers.size()) < min_inliers;
    return r;
}

// ---------------------------------------------------------------------------
// Layered-graph smoothing. The minimal-total-weight chain through per-row
// candidates is found with Dijkstra's algorithm; edge weight is the node
// distance plus lambda times the direction change across consecutive edges
// (encoded by expanding nodes into (previous, current) candidate pairs).

struct SmoothingGraph {
    struct Edge {
        int to;
        double w;
    };
    int num_nodes = 0;
    int source = -1;
    int sink = -1;
    std::vector<std::vector<Edge>> adj;

    int add_node() {
        adj.emplace_back();
        return num_nodes++;
    }
    void add_edge(int from, int to, double w) {
        require(from >= 0 && from < num_nodes && to >= 0 && to < num_nodes, "SmoothingGraph: edge endpoint out of range");
        require(w >= 0, "SmoothingGraph: negative edge weight");
        adj[static_cast<size_t>(from)].push_back({to, w});
    }
};

struct PathResult {
    std::vector<int> nodes;  // source..sink inclusive
    double cost = 0;
    bool reachable = false;
};

inline PathResult dijkstra_path(const SmoothingGraph& g) {
    require(g.source >= 0 && g.source < g.num_nodes && g.sink >= 0 && g.sink < g.num_nodes,
            "dijkstra_path: source/sink not set");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<size_t>(g.num_nodes), inf);
    std::vector<int> parent(static_cast<size_t>(g.num_nodes), -1);
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
    dist[static_cast<size_t>(g.source)] = 0;
    pq.push({0.0, g.source});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<size_t>(u)]) continue;
        if (u == g.sink) break;
        for (const auto& e : g.adj[static_cast<size_t>(u)]) {
            const double nd = d + e.w;
            if (nd < dist[static_cast<size_t>(e.to)]) {
                dist[static_cast<size_t>(e.to)] = nd;
                parent[static_cast<size_t>(e.to)] = u;
                pq.push({nd, e.to});
            }
        }
    }
    PathResult r;
    if (dist[static_cast<size_t>(g.sink)] == inf) return r;
    r.reachable = true;
    r.cost = dist[static_cast<size_t>(g.sink)];
    for (int v = g.sink; v != -1; v = parent[static_cast<size_t>(v)]) r.nodes.push_back(v);
    std::reverse(r.nodes.begin(), r.nodes.end());
    return r;
}

namespace detail {

inline double direction_penalty(double ax, double ay, double bx, double by, double cx, double cy) {
    constexpr double pi = 3.14159265358979323846;
    const double t1 = std::atan2(by - ay, bx - ax);
    const double t2 = std::atan2(cy - by, cx - bx);
    double d = t2 - t1;
    while (d > pi) d -= 2 * pi;
    while (d < -pi) d += 2 * pi;
    return std::abs(d);
}

// max |x[i-1] - 2 x[i] + x[i+1]| over interior rows; 0 when fewer than 3.
inline double max_second_difference(const std::vector<Keypoint>& pts) {
    double m = 0;
    for (size_t i = 1; i + 1 < pts.size(); ++i)
        m = std::max(m, std::abs(pts[i - 1].x - 2 * pts[i].x + pts[i + 1].x));
    return m;
}

}  // namespace detail

inline LaneInstance graph_smooth(const LaneInstance& instance, int candidates_per_row, double lambda = 2.0) {
    require(candidates_per_row >= 1, "graph_smooth: need at least one candidate per row");
    require(lambda >= 0, "graph_smooth: direction penalty must be non-negative");
    // group points into rows of distinct y (points are y-sorted)
    struct Row {
        double y;
        float score;
        std::vector<double> xs;  // candidate x positions; [0] is the raw point
    };
    std::vector<Row> rows;
    for (const auto& p : instance.points) {
        if (rows.empty() || p.y != rows.back().y) {
            rows.push_back({p.y, p.score, {p.x}});
        } else {
            rows.back().xs.push_back(p.x);
            rows.back().score = std::max(rows.back().score, p.score);
        }
    }
    require(rows.size() >= 2, "graph_smooth: points must span at least 2 distinct rows");
    for (auto& r : rows) {
        if (instance.fitted && candidates_per_row >= 2) {
            const double proj = instance.curve_x(r.y);
            const size_t raw_n = r.xs.size();
            if (candidates_per_row >= 3)
                for (size_t i = 0; i < raw_n; ++i) r.xs.push_back(0.5 * (r.xs[i] + proj));
            r.xs.push_back(proj);
        }
        std::sort(r.xs.begin() + 1, r.xs.end());
        r.xs.erase(std::unique(r.xs.begin(), r.xs.end()), r.xs.end());
    }

    // pair-expanded graph: a node is "at row i, came to candidate b from
    // candidate a of row i-1"; the direction penalty then lives on edges.
    SmoothingGraph g;
    g.source = g.add_node();
    g.sink = g.add_node();
    const size_t m = rows.size();
    std::vector<std::vector<std::vector<int>>> id(m);  // id[i][a][b], a = prev candidate
    for (size_t i = 1; i < m; ++i) {
        id[i].assign(rows[i - 1].xs.size(), std::vector<int>(rows[i].xs.size(), -1));
        for (size_t a = 0; a < rows[i - 1].xs.size(); ++a)
            for (size_t b = 0; b < rows[i].xs.size(); ++b) id[i][a][b] = g.add_node();
    }
    auto edge_len = [&](size_t i, size_t a, size_t b) {
        return std::hypot(rows[i].xs[b] - rows[i - 1].xs[a], rows[i].y - rows[i - 1].y);
    };
    for (size_t a = 0; a < rows[0].xs.size(); ++a)
        for (size_t b = 0; b < rows[1].xs.size(); ++b) g.add_edge(g.source, id[1][a][b], edge_len(1, a, b));
    for (size_t i = 1; i + 1 < m; ++i)
        for (size_t a = 0; a < rows[i - 1].xs.size(); ++a)
            for (size_t b = 0; b < rows[i].xs.size(); ++b)
                for (size_t c = 0; c < rows[i + 1].xs.size(); ++c) {
                    const double w = edge_len(i + 1, b, c) +
                                     lambda * detail::direction_penalty(rows[i - 1].xs[a], rows[i - 1].y, rows[i].xs[b],
                                                                        rows[i].y, rows[i + 1].xs[c], rows[i + 1].y);
                    g.add_edge(id[i][a][b], id[i + 1][b][c], w);
                }
    for (size_t a = 0; a < rows[m - 2].xs.size(); ++a)
        for (size_t b = 0; b < rows[m - 1].xs.size(); ++b) g.add_edge(id[m - 1][a][b], g.sink, 0.0);

    PathResult path = dijkstra_path(g);
    LaneInstance out = instance;
    if (!path.reachable) {
        out.smooth_disconnected = true;
        return out;
    }
    // decode the candidate picked at each row from the pair states
    std::vector<size_t> pick(m, 0);
    for (int node : path.nodes) {
        if (node == g.source || node == g.sink) continue;
        for (size_t i = 1; i < m; ++i)
            for (size_t a = 0; a < id[i].size(); ++a)
                for (size_t b = 0; b < id[i][a].size(); ++b)
                    if (id[i][a][b] == node) {
                        pick[i - 1] = a;
                        pick[i] = b;
                    }
    }
    std::vector<Keypoint> smoothed(m);
    for (size_t i = 0; i < m; ++i) smoothed[i] = Keypoint{rows[i].xs[pick[i]], rows[i].y, rows[i].score};
    // collapse multi-point rows for the reference chain before comparing
    std::vector<Keypoint> raw_chain(m);
    for (size_t i = 0; i < m; ++i) raw_chain[i] = Keypoint{rows[i].xs[0], rows[i].y, rows[i].score};
    if (detail::max_second_difference(smoothed) > detail::max_second_difference(raw_chain) + 1e-9) {
        return out;  // smoothing would have roughened the chain; keep the input
    }
    out.points = std::move(smoothed);
    out.smoothed = true;
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline: extract -> cluster -> RANSAC per instance -> smooth.

struct PostprocessConfig {
    double threshold = 0.5;       // confidence floor for keypoints
    int stride = 4;               // decoder stride in pixels
    double dist_threshold = 12.0; // clustering threshold, full-frame px
    double embed_weight = 10.0;
    int min_points = 3;
    int ransac_iters = 100;
    double inlier_tol = 2.0;      // horizontal px
    int min_inliers = 3;
    int candidates_per_row = 3;
    double lambda = 2.0;
    uint64_t seed = 0;
};

template <class Real>
std::vector<LaneInstance> postprocess_pipeline(const DecoderOutputsT<Real>& outputs, const PostprocessConfig& cfg,
                                               const CoordTransform& transform = CoordTransform{}) {
    std::vector<std::vector<float>> embeddings;
    std::vector<Keypoint> points =
        extract_keypoints(outputs, cfg.threshold, transform, cfg.stride,
                          outputs.embeddings.empty() ? nullptr : &embeddings);
    std::vector<LaneInstance> instances =
        cluster_lanes(points, outputs.embeddings.empty() ? nullptr : &embeddings, cfg.dist_threshold, cfg.embed_weight,
                      cfg.min_points);
    std::vector<LaneInstance> out;
    for (size_t k = 0; k < instances.size(); ++k) {
        LaneInstance& inst = instances[k];
        RansacResult fit = ransac_fit(inst.points, cfg.ransac_iters, cfg.inlier_tol, cfg.min_inliers,
                                      mix_seed(cfg.seed, 0x706f7374 + k));
        if (fit.low_confidence) continue;  // consensus failed; drop the instance
        inst.coeffs = fit.coeffs;
        inst.fitted = true;
        inst.inlier_count = static_cast<int>(fit.inliers.size());
        bool two_rows = false;
        for (size_t i = 1; i < inst.points.size(); ++i)
            if (inst.points[i].y != inst.points[0].y) two_rows = true;
        out.push_back(two_rows ? graph_smooth(inst, cfg.candidates_per_row, cfg.lambda) : inst);
    }
    return out;
}

}  // namespace lanedet
