#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lanedet/common.hpp"

namespace lanedet {

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    int64_t tn = 0;

    int64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

struct MetricReport {
    std::string label;
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    // lane-level benchmark numbers; negative when not evaluated
    double lane_accuracy = -1;
    double fp_rate = -1;
    double fn_rate = -1;
    ConfusionCounts counts;
    bool is_reference = false;  // published result kept for comparison
};

// Accuracy, precision, recall, F1 from raw counts. Precision and recall are
// 0 by convention when their denominator is 0, and F1 is 0 when
// precision + recall is 0.
inline MetricReport metrics_from_counts(const ConfusionCounts& c) {
    require(c.tp >= 0 && c.fp >= 0 && c.fn >= 0 && c.tn >= 0, "metrics_from_counts: negative count");
    const int64_t total = c.total();
    if (total == 0) throw std::invalid_argument("metrics_from_counts: no evaluated units (total is 0)");
    MetricReport r;
    r.counts = c;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    r.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    r.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Point-level confusion between predicted lanes and a ground-truth record,
// both sampled on the same row grid (x = -2 marks an absent point). Matching
// is greedy nearest-first per row; each point is used at most once. Rows
// where neither side has any point count as true negatives.
inline ConfusionCounts point_confusion(const std::vector<std::vector<double>>& pred_lanes,
                                       const std::vector<std::vector<double>>& gt_lanes,
                                       const std::vector<int>& h_samples, double x_tol) {
    require(x_tol > 0, "point_confusion: tolerance must be positive");
    for (const auto& l : pred_lanes)
        require(l.size() == h_samples.size(), "point_confusion: prediction rows must match h_samples");
    for (const auto& l : gt_lanes)
        require(l.size() == h_samples.size(), "point_confusion: ground-truth rows must match h_samples");
    ConfusionCounts c;
    for (size_t r = 0; r < h_samples.size(); ++r) {
        std::vector<double> pred, gt;
        for (const auto& l : pred_lanes)
            if (l[r] >= -1) pred.push_back(l[r]);
        for (const auto& l : gt_lanes)
            if (l[r] >= -1) gt.push_back(l[r]);
        if (pred.empty() && gt.empty()) {
            ++c.tn;
            continue;
        }
        // greedy nearest matching: repeatedly take the closest unmatched pair
        std::vector<bool> pu(pred.size(), false), gu(gt.size(), false);
        while (true) {
            double best = x_tol;
            int bp = -1, bg = -1;
            for (size_t p = 0; p < pred.size(); ++p) {
                if (pu[p]) continue;
                for (size_t g = 0; g < gt.size(); ++g) {
                    if (gu[g]) continue;
                    const double d = std::abs(pred[p] - gt[g]);
                    if (d <= best) {
                        best = d;
                        bp = static_cast<int>(p);
                        bg = static_cast<int>(g);
                    }
                }
            }
            if (bp < 0) break;
            pu[static_cast<size_t>(bp)] = true;
            gu[static_cast<size_t>(bg)] = true;
            ++c.tp;
        }
        for (bool u : gu)
            if (!u) ++c.fn;
        for (bool u : pu)
            if (!u) ++c.fp;
    }
    return c;
}

// ---------------------------------------------------------------------------
// TuSimple-style lane metrics: accuracy = matched gt points / total gt
// points; a predicted lane matching < 85% of some gt lane's points counts as
// a false positive; each unmatched gt lane counts as a false negative.
struct LaneBenchmark {
    double accuracy = 0;
    double fp_rate = 0;
    double fn_rate = 0;
    // raw counts, so multi-clip runs can aggregate before normalizing
    int64_t matched_points = 0;
    int64_t gt_points = 0;
    int64_t fp_lanes = 0;
    int64_t pred_lane_count = 0;
    int64_t fn_lanes = 0;
    int64_t gt_lane_count = 0;
};

inline LaneBenchmark tusimple_accuracy(const std::vector<std::vector<double>>& pred_lanes,
                                       const std::vector<std::vector<double>>& gt_lanes,
                                       const std::vector<int>& h_samples, double x_tol) {
    require(x_tol > 0, "tusimple_accuracy: tolerance must be positive");
    for (const auto& l : pred_lanes)
        require(l.size() == h_samples.size(), "tusimple_accuracy: prediction rows must match h_samples");
    for (const auto& l : gt_lanes)
        require(l.size() == h_samples.size(), "tusimple_accuracy: ground-truth rows must match h_samples");
    const size_t R = h_samples.size();
    int64_t gt_points = 0;
    for (const auto& g : gt_lanes)
        for (double x : g)
            if (x >= -1) ++gt_points;

    // count per-(pred, gt) matched points
    std::vector<std::vector<int64_t>> match(pred_lanes.size(), std::vector<int64_t>(gt_lanes.size(), 0));
    for (size_t p = 0; p < pred_lanes.size(); ++p)
        for (size_t g = 0; g < gt_lanes.size(); ++g)
            for (size_t r = 0; r < R; ++r) {
                const double px = pred_lanes[p][r], gx = gt_lanes[g][r];
                if (px >= -1 && gx >= -1 && std::abs(px - gx) <= x_tol) ++match[p][g];
            }

    // assign each gt lane its best prediction greedily (highest match first)
    std::vector<int> gt_of_pred(pred_lanes.size(), -1);
    std::vector<int> pred_of_gt(gt_lanes.size(), -1);
    while (true) {
        int64_t best = 0;
        int bp = -1, bg = -1;
        for (size_t p = 0; p < pred_lanes.size(); ++p) {
            if (gt_of_pred[p] >= 0) continue;
            for (size_t g = 0; g < gt_lanes.size(); ++g) {
                if (pred_of_gt[g] >= 0) continue;
                if (match[p][g] > best) {
                    best = match[p][g];
                    bp = static_cast<int>(p);
                    bg = static_cast<int>(g);
                }
            }
        }
        if (bp < 0) break;
        gt_of_pred[static_cast<size_t>(bp)] = bg;
        pred_of_gt[static_cast<size_t>(bg)] = bp;
    }

    auto present_points = [](const std::vector<double>& lane) {
        int64_t n = 0;
        for (double x : lane)
            if (x >= -1) ++n;
        return n;
    };
    int64_t matched_points = 0;
    int64_t fp_lanes = 0;
    for (size_t p = 0; p < pred_lanes.size(); ++p) {
        const int g = gt_of_pred[p];
        const int64_t lane_pts = g < 0 ? 0 : present_points(gt_lanes[static_cast<size_t>(g)]);
        if (lane_pts == 0 ||
            static_cast<double>(match[p][static_cast<size_t>(g)]) < 0.85 * static_cast<double>(lane_pts)) {
            ++fp_lanes;
        } else {
            matched_points += match[p][static_cast<size_t>(g)];
        }
    }
    int64_t fn_lanes = 0;
    for (size_t g = 0; g < gt_lanes.size(); ++g) {
        const int p = pred_of_gt[g];
        const int64_t lane_pts = present_points(gt_lanes[g]);
        if (lane_pts == 0) continue;
        if (p < 0 || static_cast<double>(match[static_cast<size_t>(p)][g]) < 0.85 * static_cast<double>(lane_pts))
            ++fn_lanes;
    }
    int64_t gt_lane_count = 0;
    for (const auto& g : gt_lanes) {
        for (double x : g)
            if (x >= -1) {
                ++gt_lane_count;
                break;
            }
    }
    LaneBenchmark b;
    b.matched_points = matched_points;
    b.gt_points = gt_points;
    b.fp_lanes = fp_lanes;
    b.pred_lane_count = static_cast<int64_t>(pred_lanes.size());
    b.fn_lanes = fn_lanes;
    b.gt_lane_count = gt_lane_count;
    b.accuracy = gt_points > 0 ? static_cast<double>(matched_points) / static_cast<double>(gt_points) : 0.0;
    b.fp_rate = pred_lanes.empty() ? 0.0 : static_cast<double>(fp_lanes) / static_cast<double>(pred_lanes.size());
    b.fn_rate = gt_lane_count == 0 ? 0.0 : static_cast<double>(fn_lanes) / static_cast<double>(gt_lane_count);
    return b;
}

// Sum of per-clip benchmarks, re-normalized from the aggregated counts.
inline LaneBenchmark combine_benchmarks(const std::vector<LaneBenchmark>& parts) {
    LaneBenchmark b;
    for (const auto& p : parts) {
        b.matched_points += p.matched_points;
        b.gt_points += p.gt_points;
        b.fp_lanes += p.fp_lanes;
        b.pred_lane_count += p.pred_lane_count;
        b.fn_lanes += p.fn_lanes;
        b.gt_lane_count += p.gt_lane_count;
    }
    b.accuracy = b.gt_points > 0 ? static_cast<double>(b.matched_points) / static_cast<double>(b.gt_points) : 0.0;
    b.fp_rate =
        b.pred_lane_count > 0 ? static_cast<double>(b.fp_lanes) / static_cast<double>(b.pred_lane_count) : 0.0;
    b.fn_rate = b.gt_lane_count > 0 ? static_cast<double>(b.fn_lanes) / static_cast<double>(b.gt_lane_count) : 0.0;
    return b;
}

// ---------------------------------------------------------------------------
// Experiment comparison table. Reference rows carry previously published
// results for the three configurations (plus the extended-training run and
// the headline figure); measured rows are ranked among them by F1.

inline std::vector<MetricReport> reference_reports() {
    auto mk = [](const char* label, double acc, double prec, double rec, double f1) {
        MetricReport r;
        r.label = label;
        r.accuracy = acc / 100.0;
        r.precision = prec / 100.0;
        r.recall = rec / 100.0;
        r.f1 = f1 / 100.0;
        r.is_reference = true;
        return r;
    };
    std::vector<MetricReport> refs;
    refs.push_back(mk("reference exp1 base", 86.09, 94.98, 76.21, 84.57));
    refs.push_back(mk("reference exp2 attention+fpn", 89.51, 94.86, 83.55, 88.85));
    refs.push_back(mk("reference exp3 roi+focal+lineiou", 91.50, 95.23, 87.38, 91.13));
    refs.push_back(mk("reference exp3 extended training", 93.33, -1, -1, 93.23));
    refs.push_back(mk("reference headline accuracy", 93.40, -1, -1, -1));
    return refs;
}

inline std::string format_metric(double v) {
    if (v < 0) return "   -  ";
    return str_printf("%6.2f", v * 100.0);
}

// Renders the reports plus the stored reference rows, sorted by F1
// descending (ties keep input order).
inline std::string compare_experiments(std::vector<MetricReport> reports, bool include_references = true) {
    if (include_references) {
        auto refs = reference_reports();
        reports.insert(reports.end(), refs.begin(), refs.end());
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const MetricReport& a, const MetricReport& b) { return a.f1 > b.f1; });
    std::string out;
    out += str_printf("%-36s %6s %6s %6s %6s  %s\n", "experiment", "acc%", "prec%", "rec%", "f1%", "source");
    out += std::string(75, '-') + "\n";
    for (const auto& r : reports) {
        out += str_printf("%-36s %s %s %s %s  %s\n", r.label.c_str(), format_metric(r.accuracy).c_str(),
                          format_metric(r.precision).c_str(), format_metric(r.recall).c_str(),
                          format_metric(r.f1).c_str(), r.is_reference ? "published" : "this run");
    }
    return out;
}

}  // namespace lanedet
