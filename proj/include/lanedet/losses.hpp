#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lanedet/targets.hpp"
#include "lanedet/tensor.hpp"

namespace lanedet {

template <class Real>
struct LossWeightsT {
    Real w_focal = 1;
    Real w_offset = 1;
    Real w_lineiou = 1;
    Real w_embed = static_cast<Real>(0.5);
    Real focal_alpha = static_cast<Real>(0.25);
    Real focal_gamma = 2;
    Real lineiou_e = static_cast<Real>(7.5);  // half-width in decoder cells
    Real delta_pull = static_cast<Real>(0.5);
    Real delta_push = 3;
};

using LossWeights = LossWeightsT<float>;

template <class Real>
void validate_weights(const LossWeightsT<Real>& w) {
    require(w.w_focal >= 0 && w.w_offset >= 0 && w.w_lineiou >= 0 && w.w_embed >= 0,
            "loss weights must be non-negative");
    require(w.focal_gamma >= 0, "focal gamma must be non-negative");
    require(w.lineiou_e > 0, "lineiou half-width must be positive");
    require(w.delta_push > w.delta_pull && w.delta_pull >= 0, "need delta_push > delta_pull >= 0");
}

// ---------------------------------------------------------------------------
// Focal loss on a probability map: mean of -alpha * (1-p_t)^gamma * log(p_t),
// p_t = p where target is 1 and 1-p otherwise. Probabilities are clamped to
// [1e-7, 1-1e-7] before the log; inside the clamp the gradient is zero.
template <class Real>
Real focal_loss(const TensorT<Real>& pred, const TensorT<Real>& target, Real alpha, Real gamma,
                TensorT<Real>* d_pred = nullptr) {
    require(pred.shape == target.shape, "focal_loss: shape mismatch");
    require(pred.numel() > 0, "focal_loss: empty input");
    const Real lo = static_cast<Real>(1e-7), hi = Real(1) - static_cast<Real>(1e-7);
    if (d_pred) *d_pred = TensorT<Real>(pred.shape);
    const Real inv_m = Real(1) / static_cast<Real>(pred.numel());
    double acc = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const Real p_raw = pred.data[i];
        const bool pos = target.data[i] > static_cast<Real>(0.5);
        const Real p = std::clamp(p_raw, lo, hi);
        const Real pt = pos ? p : Real(1) - p;
        const Real one_m = Real(1) - pt;
        const Real pow_g = gamma == Real(0) ? Real(1) : std::pow(one_m, gamma);
        acc += -static_cast<double>(alpha) * pow_g * std::log(pt);
        if (d_pred && p_raw > lo && p_raw < hi) {
            // d/dpt [-alpha (1-pt)^g log pt], then dpt/dp = +-1
            const Real pow_gm1 = gamma == Real(0) ? Real(0) : (gamma == Real(1) ? Real(1) : std::pow(one_m, gamma - 1));
            const Real dpt = alpha * gamma * pow_gm1 * std::log(pt) - alpha * pow_g / pt;
            d_pred->data[i] = (pos ? dpt : -dpt) * inv_m;
        }
    }
    return static_cast<Real>(acc) * inv_m;
}

// ---------------------------------------------------------------------------
// Offset regression: mean over valid cells of squared (dx, dy) error.
// `valid` marks cells (shape [N,1,1,H,W]) where offsets are supervised.
template <class Real>
Real offset_loss(const TensorT<Real>& pred, const TensorT<Real>& target, const TensorT<Real>& valid,
                 TensorT<Real>* d_pred = nullptr, bool* empty_warning = nullptr) {
    require(pred.shape == target.shape, "offset_loss: pred/target shape mismatch");
    require(pred.shape.rank == 5 && pred.shape[1] == 2, "offset_loss: offsets must be [N,2,1,H,W]");
    require(valid.shape.rank == 5 && valid.shape[1] == 1, "offset_loss: valid mask must be [N,1,1,H,W]");
    require(valid.shape[0] == pred.shape[0] && valid.shape[3] == pred.shape[3] && valid.shape[4] == pred.shape[4],
            "offset_loss: valid mask extent mismatch");
    const int64_t N = pred.shape[0], hw = pred.shape[3] * pred.shape[4];
    if (d_pred) *d_pred = TensorT<Real>(pred.shape);
    int64_t count = 0;
    for (size_t i = 0; i < valid.data.size(); ++i)
        if (valid.data[i] > Real(0.5)) ++count;
    if (empty_warning) *empty_warning = count == 0;
    if (count == 0) return 0;
    const Real inv_n = Real(1) / static_cast<Real>(count);
    double acc = 0;
    for (int64_t n = 0; n < N; ++n) {
        const Real* vm = valid.data.data() + n * hw;
        const Real* px = pred.data.data() + (n * 2 + 0) * hw;
        const Real* py = pred.data.data() + (n * 2 + 1) * hw;
        const Real* tx = target.data.data() + (n * 2 + 0) * hw;
        const Real* ty = target.data.data() + (n * 2 + 1) * hw;
        for (int64_t k = 0; k < hw; ++k) {
            if (vm[k] <= Real(0.5)) continue;
            const Real dx = px[k] - tx[k], dy = py[k] - ty[k];
            acc += static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
            if (d_pred) {
                d_pred->data[static_cast<size_t>((n * 2 + 0) * hw + k)] = 2 * dx * inv_n;
                d_pred->data[static_cast<size_t>((n * 2 + 1) * hw + k)] = 2 * dy * inv_n;
            }
        }
    }
    return static_cast<Real>(acc) * inv_n;
}

// ---------------------------------------------------------------------------
// LineIoU between two lanes sampled on a shared row grid. Entries of -2 mark
// rows where a lane has no point; rows missing from either lane are skipped.
// Each point widens to the segment [x-e, x+e]; the result is the ratio of
// summed intersections to summed unions. No shared rows -> 0.
template <class Real>
Real line_iou(const std::vector<Real>& pred_xs, const std::vector<Real>& gt_xs, Real e) {
    require(pred_xs.size() == gt_xs.size(), "line_iou: lanes must share the row grid");
    require(e > 0, "line_iou: half-width must be positive");
    double inter = 0, uni = 0;
    bool any = false;
    for (size_t i = 0; i < pred_xs.size(); ++i) {
        if (pred_xs[i] < Real(-1) || gt_xs[i] < Real(-1)) continue;  // -2 marks absence
        any = true;
        const double d = std::abs(static_cast<double>(pred_xs[i]) - gt_xs[i]);
        const double two_e = 2.0 * e;
        inter += std::max(0.0, two_e - d);
        uni += d < two_e ? two_e + d : 2.0 * two_e;
    }
    if (!any || uni <= 0) return 0;
    return static_cast<Real>(inter / uni);
}

template <class Real>
Real line_iou_loss(const std::vector<Real>& pred_xs, const std::vector<Real>& gt_xs, Real e) {
    return Real(1) - line_iou(pred_xs, gt_xs, e);
}

// ---------------------------------------------------------------------------
// Differentiable LineIoU surrogate for training the confidence-only head.
//
// For every ground-truth lane point (row r, x position g) the row's cells
// are partitioned by nearest ground-truth lane; within the lane's own cell
// window a confidence-weighted soft position x_hat = sum(w_j * j),
// w_j = p_j / sum(p), is read off the map. The per-row segments [x-e, x+e]
// of x_hat and g then feed the summed-intersection / summed-union ratio,
// and the loss is 1 - IoU. Gradients flow into the confidence map through
// the soft position.
template <class Real>
Real line_iou_map_loss(const TensorT<Real>& conf, const std::vector<std::vector<LaneCellPoints>>& lanes_cells,
                       Real e, TensorT<Real>* d_conf = nullptr) {
    require(conf.shape.rank == 5 && conf.shape[1] == 1, "line_iou_map_loss: confidence must be [N,1,1,H,W]");
    require(e > 0, "line_iou_map_loss: half-width must be positive");
    const int64_t N = conf.shape[0], H = conf.shape[3], W = conf.shape[4];
    require(static_cast<int64_t>(lanes_cells.size()) == N, "line_iou_map_loss: one lane list per sample required");
    if (d_conf) *d_conf = TensorT<Real>(conf.shape);

    struct RowTerm {
        int64_t n, row;
        int64_t lo, hi;     // cell window [lo, hi]
        double x_hat, g;
        double weight_sum;  // sum of probabilities over the window
    };
    std::vector<RowTerm> terms;
    double inter = 0, uni = 0;
    const double two_e = 2.0 * e;
    for (int64_t n = 0; n < N; ++n) {
        const auto& lanes = lanes_cells[static_cast<size_t>(n)];
        // group the lane points of each row
        std::vector<std::vector<std::pair<double, size_t>>> by_row(static_cast<size_t>(H));
        for (size_t k = 0; k < lanes.size(); ++k) {
            const auto& lane = lanes[k];
            require(lane.rows.size() == lane.xs.size(), "line_iou_map_loss: malformed lane chain");
            for (size_t i = 0; i < lane.rows.size(); ++i) {
                const int r = lane.rows[i];
                require(r >= 0 && r < H, "line_iou_map_loss: lane row outside the decoder map");
                by_row[static_cast<size_t>(r)].push_back({static_cast<double>(lane.xs[i]), k});
            }
        }
        for (int64_t r = 0; r < H; ++r) {
            auto& pts = by_row[static_cast<size_t>(r)];
            if (pts.empty()) continue;
            std::sort(pts.begin(), pts.end());
            const Real* crow = conf.data.data() + (n * H + r) * W;
            for (size_t q = 0; q < pts.size(); ++q) {
                const double g = pts[q].first;
                // window: cells nearer to this lane than to its row neighbours
                double lo_b = q == 0 ? 0.0 : 0.5 * (pts[q - 1].first + g);
                double hi_b = q + 1 < pts.size() ? 0.5 * (g + pts[q + 1].first) : static_cast<double>(W - 1);
                int64_t lo = std::clamp<int64_t>(llround(std::ceil(lo_b)), 0, W - 1);
                int64_t hi = std::clamp<int64_t>(llround(std::floor(hi_b)), 0, W - 1);
                if (hi < lo) std::swap(lo, hi);
                double s = 0, sx = 0;
                for (int64_t j = lo; j <= hi; ++j) {
                    s += crow[j];
                    sx += crow[j] * static_cast<double>(j);
                }
                if (s <= 1e-12) continue;  // dead window carries no signal
                const double x_hat = sx / s;
                const double d = std::abs(x_hat - g);
                inter += std::max(0.0, two_e - d);
                uni += d < two_e ? two_e + d : 2.0 * two_e;
                terms.push_back({n, r, lo, hi, x_hat, g, s});
            }
        }
    }
    if (uni <= 0) return 0;  // nothing supervised
    const double iou = inter / uni;
    if (d_conf) {
        for (const RowTerm& t : terms) {
            const double d = std::abs(t.x_hat - t.g);
            if (d >= two_e) continue;  // saturated rows contribute no gradient
            // loss = 1 - I/U; dI/dd = -1, dU/dd = +1 within the overlap
            const double dloss_dd = (inter + uni) / (uni * uni);
            const double sgn = t.x_hat >= t.g ? 1.0 : -1.0;
            const Real* crow = conf.data.data() + (t.n * conf.shape[3] + t.row) * conf.shape[4];
            Real* grow = d_conf->data.data() + (t.n * conf.shape[3] + t.row) * conf.shape[4];
            for (int64_t j = t.lo; j <= t.hi; ++j) {
                const double dxhat_dp = (static_cast<double>(j) - t.x_hat) / t.weight_sum;
                grow[j] += static_cast<Real>(dloss_dd * sgn * dxhat_dp);
                (void)crow;
            }
        }
    }
    return static_cast<Real>(1.0 - iou);
}

// ---------------------------------------------------------------------------
// Discriminative embedding loss: pull cells toward their instance mean,
// push distinct instance means apart. Both terms hinge-squared.
template <class Real>
Real embedding_loss(const TensorT<Real>& embeddings, const TensorT<Real>& labels, Real delta_pull, Real delta_push,
                    TensorT<Real>* d_emb = nullptr) {
    require(embeddings.shape.rank == 5, "embedding_loss: embeddings must be [N,D,1,H,W]");
    require(labels.shape.rank == 5 && labels.shape[1] == 1, "embedding_loss: labels must be [N,1,1,H,W]");
    require(labels.shape[0] == embeddings.shape[0] && labels.shape[3] == embeddings.shape[3] &&
                labels.shape[4] == embeddings.shape[4],
            "embedding_loss: label extent mismatch");
    const int64_t N = embeddings.shape[0], D = embeddings.shape[1];
    const int64_t hw = embeddings.shape[3] * embeddings.shape[4];
    if (d_emb) *d_emb = TensorT<Real>(embeddings.shape);
    double total = 0;
    int64_t samples_with_instances = 0;
    for (int64_t n = 0; n < N; ++n) {
        const Real* lab = labels.data.data() + n * hw;
        int64_t K = 0;
        for (int64_t k = 0; k < hw; ++k) K = std::max<int64_t>(K, llround(static_cast<double>(lab[k])));
        if (K < 1) continue;
        ++samples_with_instances;
        std::vector<std::vector<int64_t>> members(static_cast<size_t>(K));
        for (int64_t k = 0; k < hw; ++k) {
            const int64_t id = llround(static_cast<double>(lab[k]));
            if (id >= 1 && id <= K) members[static_cast<size_t>(id - 1)].push_back(k);
        }
        // drop empty ids (labels need not be dense after augmentation)
        std::vector<std::vector<int64_t>> inst;
        for (auto& m : members)
            if (!m.empty()) inst.push_back(std::move(m));
        const int64_t Ki = static_cast<int64_t>(inst.size());
        if (Ki < 1) continue;
        auto emb_at = [&](int64_t cell, int64_t d) {
            return embeddings.data[static_cast<size_t>((n * D + d) * hw + cell)];
        };
        std::vector<std::vector<double>> mu(static_cast<size_t>(Ki), std::vector<double>(static_cast<size_t>(D), 0.0));
        for (int64_t k = 0; k < Ki; ++k) {
            for (int64_t cell : inst[static_cast<size_t>(k)])
                for (int64_t d = 0; d < D; ++d) mu[static_cast<size_t>(k)][static_cast<size_t>(d)] += emb_at(cell, d);
            for (int64_t d = 0; d < D; ++d)
                mu[static_cast<size_t>(k)][static_cast<size_t>(d)] /= static_cast<double>(inst[static_cast<size_t>(k)].size());
        }
        // pull
        double pull = 0;
        std::vector<std::vector<double>> dmu(static_cast<size_t>(Ki), std::vector<double>(static_cast<size_t>(D), 0.0));
        for (int64_t k = 0; k < Ki; ++k) {
            const auto& cells = inst[static_cast<size_t>(k)];
            const double inv_s = 1.0 / static_cast<double>(cells.size());
            for (int64_t cell : cells) {
                double r2 = 0;
                std::vector<double> v(static_cast<size_t>(D));
                for (int64_t d = 0; d < D; ++d) {
                    v[static_cast<size_t>(d)] = emb_at(cell, d) - mu[static_cast<size_t>(k)][static_cast<size_t>(d)];
                    r2 += v[static_cast<size_t>(d)] * v[static_cast<size_t>(d)];
                }
                const double r = std::sqrt(r2);
                const double h = r - static_cast<double>(delta_pull);
                if (h <= 0) continue;
                pull += h * h * inv_s / static_cast<double>(Ki);
                if (d_emb && r > 1e-12) {
                    const double coef = 2.0 * h / r * inv_s / static_cast<double>(Ki);
                    for (int64_t d = 0; d < D; ++d) {
                        const double gv = coef * v[static_cast<size_t>(d)];
                        d_emb->data[static_cast<size_t>((n * D + d) * hw + cell)] += static_cast<Real>(gv);
                        dmu[static_cast<size_t>(k)][static_cast<size_t>(d)] -= gv;
                    }
                }
            }
        }
        // push over ordered pairs, normalized by K(K-1)
        double push = 0;
        if (Ki >= 2) {
            const double inv_pairs = 1.0 / static_cast<double>(Ki * (Ki - 1));
            for (int64_t a = 0; a < Ki; ++a)
                for (int64_t b = 0; b < Ki; ++b) {
                    if (a == b) continue;
                    double r2 = 0;
                    std::vector<double> w(static_cast<size_t>(D));
                    for (int64_t d = 0; d < D; ++d) {
                        w[static_cast<size_t>(d)] = mu[static_cast<size_t>(a)][static_cast<size_t>(d)] -
                                                    mu[static_cast<size_t>(b)][static_cast<size_t>(d)];
                        r2 += w[static_cast<size_t>(d)] * w[static_cast<size_t>(d)];
                    }
                    const double r = std::sqrt(r2);
                    const double h = static_cast<double>(delta_push) - r;
                    if (h <= 0) continue;
                    push += h * h * inv_pairs;
                    if (d_emb && r > 1e-12) {
                        const double coef = -2.0 * h / r * inv_pairs;
                        for (int64_t d = 0; d < D; ++d) {
                            dmu[static_cast<size_t>(a)][static_cast<size_t>(d)] += coef * w[static_cast<size_t>(d)];
                            dmu[static_cast<size_t>(b)][static_cast<size_t>(d)] -= coef * w[static_cast<size_t>(d)];
                        }
                    }
                }
        }
        // means -> member cells
        if (d_emb)
            for (int64_t k = 0; k < Ki; ++k) {
                const auto& cells = inst[static_cast<size_t>(k)];
                const double inv_s = 1.0 / static_cast<double>(cells.size());
                for (int64_t d = 0; d < D; ++d) {
                    const double gm = dmu[static_cast<size_t>(k)][static_cast<size_t>(d)] * inv_s;
                    if (gm == 0.0) continue;
                    for (int64_t cell : cells)
                        d_emb->data[static_cast<size_t>((n * D + d) * hw + cell)] += static_cast<Real>(gm);
                }
            }
        total += pull + push;
    }
    if (samples_with_instances == 0) return 0;
    // average over samples that carry instances
    const double inv = 1.0 / static_cast<double>(samples_with_instances);
    if (d_emb)
        for (auto& v : d_emb->data) v = static_cast<Real>(v * inv);
    return static_cast<Real>(total * inv);
}

// ---------------------------------------------------------------------------
// Combined objective. network1 trains focal + offset + embedding; network2
// trains focal + LineIoU; `eq8` selects the focal + offset + LineIoU sum.

enum class LossMode { variant_default, eq8 };

template <class Real>
struct LossBreakdownT {
    Real total = 0;
    Real focal = 0;
    Real offset = 0;
    Real embed = 0;
    Real lineiou = 0;
    bool offset_empty = false;
};

using LossBreakdown = LossBreakdownT<float>;

template <class Real>
struct LossGradsT {
    TensorT<Real> d_conf;
    TensorT<Real> d_off;
    TensorT<Real> d_emb;
};

// `outputs` come straight from the decoder (confidence/offsets post-sigmoid).
template <class Real>
LossBreakdownT<Real> total_loss(const DecoderOutputsT<Real>& outputs, const TrainingTargetsT<Real>& targets,
                                const LossWeightsT<Real>& w, Variant variant, LossMode mode = LossMode::variant_default,
                                LossGradsT<Real>* grads = nullptr) {
    validate_weights(w);
    LossBreakdownT<Real> b;
    const bool want_offset =
        mode == LossMode::eq8 ? true : variant == Variant::network1;
    const bool want_embed = mode == LossMode::variant_default && variant == Variant::network1;
    const bool want_lineiou = mode == LossMode::eq8 ? true : variant == Variant::network2;
    TensorT<Real>* d_conf = grads ? &grads->d_conf : nullptr;
    TensorT<Real> d_conf_iou;
    b.focal = focal_loss(outputs.confidence, targets.confidence, w.focal_alpha, w.focal_gamma, d_conf);
    if (d_conf)
        for (auto& v : d_conf->data) v *= w.w_focal;
    if (want_offset) {
        require(!outputs.offsets.empty(), "total_loss: offset supervision requires the offset head");
        TensorT<Real>* d_off = grads ? &grads->d_off : nullptr;
        b.offset = offset_loss(outputs.offsets, targets.offsets, targets.valid, d_off, &b.offset_empty);
        if (d_off)
            for (auto& v : d_off->data) v *= w.w_offset;
    }
    if (want_embed) {
        require(!outputs.embeddings.empty(), "total_loss: embedding supervision requires the embedding head");
        TensorT<Real>* d_emb = grads ? &grads->d_emb : nullptr;
        b.embed = embedding_loss(outputs.embeddings, targets.labels, w.delta_pull, w.delta_push, d_emb);
        if (d_emb)
            for (auto& v : d_emb->data) v *= w.w_embed;
    }
    if (want_lineiou) {
        b.lineiou = line_iou_map_loss(outputs.confidence, targets.lanes_cells, w.lineiou_e,
                                      grads ? &d_conf_iou : nullptr);
        if (grads) {
            if (grads->d_conf.empty()) grads->d_conf = TensorT<Real>(outputs.confidence.shape);
            for (size_t i = 0; i < d_conf_iou.data.size(); ++i) grads->d_conf.data[i] += w.w_lineiou * d_conf_iou.data[i];
        }
    }
    b.total = w.w_focal * b.focal + w.w_offset * b.offset + w.w_embed * b.embed + w.w_lineiou * b.lineiou;
    return b;
}

}  // namespace lanedet
