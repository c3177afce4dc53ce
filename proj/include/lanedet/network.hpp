#pragma once

#include <array>
#include <string>
#include <vector>

#include "lanedet/attention.hpp"
#include "lanedet/conv.hpp"
#include "lanedet/fpn.hpp"
#include "lanedet/layers.hpp"
#include "lanedet/targets.hpp"

namespace lanedet {

// Fractional region-of-interest bounds, x in [x1,x2], y in [y1,y2].
struct RoiBounds {
    double x1 = 0.0, x2 = 1.0;
    double y1 = 0.4, y2 = 1.0;
};

inline void validate_roi(const RoiBounds& b) {
    require(b.x1 >= 0 && b.x1 < b.x2 && b.x2 <= 1, "roi bounds: need 0 <= x1 < x2 <= 1");
    require(b.y1 >= 0 && b.y1 < b.y2 && b.y2 <= 1, "roi bounds: need 0 <= y1 < y2 <= 1");
}

// Affine map between coordinate frames: full_x = ax*x + bx, full_y = ay*y + by.
struct CoordTransform {
    double ax = 1.0, bx = 0.0, ay = 1.0, by = 0.0;

    void apply(double x, double y, double& ox, double& oy) const {
        ox = ax * x + bx;
        oy = ay * y + by;
    }
    CoordTransform inverse() const {
        require(ax != 0.0 && ay != 0.0, "coordinate transform: not invertible");
        return CoordTransform{1.0 / ax, -bx / ax, 1.0 / ay, -by / ay};
    }
    bool is_identity() const { return ax == 1.0 && bx == 0.0 && ay == 1.0 && by == 0.0; }
};

// outer(inner(p)): apply `inner` first.
inline CoordTransform compose(const CoordTransform& outer, const CoordTransform& inner) {
    return CoordTransform{outer.ax * inner.ax, outer.ax * inner.bx + outer.bx, outer.ay * inner.ay,
                          outer.ay * inner.by + outer.by};
}

// Crop the fractional ROI rectangle out of an NCTHW volume. The returned
// transform maps cropped pixel coordinates back to full-frame coordinates.
template <class Real>
std::pair<TensorT<Real>, CoordTransform> roi_crop(const TensorT<Real>& frames, const RoiBounds& bounds) {
    require(frames.shape.rank == 5, "roi_crop: input must be rank-5 (N,C,T,H,W)");
    validate_roi(bounds);
    const int64_t H = frames.shape[3], W = frames.shape[4];
    const int64_t x_lo = llround(bounds.x1 * static_cast<double>(W));
    const int64_t x_hi = llround(bounds.x2 * static_cast<double>(W));
    const int64_t y_lo = llround(bounds.y1 * static_cast<double>(H));
    const int64_t y_hi = llround(bounds.y2 * static_cast<double>(H));
    require(x_hi - x_lo >= 1 && y_hi - y_lo >= 1,
            str_printf("roi_crop: degenerate crop [%lld,%lld)x[%lld,%lld)", static_cast<long long>(x_lo),
                       static_cast<long long>(x_hi), static_cast<long long>(y_lo), static_cast<long long>(y_hi)));
    const int64_t N = frames.shape[0], C = frames.shape[1], T = frames.shape[2];
    const int64_t ch = y_hi - y_lo, cw = x_hi - x_lo;
    TensorT<Real> out(Shape{N, C, T, ch, cw});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < T; ++t)
                for (int64_t y = 0; y < ch; ++y) {
                    const Real* src = frames.data.data() + (((n * C + c) * T + t) * H + y_lo + y) * W + x_lo;
                    Real* dst = out.data.data() + (((n * C + c) * T + t) * ch + y) * cw;
                    std::copy(src, src + cw, dst);
                }
    return {std::move(out), CoordTransform{1.0, static_cast<double>(x_lo), 1.0, static_cast<double>(y_lo)}};
}

// Bilinear resize of the H,W plane of every (n,c,t) slice, pixel-center
// convention. Data path only (clips are inputs, not parameters).
template <class Real>
TensorT<Real> resize_bilinear_volume(const TensorT<Real>& x, int64_t oh, int64_t ow) {
    require(x.shape.rank == 5, "resize_bilinear_volume: input must be rank-5");
    require(oh >= 1 && ow >= 1, "resize_bilinear_volume: output extents must be >= 1");
    const int64_t N = x.shape[0], C = x.shape[1], T = x.shape[2], H = x.shape[3], W = x.shape[4];
    if (oh == H && ow == W) return x;
    TensorT<Real> out(Shape{N, C, T, oh, ow});
    const double fy = static_cast<double>(H) / static_cast<double>(oh);
    const double fx = static_cast<double>(W) / static_cast<double>(ow);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < T; ++t) {
                const Real* src = x.data.data() + ((n * C + c) * T + t) * H * W;
                Real* dst = out.data.data() + ((n * C + c) * T + t) * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    const double sy = (static_cast<double>(y) + 0.5) * fy - 0.5;
                    const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, H - 1);
                    const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
                    const double wy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);
                    for (int64_t xo = 0; xo < ow; ++xo) {
                        const double sx = (static_cast<double>(xo) + 0.5) * fx - 0.5;
                        const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, W - 1);
                        const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
                        const double wx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
                        const double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
                        const double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
                        dst[y * ow + xo] = static_cast<Real>((1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                                             wy * ((1 - wx) * v10 + wx * v11));
                    }
                }
            }
    return out;
}

// ---------------------------------------------------------------------------
// Architecture configuration.

struct EncoderConfig {
    std::array<int, 4> stage_channels{64, 128, 256, 512};
    int blocks_per_stage = 2;
    int temporal_depth = 4;
    int input_h = 256;
    int input_w = 512;
    bool factorized = true;
    Variant variant = Variant::network1;
    bool attention_enabled = true;  // Network 1 only
    bool fpn_enabled = true;        // Network 1 only
    RoiBounds roi{};                // Network 2 only
    int fpn_width = 64;
    int decoder_width = 64;
    int embed_dim = 4;
    int d_k = 0;  // 0 -> stage_channels[2] / 2
    float dropout_p = 0.3f;
    int64_t attention_max_positions = 8192;

    int attention_dk() const { return d_k > 0 ? d_k : std::max(1, stage_channels[2] / 2); }
};

inline void validate_config(const EncoderConfig& c) {
    for (int i = 0; i < 4; ++i) require(c.stage_channels[static_cast<size_t>(i)] >= 1, "config: stage widths must be >= 1");
    for (int i = 0; i < 3; ++i)
        require(c.stage_channels[static_cast<size_t>(i)] < c.stage_channels[static_cast<size_t>(i + 1)],
                "config: stage widths must be strictly increasing");
    require(c.blocks_per_stage >= 1, "config: blocks_per_stage must be >= 1");
    require(c.temporal_depth >= 1, "config: temporal depth must be >= 1");
    require(c.input_h % 16 == 0 && c.input_w % 16 == 0,
            str_printf("config: input resolution %dx%d must be divisible by 16", c.input_h, c.input_w));
    require(c.embed_dim >= 1, "config: embedding dimension must be >= 1");
    require(c.dropout_p >= 0.0f && c.dropout_p < 1.0f, "config: dropout must be in [0,1)");
    if (c.variant == Variant::network2)
        require(!c.attention_enabled && !c.fpn_enabled,
                "config: attention/FPN refinements belong to network1; network2 uses the ROI path");
    validate_roi(c.roi);
}

// ---------------------------------------------------------------------------
// Conv + batch norm + ReLU unit. Factorized units interleave the passes:
// spatial conv -> BN -> ReLU -> temporal conv -> BN (-> ReLU). The conv op
// itself stays linear; the interleaving lives here.

template <class Real>
struct ConvBnReluT {
    bool factorized = false;
    bool relu_out = true;
    Conv3dSpecT<Real> conv;        // full kernel, or the spatial pass
    BatchNormStateT<Real> bn_mid;  // factorized only
    Conv3dSpecT<Real> conv_t;      // temporal pass, factorized only
    BatchNormStateT<Real> bn;
};

template <class Real>
ConvBnReluT<Real> make_conv_bn_relu(int in_c, int out_c, int kt, int kh, int kw, int st, int sh, int sw, int pt,
                                    int ph, int pw, bool factorized, Rng* rng, bool relu_out = true) {
    ConvBnReluT<Real> u;
    u.relu_out = relu_out;
    u.factorized = factorized && kt > 1;
    if (u.factorized) {
        const int mid = std::max(1, (out_c + 1) / 2);
        u.conv = make_conv3d_spec<Real>(in_c, mid, 1, kh, kw, 1, sh, sw, 0, ph, pw, false, rng);
        u.conv.has_bias = false;
        u.conv.bias = TensorT<Real>();
        u.bn_mid = make_batch_norm_state<Real>(mid);
        u.conv_t = make_conv3d_spec<Real>(mid, out_c, kt, 1, 1, st, 1, 1, pt, 0, 0, false, rng);
        u.conv_t.has_bias = false;
        u.conv_t.bias = TensorT<Real>();
    } else {
        u.conv = make_conv3d_spec<Real>(in_c, out_c, kt, kh, kw, st, sh, sw, pt, ph, pw, false, rng);
        u.conv.has_bias = false;
        u.conv.bias = TensorT<Real>();
    }
    u.bn = make_batch_norm_state<Real>(out_c);
    return u;
}

template <class Real>
struct ConvBnReluCacheT {
    TensorT<Real> input;
    TensorT<Real> pre_bn1;  // first conv output
    BnCacheT<Real> bn1;
    TensorT<Real> mid_pre_relu;  // factorized: BN output between passes
    TensorT<Real> mid_act;       // factorized: temporal-pass input
    TensorT<Real> pre_bn2;       // factorized: temporal conv output
    BnCacheT<Real> bn2;
    TensorT<Real> pre_relu;  // final BN output
};

template <class Real>
TensorT<Real> unit_forward(ConvBnReluT<Real>& u, const TensorT<Real>& x, ConvBnReluCacheT<Real>& c) {
    c.input = x;
    c.pre_bn1 = conv3d_forward(x, u.conv);
    if (u.factorized) {
        c.mid_pre_relu = batch_norm_forward(c.pre_bn1, u.bn_mid, &c.bn1);
        c.mid_act = relu(c.mid_pre_relu);
        c.pre_bn2 = conv3d_forward(c.mid_act, u.conv_t);
        c.pre_relu = batch_norm_forward(c.pre_bn2, u.bn, &c.bn2);
    } else {
        c.pre_relu = batch_norm_forward(c.pre_bn1, u.bn, &c.bn1);
    }
    return u.relu_out ? relu(c.pre_relu) : c.pre_relu;
}

template <class Real>
void accumulate_grad(TensorT<Real>& param, const TensorT<Real>& g) {
    if (param.empty() && g.empty()) return;
    param.ensure_grad();
    require(g.shape == param.shape, "accumulate_grad: shape mismatch");
    for (size_t i = 0; i < g.data.size(); ++i) param.grad[i] += g.data[i];
}

template <class Real>
TensorT<Real> unit_backward(ConvBnReluT<Real>& u, const ConvBnReluCacheT<Real>& c, const TensorT<Real>& upstream) {
    TensorT<Real> d = u.relu_out ? relu_backward(c.pre_relu, upstream) : upstream;
    if (u.factorized) {
        BnGradsT<Real> bg2 = batch_norm_backward(c.pre_bn2, u.bn, c.bn2, d);
        accumulate_grad(u.bn.gamma, bg2.gamma);
        accumulate_grad(u.bn.beta, bg2.beta);
        Conv3dGradsT<Real> cg2 = conv3d_backward(c.mid_act, u.conv_t, bg2.input);
        accumulate_grad(u.conv_t.weights, cg2.weights);
        TensorT<Real> dmid = relu_backward(c.mid_pre_relu, cg2.input);
        BnGradsT<Real> bg1 = batch_norm_backward(c.pre_bn1, u.bn_mid, c.bn1, dmid);
        accumulate_grad(u.bn_mid.gamma, bg1.gamma);
        accumulate_grad(u.bn_mid.beta, bg1.beta);
        Conv3dGradsT<Real> cg1 = conv3d_backward(c.input, u.conv, bg1.input);
        accumulate_grad(u.conv.weights, cg1.weights);
        return std::move(cg1.input);
    }
    BnGradsT<Real> bg = batch_norm_backward(c.pre_bn1, u.bn, c.bn1, d);
    accumulate_grad(u.bn.gamma, bg.gamma);
    accumulate_grad(u.bn.beta, bg.beta);
    Conv3dGradsT<Real> cg = conv3d_backward(c.input, u.conv, bg.input);
    accumulate_grad(u.conv.weights, cg.weights);
    if (u.conv.has_bias) accumulate_grad(u.conv.bias, cg.bias);
    return std::move(cg.input);
}

// ---------------------------------------------------------------------------
// Residual block: out = relu(unit2(unit1(x)) + shortcut(x)). The shortcut is
// a 1x1x1 projection + BN whenever channels or stride change.

template <class Real>
struct ResBlockT {
    ConvBnReluT<Real> unit1;
    ConvBnReluT<Real> unit2;
    bool has_projection = false;
    Conv3dSpecT<Real> proj;
    BatchNormStateT<Real> proj_bn;
};

template <class Real>
ResBlockT<Real> make_res_block(int in_c, int out_c, int spatial_stride, bool factorized, Rng* rng) {
    ResBlockT<Real> b;
    b.unit1 = make_conv_bn_relu<Real>(in_c, out_c, 3, 3, 3, 1, spatial_stride, spatial_stride, 1, 1, 1, factorized, rng);
    b.unit2 = make_conv_bn_relu<Real>(out_c, out_c, 3, 3, 3, 1, 1, 1, 1, 1, 1, factorized, rng, /*relu_out=*/false);
    b.has_projection = in_c != out_c || spatial_stride != 1;
    if (b.has_projection) {
        b.proj = make_conv3d_spec<Real>(in_c, out_c, 1, 1, 1, 1, spatial_stride, spatial_stride, 0, 0, 0, false, rng);
        b.proj.has_bias = false;
        b.proj.bias = TensorT<Real>();
        b.proj_bn = make_batch_norm_state<Real>(out_c);
    }
    return b;
}

template <class Real>
struct ResBlockCacheT {
    ConvBnReluCacheT<Real> u1, u2;
    TensorT<Real> proj_pre_bn;
    BnCacheT<Real> proj_bn;
    TensorT<Real> pre_relu;  // sum before the output ReLU
};

template <class Real>
TensorT<Real> block_forward(ResBlockT<Real>& b, const TensorT<Real>& x, ResBlockCacheT<Real>& c) {
    TensorT<Real> a = unit_forward(b.unit1, x, c.u1);
    TensorT<Real> f = unit_forward(b.unit2, a, c.u2);
    if (b.has_projection) {
        c.proj_pre_bn = conv3d_forward(x, b.proj);
        TensorT<Real> shortcut = batch_norm_forward(c.proj_pre_bn, b.proj_bn, &c.proj_bn);
        c.pre_relu = add(f, shortcut);
    } else {
        c.pre_relu = add(f, x);
    }
    return relu(c.pre_relu);
}

template <class Real>
TensorT<Real> block_backward(ResBlockT<Real>& b, const ResBlockCacheT<Real>& c, const TensorT<Real>& upstream) {
    TensorT<Real> d = relu_backward(c.pre_relu, upstream);
    TensorT<Real> dx = unit_backward(b.unit2, c.u2, d);
    dx = unit_backward(b.unit1, c.u1, dx);
    if (b.has_projection) {
        BnGradsT<Real> bg = batch_norm_backward(c.proj_pre_bn, b.proj_bn, c.proj_bn, d);
        accumulate_grad(b.proj_bn.gamma, bg.gamma);
        accumulate_grad(b.proj_bn.beta, bg.beta);
        Conv3dGradsT<Real> pg = conv3d_backward(c.u1.input, b.proj, bg.input);
        accumulate_grad(b.proj.weights, pg.weights);
        add_inplace(dx, pg.input);
    } else {
        add_inplace(dx, d);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// The full model.

template <class Real>
struct ModelT {
    EncoderConfig cfg;
    ConvBnReluT<Real> stem;
    std::vector<ResBlockT<Real>> blocks;  // stage s, block b at index s*blocks_per_stage + b
    AttentionParamsT<Real> attn;
    std::array<Conv3dSpecT<Real>, 4> lateral;  // FPN projections (fpn_enabled)
    ConvBnReluT<Real> trunk;                   // FPN decoder trunk
    TransposedConv3dSpecT<Real> tc1, tc2;      // upsampling decoder trunk
    BatchNormStateT<Real> tc1_bn, tc2_bn;
    Conv3dSpecT<Real> head_conf, head_off, head_emb;
    bool training = false;
    uint64_t dropout_seed = 0;  // advanced per training step

    bool uses_fpn_decoder() const { return cfg.fpn_enabled; }
    bool has_aux_heads() const { return cfg.variant == Variant::network1; }
};

using Model = ModelT<float>;

template <class Real>
ModelT<Real> make_model(const EncoderConfig& cfg, uint64_t seed) {
    validate_config(cfg);
    ModelT<Real> m;
    m.cfg = cfg;
    Rng rng(mix_seed(seed, 0x6d6f64656c));
    const auto& w = cfg.stage_channels;
    m.stem = make_conv_bn_relu<Real>(3, w[0], 3, 7, 7, 1, 2, 2, 1, 3, 3, /*factorized=*/false, &rng);
    for (int s = 0; s < 4; ++s) {
        const int out_c = w[static_cast<size_t>(s)];
        const int stage_in = s == 0 ? w[0] : w[static_cast<size_t>(s - 1)];
        for (int b = 0; b < cfg.blocks_per_stage; ++b) {
            const int in_c = b == 0 ? stage_in : out_c;
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            m.blocks.push_back(make_res_block<Real>(in_c, out_c, stride, cfg.factorized, &rng));
        }
    }
    if (cfg.attention_enabled) {
        m.attn = make_attention_params<Real>(w[2], cfg.attention_dk(), &rng);
        m.attn.max_positions = cfg.attention_max_positions;
    }
    if (cfg.fpn_enabled) {
        m.lateral = make_fpn_laterals<Real>(w, cfg.fpn_width, &rng);
        m.trunk = make_conv_bn_relu<Real>(cfg.fpn_width, cfg.decoder_width, 1, 3, 3, 1, 1, 1, 0, 1, 1, false, &rng);
    } else {
        m.tc1 = make_transposed_conv3d_spec<Real>(w[3], cfg.decoder_width, 1, 4, 4, 1, 2, 2, 0, 1, 1, &rng);
        m.tc1.has_bias = false;
        m.tc1.bias = TensorT<Real>();
        m.tc1_bn = make_batch_norm_state<Real>(cfg.decoder_width);
        m.tc2 = make_transposed_conv3d_spec<Real>(cfg.decoder_width, cfg.decoder_width, 1, 4, 4, 1, 2, 2, 0, 1, 1, &rng);
        m.tc2.has_bias = false;
        m.tc2.bias = TensorT<Real>();
        m.tc2_bn = make_batch_norm_state<Real>(cfg.decoder_width);
    }
    m.head_conf = make_conv3d_spec<Real>(cfg.decoder_width, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, false, &rng);
    if (cfg.variant == Variant::network1) {
        m.head_off = make_conv3d_spec<Real>(cfg.decoder_width, 2, 1, 1, 1, 1, 1, 1, 0, 0, 0, false, &rng);
        m.head_emb = make_conv3d_spec<Real>(cfg.decoder_width, cfg.embed_dim, 1, 1, 1, 1, 1, 1, 0, 0, 0, false, &rng);
    }
    return m;
}

template <class Real>
void set_training(ModelT<Real>& m, bool training) {
    m.training = training;
    const BnMode mode = training ? BnMode::train : BnMode::inference;
    auto set_unit = [&](ConvBnReluT<Real>& u) {
        u.bn.mode = mode;
        u.bn_mid.mode = mode;
    };
    set_unit(m.stem);
    for (auto& b : m.blocks) {
        set_unit(b.unit1);
        set_unit(b.unit2);
        b.proj_bn.mode = mode;
    }
    set_unit(m.trunk);
    m.tc1_bn.mode = mode;
    m.tc2_bn.mode = mode;
}

// ---------------------------------------------------------------------------
// Parameter registry: stable names and iteration order for the optimizer and
// the checkpoint format. Running statistics are saved but not trained.

template <class Real>
struct ParamRefT {
    std::string name;
    TensorT<Real>* tensor;
    bool trainable;
};

namespace detail {

template <class Real>
void collect_bn(BatchNormStateT<Real>& bn, const std::string& prefix, std::vector<ParamRefT<Real>>& out) {
    out.push_back({prefix + ".gamma", &bn.gamma, true});
    out.push_back({prefix + ".beta", &bn.beta, true});
    out.push_back({prefix + ".running_mean", &bn.running_mean, false});
    out.push_back({prefix + ".running_var", &bn.running_var, false});
}

template <class Real>
void collect_unit(ConvBnReluT<Real>& u, const std::string& prefix, std::vector<ParamRefT<Real>>& out) {
    out.push_back({prefix + ".conv.weight", &u.conv.weights, true});
    if (u.conv.has_bias) out.push_back({prefix + ".conv.bias", &u.conv.bias, true});
    if (u.factorized) {
        collect_bn(u.bn_mid, prefix + ".bn_mid", out);
        out.push_back({prefix + ".conv_t.weight", &u.conv_t.weights, true});
    }
    collect_bn(u.bn, prefix + ".bn", out);
}

}  // namespace detail

template <class Real>
std::vector<ParamRefT<Real>> model_params(ModelT<Real>& m) {
    std::vector<ParamRefT<Real>> out;
    detail::collect_unit(m.stem, "stem", out);
    for (int s = 0; s < 4; ++s)
        for (int b = 0; b < m.cfg.blocks_per_stage; ++b) {
            auto& blk = m.blocks[static_cast<size_t>(s * m.cfg.blocks_per_stage + b)];
            const std::string p = str_printf("stage%d.block%d", s + 1, b);
            detail::collect_unit(blk.unit1, p + ".unit1", out);
            detail::collect_unit(blk.unit2, p + ".unit2", out);
            if (blk.has_projection) {
                out.push_back({p + ".proj.weight", &blk.proj.weights, true});
                detail::collect_bn(blk.proj_bn, p + ".proj_bn", out);
            }
        }
    if (m.cfg.attention_enabled) {
        out.push_back({"attention.wq", &m.attn.wq, true});
        out.push_back({"attention.wk", &m.attn.wk, true});
        out.push_back({"attention.wv", &m.attn.wv, true});
        out.push_back({"attention.gamma", &m.attn.gamma, true});
    }
    if (m.cfg.fpn_enabled) {
        for (int i = 0; i < 4; ++i) {
            auto& lat = m.lateral[static_cast<size_t>(i)];
            out.push_back({str_printf("fpn.lateral%d.weight", i + 1), &lat.weights, true});
            if (lat.has_bias) out.push_back({str_printf("fpn.lateral%d.bias", i + 1), &lat.bias, true});
        }
        detail::collect_unit(m.trunk, "decoder.trunk", out);
    } else {
        out.push_back({"decoder.tc1.weight", &m.tc1.weights, true});
        detail::collect_bn(m.tc1_bn, "decoder.tc1_bn", out);
        out.push_back({"decoder.tc2.weight", &m.tc2.weights, true});
        detail::collect_bn(m.tc2_bn, "decoder.tc2_bn", out);
    }
    out.push_back({"head.conf.weight", &m.head_conf.weights, true});
    out.push_back({"head.conf.bias", &m.head_conf.bias, true});
    if (m.cfg.variant == Variant::network1) {
        out.push_back({"head.offset.weight", &m.head_off.weights, true});
        out.push_back({"head.offset.bias", &m.head_off.bias, true});
        out.push_back({"head.embed.weight", &m.head_emb.weights, true});
        out.push_back({"head.embed.bias", &m.head_emb.bias, true});
    }
    return out;
}

template <class Real>
void zero_grads(ModelT<Real>& m) {
    for (auto& p : model_params(m))
        if (p.trainable) {
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
        }
}

template <class Real>
int64_t count_params(ModelT<Real>& m) {
    int64_t n = 0;
    for (auto& p : model_params(m))
        if (p.trainable) n += p.tensor->numel();
    return n;
}

// ---------------------------------------------------------------------------
// Forward pass with full caching for the reverse sweep.

template <class Real>
struct ForwardCacheT {
    TensorT<Real> encoder_input;  // post ROI/resize, what the stem consumed
    ConvBnReluCacheT<Real> stem;
    std::vector<ResBlockCacheT<Real>> blocks;
    std::array<TensorT<Real>, 4> stage_out;  // post-stage tensors as tapped (3: post attention+dropout)
    TensorT<Real> attn_in;
    AttentionCacheT<Real> attn;
    TensorT<Real> attn_out;     // pre-dropout
    TensorT<Real> stage4_raw;   // pre-dropout stage 4 output
    TensorT<Real> pooled_f4;    // temporal mean of stage 4
    PyramidLevelsT<Real> pyramid;
    ConvBnReluCacheT<Real> trunk;
    TensorT<Real> tc1_pre_bn, tc1_pre_relu, tc1_act;
    BnCacheT<Real> tc1_bn;
    TensorT<Real> tc2_pre_bn, tc2_pre_relu;
    BnCacheT<Real> tc2_bn;
    TensorT<Real> head_in;
    TensorT<Real> conf_logits, off_logits;
    DecoderOutputsT<Real> out;
    CoordTransform transform;
};

using ForwardCache = ForwardCacheT<float>;

// Four stage features: 1..3 keep the temporal extent, 4 is pooled to T=1.
// Network 1 applies self-attention (and stages 3/4 apply dropout) in place.
template <class Real>
std::array<TensorT<Real>, 4> encode(ModelT<Real>& m, const TensorT<Real>& clip, ForwardCacheT<Real>& c) {
    require(clip.shape.rank == 5 && clip.shape[1] == 3, "encode: clip must be [N,3,T,H,W]");
    require(clip.shape[3] == m.cfg.input_h && clip.shape[4] == m.cfg.input_w,
            str_printf("encode: clip is %lldx%lld but the configured input resolution is %dx%d",
                       static_cast<long long>(clip.shape[3]), static_cast<long long>(clip.shape[4]), m.cfg.input_h,
                       m.cfg.input_w));
    c.encoder_input = clip;
    c.blocks.assign(m.blocks.size(), ResBlockCacheT<Real>{});
    TensorT<Real> x = unit_forward(m.stem, clip, c.stem);
    const int bps = m.cfg.blocks_per_stage;
    for (int s = 0; s < 4; ++s) {
        for (int b = 0; b < bps; ++b) {
            const size_t i = static_cast<size_t>(s * bps + b);
            x = block_forward(m.blocks[i], x, c.blocks[i]);
        }
        if (s == 2 && m.cfg.attention_enabled) {
            c.attn_in = x;
            x = self_attention(x, m.attn, &c.attn);
            c.attn_out = x;
        }
        if (s == 2) {
            x = dropout(x, m.cfg.dropout_p, m.training, mix_seed(m.dropout_seed, 3));
        } else if (s == 3) {
            c.stage4_raw = x;
            x = dropout(x, m.cfg.dropout_p, m.training, mix_seed(m.dropout_seed, 4));
            c.pooled_f4 = temporal_mean(x);
            c.stage_out[3] = c.pooled_f4;
            break;
        }
        c.stage_out[static_cast<size_t>(s)] = x;
    }
    // stage_out[3] set above; [0..2] keep the temporal extent
    return c.stage_out;
}

template <class Real>
struct ForwardResultT {
    DecoderOutputsT<Real> out;
    CoordTransform transform;  // decoder-input pixel coords -> full-frame coords
};

template <class Real>
ForwardResultT<Real> model_forward(ModelT<Real>& m, const TensorT<Real>& clip, ForwardCacheT<Real>& c) {
    TensorT<Real> net_in = clip;
    c.transform = CoordTransform{};
    if (m.cfg.variant == Variant::network2) {
        auto [cropped, crop_tf] = roi_crop(clip, m.cfg.roi);
        const int64_t ch = cropped.shape[3], cw = cropped.shape[4];
        TensorT<Real> resized = resize_bilinear_volume(cropped, m.cfg.input_h, m.cfg.input_w);
        const double fx = static_cast<double>(cw) / m.cfg.input_w;
        const double fy = static_cast<double>(ch) / m.cfg.input_h;
        CoordTransform resize_tf{fx, 0.5 * fx - 0.5, fy, 0.5 * fy - 0.5};
        c.transform = compose(crop_tf, resize_tf);
        net_in = std::move(resized);
    }
    encode(m, net_in, c);
    if (m.uses_fpn_decoder()) {
        // temporally pooled taps feed the pyramid
        for (int i = 0; i < 3; ++i) c.pyramid.f[static_cast<size_t>(i)] = temporal_mean(c.stage_out[static_cast<size_t>(i)]);
        c.pyramid.f[3] = c.stage_out[3];
        c.pyramid.lateral = m.lateral;
        fpn_fuse(c.pyramid);
        c.head_in = unit_forward(m.trunk, c.pyramid.p[1], c.trunk);
    } else {
        c.tc1_pre_bn = transposed_conv3d_forward(c.pooled_f4, m.tc1);
        c.tc1_pre_relu = batch_norm_forward(c.tc1_pre_bn, m.tc1_bn, &c.tc1_bn);
        c.tc1_act = relu(c.tc1_pre_relu);
        c.tc2_pre_bn = transposed_conv3d_forward(c.tc1_act, m.tc2);
        c.tc2_pre_relu = batch_norm_forward(c.tc2_pre_bn, m.tc2_bn, &c.tc2_bn);
        c.head_in = relu(c.tc2_pre_relu);
    }
    c.conf_logits = conv3d_forward(c.head_in, m.head_conf);
    c.out.confidence = sigmoid(c.conf_logits);
    if (m.cfg.variant == Variant::network1) {
        c.off_logits = conv3d_forward(c.head_in, m.head_off);
        c.out.offsets = sigmoid(c.off_logits);
        c.out.embeddings = conv3d_forward(c.head_in, m.head_emb);
    }
    ForwardResultT<Real> r;
    r.out = c.out;
    r.transform = c.transform;
    return r;
}

// Convenience wrapper matching the one-shot calling convention.
template <class Real>
ForwardResultT<Real> model_forward(ModelT<Real>& m, const TensorT<Real>& clip) {
    ForwardCacheT<Real> cache;
    return model_forward(m, clip, cache);
}

// Reverse sweep. Upstream gradients are with respect to the *post-sigmoid*
// confidence/offset maps and the raw embedding map; empty tensors mean zero.
// Parameter gradients accumulate into each tensor's grad buffer; the return
// value is the gradient with respect to the encoder input.
template <class Real>
TensorT<Real> model_backward(ModelT<Real>& m, const ForwardCacheT<Real>& c, const TensorT<Real>& d_conf,
                             const TensorT<Real>& d_off, const TensorT<Real>& d_emb) {
    TensorT<Real> d_head_in(c.head_in.shape);
    if (!d_conf.empty()) {
        require(d_conf.shape == c.out.confidence.shape, "model_backward: d_conf shape mismatch");
        TensorT<Real> dl = sigmoid_backward(c.out.confidence, d_conf);
        Conv3dGradsT<Real> hg = conv3d_backward(c.head_in, m.head_conf, dl);
        accumulate_grad(m.head_conf.weights, hg.weights);
        accumulate_grad(m.head_conf.bias, hg.bias);
        add_inplace(d_head_in, hg.input);
    }
    if (!d_off.empty()) {
        require(m.cfg.variant == Variant::network1, "model_backward: offset gradients on a confidence-only model");
        TensorT<Real> dl = sigmoid_backward(c.out.offsets, d_off);
        Conv3dGradsT<Real> hg = conv3d_backward(c.head_in, m.head_off, dl);
        accumulate_grad(m.head_off.weights, hg.weights);
        accumulate_grad(m.head_off.bias, hg.bias);
        add_inplace(d_head_in, hg.input);
    }
    if (!d_emb.empty()) {
        require(m.cfg.variant == Variant::network1, "model_backward: embedding gradients on a confidence-only model");
        Conv3dGradsT<Real> hg = conv3d_backward(c.head_in, m.head_emb, d_emb);
        accumulate_grad(m.head_emb.weights, hg.weights);
        accumulate_grad(m.head_emb.bias, hg.bias);
        add_inplace(d_head_in, hg.input);
    }
    // decoder trunk
    TensorT<Real> d_s4d;  // grad of the post-dropout stage-4 tensor
    std::array<TensorT<Real>, 4> d_stage{};
    if (m.uses_fpn_decoder()) {
        TensorT<Real> dp2 = unit_backward(m.trunk, c.trunk, d_head_in);
        std::array<TensorT<Real>, 4> dp{};
        dp[1] = std::move(dp2);
        FpnGradsT<Real> fg = fpn_backward(c.pyramid, dp);
        for (int i = 0; i < 4; ++i) {
            auto& lat_grads = fg.lateral[static_cast<size_t>(i)];
            accumulate_grad(m.lateral[static_cast<size_t>(i)].weights, lat_grads.weights);
            if (m.lateral[static_cast<size_t>(i)].has_bias)
                accumulate_grad(m.lateral[static_cast<size_t>(i)].bias, lat_grads.bias);
        }
        for (int i = 0; i < 3; ++i)
            d_stage[static_cast<size_t>(i)] =
                temporal_mean_backward(fg.f[static_cast<size_t>(i)], c.stage_out[static_cast<size_t>(i)].shape[2]);
        d_s4d = temporal_mean_backward(fg.f[3], c.stage4_raw.shape[2]);
    } else {
        TensorT<Real> d = relu_backward(c.tc2_pre_relu, d_head_in);
        BnGradsT<Real> bg2 = batch_norm_backward(c.tc2_pre_bn, m.tc2_bn, c.tc2_bn, d);
        accumulate_grad(m.tc2_bn.gamma, bg2.gamma);
        accumulate_grad(m.tc2_bn.beta, bg2.beta);
        TransposedConv3dGradsT<Real> tg2 = transposed_conv3d_backward(c.tc1_act, m.tc2, bg2.input);
        accumulate_grad(m.tc2.weights, tg2.weights);
        d = relu_backward(c.tc1_pre_relu, tg2.input);
        BnGradsT<Real> bg1 = batch_norm_backward(c.tc1_pre_bn, m.tc1_bn, c.tc1_bn, d);
        accumulate_grad(m.tc1_bn.gamma, bg1.gamma);
        accumulate_grad(m.tc1_bn.beta, bg1.beta);
        TransposedConv3dGradsT<Real> tg1 = transposed_conv3d_backward(c.pooled_f4, m.tc1, bg1.input);
        accumulate_grad(m.tc1.weights, tg1.weights);
        d_s4d = temporal_mean_backward(tg1.input, c.stage4_raw.shape[2]);
    }
    // encoder stages in reverse
    const int bps = m.cfg.blocks_per_stage;
    TensorT<Real> d_x = dropout_backward(d_s4d, m.cfg.dropout_p, m.training, mix_seed(m.dropout_seed, 4));
    for (int b = bps - 1; b >= 0; --b) {
        const size_t i = static_cast<size_t>(3 * bps + b);
        d_x = block_backward(m.blocks[i], c.blocks[i], d_x);
    }
    // d_x is now the gradient at stage-3's tapped (post attention+dropout) output
    if (!d_stage[2].empty()) add_inplace(d_x, d_stage[2]);
    d_x = dropout_backward(d_x, m.cfg.dropout_p, m.training, mix_seed(m.dropout_seed, 3));
    if (m.cfg.attention_enabled) {
        AttentionGradsT<Real> ag = self_attention_backward(c.attn_in, m.attn, d_x, &c.attn);
        accumulate_grad(m.attn.wq, ag.wq);
        accumulate_grad(m.attn.wk, ag.wk);
        accumulate_grad(m.attn.wv, ag.wv);
        accumulate_grad(m.attn.gamma, ag.gamma);
        d_x = std::move(ag.input);
    }
    for (int s = 2; s >= 0; --s) {
        for (int b = bps - 1; b >= 0; --b) {
            const size_t i = static_cast<size_t>(s * bps + b);
            d_x = block_backward(m.blocks[i], c.blocks[i], d_x);
        }
        if (s > 0 && !d_stage[static_cast<size_t>(s - 1)].empty()) add_inplace(d_x, d_stage[static_cast<size_t>(s - 1)]);
    }
    return unit_backward(m.stem, c.stem, d_x);
}

// ---------------------------------------------------------------------------
// Cost accounting.

template <class Real>
int64_t unit_param_count(const ConvBnReluT<Real>& u) {
    int64_t n = conv3d_param_count(u.conv) + 2 * u.bn.gamma.numel();
    if (u.factorized) n += conv3d_param_count(u.conv_t) + 2 * u.bn_mid.gamma.numel();
    return n;
}

template <class Real>
int64_t unit_mac_count(const ConvBnReluT<Real>& u, const Shape& in, Shape& out) {
    int64_t n = conv3d_mac_count(u.conv, in);
    Shape mid = conv3d_output_shape(in, u.conv);
    if (u.factorized) {
        n += conv3d_mac_count(u.conv_t, mid);
        out = conv3d_output_shape(mid, u.conv_t);
    } else {
        out = mid;
    }
    return n;
}

template <class Real>
int64_t count_macs(ModelT<Real>& m, const Shape& input_shape) {
    require(input_shape.rank == 5, "count_macs: input shape must be rank-5");
    Shape x = input_shape;
    if (m.cfg.variant == Variant::network2) x = Shape{x[0], x[1], x[2], m.cfg.input_h, m.cfg.input_w};
    int64_t total = 0;
    Shape next;
    total += unit_mac_count(m.stem, x, next);
    x = next;
    const int bps = m.cfg.blocks_per_stage;
    for (int s = 0; s < 4; ++s) {
        for (int b = 0; b < bps; ++b) {
            auto& blk = m.blocks[static_cast<size_t>(s * bps + b)];
            total += unit_mac_count(blk.unit1, x, next);
            Shape after1 = next;
            total += unit_mac_count(blk.unit2, after1, next);
            if (blk.has_projection) total += conv3d_mac_count(blk.proj, x);
            x = next;
        }
        if (s == 2 && m.cfg.attention_enabled) total += attention_mac_count(m.attn, x);
    }
    Shape pooled{x[0], x[1], 1, x[3], x[4]};
    if (m.uses_fpn_decoder()) {
        // taps at strides 2..16; reconstruct their shapes from the deepest
        Shape tap = pooled;
        for (int i = 3; i >= 0; --i) {
            total += conv3d_mac_count(m.lateral[static_cast<size_t>(i)], tap);
            tap = Shape{tap[0], m.cfg.stage_channels[static_cast<size_t>(i) == 0 ? 0 : static_cast<size_t>(i - 1)],
                        1, tap[3] * 2, tap[4] * 2};
        }
        Shape p2{pooled[0], m.cfg.fpn_width, 1, pooled[3] * 4, pooled[4] * 4};
        total += unit_mac_count(m.trunk, p2, next);
        x = next;
    } else {
        total += transposed_conv3d_mac_count(m.tc1, pooled);
        Shape t1 = transposed_conv3d_output_shape(pooled, m.tc1);
        total += transposed_conv3d_mac_count(m.tc2, t1);
        x = transposed_conv3d_output_shape(t1, m.tc2);
    }
    total += conv3d_mac_count(m.head_conf, x);
    if (m.cfg.variant == Variant::network1) {
        total += conv3d_mac_count(m.head_off, x);
        total += conv3d_mac_count(m.head_emb, x);
    }
    return total;
}

}  // namespace lanedet
