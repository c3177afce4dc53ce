#pragma once

#include <algorithm>
#include <cstdint>

#include "lanedet/tensor.hpp"

namespace lanedet {

// 3D convolution over (T, H, W) volumes, NCTHW layout.
//
// Full mode holds one kernel [out, in, kt, kh, kw]. Factorized mode splits
// it into a spatial pass [mid, in, 1, kh, kw] followed by a temporal pass
// [out, mid, kt, 1, 1]; both passes stay linear, so the op as a whole is a
// linear map and the usual conv identities hold. Kernels with kt == 1 are
// stored full: there is no temporal pass to split off.
template <class Real>
struct Conv3dSpecT {
    int in_channels = 0;
    int out_channels = 0;
    int kt = 1, kh = 1, kw = 1;
    int stride_t = 1, stride_h = 1, stride_w = 1;
    int pad_t = 0, pad_h = 0, pad_w = 0;
    bool factorized = false;
    int mid_channels = 0;   // factorized only
    bool has_bias = true;   // false leaves `bias` empty (conv feeding a batch norm)

    TensorT<Real> weights;     // full: [out, in, kt, kh, kw]
    TensorT<Real> w_spatial;   // factorized: [mid, in, 1, kh, kw]
    TensorT<Real> w_temporal;  // factorized: [out, mid, kt, 1, 1]
    TensorT<Real> bias;        // [out]
};

using Conv3dSpec = Conv3dSpecT<float>;

template <class Real>
Conv3dSpecT<Real> make_conv3d_spec(int in_c, int out_c, int kt, int kh, int kw, int st, int sh, int sw,
                                   int pt, int ph, int pw, bool factorized, Rng* rng = nullptr) {
    require(in_c >= 1 && out_c >= 1, "conv3d: channel counts must be >= 1");
    require(kt >= 1 && kh >= 1 && kw >= 1, "conv3d: kernel extents must be >= 1");
    require(st >= 1 && sh >= 1 && sw >= 1, "conv3d: strides must be >= 1");
    require(pt >= 0 && ph >= 0 && pw >= 0, "conv3d: padding must be >= 0");
    Conv3dSpecT<Real> s;
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kt = kt;
    s.kh = kh;
    s.kw = kw;
    s.stride_t = st;
    s.stride_h = sh;
    s.stride_w = sw;
    s.pad_t = pt;
    s.pad_h = ph;
    s.pad_w = pw;
    s.factorized = factorized && kt > 1;
    s.bias = TensorT<Real>(Shape{out_c});
    auto he = [&](TensorT<Real>& t, int fan_in) {
        if (!rng) return;
        Real sd = static_cast<Real>(std::sqrt(2.0 / fan_in));
        for (auto& v : t.data) v = static_cast<Real>(rng->normal(0.0f, static_cast<float>(sd)));
    };
    if (s.factorized) {
        s.mid_channels = std::max(1, (out_c + 1) / 2);
        s.w_spatial = TensorT<Real>(Shape{s.mid_channels, in_c, 1, kh, kw});
        s.w_temporal = TensorT<Real>(Shape{out_c, s.mid_channels, kt, 1, 1});
        he(s.w_spatial, in_c * kh * kw);
        he(s.w_temporal, s.mid_channels * kt);
    } else {
        s.weights = TensorT<Real>(Shape{out_c, in_c, kt, kh, kw});
        he(s.weights, in_c * kt * kh * kw);
    }
    return s;
}

inline int64_t conv_out_extent(int64_t in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

template <class Real>
Shape conv3d_output_shape(const Shape& in, const Conv3dSpecT<Real>& s) {
    require(in.rank == 5, "conv3d: input must be rank-5 (N,C,T,H,W), got " + in.to_string());
    require(in.d[1] == s.in_channels,
            str_printf("conv3d: input has %lld channels, spec expects %d", static_cast<long long>(in.d[1]), s.in_channels));
    require(in.d[2] + 2 * s.pad_t >= s.kt && in.d[3] + 2 * s.pad_h >= s.kh && in.d[4] + 2 * s.pad_w >= s.kw,
            "conv3d: padded input smaller than kernel for input " + in.to_string());
    return Shape{in.d[0], s.out_channels, conv_out_extent(in.d[2], s.pad_t, s.kt, s.stride_t),
                 conv_out_extent(in.d[3], s.pad_h, s.kh, s.stride_h),
                 conv_out_extent(in.d[4], s.pad_w, s.kw, s.stride_w)};
}

namespace detail {

struct ConvGeom {
    int kt, kh, kw, st, sh, sw, pt, ph, pw;
};

// First/last output index whose sampled input index stays in [0, in_ext).
// `range_hi` may return -1 (empty range), so loops must use <=.
inline int64_t range_lo(int64_t pad, int64_t k_off, int64_t stride) {
    const int64_t x = pad - k_off;
    return x <= 0 ? 0 : (x + stride - 1) / stride;
}
inline int64_t range_hi(int64_t in_ext, int64_t pad, int64_t k_off, int64_t stride, int64_t out_ext) {
    const int64_t x = in_ext - 1 + pad - k_off;
    return x < 0 ? -1 : std::min(out_ext - 1, x / stride);
}

// y[n,o,to,ho,wo] = sum_{i,a,b,c} W[o,i,a,b,c] x[n,i,to*st+a-pt,...] (+ bias)
template <class Real>
void conv_core_forward(const TensorT<Real>& x, const TensorT<Real>& W, const TensorT<Real>* bias, const ConvGeom& g,
                       TensorT<Real>& y) {
    const int64_t N = x.shape[0], I = x.shape[1], Ti = x.shape[2], Hi = x.shape[3], Wi = x.shape[4];
    const int64_t O = y.shape[1], To = y.shape[2], Ho = y.shape[3], Wo = y.shape[4];
    const Real* xp = x.data.data();
    const Real* wp = W.data.data();
    Real* yp = y.data.data();
    const int64_t x_cs = Ti * Hi * Wi, x_ts = Hi * Wi;
    const int64_t y_cs = To * Ho * Wo, y_ts = Ho * Wo;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t o = 0; o < O; ++o) {
            Real* ybase = yp + (n * O + o) * y_cs;
            const Real b = bias ? bias->data[static_cast<size_t>(o)] : Real(0);
            std::fill(ybase, ybase + y_cs, b);
            for (int64_t i = 0; i < I; ++i) {
                const Real* xbase = xp + (n * I + i) * x_cs;
                const Real* wbase = wp + (o * I + i) * (g.kt * g.kh * g.kw);
                for (int a = 0; a < g.kt; ++a) {
                    const int64_t to_lo = range_lo(g.pt, a, g.st);
                    const int64_t to_hi = range_hi(Ti, g.pt, a, g.st, To);
                    for (int b2 = 0; b2 < g.kh; ++b2) {
                        const int64_t ho_lo = range_lo(g.ph, b2, g.sh);
                        const int64_t ho_hi = range_hi(Hi, g.ph, b2, g.sh, Ho);
                        for (int c = 0; c < g.kw; ++c) {
                            const Real w = wbase[(a * g.kh + b2) * g.kw + c];
                            if (w == Real(0)) continue;
                            const int64_t wo_lo = range_lo(g.pw, c, g.sw);
                            const int64_t wo_hi = range_hi(Wi, g.pw, c, g.sw, Wo);
                            for (int64_t to = to_lo; to <= to_hi; ++to) {
                                const int64_t ti = to * g.st + a - g.pt;
                                for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                                    const int64_t hi = ho * g.sh + b2 - g.ph;
                                    const Real* xrow = xbase + ti * x_ts + hi * Wi - g.pw + c;
                                    Real* yrow = ybase + to * y_ts + ho * Wo;
                                    if (g.sw == 1) {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) yrow[wo] += w * xrow[wo];
                                    } else {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) yrow[wo] += w * xrow[wo * g.sw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// gx[n,i,ti,hi,wi] += sum W[o,i,a,b,c] u[n,o,to,ho,wo]  (adjoint of the forward map)
template <class Real>
void conv_core_input_grad(const TensorT<Real>& u, const TensorT<Real>& W, const ConvGeom& g, TensorT<Real>& gx) {
    const int64_t N = gx.shape[0], I = gx.shape[1], Ti = gx.shape[2], Hi = gx.shape[3], Wi = gx.shape[4];
    const int64_t O = u.shape[1], To = u.shape[2], Ho = u.shape[3], Wo = u.shape[4];
    const Real* up = u.data.data();
    const Real* wp = W.data.data();
    Real* gp = gx.data.data();
    const int64_t x_cs = Ti * Hi * Wi, x_ts = Hi * Wi;
    const int64_t u_cs = To * Ho * Wo, u_ts = Ho * Wo;
    std::fill(gx.data.begin(), gx.data.end(), Real(0));
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t o = 0; o < O; ++o) {
            const Real* ubase = up + (n * O + o) * u_cs;
            for (int64_t i = 0; i < I; ++i) {
                Real* gbase = gp + (n * I + i) * x_cs;
                const Real* wbase = wp + (o * I + i) * (g.kt * g.kh * g.kw);
                for (int a = 0; a < g.kt; ++a) {
                    const int64_t to_lo = range_lo(g.pt, a, g.st);
                    const int64_t to_hi = range_hi(Ti, g.pt, a, g.st, To);
                    for (int b2 = 0; b2 < g.kh; ++b2) {
                        const int64_t ho_lo = range_lo(g.ph, b2, g.sh);
                        const int64_t ho_hi = range_hi(Hi, g.ph, b2, g.sh, Ho);
                        for (int c = 0; c < g.kw; ++c) {
                            const Real w = wbase[(a * g.kh + b2) * g.kw + c];
                            if (w == Real(0)) continue;
                            const int64_t wo_lo = range_lo(g.pw, c, g.sw);
                            const int64_t wo_hi = range_hi(Wi, g.pw, c, g.sw, Wo);
                            for (int64_t to = to_lo; to <= to_hi; ++to) {
                                const int64_t ti = to * g.st + a - g.pt;
                                for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                                    const int64_t hi = ho * g.sh + b2 - g.ph;
                                    Real* grow = gbase + ti * x_ts + hi * Wi - g.pw + c;
                                    const Real* urow = ubase + to * u_ts + ho * Wo;
                                    if (g.sw == 1) {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) grow[wo] += w * urow[wo];
                                    } else {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) grow[wo * g.sw] += w * urow[wo];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// gW[o,i,a,b,c] = sum_{n,to,ho,wo} u[n,o,to,ho,wo] x[n,i,to*st+a-pt,...]
template <class Real>
void conv_core_weight_grad(const TensorT<Real>& x, const TensorT<Real>& u, const ConvGeom& g, TensorT<Real>& gW) {
    const int64_t N = x.shape[0], I = x.shape[1], Ti = x.shape[2], Hi = x.shape[3], Wi = x.shape[4];
    const int64_t O = u.shape[1], To = u.shape[2], Ho = u.shape[3], Wo = u.shape[4];
    const Real* xp = x.data.data();
    const Real* up = u.data.data();
    Real* gp = gW.data.data();
    const int64_t x_cs = Ti * Hi * Wi, x_ts = Hi * Wi;
    const int64_t u_cs = To * Ho * Wo, u_ts = Ho * Wo;
    std::fill(gW.data.begin(), gW.data.end(), Real(0));
    for (int64_t o = 0; o < O; ++o) {
        for (int64_t i = 0; i < I; ++i) {
            Real* gbase = gp + (o * I + i) * (g.kt * g.kh * g.kw);
            for (int a = 0; a < g.kt; ++a) {
                const int64_t to_lo = range_lo(g.pt, a, g.st);
                const int64_t to_hi = range_hi(Ti, g.pt, a, g.st, To);
                for (int b2 = 0; b2 < g.kh; ++b2) {
                    const int64_t ho_lo = range_lo(g.ph, b2, g.sh);
                    const int64_t ho_hi = range_hi(Hi, g.ph, b2, g.sh, Ho);
                    for (int c = 0; c < g.kw; ++c) {
                        const int64_t wo_lo = range_lo(g.pw, c, g.sw);
                        const int64_t wo_hi = range_hi(Wi, g.pw, c, g.sw, Wo);
                        Real acc = 0;
                        for (int64_t n = 0; n < N; ++n) {
                            const Real* xbase = xp + (n * I + i) * x_cs;
                            const Real* ubase = up + (n * O + o) * u_cs;
                            for (int64_t to = to_lo; to <= to_hi; ++to) {
                                const int64_t ti = to * g.st + a - g.pt;
                                for (int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                                    const int64_t hi = ho * g.sh + b2 - g.ph;
                                    const Real* xrow = xbase + ti * x_ts + hi * Wi - g.pw + c;
                                    const Real* urow = ubase + to * u_ts + ho * Wo;
                                    if (g.sw == 1) {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) acc += urow[wo] * xrow[wo];
                                    } else {
                                        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo) acc += urow[wo] * xrow[wo * g.sw];
                                    }
                                }
                            }
                        }
                        gbase[(a * g.kh + b2) * g.kw + c] = acc;
                    }
                }
            }
        }
    }
}

template <class Real>
ConvGeom spatial_geom(const Conv3dSpecT<Real>& s) {
    return ConvGeom{1, s.kh, s.kw, 1, s.stride_h, s.stride_w, 0, s.pad_h, s.pad_w};
}
template <class Real>
ConvGeom temporal_geom(const Conv3dSpecT<Real>& s) {
    return ConvGeom{s.kt, 1, 1, s.stride_t, 1, 1, s.pad_t, 0, 0};
}
template <class Real>
ConvGeom full_geom(const Conv3dSpecT<Real>& s) {
    return ConvGeom{s.kt, s.kh, s.kw, s.stride_t, s.stride_h, s.stride_w, s.pad_t, s.pad_h, s.pad_w};
}

}  // namespace detail

// Forward pass. Factorized mode runs the spatial pass, then the temporal
// pass; `mid` (when non-null) receives the intermediate activation so the
// backward pass can reuse it.
template <class Real>
TensorT<Real> conv3d_forward(const TensorT<Real>& input, const Conv3dSpecT<Real>& spec,
                             TensorT<Real>* mid = nullptr) {
    Shape out_shape = conv3d_output_shape(input.shape, spec);
    TensorT<Real> out(out_shape);
    const TensorT<Real>* bias = spec.has_bias ? &spec.bias : nullptr;
    if (!spec.factorized) {
        detail::conv_core_forward(input, spec.weights, bias, detail::full_geom(spec), out);
        return out;
    }
    Shape mid_shape{input.shape[0], spec.mid_channels, input.shape[2], out_shape[3], out_shape[4]};
    TensorT<Real> tmp(mid_shape);
    detail::conv_core_forward(input, spec.w_spatial, static_cast<const TensorT<Real>*>(nullptr),
                              detail::spatial_geom(spec), tmp);
    detail::conv_core_forward(tmp, spec.w_temporal, bias, detail::temporal_geom(spec), out);
    if (mid) *mid = std::move(tmp);
    return out;
}

template <class Real>
struct Conv3dGradsT {
    TensorT<Real> input;       // dL/dx
    TensorT<Real> weights;     // dL/dW (full mode)
    TensorT<Real> w_spatial;   // factorized mode
    TensorT<Real> w_temporal;  // factorized mode
    TensorT<Real> bias;        // dL/db
};

// `mid` may pass the intermediate saved by the forward pass; it is
// recomputed when absent.
template <class Real>
Conv3dGradsT<Real> conv3d_backward(const TensorT<Real>& input, const Conv3dSpecT<Real>& spec,
                                   const TensorT<Real>& upstream, const TensorT<Real>* mid = nullptr) {
    Shape out_shape = conv3d_output_shape(input.shape, spec);
    require(upstream.shape == out_shape,
            "conv3d_backward: upstream shape " + upstream.shape.to_string() + " != output shape " + out_shape.to_string());
    Conv3dGradsT<Real> g;
    if (spec.has_bias) {
        g.bias = TensorT<Real>(Shape{spec.out_channels});
        const int64_t per = out_shape[2] * out_shape[3] * out_shape[4];
        for (int64_t n = 0; n < out_shape[0]; ++n)
            for (int64_t o = 0; o < spec.out_channels; ++o) {
                const Real* u = upstream.data.data() + (n * spec.out_channels + o) * per;
                Real acc = 0;
                for (int64_t k = 0; k < per; ++k) acc += u[k];
                g.bias.data[static_cast<size_t>(o)] += acc;
            }
    }
    if (!spec.factorized) {
        g.input = TensorT<Real>(input.shape);
        g.weights = TensorT<Real>(spec.weights.shape);
        detail::conv_core_input_grad(upstream, spec.weights, detail::full_geom(spec), g.input);
        detail::conv_core_weight_grad(input, upstream, detail::full_geom(spec), g.weights);
        return g;
    }
    TensorT<Real> tmp;
    if (!mid) {
        conv3d_forward(input, spec, &tmp);
        mid = &tmp;
    }
    // temporal pass grads
    TensorT<Real> g_mid(mid->shape);
    g.w_temporal = TensorT<Real>(spec.w_temporal.shape);
    detail::conv_core_input_grad(upstream, spec.w_temporal, detail::temporal_geom(spec), g_mid);
    detail::conv_core_weight_grad(*mid, upstream, detail::temporal_geom(spec), g.w_temporal);
    // spatial pass grads
    g.input = TensorT<Real>(input.shape);
    g.w_spatial = TensorT<Real>(spec.w_spatial.shape);
    detail::conv_core_input_grad(g_mid, spec.w_spatial, detail::spatial_geom(spec), g.input);
    detail::conv_core_weight_grad(input, g_mid, detail::spatial_geom(spec), g.w_spatial);
    return g;
}

template <class Real>
int64_t conv3d_param_count(const Conv3dSpecT<Real>& s, bool include_bias = true) {
    int64_t n = include_bias && s.has_bias ? s.bias.numel() : 0;
    if (s.factorized) return n + s.w_spatial.numel() + s.w_temporal.numel();
    return n + s.weights.numel();
}

// Multiply-accumulate count of a forward pass on `in`.
template <class Real>
int64_t conv3d_mac_count(const Conv3dSpecT<Real>& s, const Shape& in) {
    Shape out = conv3d_output_shape(in, s);
    const int64_t out_vox = out[0] * out[2] * out[3] * out[4];
    if (!s.factorized) return out_vox * s.out_channels * s.in_channels * s.kt * s.kh * s.kw;
    const int64_t mid_vox = out[0] * in[2] * out[3] * out[4];  // temporal extent not yet reduced
    return mid_vox * s.mid_channels * s.in_channels * s.kh * s.kw +
           out_vox * s.out_channels * s.mid_channels * s.kt;
}

// ---------------------------------------------------------------------------
// Transposed convolution. Weight layout [in, out, kt, kh, kw]: running a
// transposed conv with a forward conv's kernel is its exact adjoint, i.e.
// <conv(x), y> == <x, transposed_conv(y)>.
template <class Real>
struct TransposedConv3dSpecT {
    int in_channels = 0;
    int out_channels = 0;
    int kt = 1, kh = 1, kw = 1;
    int stride_t = 1, stride_h = 1, stride_w = 1;
    int pad_t = 0, pad_h = 0, pad_w = 0;
    bool has_bias = true;
    TensorT<Real> weights;  // [in, out, kt, kh, kw]
    TensorT<Real> bias;     // [out]
};

using TransposedConv3dSpec = TransposedConv3dSpecT<float>;

template <class Real>
TransposedConv3dSpecT<Real> make_transposed_conv3d_spec(int in_c, int out_c, int kt, int kh, int kw, int st, int sh,
                                                        int sw, int pt, int ph, int pw, Rng* rng = nullptr) {
    require(in_c >= 1 && out_c >= 1 && kt >= 1 && kh >= 1 && kw >= 1, "transposed_conv3d: bad kernel/channels");
    require(st >= 1 && sh >= 1 && sw >= 1 && pt >= 0 && ph >= 0 && pw >= 0, "transposed_conv3d: bad stride/pad");
    TransposedConv3dSpecT<Real> s;
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kt = kt;
    s.kh = kh;
    s.kw = kw;
    s.stride_t = st;
    s.stride_h = sh;
    s.stride_w = sw;
    s.pad_t = pt;
    s.pad_h = ph;
    s.pad_w = pw;
    s.weights = TensorT<Real>(Shape{in_c, out_c, kt, kh, kw});
    s.bias = TensorT<Real>(Shape{out_c});
    if (rng) {
        Real sd = static_cast<Real>(std::sqrt(2.0 / (in_c * kt * kh * kw)));
        for (auto& v : s.weights.data) v = static_cast<Real>(rng->normal(0.0f, static_cast<float>(sd)));
    }
    return s;
}

template <class Real>
detail::ConvGeom tconv_geom(const TransposedConv3dSpecT<Real>& s) {
    return detail::ConvGeom{s.kt, s.kh, s.kw, s.stride_t, s.stride_h, s.stride_w, s.pad_t, s.pad_h, s.pad_w};
}

template <class Real>
Shape transposed_conv3d_output_shape(const Shape& in, const TransposedConv3dSpecT<Real>& s) {
    require(in.rank == 5, "transposed_conv3d: input must be rank-5");
    require(in.d[1] == s.in_channels, "transposed_conv3d: channel mismatch");
    auto ext = [](int64_t n, int stride, int pad, int k) { return (n - 1) * stride - 2 * pad + k; };
    Shape out{in.d[0], s.out_channels, ext(in.d[2], s.stride_t, s.pad_t, s.kt), ext(in.d[3], s.stride_h, s.pad_h, s.kh),
              ext(in.d[4], s.stride_w, s.pad_w, s.kw)};
    require(out.d[2] >= 1 && out.d[3] >= 1 && out.d[4] >= 1, "transposed_conv3d: empty output for input " + in.to_string());
    return out;
}

template <class Real>
TensorT<Real> transposed_conv3d_forward(const TensorT<Real>& input, const TransposedConv3dSpecT<Real>& spec) {
    Shape out_shape = transposed_conv3d_output_shape(input.shape, spec);
    TensorT<Real> out(out_shape);
    detail::conv_core_input_grad(input, spec.weights, tconv_geom(spec), out);
    if (spec.has_bias) {
        const int64_t per = out_shape[2] * out_shape[3] * out_shape[4];
        for (int64_t n = 0; n < out_shape[0]; ++n)
            for (int64_t o = 0; o < spec.out_channels; ++o) {
                Real* p = out.data.data() + (n * spec.out_channels + o) * per;
                const Real b = spec.bias.data[static_cast<size_t>(o)];
                for (int64_t k = 0; k < per; ++k) p[k] += b;
            }
    }
    return out;
}

template <class Real>
struct TransposedConv3dGradsT {
    TensorT<Real> input;
    TensorT<Real> weights;
    TensorT<Real> bias;
};

template <class Real>
TransposedConv3dGradsT<Real> transposed_conv3d_backward(const TensorT<Real>& input,
                                                        const TransposedConv3dSpecT<Real>& spec,
                                                        const TensorT<Real>& upstream) {
    Shape out_shape = transposed_conv3d_output_shape(input.shape, spec);
    require(upstream.shape == out_shape, "transposed_conv3d_backward: upstream shape mismatch");
    TransposedConv3dGradsT<Real> g;
    g.input = TensorT<Real>(input.shape);
    g.weights = TensorT<Real>(spec.weights.shape);
    detail::conv_core_forward(upstream, spec.weights, static_cast<const TensorT<Real>*>(nullptr), tconv_geom(spec),
                              g.input);
    detail::conv_core_weight_grad(upstream, input, tconv_geom(spec), g.weights);
    if (spec.has_bias) {
        g.bias = TensorT<Real>(Shape{spec.out_channels});
        const int64_t per = out_shape[2] * out_shape[3] * out_shape[4];
        for (int64_t n = 0; n < out_shape[0]; ++n)
            for (int64_t o = 0; o < spec.out_channels; ++o) {
                const Real* u = upstream.data.data() + (n * spec.out_channels + o) * per;
                Real acc = 0;
                for (int64_t k = 0; k < per; ++k) acc += u[k];
                g.bias.data[static_cast<size_t>(o)] += acc;
            }
    }
    return g;
}

template <class Real>
int64_t transposed_conv3d_param_count(const TransposedConv3dSpecT<Real>& s) {
    return s.weights.numel() + (s.has_bias ? s.bias.numel() : 0);
}

template <class Real>
int64_t transposed_conv3d_mac_count(const TransposedConv3dSpecT<Real>& s, const Shape& in) {
    return in[0] * in[2] * in[3] * in[4] * s.in_channels * s.out_channels * s.kt * s.kh * s.kw;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour upsampling by integer factors along (T, H, W).
template <class Real>
TensorT<Real> upsample_nearest(const TensorT<Real>& input, int ft, int fh, int fw) {
    require(input.shape.rank == 5, "upsample_nearest: input must be rank-5");
    require(ft >= 1 && fh >= 1 && fw >= 1, "upsample_nearest: factors must be >= 1");
    Shape out_shape{input.shape[0], input.shape[1], input.shape[2] * ft, input.shape[3] * fh, input.shape[4] * fw};
    TensorT<Real> out(out_shape);
    const int64_t N = input.shape[0], C = input.shape[1], T = input.shape[2], H = input.shape[3], W = input.shape[4];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < T * ft; ++t)
                for (int64_t h = 0; h < H * fh; ++h) {
                    const Real* src = &input.data[static_cast<size_t>((((n * C + c) * T + t / ft) * H + h / fh) * W)];
                    Real* dst = &out.data[static_cast<size_t>((((n * C + c) * (T * ft) + t) * (H * fh) + h) * (W * fw))];
                    for (int64_t w = 0; w < W * fw; ++w) dst[w] = src[w / fw];
                }
    return out;
}

template <class Real>
TensorT<Real> upsample_nearest_backward(const TensorT<Real>& upstream, const Shape& in_shape, int ft, int fh, int fw) {
    TensorT<Real> g(in_shape);
    const int64_t N = in_shape[0], C = in_shape[1], T = in_shape[2], H = in_shape[3], W = in_shape[4];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < T * ft; ++t)
                for (int64_t h = 0; h < H * fh; ++h) {
                    const Real* src =
                        &upstream.data[static_cast<size_t>((((n * C + c) * (T * ft) + t) * (H * fh) + h) * (W * fw))];
                    Real* dst = &g.data[static_cast<size_t>((((n * C + c) * T + t / ft) * H + h / fh) * W)];
                    for (int64_t w = 0; w < W * fw; ++w) dst[w / fw] += src[w];
                }
    return g;
}

}  // namespace lanedet
