#pragma once

#include <cmath>

#include "lanedet/tensor.hpp"

namespace lanedet {

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis of an NCTHW tensor.

enum class BnMode { train, inference };

template <class Real>
struct BatchNormStateT {
    TensorT<Real> gamma;         // [C]
    TensorT<Real> beta;          // [C]
    TensorT<Real> running_mean;  // [C]
    TensorT<Real> running_var;   // [C]
    Real eps = static_cast<Real>(1e-5);
    Real momentum = static_cast<Real>(0.1);
    BnMode mode = BnMode::train;
};

using BatchNormState = BatchNormStateT<float>;

template <class Real>
BatchNormStateT<Real> make_batch_norm_state(int channels) {
    require(channels >= 1, "batch_norm: channels must be >= 1");
    BatchNormStateT<Real> s;
    s.gamma = TensorT<Real>(Shape{channels}, Real(1));
    s.beta = TensorT<Real>(Shape{channels});
    s.running_mean = TensorT<Real>(Shape{channels});
    s.running_var = TensorT<Real>(Shape{channels}, Real(1));
    return s;
}

// Per-channel batch statistics saved by the forward pass for backward reuse.
template <class Real>
struct BnCacheT {
    TensorT<Real> mean;     // [C] statistics actually used for normalization
    TensorT<Real> inv_std;  // [C] 1/sqrt(var + eps)
    bool batch_stats = true;
};

template <class Real>
TensorT<Real> batch_norm_forward(const TensorT<Real>& input, BatchNormStateT<Real>& state,
                                 BnCacheT<Real>* cache = nullptr) {
    require(input.shape.rank == 5, "batch_norm: input must be rank-5 (N,C,T,H,W)");
    const int64_t N = input.shape[0], C = input.shape[1];
    const int64_t per = input.shape[2] * input.shape[3] * input.shape[4];
    require(C == state.gamma.numel(),
            str_printf("batch_norm: input has %lld channels, state expects %lld", static_cast<long long>(C),
                       static_cast<long long>(state.gamma.numel())));
    const int64_t M = N * per;  // samples pooled per channel
    TensorT<Real> mean(Shape{C}), var(Shape{C});
    const bool use_batch = state.mode == BnMode::train;
    if (use_batch) {
        require(M >= 1, "batch_norm: empty input");
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (int64_t n = 0; n < N; ++n) {
                const Real* p = input.data.data() + (n * C + c) * per;
                for (int64_t k = 0; k < per; ++k) acc += p[k];
            }
            const double mu = acc / static_cast<double>(M);
            double vacc = 0;
            for (int64_t n = 0; n < N; ++n) {
                const Real* p = input.data.data() + (n * C + c) * per;
                for (int64_t k = 0; k < per; ++k) {
                    const double d = p[k] - mu;
                    vacc += d * d;
                }
            }
            mean.data[static_cast<size_t>(c)] = static_cast<Real>(mu);
            var.data[static_cast<size_t>(c)] = static_cast<Real>(vacc / static_cast<double>(M));
        }
        // running stats blend toward the batch statistics (unbiased variance)
        const Real m = state.momentum;
        const Real unbias = M > 1 ? static_cast<Real>(M) / static_cast<Real>(M - 1) : Real(1);
        for (int64_t c = 0; c < C; ++c) {
            const size_t ci = static_cast<size_t>(c);
            state.running_mean.data[ci] = (Real(1) - m) * state.running_mean.data[ci] + m * mean.data[ci];
            state.running_var.data[ci] = (Real(1) - m) * state.running_var.data[ci] + m * var.data[ci] * unbias;
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    TensorT<Real> out(input.shape);
    TensorT<Real> inv_std(Shape{C});
    for (int64_t c = 0; c < C; ++c)
        inv_std.data[static_cast<size_t>(c)] =
            Real(1) / std::sqrt(var.data[static_cast<size_t>(c)] + state.eps);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const size_t ci = static_cast<size_t>(c);
            const Real mu = mean.data[ci], is = inv_std.data[ci];
            const Real g = state.gamma.data[ci], b = state.beta.data[ci];
            const Real* src = input.data.data() + (n * C + c) * per;
            Real* dst = out.data.data() + (n * C + c) * per;
            for (int64_t k = 0; k < per; ++k) dst[k] = g * (src[k] - mu) * is + b;
        }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->batch_stats = use_batch;
    }
    return out;
}

// Spec-facing convenience: normalize without keeping a backward cache.
template <class Real>
TensorT<Real> batch_norm(const TensorT<Real>& input, BatchNormStateT<Real>& state) {
    return batch_norm_forward(input, state);
}

template <class Real>
struct BnGradsT {
    TensorT<Real> input;
    TensorT<Real> gamma;
    TensorT<Real> beta;
};

template <class Real>
BnGradsT<Real> batch_norm_backward(const TensorT<Real>& input, const BatchNormStateT<Real>& state,
                                   const BnCacheT<Real>& cache, const TensorT<Real>& upstream) {
    require(upstream.shape == input.shape, "batch_norm_backward: upstream shape mismatch");
    const int64_t N = input.shape[0], C = input.shape[1];
    const int64_t per = input.shape[2] * input.shape[3] * input.shape[4];
    const int64_t M = N * per;
    BnGradsT<Real> g;
    g.input = TensorT<Real>(input.shape);
    g.gamma = TensorT<Real>(Shape{C});
    g.beta = TensorT<Real>(Shape{C});
    for (int64_t c = 0; c < C; ++c) {
        const size_t ci = static_cast<size_t>(c);
        const Real mu = cache.mean.data[ci], is = cache.inv_std.data[ci];
        const Real gamma = state.gamma.data[ci];
        double sum_up = 0, sum_up_xhat = 0;
        for (int64_t n = 0; n < N; ++n) {
            const Real* x = input.data.data() + (n * C + c) * per;
            const Real* u = upstream.data.data() + (n * C + c) * per;
            for (int64_t k = 0; k < per; ++k) {
                sum_up += u[k];
                sum_up_xhat += u[k] * (x[k] - mu) * is;
            }
        }
        g.beta.data[ci] = static_cast<Real>(sum_up);
        g.gamma.data[ci] = static_cast<Real>(sum_up_xhat);
        if (!cache.batch_stats) {
            // running statistics are constants: dx = up * gamma * inv_std
            for (int64_t n = 0; n < N; ++n) {
                const Real* u = upstream.data.data() + (n * C + c) * per;
                Real* d = g.input.data.data() + (n * C + c) * per;
                for (int64_t k = 0; k < per; ++k) d[k] = u[k] * gamma * is;
            }
            continue;
        }
        // batch statistics depend on x:
        // dx = gamma*is/M * (M*u - sum(u) - xhat * sum(u*xhat))
        const Real inv_m = Real(1) / static_cast<Real>(M);
        for (int64_t n = 0; n < N; ++n) {
            const Real* x = input.data.data() + (n * C + c) * per;
            const Real* u = upstream.data.data() + (n * C + c) * per;
            Real* d = g.input.data.data() + (n * C + c) * per;
            for (int64_t k = 0; k < per; ++k) {
                const Real xhat = (x[k] - mu) * is;
                d[k] = gamma * is * inv_m *
                       (static_cast<Real>(M) * u[k] - static_cast<Real>(sum_up) -
                        xhat * static_cast<Real>(sum_up_xhat));
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations.

template <class Real>
TensorT<Real> relu(const TensorT<Real>& x) {
    TensorT<Real> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > Real(0) ? x.data[i] : Real(0);
    return y;
}

template <class Real>
TensorT<Real> relu_backward(const TensorT<Real>& x, const TensorT<Real>& upstream) {
    require(upstream.shape == x.shape, "relu_backward: shape mismatch");
    TensorT<Real> g(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) g.data[i] = x.data[i] > Real(0) ? upstream.data[i] : Real(0);
    return g;
}

template <class Real>
TensorT<Real> leaky_relu(const TensorT<Real>& x, Real slope) {
    TensorT<Real> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > Real(0) ? x.data[i] : slope * x.data[i];
    return y;
}

template <class Real>
TensorT<Real> leaky_relu_backward(const TensorT<Real>& x, Real slope, const TensorT<Real>& upstream) {
    require(upstream.shape == x.shape, "leaky_relu_backward: shape mismatch");
    TensorT<Real> g(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) g.data[i] = x.data[i] > Real(0) ? upstream.data[i] : slope * upstream.data[i];
    return g;
}

template <class Real>
Real sigmoid_scalar(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

template <class Real>
TensorT<Real> sigmoid(const TensorT<Real>& x) {
    TensorT<Real> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = sigmoid_scalar(x.data[i]);
    return y;
}

// takes the forward OUTPUT y = sigmoid(x)
template <class Real>
TensorT<Real> sigmoid_backward(const TensorT<Real>& y, const TensorT<Real>& upstream) {
    require(upstream.shape == y.shape, "sigmoid_backward: shape mismatch");
    TensorT<Real> g(y.shape);
    for (size_t i = 0; i < y.data.size(); ++i) g.data[i] = upstream.data[i] * y.data[i] * (Real(1) - y.data[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Dropout. The mask is a pure function of the seed, so backward regenerates
// it instead of storing it.

template <class Real>
TensorT<Real> dropout(const TensorT<Real>& x, float p, bool training, uint64_t seed) {
    require(p >= 0.0f && p < 1.0f, str_printf("dropout: p must be in [0,1), got %g", static_cast<double>(p)));
    if (!training || p == 0.0f) return x;
    TensorT<Real> y(x.shape);
    Rng rng(seed);
    const Real scale = Real(1) / static_cast<Real>(1.0f - p);
    for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = rng.uniform() < p ? Real(0) : x.data[i] * scale;
    return y;
}

template <class Real>
TensorT<Real> dropout_backward(const TensorT<Real>& upstream, float p, bool training, uint64_t seed) {
    if (!training || p == 0.0f) return upstream;
    TensorT<Real> g(upstream.shape);
    Rng rng(seed);
    const Real scale = Real(1) / static_cast<Real>(1.0f - p);
    for (size_t i = 0; i < upstream.data.size(); ++i) g.data[i] = rng.uniform() < p ? Real(0) : upstream.data[i] * scale;
    return g;
}

// ---------------------------------------------------------------------------
// Elementwise combination and temporal pooling.

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
    require(a.shape == b.shape, "add: shape mismatch " + a.shape.to_string() + " vs " + b.shape.to_string());
    TensorT<Real> y(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
}

template <class Real>
void add_inplace(TensorT<Real>& a, const TensorT<Real>& b) {
    require(a.shape == b.shape, "add_inplace: shape mismatch");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& a, Real s) {
    TensorT<Real> y(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] * s;
    return y;
}

// [N,C,T,H,W] -> [N,C,1,H,W], mean over the temporal axis.
template <class Real>
TensorT<Real> temporal_mean(const TensorT<Real>& x) {
    require(x.shape.rank == 5, "temporal_mean: input must be rank-5");
    const int64_t N = x.shape[0], C = x.shape[1], T = x.shape[2], H = x.shape[3], W = x.shape[4];
    TensorT<Real> y(Shape{N, C, 1, H, W});
    const Real inv_t = Real(1) / static_cast<Real>(T);
    const int64_t hw = H * W;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            Real* dst = y.data.data() + (n * C + c) * hw;
            for (int64_t t = 0; t < T; ++t) {
                const Real* src = x.data.data() + ((n * C + c) * T + t) * hw;
                for (int64_t k = 0; k < hw; ++k) dst[k] += src[k];
            }
            for (int64_t k = 0; k < hw; ++k) dst[k] *= inv_t;
        }
    return y;
}

template <class Real>
TensorT<Real> temporal_mean_backward(const TensorT<Real>& upstream, int64_t T) {
    require(upstream.shape.rank == 5 && upstream.shape[2] == 1, "temporal_mean_backward: upstream must have T=1");
    const int64_t N = upstream.shape[0], C = upstream.shape[1], H = upstream.shape[3], W = upstream.shape[4];
    TensorT<Real> g(Shape{N, C, T, H, W});
    const Real inv_t = Real(1) / static_cast<Real>(T);
    const int64_t hw = H * W;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const Real* src = upstream.data.data() + (n * C + c) * hw;
            for (int64_t t = 0; t < T; ++t) {
                Real* dst = g.data.data() + ((n * C + c) * T + t) * hw;
                for (int64_t k = 0; k < hw; ++k) dst[k] = src[k] * inv_t;
            }
        }
    return g;
}

}  // namespace lanedet
