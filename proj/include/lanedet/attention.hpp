#pragma once

#include <cmath>

#include "lanedet/tensor.hpp"

namespace lanedet {

// Scaled dot-product self-attention over the flattened (T,H,W) positions of
// a feature volume. Projections are 1x1x1 convolutions stored as plain
// matrices; the attended result is blended back through a learnable scalar:
// out = x + gamma * attend(x).
template <class Real>
struct AttentionParamsT {
    int channels = 0;
    int d_k = 0;
    TensorT<Real> wq;     // [d_k, C]
    TensorT<Real> wk;     // [d_k, C]
    TensorT<Real> wv;     // [C, C]
    TensorT<Real> gamma;  // [1], initialized 0 so the block starts as identity
    int64_t max_positions = 8192;  // guards the dense LxL score matrix
};

using AttentionParams = AttentionParamsT<float>;

template <class Real>
AttentionParamsT<Real> make_attention_params(int channels, int d_k, Rng* rng = nullptr) {
    require(channels >= 1, "self_attention: channels must be >= 1");
    require(d_k >= 1, "self_attention: d_k must be >= 1");
    AttentionParamsT<Real> p;
    p.channels = channels;
    p.d_k = d_k;
    p.wq = TensorT<Real>(Shape{d_k, channels});
    p.wk = TensorT<Real>(Shape{d_k, channels});
    p.wv = TensorT<Real>(Shape{channels, channels});
    p.gamma = TensorT<Real>(Shape{1});
    if (rng) {
        const Real sd = static_cast<Real>(std::sqrt(1.0 / channels));
        for (auto& v : p.wq.data) v = static_cast<Real>(rng->normal(0.0f, static_cast<float>(sd)));
        for (auto& v : p.wk.data) v = static_cast<Real>(rng->normal(0.0f, static_cast<float>(sd)));
        for (auto& v : p.wv.data) v = static_cast<Real>(rng->normal(0.0f, static_cast<float>(sd)));
    }
    return p;
}

namespace detail {

// y[r, l] = sum_c M[r, c] * x[c, l] where x is the n-th batch slice viewed
// as [C, L] (channel rows are contiguous in NCTHW layout).
template <class Real>
void project(const TensorT<Real>& m, const Real* x, int64_t C, int64_t L, std::vector<Real>& y) {
    const int64_t R = m.shape[0];
    y.assign(static_cast<size_t>(R * L), Real(0));
    for (int64_t r = 0; r < R; ++r) {
        Real* yrow = y.data() + r * L;
        for (int64_t c = 0; c < C; ++c) {
            const Real w = m.data[static_cast<size_t>(r * C + c)];
            const Real* xrow = x + c * L;
            for (int64_t l = 0; l < L; ++l) yrow[l] += w * xrow[l];
        }
    }
}

}  // namespace detail

// Intermediates for one forward pass, reusable by the backward pass.
template <class Real>
struct AttentionCacheT {
    int64_t L = 0;
    std::vector<Real> q, k, v;  // [d_k x L], [d_k x L], [C x L] per batch element, concatenated
    std::vector<Real> attn;     // [L x L] softmax rows per batch element, concatenated
    std::vector<Real> attended; // [C x L] per batch element, concatenated
};

template <class Real>
TensorT<Real> self_attention(const TensorT<Real>& features, const AttentionParamsT<Real>& params,
                             AttentionCacheT<Real>* cache = nullptr) {
    require(features.shape.rank == 5, "self_attention: input must be rank-5 (N,C,T,H,W)");
    const int64_t N = features.shape[0], C = features.shape[1];
    const int64_t L = features.shape[2] * features.shape[3] * features.shape[4];
    require(C == params.channels,
            str_printf("self_attention: input has %lld channels, params expect %d", static_cast<long long>(C),
                       params.channels));
    if (L > params.max_positions)
        throw capacity_error(str_printf(
            "self_attention: %lld positions exceed the configured budget of %lld (dense score matrix would "
            "hold %lld elements); apply attention at a coarser feature level",
            static_cast<long long>(L), static_cast<long long>(params.max_positions),
            static_cast<long long>(L * L)));
    const int64_t dk = params.d_k;
    const Real inv_sqrt_dk = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dk)));
    TensorT<Real> out(features.shape);
    if (cache) {
        cache->L = L;
        cache->q.assign(static_cast<size_t>(N * dk * L), Real(0));
        cache->k.assign(static_cast<size_t>(N * dk * L), Real(0));
        cache->v.assign(static_cast<size_t>(N * C * L), Real(0));
        cache->attn.assign(static_cast<size_t>(N * L * L), Real(0));
        cache->attended.assign(static_cast<size_t>(N * C * L), Real(0));
    }
    std::vector<Real> q, k, v, attn(static_cast<size_t>(L * L)), z(static_cast<size_t>(C * L));
    const Real g = params.gamma.data[0];
    for (int64_t n = 0; n < N; ++n) {
        const Real* x = features.data.data() + n * C * L;
        detail::project(params.wq, x, C, L, q);
        detail::project(params.wk, x, C, L, k);
        detail::project(params.wv, x, C, L, v);
        // scores s[i,j] = q_i . k_j / sqrt(d_k), softmax over j per row
        for (int64_t i = 0; i < L; ++i) {
            Real* row = attn.data() + i * L;
            for (int64_t j = 0; j < L; ++j) {
                Real s = 0;
                for (int64_t d = 0; d < dk; ++d) s += q[static_cast<size_t>(d * L + i)] * k[static_cast<size_t>(d * L + j)];
                row[j] = s * inv_sqrt_dk;
            }
            Real mx = row[0];
            for (int64_t j = 1; j < L; ++j) mx = std::max(mx, row[j]);
            Real denom = 0;
            for (int64_t j = 0; j < L; ++j) {
                row[j] = std::exp(row[j] - mx);
                denom += row[j];
            }
            const Real inv = Real(1) / denom;
            for (int64_t j = 0; j < L; ++j) row[j] *= inv;
        }
        // attended z[c,i] = sum_j attn[i,j] v[c,j]
        std::fill(z.begin(), z.end(), Real(0));
        for (int64_t c = 0; c < C; ++c) {
            Real* zrow = z.data() + c * L;
            const Real* vrow = v.data() + c * L;
            for (int64_t i = 0; i < L; ++i) {
                const Real* arow = attn.data() + i * L;
                Real acc = 0;
                for (int64_t j = 0; j < L; ++j) acc += arow[j] * vrow[j];
                zrow[i] = acc;
            }
        }
        Real* y = out.data.data() + n * C * L;
        for (int64_t e = 0; e < C * L; ++e) y[e] = x[e] + g * z[static_cast<size_t>(e)];
        if (cache) {
            std::copy(q.begin(), q.end(), cache->q.begin() + n * dk * L);
            std::copy(k.begin(), k.end(), cache->k.begin() + n * dk * L);
            std::copy(v.begin(), v.end(), cache->v.begin() + n * C * L);
            std::copy(attn.begin(), attn.end(), cache->attn.begin() + n * L * L);
            std::copy(z.begin(), z.end(), cache->attended.begin() + n * C * L);
        }
    }
    return out;
}

template <class Real>
struct AttentionGradsT {
    TensorT<Real> input;
    TensorT<Real> wq, wk, wv, gamma;
};

template <class Real>
AttentionGradsT<Real> self_attention_backward(const TensorT<Real>& features, const AttentionParamsT<Real>& params,
                                              const TensorT<Real>& upstream,
                                              const AttentionCacheT<Real>* cache = nullptr) {
    require(upstream.shape == features.shape, "self_attention_backward: upstream shape mismatch");
    const int64_t N = features.shape[0], C = features.shape[1];
    const int64_t L = features.shape[2] * features.shape[3] * features.shape[4];
    const int64_t dk = params.d_k;
    const Real inv_sqrt_dk = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dk)));
    AttentionCacheT<Real> local;
    if (!cache) {
        self_attention(features, params, &local);
        cache = &local;
    }
    AttentionGradsT<Real> g;
    g.input = TensorT<Real>(features.shape);
    g.wq = TensorT<Real>(params.wq.shape);
    g.wk = TensorT<Real>(params.wk.shape);
    g.wv = TensorT<Real>(params.wv.shape);
    g.gamma = TensorT<Real>(Shape{1});
    const Real gam = params.gamma.data[0];
    std::vector<Real> dz(static_cast<size_t>(C * L)), dv(static_cast<size_t>(C * L));
    std::vector<Real> dattn(static_cast<size_t>(L * L)), ds(static_cast<size_t>(L * L));
    std::vector<Real> dq(static_cast<size_t>(dk * L)), dkk(static_cast<size_t>(dk * L));
    for (int64_t n = 0; n < N; ++n) {
        const Real* x = features.data.data() + n * C * L;
        const Real* u = upstream.data.data() + n * C * L;
        const Real* q = cache->q.data() + n * dk * L;
        const Real* k = cache->k.data() + n * dk * L;
        const Real* v = cache->v.data() + n * C * L;
        const Real* attn = cache->attn.data() + n * L * L;
        const Real* z = cache->attended.data() + n * C * L;
        // identity path and gamma grad
        Real dgam = 0;
        for (int64_t e = 0; e < C * L; ++e) {
            g.input.data[static_cast<size_t>(n * C * L + e)] += u[e];
            dgam += u[e] * z[e];
            dz[static_cast<size_t>(e)] = gam * u[e];
        }
        g.gamma.data[0] += dgam;
        // z[c,i] = sum_j attn[i,j] v[c,j]
        for (int64_t c = 0; c < C; ++c) {
            const Real* dzrow = dz.data() + c * L;
            Real* dvrow = dv.data() + c * L;
            std::fill(dvrow, dvrow + L, Real(0));
            for (int64_t i = 0; i < L; ++i) {
                const Real* arow = attn + i * L;
                const Real d = dzrow[i];
                for (int64_t j = 0; j < L; ++j) dvrow[j] += d * arow[j];
            }
        }
        for (int64_t i = 0; i < L; ++i) {
            Real* darow = dattn.data() + i * L;
            std::fill(darow, darow + L, Real(0));
            for (int64_t c = 0; c < C; ++c) {
                const Real d = dz[static_cast<size_t>(c * L + i)];
                const Real* vrow = v + c * L;
                for (int64_t j = 0; j < L; ++j) darow[j] += d * vrow[j];
            }
        }
        // softmax backward per row: ds = a * (da - sum(da * a))
        for (int64_t i = 0; i < L; ++i) {
            const Real* arow = attn + i * L;
            const Real* darow = dattn.data() + i * L;
            Real dot = 0;
            for (int64_t j = 0; j < L; ++j) dot += darow[j] * arow[j];
            Real* dsrow = ds.data() + i * L;
            for (int64_t j = 0; j < L; ++j) dsrow[j] = arow[j] * (darow[j] - dot);
        }
        // s[i,j] = q_i . k_j * inv_sqrt_dk
        std::fill(dq.begin(), dq.end(), Real(0));
        std::fill(dkk.begin(), dkk.end(), Real(0));
        for (int64_t i = 0; i < L; ++i) {
            const Real* dsrow = ds.data() + i * L;
            for (int64_t d = 0; d < dk; ++d) {
                const Real qv = q[static_cast<size_t>(d * L + i)];
                const Real* krow = k + d * L;
                Real acc = 0;
                for (int64_t j = 0; j < L; ++j) {
                    acc += dsrow[j] * krow[j];
                    dkk[static_cast<size_t>(d * L + j)] += inv_sqrt_dk * dsrow[j] * qv;
                }
                dq[static_cast<size_t>(d * L + i)] += inv_sqrt_dk * acc;
            }
        }
        // projections: p = M x  ->  dM += dp x^T, dx += M^T dp
        auto backprop_projection = [&](const TensorT<Real>& m, const std::vector<Real>& dp, TensorT<Real>& dm) {
            const int64_t R = m.shape[0];
            Real* gin = g.input.data.data() + n * C * L;
            for (int64_t r = 0; r < R; ++r) {
                const Real* dprow = dp.data() + r * L;
                for (int64_t c = 0; c < C; ++c) {
                    const Real* xrow = x + c * L;
                    const Real w = m.data[static_cast<size_t>(r * C + c)];
                    Real* ginrow = gin + c * L;
                    Real acc = 0;
                    for (int64_t l = 0; l < L; ++l) {
                        acc += dprow[l] * xrow[l];
                        ginrow[l] += w * dprow[l];
                    }
                    dm.data[static_cast<size_t>(r * C + c)] += acc;
                }
            }
        };
        backprop_projection(params.wq, dq, g.wq);
        backprop_projection(params.wk, dkk, g.wk);
        backprop_projection(params.wv, dv, g.wv);
    }
    return g;
}

template <class Real>
int64_t attention_param_count(const AttentionParamsT<Real>& p) {
    return p.wq.numel() + p.wk.numel() + p.wv.numel() + p.gamma.numel();
}

template <class Real>
int64_t attention_mac_count(const AttentionParamsT<Real>& p, const Shape& in) {
    const int64_t L = in[2] * in[3] * in[4];
    const int64_t proj = in[0] * L * p.channels * (2 * p.d_k + p.channels);
    const int64_t scores = in[0] * L * L * p.d_k;
    const int64_t mix = in[0] * L * L * p.channels;
    return proj + scores + mix;
}

}  // namespace lanedet
