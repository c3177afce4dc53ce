#pragma once

#include <array>

#include "lanedet/conv.hpp"

namespace lanedet {

// Feature pyramid fusion: four taps at strides 2/4/8/16 of the input are
// projected to a common width by 1x1x1 lateral convolutions, then merged
// top-down — P4 = lat4(F4); P_i = lat_i(F_i) + upsample2x(P_{i+1}).
// All taps must share the temporal extent (the encoder pools time before
// tapping), since the top-down addition only upsamples H and W.
template <class Real>
struct PyramidLevelsT {
    std::array<TensorT<Real>, 4> f;            // inputs, shallow (stride 2) to deep (stride 16)
    std::array<Conv3dSpecT<Real>, 4> lateral;  // 1x1x1 projections to the common width
    std::array<TensorT<Real>, 4> p;            // fused outputs, filled by fpn_fuse
};

using PyramidLevels = PyramidLevelsT<float>;

template <class Real>
std::array<Conv3dSpecT<Real>, 4> make_fpn_laterals(const std::array<int, 4>& in_widths, int out_width,
                                                   Rng* rng = nullptr) {
    std::array<Conv3dSpecT<Real>, 4> lat;
    for (int i = 0; i < 4; ++i)
        lat[static_cast<size_t>(i)] =
            make_conv3d_spec<Real>(in_widths[static_cast<size_t>(i)], out_width, 1, 1, 1, 1, 1, 1, 0, 0, 0, false, rng);
    return lat;
}

template <class Real>
void check_pyramid_chain(const PyramidLevelsT<Real>& levels) {
    for (int i = 0; i < 4; ++i)
        require(levels.f[static_cast<size_t>(i)].shape.rank == 5, "fpn_fuse: levels must be rank-5 tensors");
    for (int i = 0; i < 3; ++i) {
        const Shape& a = levels.f[static_cast<size_t>(i)].shape;
        const Shape& b = levels.f[static_cast<size_t>(i + 1)].shape;
        require(a[0] == b[0] && a[2] == b[2],
                str_printf("fpn_fuse: levels %d and %d disagree in batch or temporal extent", i, i + 1));
        require(a[3] == 2 * b[3] && a[4] == 2 * b[4],
                str_printf("fpn_fuse: level %d must be exactly half the height and width of level %d (got %s vs %s)",
                           i + 1, i, b.to_string().c_str(), a.to_string().c_str()));
    }
}

template <class Real>
void fpn_fuse(PyramidLevelsT<Real>& levels) {
    check_pyramid_chain(levels);
    levels.p[3] = conv3d_forward(levels.f[3], levels.lateral[3]);
    for (int i = 2; i >= 0; --i) {
        TensorT<Real> lat = conv3d_forward(levels.f[static_cast<size_t>(i)], levels.lateral[static_cast<size_t>(i)]);
        TensorT<Real> up = upsample_nearest(levels.p[static_cast<size_t>(i + 1)], 1, 2, 2);
        require(lat.shape == up.shape, "fpn_fuse: lateral/upsample shape mismatch at level " + std::to_string(i + 1));
        levels.p[static_cast<size_t>(i)] = add(lat, up);
    }
}

template <class Real>
struct FpnGradsT {
    std::array<TensorT<Real>, 4> f;                // grads of the input taps
    std::array<Conv3dGradsT<Real>, 4> lateral;     // grads of the lateral convs
};

// upstream_p: per-level gradients of P1..P4 (empty tensors mean zero).
template <class Real>
FpnGradsT<Real> fpn_backward(const PyramidLevelsT<Real>& levels, const std::array<TensorT<Real>, 4>& upstream_p) {
    FpnGradsT<Real> g;
    std::array<TensorT<Real>, 4> dp;
    for (int i = 0; i < 4; ++i) {
        const size_t si = static_cast<size_t>(i);
        if (!upstream_p[si].empty()) {
            require(upstream_p[si].shape == levels.p[si].shape, "fpn_backward: upstream shape mismatch");
            dp[si] = upstream_p[si];
        } else {
            dp[si] = TensorT<Real>(levels.p[si].shape);
        }
    }
    // walk shallow to deep: each level's gradient feeds its lateral conv and
    // accumulates into the next deeper level through the upsample adjoint
    for (int i = 0; i < 4; ++i) {
        const size_t si = static_cast<size_t>(i);
        if (i < 3) {
            TensorT<Real> down = upsample_nearest_backward(dp[si], levels.p[si + 1].shape, 1, 2, 2);
            add_inplace(dp[si + 1], down);
        }
        g.lateral[si] = conv3d_backward(levels.f[si], levels.lateral[si], dp[si]);
        g.f[si] = std::move(g.lateral[si].input);
    }
    return g;
}

}  // namespace lanedet
