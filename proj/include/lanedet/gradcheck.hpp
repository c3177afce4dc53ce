#pragma once

#include <functional>
#include <vector>

#include "lanedet/tensor.hpp"

namespace lanedet {

// Central finite-difference verification of analytic gradients.
//
// `loss_fn` must recompute the scalar objective from the *current* contents
// of the checked tensors (they are perturbed in place and restored).
// `analytic[i]` holds d(loss)/d(inputs[i]), same shape as *inputs[i].
// Relative error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
// When `max_coords_per_tensor` > 0, a deterministic sample of that many
// coordinates per tensor is checked instead of every coordinate.
template <class Real>
Real grad_check(const std::function<Real()>& loss_fn, const std::vector<TensorT<Real>*>& inputs,
                const std::vector<const TensorT<Real>*>& analytic, Real h,
                int64_t max_coords_per_tensor = 0, uint64_t seed = 1) {
    require(inputs.size() == analytic.size(), "grad_check: inputs/analytic size mismatch");
    require(h > Real(0), "grad_check: step must be positive");
    Real max_rel = 0;
    Rng rng(mix_seed(seed, 0x67726164));
    for (size_t t = 0; t < inputs.size(); ++t) {
        TensorT<Real>& x = *inputs[t];
        const TensorT<Real>& a = *analytic[t];
        require(a.shape == x.shape, "grad_check: analytic gradient shape mismatch at tensor " + std::to_string(t));
        const int64_t n = x.numel();
        std::vector<int64_t> coords;
        if (max_coords_per_tensor <= 0 || max_coords_per_tensor >= n) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(rng.uniform_int(0, static_cast<int>(n - 1)));
        }
        for (int64_t idx : coords) {
            const size_t si = static_cast<size_t>(idx);
            const Real keep = x.data[si];
            x.data[si] = keep + h;
            const Real fp = loss_fn();
            x.data[si] = keep - h;
            const Real fm = loss_fn();
            x.data[si] = keep;
            const Real numeric = (fp - fm) / (Real(2) * h);
            const Real an = a.data[si];
            const Real denom = std::max({std::abs(an), std::abs(numeric), static_cast<Real>(1e-8)});
            max_rel = std::max(max_rel, std::abs(an - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace lanedet
