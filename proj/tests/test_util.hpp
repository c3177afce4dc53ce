#pragma once

#include <cmath>
#include <cstdint>

#include <lanedet/tensor.hpp>

namespace testutil {

template <class Real>
double max_abs_diff(const lanedet::TensorT<Real>& a, const lanedet::TensorT<Real>& b) {
    if (!(a.shape == b.shape)) return std::numeric_limits<double>::infinity();
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

template <class Real>
lanedet::TensorT<Real> to_real(const lanedet::TensorT<float>& src) {
    lanedet::TensorT<Real> out(src.shape);
    for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<Real>(src.data[i]);
    return out;
}

}  // namespace testutil
