#pragma once

#include <cmath>
#include <vector>

#include "lanedet/tensor.hpp"

namespace lanedet {

// Adam with bias correction. One moment pair per parameter tensor, laid out
// in the order the tensors were registered; that order must stay stable for
// the lifetime of the state (and across checkpoint save/load).
template <class Real>
struct AdamStateT {
    Real lr = static_cast<Real>(1e-3);
    Real beta1 = static_cast<Real>(0.9);
    Real beta2 = static_cast<Real>(0.999);
    Real eps = static_cast<Real>(1e-8);
    int64_t t = 0;  // completed steps
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
};

using AdamState = AdamStateT<float>;

template <class Real>
AdamStateT<Real> adam_init(const std::vector<TensorT<Real>*>& params, Real lr = static_cast<Real>(1e-3)) {
    AdamStateT<Real> s;
    s.lr = lr;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const TensorT<Real>* p : params) {
        require(p != nullptr, "adam_init: null parameter");
        s.m.emplace_back(p->data.size(), Real(0));
        s.v.emplace_back(p->data.size(), Real(0));
    }
    return s;
}

// Applies one update from the gradients stored in each tensor's `grad`
// buffer. Parameters whose grad buffer is empty are treated as zero-gradient
// (their moments still decay).
template <class Real>
void adam_step(const std::vector<TensorT<Real>*>& params, AdamStateT<Real>& s) {
    require(params.size() == s.m.size(), "adam_step: state was initialized for a different parameter list");
    ++s.t;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(s.beta1), static_cast<double>(s.t)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(s.beta2), static_cast<double>(s.t)));
    for (size_t i = 0; i < params.size(); ++i) {
        TensorT<Real>& p = *params[i];
        require(s.m[i].size() == p.data.size(), "adam_step: parameter size changed since adam_init");
        const bool has_grad = p.grad.size() == p.data.size();
        require(has_grad || p.grad.empty(), "adam_step: gradient buffer size mismatch");
        for (size_t k = 0; k < p.data.size(); ++k) {
            const Real g = has_grad ? p.grad[k] : Real(0);
            s.m[i][k] = s.beta1 * s.m[i][k] + (Real(1) - s.beta1) * g;
            s.v[i][k] = s.beta2 * s.v[i][k] + (Real(1) - s.beta2) * g * g;
            const Real mhat = s.m[i][k] / bc1;
            const Real vhat = s.v[i][k] / bc2;
            p.data[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

}  // namespace lanedet
