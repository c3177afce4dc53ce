#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "lanedet/common.hpp"

namespace lanedet {

// Axis order for rank-5 tensors is (N, C, T, H, W). Lower ranks keep the
// same row-major layout over their own axes.
struct Shape {
    int rank = 0;
    std::array<int64_t, 5> d{{1, 1, 1, 1, 1}};

    Shape() = default;
    Shape(std::initializer_list<int64_t> dims) {
        require(dims.size() <= 5, "Shape: rank > 5");
        rank = static_cast<int>(dims.size());
        int i = 0;
        for (int64_t v : dims) d[i++] = v;
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return n;
    }

    int64_t operator[](int i) const { return d[i]; }
    int64_t& operator[](int i) { return d[i]; }

    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (d[i] != o.d[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string to_string() const {
        std::string s = "[";
        for (int i = 0; i < rank; ++i) {
            if (i) s += ",";
            s += std::to_string(d[i]);
        }
        return s + "]";
    }
};

template <class Real>
struct TensorT {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty, or same length as data

    TensorT() = default;
    explicit TensorT(Shape s, Real fill = Real(0)) : shape(s), data(static_cast<size_t>(s.numel()), fill) {}

    // element count from the data buffer, so default-constructed ("absent")
    // tensors report 0 even though a rank-0 shape's extent product is 1
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), Real(0));
    }

    // rank-5 addressing
    int64_t index5(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) const {
        return (((n * shape.d[1] + c) * shape.d[2] + t) * shape.d[3] + h) * shape.d[4] + w;
    }
    Real& at5(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) { return data[static_cast<size_t>(index5(n, c, t, h, w))]; }
    Real at5(int64_t n, int64_t c, int64_t t, int64_t h, int64_t w) const { return data[static_cast<size_t>(index5(n, c, t, h, w))]; }

    // rank-2 addressing (H, W)
    Real& at2(int64_t h, int64_t w) { return data[static_cast<size_t>(h * shape.d[1] + w)]; }
    Real at2(int64_t h, int64_t w) const { return data[static_cast<size_t>(h * shape.d[1] + w)]; }

    template <class R2>
    TensorT<R2> cast() const {
        TensorT<R2> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<R2>(data[i]);
        return out;
    }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<float>;

template <class Real>
TensorT<Real> full_like(const TensorT<Real>& t, Real v) {
    return TensorT<Real>(t.shape, v);
}

template <class Real>
TensorT<Real> random_tensor(Shape s, Rng& rng, Real lo = Real(-1), Real hi = Real(1)) {
    TensorT<Real> t(s);
    for (auto& v : t.data) v = static_cast<Real>(rng.uniform(static_cast<float>(lo), static_cast<float>(hi)));
    return t;
}

template <class Real>
TensorT<Real> random_normal_tensor(Shape s, Rng& rng, Real stddev = Real(1)) {
    TensorT<Real> t(s);
    for (auto& v : t.data) v = static_cast<Real>(rng.normal(0.0f, static_cast<float>(stddev)));
    return t;
}

// Serialized layout: u64 rank, u64 extents, then float32 payload,
// all little-endian. Doubles are narrowed to float32 on write.
template <class Real>
void write_tensor(std::ostream& os, const TensorT<Real>& t) {
    write_le_u64(os, static_cast<uint64_t>(t.shape.rank));
    for (int i = 0; i < t.shape.rank; ++i) write_le_u64(os, static_cast<uint64_t>(t.shape.d[i]));
    for (Real v : t.data) write_le_f32(os, static_cast<float>(v));
}

inline Tensor read_tensor(std::istream& is) {
    uint64_t rank = read_le_u64(is);
    if (rank > 5) throw std::runtime_error("read_tensor: rank " + std::to_string(rank) + " > 5");
    Shape s;
    s.rank = static_cast<int>(rank);
    for (int i = 0; i < s.rank; ++i) {
        s.d[i] = static_cast<int64_t>(read_le_u64(is));
        if (s.d[i] <= 0) throw std::runtime_error("read_tensor: nonpositive extent");
    }
    Tensor t(s);
    for (auto& v : t.data) v = read_le_f32(is);
    if (!is) throw std::runtime_error("read_tensor: payload truncated");
    return t;
}

}  // namespace lanedet
