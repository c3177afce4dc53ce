#include <catch_amalgamated.hpp>

#include <lanedet/conv.hpp>
#include <lanedet/tensor.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace lanedet;
using testutil::max_abs_diff;

TEST_CASE("shape and tensor basics") {
    Shape s{2, 3, 4, 5, 6};
    CHECK(s.rank == 5);
    CHECK(s.numel() == 720);
    Tensor t(s);
    CHECK(t.numel() == 720);
    CHECK_FALSE(t.empty());
    CHECK(Tensor{}.empty());
    Tensor f(Shape{3}, 2.5f);
    CHECK(f.data[0] == 2.5f);
    CHECK(f.data[2] == 2.5f);
}

TEST_CASE("tensor stream round-trip is bit exact") {
    Rng rng(7);
    Tensor t = random_tensor<float>(Shape{2, 3, 1, 4, 5}, rng);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor u = read_tensor(ss);
    REQUIRE(u.shape == t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) CHECK(u.data[i] == t.data[i]);
}

TEST_CASE("conv3d output shape formula") {
    auto s = make_conv3d_spec<float>(3, 8, 3, 7, 7, 1, 2, 2, 1, 3, 3, false);
    CHECK(conv3d_output_shape(Shape{1, 3, 4, 64, 128}, s) == Shape{1, 8, 4, 32, 64});
    auto u = make_conv3d_spec<float>(4, 4, 1, 1, 1, 1, 1, 1, 0, 0, 0, false);
    CHECK(conv3d_output_shape(Shape{2, 4, 1, 5, 9}, u) == Shape{2, 4, 1, 5, 9});
    CHECK_THROWS_AS(conv3d_output_shape(Shape{1, 5, 4, 64, 128}, s), std::invalid_argument);
}

TEST_CASE("dense conv3d matches the nested-loop oracle on random shapes") {
    Rng shapes(101);
    int checked = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const int N = shapes.uniform_int(1, 2), C = shapes.uniform_int(1, 4), O = shapes.uniform_int(1, 4);
        const int kt = shapes.uniform_int(1, 3), kh = shapes.uniform_int(1, 3), kw = shapes.uniform_int(1, 3);
        const int st = shapes.uniform_int(1, 2), sh = shapes.uniform_int(1, 2), sw = shapes.uniform_int(1, 2);
        const int pt = shapes.uniform_int(0, 1), ph = shapes.uniform_int(0, 1), pw = shapes.uniform_int(0, 1);
        const int T = kt + shapes.uniform_int(0, 3), H = kh + shapes.uniform_int(0, 5), W = kw + shapes.uniform_int(0, 5);
        if (T + 2 * pt < kt || H + 2 * ph < kh || W + 2 * pw < kw) continue;
        Rng data(mix_seed(500, static_cast<uint64_t>(trial)));
        auto spec = make_conv3d_spec<float>(C, O, kt, kh, kw, st, sh, sw, pt, ph, pw, false, &data);
        spec.has_bias = trial % 2 == 0;
        for (auto& b : spec.bias.data) b = data.uniform(-1, 1);
        Tensor x = random_tensor<float>(Shape{N, C, T, H, W}, data);
        Tensor got = conv3d_forward(x, spec);
        Tensor want = oracle::conv3d<float>(x, spec.weights, spec.has_bias ? &spec.bias : nullptr, st, sh, sw, pt, ph, pw);
        REQUIRE(got.shape == want.shape);
        CHECK(max_abs_diff(got, want) <= 1e-5);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("factorized conv3d matches the two-pass oracle") {
    Rng shapes(202);
    int checked = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const int N = shapes.uniform_int(1, 2), C = shapes.uniform_int(1, 4), O = shapes.uniform_int(2, 5);
        const int kt = shapes.uniform_int(2, 3), khw = shapes.uniform_int(1, 3);
        const int st = shapes.uniform_int(1, 2), shw = shapes.uniform_int(1, 2);
        const int pt = shapes.uniform_int(0, 1), phw = shapes.uniform_int(0, 1);
        const int T = kt + shapes.uniform_int(0, 3), H = khw + shapes.uniform_int(0, 4),
                  W = khw + shapes.uniform_int(0, 4);
        Rng data(mix_seed(600, static_cast<uint64_t>(trial)));
        auto spec = make_conv3d_spec<float>(C, O, kt, khw, khw, st, shw, shw, pt, phw, phw, true, &data);
        REQUIRE(spec.factorized);
        CHECK(spec.mid_channels == (O + 1) / 2);
        for (auto& b : spec.bias.data) b = data.uniform(-1, 1);
        Tensor x = random_tensor<float>(Shape{N, C, T, H, W}, data);
        Tensor got = conv3d_forward(x, spec);
        Tensor want = oracle::conv3d_factorized<float>(x, spec.w_spatial, spec.w_temporal, &spec.bias, st, shw, shw,
                                                       pt, phw, phw);
        REQUIRE(got.shape == want.shape);
        CHECK(max_abs_diff(got, want) <= 1e-5);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("factorized mode silently disables for kt == 1") {
    auto spec = make_conv3d_spec<float>(4, 8, 1, 3, 3, 1, 1, 1, 0, 1, 1, true);
    CHECK_FALSE(spec.factorized);
    CHECK_FALSE(spec.weights.empty());
}

TEST_CASE("transposed conv3d matches the scatter oracle on random shapes") {
    Rng shapes(303);
    int checked = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const int N = shapes.uniform_int(1, 2), C = shapes.uniform_int(1, 4), O = shapes.uniform_int(1, 4);
        const int kt = shapes.uniform_int(1, 3), kh = shapes.uniform_int(1, 4), kw = shapes.uniform_int(1, 4);
        const int st = shapes.uniform_int(1, 2), sh = shapes.uniform_int(1, 2), sw = shapes.uniform_int(1, 2);
        const int pt = shapes.uniform_int(0, std::max(0, (kt - 1) / 2));
        const int ph = shapes.uniform_int(0, std::max(0, (kh - 1) / 2));
        const int pw = shapes.uniform_int(0, std::max(0, (kw - 1) / 2));
        const int T = shapes.uniform_int(1, 4), H = shapes.uniform_int(1, 6), W = shapes.uniform_int(1, 6);
        // the output extent formula must stay positive
        if ((T - 1) * st - 2 * pt + kt <= 0 || (H - 1) * sh - 2 * ph + kh <= 0 || (W - 1) * sw - 2 * pw + kw <= 0)
            continue;
        Rng data(mix_seed(700, static_cast<uint64_t>(trial)));
        auto spec = make_transposed_conv3d_spec<float>(C, O, kt, kh, kw, st, sh, sw, pt, ph, pw, &data);
        spec.has_bias = trial % 2 == 0;
        for (auto& b : spec.bias.data) b = data.uniform(-1, 1);
        Tensor x = random_tensor<float>(Shape{N, C, T, H, W}, data);
        Tensor got = transposed_conv3d_forward(x, spec);
        Tensor want =
            oracle::tconv3d<float>(x, spec.weights, spec.has_bias ? &spec.bias : nullptr, st, sh, sw, pt, ph, pw);
        REQUIRE(got.shape == want.shape);
        CHECK(max_abs_diff(got, want) <= 1e-5);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("transposed conv is the adjoint of the forward conv") {
    // <conv(x), y> == <x, tconv(y)> when both share geometry and kernel
    Rng rng(404);
    const int C = 3, O = 4, k = 3, s = 2, p = 1;
    auto conv = make_conv3d_spec<float>(C, O, 1, k, k, 1, s, s, 0, p, p, false, &rng);
    conv.has_bias = false;
    // extents chosen so (H + 2p - k) divides the stride; the transposed
    // output formula then reproduces the conv input exactly
    Tensor x = random_tensor<float>(Shape{1, C, 2, 7, 9}, rng);
    Tensor cx = conv3d_forward(x, conv);

    auto tspec = make_transposed_conv3d_spec<float>(O, C, 1, k, k, 1, s, s, 0, p, p);
    tspec.has_bias = false;
    // conv weights [O, C, kt, kh, kw] -> transposed layout [O(in), C(out), kt, kh, kw]
    tspec.weights = conv.weights;
    Tensor y = random_tensor<float>(cx.shape, rng);
    Tensor ty = transposed_conv3d_forward(y, tspec);
    REQUIRE(ty.shape == x.shape);

    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < cx.data.size(); ++i) lhs += static_cast<double>(cx.data[i]) * y.data[i];
    for (size_t i = 0; i < x.data.size(); ++i) rhs += static_cast<double>(x.data[i]) * ty.data[i];
    CHECK(std::abs(lhs - rhs) <= 1e-3 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("transposed conv output extent formula") {
    auto spec = make_transposed_conv3d_spec<float>(8, 4, 1, 4, 4, 1, 2, 2, 0, 1, 1);
    CHECK(transposed_conv3d_output_shape(Shape{1, 8, 1, 16, 32}, spec) == Shape{1, 4, 1, 32, 64});
}

TEST_CASE("MAC counts follow the closed forms") {
    SECTION("dense") {
        auto s = make_conv3d_spec<float>(3, 8, 3, 3, 3, 1, 1, 1, 1, 1, 1, false);
        const Shape in{1, 3, 2, 8, 16};
        // out voxels (1*2*8*16) * out_c * in_c * k^3
        CHECK(conv3d_mac_count(s, in) == 256LL * 8 * 3 * 27);
    }
    SECTION("factorized splits into spatial and temporal passes") {
        auto s = make_conv3d_spec<float>(4, 8, 3, 3, 3, 1, 1, 1, 1, 1, 1, true);
        const Shape in{1, 4, 2, 8, 16};
        const int64_t mid = (8 + 1) / 2;
        const int64_t spatial = 1 * 2 * 8 * 16 * mid * 4 * 9;  // temporal extent untouched
        const int64_t temporal = 1 * 2 * 8 * 16 * 8 * mid * 3;
        CHECK(conv3d_mac_count(s, in) == spatial + temporal);
    }
    SECTION("factorized costs less than full 3D at equal widths") {
        for (int c : {16, 32, 64}) {
            auto full = make_conv3d_spec<float>(c, c, 3, 3, 3, 1, 1, 1, 1, 1, 1, false);
            auto fact = make_conv3d_spec<float>(c, c, 3, 3, 3, 1, 1, 1, 1, 1, 1, true);
            const Shape in{1, c, 2, 16, 32};
            CHECK(conv3d_mac_count(fact, in) < conv3d_mac_count(full, in));
        }
    }
}

TEST_CASE("conv parameter counts") {
    auto full = make_conv3d_spec<float>(3, 8, 3, 3, 3, 1, 1, 1, 1, 1, 1, false);
    CHECK(conv3d_param_count(full) == 8 * 3 * 27 + 8);
    full.has_bias = false;
    CHECK(conv3d_param_count(full) == 8 * 3 * 27);
    auto fact = make_conv3d_spec<float>(4, 8, 3, 3, 3, 1, 1, 1, 1, 1, 1, true);
    const int64_t mid = (8 + 1) / 2;
    CHECK(conv3d_param_count(fact) == mid * 4 * 9 + 8 * mid * 3 + 8);
}
