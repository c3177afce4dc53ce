#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include <lanedet/checkpoint.hpp>
#include <lanedet/network.hpp>

#include "test_util.hpp"

using namespace lanedet;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

EncoderConfig micro_config(Variant variant) {
    EncoderConfig cfg;
    cfg.stage_channels = {4, 8, 16, 32};
    cfg.blocks_per_stage = 1;
    cfg.temporal_depth = 2;
    cfg.input_h = 32;
    cfg.input_w = 64;
    cfg.fpn_width = 8;
    cfg.decoder_width = 8;
    cfg.embed_dim = 3;
    cfg.variant = variant;
    cfg.attention_enabled = variant == Variant::network1;
    cfg.fpn_enabled = variant == Variant::network1;
    return cfg;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && std::equal(a.data.begin(), a.data.end(), b.data.begin());
}

}  // namespace

TEST_CASE("stage resolutions follow the documented halving chain") {
    // widths do not affect the resolution chain, so small channels keep the
    // full 256x512 walk affordable
    EncoderConfig cfg = micro_config(Variant::network1);
    cfg.input_h = 256;
    cfg.input_w = 512;
    auto m = make_model<float>(cfg, 11);
    set_training(m, false);

    Rng rng(3100);
    Tensor clip = random_tensor<float>(Shape{1, 3, 2, 256, 512}, rng, 0.0f, 1.0f);
    ForwardCacheT<float> cache;
    auto fwd = model_forward(m, clip, cache);

    CHECK(cache.stage_out[0].shape == Shape{1, 4, 2, 128, 256});
    CHECK(cache.stage_out[1].shape == Shape{1, 8, 2, 64, 128});
    CHECK(cache.stage_out[2].shape == Shape{1, 16, 2, 32, 64});
    // the deepest stage is pooled over time before the decoder
    CHECK(cache.stage_out[3].shape == Shape{1, 32, 1, 16, 32});

    // feature pyramid sits at strides 2/4/8/16 with a uniform width
    CHECK(cache.pyramid.p[0].shape == Shape{1, 8, 1, 128, 256});
    CHECK(cache.pyramid.p[1].shape == Shape{1, 8, 1, 64, 128});
    CHECK(cache.pyramid.p[2].shape == Shape{1, 8, 1, 32, 64});
    CHECK(cache.pyramid.p[3].shape == Shape{1, 8, 1, 16, 32});

    // decoder grid is a quarter of the input resolution
    CHECK(fwd.out.confidence.shape == Shape{1, 1, 1, 64, 128});
    CHECK(fwd.out.offsets.shape == Shape{1, 2, 1, 64, 128});
    CHECK(fwd.out.embeddings.shape == Shape{1, 3, 1, 64, 128});
    CHECK(fwd.transform.is_identity());
}

TEST_CASE("network2 decoder reaches the same quarter-resolution grid") {
    EncoderConfig cfg = micro_config(Variant::network2);
    auto m = make_model<float>(cfg, 12);
    set_training(m, false);

    Rng rng(3150);
    // arbitrary work-frame size; the model crops the ROI and resizes itself
    Tensor clip = random_tensor<float>(Shape{1, 3, 2, 80, 128}, rng, 0.0f, 1.0f);
    auto fwd = model_forward(m, clip);

    CHECK(fwd.out.confidence.shape == Shape{1, 1, 1, 8, 16});
    CHECK(fwd.out.offsets.empty());
    CHECK(fwd.out.embeddings.empty());
    for (float v : fwd.out.confidence.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    // default ROI keeps x fully and drops the top 40% of rows:
    // y_lo = round(0.4*80) = 32, crop 48x128, resize to 32x64 ->
    // fx = 2, fy = 1.5, pixel centers shift by (f-1)/2
    CHECK(fwd.transform.ax == Approx(2.0));
    CHECK(fwd.transform.bx == Approx(0.5));
    CHECK(fwd.transform.ay == Approx(1.5));
    CHECK(fwd.transform.by == Approx(32.25));
}

TEST_CASE("network1 confidence and offsets are sigmoid-bounded") {
    EncoderConfig cfg = micro_config(Variant::network1);
    auto m = make_model<float>(cfg, 13);
    set_training(m, false);
    Rng rng(3200);
    Tensor clip = random_tensor<float>(Shape{2, 3, 2, 32, 64}, rng, 0.0f, 1.0f);
    auto fwd = model_forward(m, clip);
    CHECK(fwd.out.confidence.shape == Shape{2, 1, 1, 8, 16});
    CHECK(fwd.out.offsets.shape == Shape{2, 2, 1, 8, 16});
    CHECK(fwd.out.embeddings.shape == Shape{2, 3, 1, 8, 16});
    for (float v : fwd.out.confidence.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    for (float v : fwd.out.offsets.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("encode rejects clips that do not match the configuration") {
    EncoderConfig cfg = micro_config(Variant::network1);
    auto m = make_model<float>(cfg, 14);
    Rng rng(3250);
    Tensor wrong_res = random_tensor<float>(Shape{1, 3, 2, 64, 64}, rng);
    CHECK_THROWS_MATCHES(model_forward(m, wrong_res), std::invalid_argument,
                         Catch::Matchers::MessageMatches(ContainsSubstring("configured input resolution")));
    Tensor wrong_ch = random_tensor<float>(Shape{1, 4, 2, 32, 64}, rng);
    CHECK_THROWS_AS(model_forward(m, wrong_ch), std::invalid_argument);
}

TEST_CASE("roi crop extracts the fractional window and reports the offset") {
    TensorT<float> x(Shape{1, 1, 1, 4, 6});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<float>(i);
    RoiBounds roi;
    roi.x1 = 0.25;  // -> round(1.5) = 2
    roi.x2 = 1.0;
    roi.y1 = 0.5;  // -> 2
    roi.y2 = 1.0;
    auto [crop, tf] = roi_crop(x, roi);
    REQUIRE(crop.shape == Shape{1, 1, 1, 2, 4});
    // rows 2..3, cols 2..5 of the 4x6 ramp
    const std::vector<float> want{14, 15, 16, 17, 20, 21, 22, 23};
    for (size_t i = 0; i < want.size(); ++i) CHECK(crop.data[i] == want[i]);
    CHECK(tf.ax == 1.0);
    CHECK(tf.bx == 2.0);
    CHECK(tf.ay == 1.0);
    CHECK(tf.by == 2.0);

    RoiBounds bad;
    bad.y1 = 0.9;
    bad.y2 = 0.2;
    CHECK_THROWS_AS(roi_crop(x, bad), std::invalid_argument);
    RoiBounds degenerate;
    degenerate.x1 = 0.49;  // rounds to the same column as x2=0.5 on W=6? keep y degenerate instead
    degenerate.x2 = 0.5;
    degenerate.y1 = 0.0;
    degenerate.y2 = 1.0;
    // x window [round(2.94), round(3)) is empty on W=6
    CHECK_THROWS_MATCHES(roi_crop(x, degenerate), std::invalid_argument,
                         Catch::Matchers::MessageMatches(ContainsSubstring("degenerate")));
}

TEST_CASE("coordinate transforms compose and invert") {
    CoordTransform crop{1.0, 3.0, 1.0, 7.0};
    CoordTransform resize{2.0, 0.5, 1.5, 0.25};
    CoordTransform both = compose(crop, resize);
    double ox = 0, oy = 0;
    both.apply(4.0, 2.0, ox, oy);
    // resize first: (8.5, 3.25), then crop offset: (11.5, 10.25)
    CHECK(ox == Approx(11.5));
    CHECK(oy == Approx(10.25));

    CoordTransform inv = both.inverse();
    double rx = 0, ry = 0;
    inv.apply(ox, oy, rx, ry);
    CHECK(rx == Approx(4.0));
    CHECK(ry == Approx(2.0));
    CHECK(CoordTransform{}.is_identity());
    CHECK_FALSE(both.is_identity());
    CHECK_THROWS_AS((CoordTransform{0.0, 0.0, 1.0, 0.0}.inverse()), std::invalid_argument);
}

TEST_CASE("bilinear volume resize matches hand-computed samples") {
    SECTION("same size is returned unchanged") {
        Rng rng(3300);
        TensorT<float> x = random_tensor<float>(Shape{1, 2, 2, 3, 5}, rng);
        TensorT<float> y = resize_bilinear_volume(x, 3, 5);
        CHECK(same_bits(x, y));
    }
    SECTION("2:1 downscale averages each 2x2 block under the center convention") {
        TensorT<float> x(Shape{1, 1, 1, 4, 4});
        for (size_t i = 0; i < 16; ++i) x.data[i] = static_cast<float>(i);
        TensorT<float> y = resize_bilinear_volume(x, 2, 2);
        REQUIRE(y.shape == Shape{1, 1, 1, 2, 2});
        CHECK(y.data[0] == Approx(2.5));   // mean of {0,1,4,5}
        CHECK(y.data[1] == Approx(4.5));   // mean of {2,3,6,7}
        CHECK(y.data[2] == Approx(10.5));  // mean of {8,9,12,13}
        CHECK(y.data[3] == Approx(12.5));
    }
    SECTION("2x upscale interpolates between pixel centers") {
        TensorT<float> x(Shape{1, 1, 1, 1, 2});
        x.data = {0.0f, 4.0f};
        TensorT<float> y = resize_bilinear_volume(x, 1, 4);
        REQUIRE(y.shape == Shape{1, 1, 1, 1, 4});
        // source coords: -0.25, 0.25, 0.75, 1.25 -> clamped ends
        CHECK(y.data[0] == Approx(0.0));
        CHECK(y.data[1] == Approx(1.0));
        CHECK(y.data[2] == Approx(3.0));
        CHECK(y.data[3] == Approx(4.0));
    }
    SECTION("rejects degenerate outputs") {
        TensorT<float> x(Shape{1, 1, 1, 2, 2});
        CHECK_THROWS_AS(resize_bilinear_volume(x, 0, 2), std::invalid_argument);
    }
}

TEST_CASE("factorized encoder needs fewer multiply-accumulates at full width") {
    EncoderConfig cfg;  // production defaults: widths 64..512, T=4, 256x512
    REQUIRE(cfg.factorized);
    auto fact = make_model<float>(cfg, 1);
    EncoderConfig dense_cfg = cfg;
    dense_cfg.factorized = false;
    auto dense = make_model<float>(dense_cfg, 1);

    const Shape in{1, 3, 4, 256, 512};
    const int64_t fact_macs = count_macs(fact, in);
    const int64_t dense_macs = count_macs(dense, in);
    CHECK(fact_macs > 0);
    CHECK(fact_macs < dense_macs);

    // the full-scale parameter budget stays under 15M
    const int64_t params = count_params(fact);
    CHECK(params < 15'000'000);
    CHECK(params > 1'000'000);
}

TEST_CASE("factorized blocks also win at desk scale") {
    for (Variant v : {Variant::network1, Variant::network2}) {
        EncoderConfig cfg = micro_config(v);
        auto fact = make_model<float>(cfg, 2);
        EncoderConfig dense_cfg = cfg;
        dense_cfg.factorized = false;
        auto dense = make_model<float>(dense_cfg, 2);
        const Shape in = v == Variant::network1 ? Shape{1, 3, 2, 32, 64} : Shape{1, 3, 2, 80, 128};
        CHECK(count_macs(fact, in) < count_macs(dense, in));
    }
}

TEST_CASE("parameter registry uses stable names and flags running stats") {
    EncoderConfig cfg = micro_config(Variant::network1);
    auto m = make_model<float>(cfg, 21);
    auto params = model_params(m);

    std::set<std::string> names;
    int64_t trainable_numel = 0;
    for (const auto& p : params) {
        CHECK(names.insert(p.name).second);  // no duplicate names
        REQUIRE(p.tensor != nullptr);
        CHECK(!p.tensor->empty());
        if (p.trainable) trainable_numel += p.tensor->numel();
        const bool is_running = p.name.find("running_") != std::string::npos;
        CHECK(p.trainable == !is_running);
    }
    CHECK(trainable_numel == count_params(m));

    for (const char* expected :
         {"stem.conv.weight", "stem.bn.gamma", "stem.bn.running_mean", "stage1.block0.unit1.conv.weight",
          "stage1.block0.unit1.conv_t.weight", "stage1.block0.unit1.bn_mid.gamma", "stage2.block0.proj.weight",
          "stage2.block0.proj_bn.running_var", "attention.wq", "attention.gamma", "fpn.lateral1.weight",
          "fpn.lateral4.bias", "decoder.trunk.conv.weight", "head.conf.weight", "head.conf.bias",
          "head.offset.weight", "head.embed.bias"}) {
        INFO("missing " << expected);
        CHECK(names.count(expected) == 1);
    }

    // network2 swaps the decoder and drops the refinement/extra heads
    auto m2 = make_model<float>(micro_config(Variant::network2), 21);
    std::set<std::string> names2;
    for (const auto& p : model_params(m2)) names2.insert(p.name);
    CHECK(names2.count("decoder.tc1.weight") == 1);
    CHECK(names2.count("decoder.tc2_bn.running_mean") == 1);
    CHECK(names2.count("attention.wq") == 0);
    CHECK(names2.count("fpn.lateral1.weight") == 0);
    CHECK(names2.count("head.offset.weight") == 0);
    CHECK(names2.count("head.embed.weight") == 0);
    CHECK(names2.count("head.conf.weight") == 1);
}

TEST_CASE("model construction is deterministic per seed") {
    EncoderConfig cfg = micro_config(Variant::network1);
    auto a = make_model<float>(cfg, 5);
    auto b = make_model<float>(cfg, 5);
    auto c = make_model<float>(cfg, 6);
    auto pa = model_params(a), pb = model_params(b), pc = model_params(c);
    REQUIRE(pa.size() == pb.size());
    bool all_equal_ab = true, any_diff_ac = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        all_equal_ab = all_equal_ab && same_bits(*pa[i].tensor, *pb[i].tensor);
        any_diff_ac = any_diff_ac || !same_bits(*pa[i].tensor, *pc[i].tensor);
    }
    CHECK(all_equal_ab);
    CHECK(any_diff_ac);
}

TEST_CASE("checkpoints round-trip bit for bit") {
    EncoderConfig cfg = micro_config(Variant::network1);
    auto m = make_model<float>(cfg, 7);
    // push the running statistics away from their defaults so the round trip
    // covers non-trainable buffers too
    set_training(m, true);
    Rng rng(3400);
    Tensor clip = random_tensor<float>(Shape{1, 3, 2, 32, 64}, rng, 0.0f, 1.0f);
    model_forward(m, clip);

    const std::string path = "ck_roundtrip_test.ldck";
    save_checkpoint(path, m);
    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(config_diff(ck.config, cfg).empty());

    auto restored = model_from_checkpoint<float>(ck);
    auto pa = model_params(m);
    auto pb = model_params(restored);
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        INFO(pa[i].name);
        CHECK(pa[i].name == pb[i].name);
        CHECK(same_bits(*pa[i].tensor, *pb[i].tensor));
    }

    // inference outputs of the restored model match the original exactly
    set_training(m, false);
    set_training(restored, false);
    auto fwd_a = model_forward(m, clip);
    auto fwd_b = model_forward(restored, clip);
    CHECK(same_bits(fwd_a.out.confidence, fwd_b.out.confidence));
    CHECK(same_bits(fwd_a.out.offsets, fwd_b.out.offsets));
    CHECK(same_bits(fwd_a.out.embeddings, fwd_b.out.embeddings));
    std::remove(path.c_str());
}

TEST_CASE("config differences are reported field by field") {
    EncoderConfig a = micro_config(Variant::network1);
    EncoderConfig b = a;
    CHECK(config_diff(a, b).empty());
    b.input_w = 128;
    b.embed_dim = 5;
    auto diff = config_diff(a, b);
    REQUIRE(diff.size() == 2);
    bool saw_w = false, saw_e = false;
    for (const auto& d : diff) {
        if (d.find("input_w") != std::string::npos) saw_w = true;
        if (d.find("embed_dim") != std::string::npos) saw_e = true;
    }
    CHECK(saw_w);
    CHECK(saw_e);
}

TEST_CASE("malformed checkpoint files are rejected with clear errors") {
    CHECK_THROWS_MATCHES(load_checkpoint("definitely_missing.ldck"), std::runtime_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("cannot open")));

    {
        std::ofstream os("bad_magic.ldck", std::ios::binary);
        os.write("JUNKJUNKJUNKJUNK", 16);
    }
    CHECK_THROWS_MATCHES(load_checkpoint("bad_magic.ldck"), std::runtime_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("not a checkpoint")));
    std::remove("bad_magic.ldck");

    {
        std::ofstream os("bad_version.ldck", std::ios::binary);
        os.write("LDCK", 4);
        const unsigned char version[4] = {9, 0, 0, 0};  // little-endian 9
        os.write(reinterpret_cast<const char*>(version), 4);
        const unsigned char len[8] = {2, 0, 0, 0, 0, 0, 0, 0};
        os.write(reinterpret_cast<const char*>(len), 8);
        os.write("{}", 2);
    }
    CHECK_THROWS_MATCHES(load_checkpoint("bad_version.ldck"), std::runtime_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("unsupported version")));
    std::remove("bad_version.ldck");

    {
        std::ofstream os("truncated.ldck", std::ios::binary);
        os.write("LDCK", 4);
        const unsigned char version[4] = {1, 0, 0, 0};
        os.write(reinterpret_cast<const char*>(version), 4);
        const unsigned char len[8] = {200, 0, 0, 0, 0, 0, 0, 0};  // promises more than present
        os.write(reinterpret_cast<const char*>(len), 8);
        os.write("{\"config\":", 10);
    }
    CHECK_THROWS_MATCHES(load_checkpoint("truncated.ldck"), std::runtime_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("manifest truncated")));
    std::remove("truncated.ldck");
}

TEST_CASE("restoring requires the manifest to match the architecture") {
    EncoderConfig cfg = micro_config(Variant::network2);
    auto m = make_model<float>(cfg, 8);
    const std::string path = "ck_manifest_test.ldck";
    save_checkpoint(path, m);
    LoadedCheckpoint ck = load_checkpoint(path);
    std::remove(path.c_str());

    LoadedCheckpoint fewer = ck;
    fewer.names.pop_back();
    fewer.tensors.pop_back();
    CHECK_THROWS_MATCHES(model_from_checkpoint<float>(fewer), std::invalid_argument,
                         Catch::Matchers::MessageMatches(ContainsSubstring("parameter count mismatch")));

    LoadedCheckpoint swapped = ck;
    std::swap(swapped.names[0], swapped.names[1]);
    CHECK_THROWS_MATCHES(model_from_checkpoint<float>(swapped), std::invalid_argument,
                         Catch::Matchers::MessageMatches(ContainsSubstring("order mismatch")));

    LoadedCheckpoint reshaped = ck;
    reshaped.tensors[0] = Tensor(Shape{1, 2, 3});
    CHECK_THROWS_MATCHES(model_from_checkpoint<float>(reshaped), std::invalid_argument,
                         Catch::Matchers::MessageMatches(ContainsSubstring("shape mismatch")));
}

TEST_CASE("configuration validation rejects malformed architectures") {
    const EncoderConfig good = micro_config(Variant::network1);
    CHECK_NOTHROW(validate_config(good));

    auto expect_reject = [&](auto mutate, const char* what) {
        EncoderConfig c = good;
        mutate(c);
        INFO(what);
        CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
    };
    expect_reject([](EncoderConfig& c) { c.stage_channels = {8, 8, 16, 32}; }, "non-increasing widths");
    expect_reject([](EncoderConfig& c) { c.stage_channels = {0, 8, 16, 32}; }, "zero width");
    expect_reject([](EncoderConfig& c) { c.blocks_per_stage = 0; }, "no blocks");
    expect_reject([](EncoderConfig& c) { c.temporal_depth = 0; }, "no frames");
    expect_reject([](EncoderConfig& c) { c.input_h = 30; }, "height not divisible by 16");
    expect_reject([](EncoderConfig& c) { c.input_w = 100; }, "width not divisible by 16");
    expect_reject([](EncoderConfig& c) { c.embed_dim = 0; }, "no embedding dims");
    expect_reject([](EncoderConfig& c) { c.dropout_p = 1.0f; }, "dropout of one");
    expect_reject([](EncoderConfig& c) { c.roi.y1 = 0.9, c.roi.y2 = 0.4; }, "inverted roi");
    expect_reject(
        [](EncoderConfig& c) {
            c.variant = Variant::network2;
            c.attention_enabled = true;
            c.fpn_enabled = false;
        },
        "network2 with attention");
}
