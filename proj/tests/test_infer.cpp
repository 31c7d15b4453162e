#include "queenwatch/infer.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <new>
#include <vector>

#include "doctest.h"
#include "queenwatch/error.hpp"
#include "queenwatch/rng.hpp"

using namespace queenwatch;
using namespace queenwatch::infer;
using queenwatch::quantize::QuantForest;
using queenwatch::quantize::QuantNode;

// Global allocation counter for the no-allocation invariant below.
namespace {
std::atomic<std::size_t> g_allocs{0};
}

void* operator new(std::size_t size) {
    ++g_allocs;
    if (void* p = std::malloc(size ? size : 1)) return p;
    throw std::bad_alloc();
}
void* operator new[](std::size_t size) {
    ++g_allocs;
    if (void* p = std::malloc(size ? size : 1)) return p;
    throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }

namespace {

QuantForest identity_forest() {
    QuantForest qf;
    qf.mask = FeatureMask::env();
    qf.base_q = 0;
    qf.scaler_mean = {0.0f, 0.0f, 0.0f};
    qf.scaler_std = {1.0f, 1.0f, 1.0f};
    qf.roots = {0};
    qf.nodes.resize(1);
    return qf;
}

FeatureVector env_vector(double t, double h, double p) {
    FeatureVector v;
    v.mask = FeatureMask::env();
    v.values = {t, h, p, 0.0};
    return v;
}

}  // namespace

TEST_CASE("feature preparation z-scores and quantizes") {
    QuantForest qf = identity_forest();
    qf.scaler_mean = {14.0f, 5.0f, 0.1f};
    qf.scaler_std = {2.0f, 4.0f, 0.05f};

    // Inputs equal to the means give the zero vector.
    const auto zero = prepare_features(env_vector(14.0, 5.0, 0.1), qf);
    REQUIRE(zero.size() == 3);
    CHECK(zero[0] == 0);
    CHECK(zero[1] == 0);
    CHECK(zero[2] == 0);

    // z = (18 - 14) / 2 = 2 -> 512 at eight fractional bits.
    const auto two = prepare_features(env_vector(18.0, 5.0, 0.1), qf);
    CHECK(two[0] == 512);
}

TEST_CASE("extreme z-scores saturate silently") {
    QuantForest qf = identity_forest();
    qf.feature_frac = 12;
    // z = +/-40 std at twelve fractional bits wants +/-163840: clamps to i16.
    const auto hi = prepare_features(env_vector(40.0, 0.0, 0.0), qf);
    CHECK(hi[0] == 32767);
    const auto lo = prepare_features(env_vector(-40.0, 0.0, 0.0), qf);
    CHECK(lo[0] == -32768);

    qf.feature_frac = 8;
    CHECK(prepare_features(env_vector(40.0, 0.0, 0.0), qf)[0] == 10240);
}

TEST_CASE("preparation matches the scalar fixed-point recipe") {
    Rng rng(55);
    QuantForest qf = identity_forest();
    qf.scaler_mean = {3.25f, -10.0f, 0.5f};
    qf.scaler_std = {1.5f, 7.0f, 0.125f};
    for (int it = 0; it < 10000; ++it) {
        const double t = rng.normal(3.25, 3.0);
        const double h = rng.normal(-10.0, 20.0);
        const double p = rng.normal(0.5, 0.4);
        const auto got = prepare_features(env_vector(t, h, p), qf);
        const double in[3] = {t, h, p};
        for (int f = 0; f < 3; ++f) {
            const double z = (in[f] - double(qf.scaler_mean[f])) / double(qf.scaler_std[f]);
            double scaled = std::nearbyint(std::ldexp(z, qf.feature_frac));
            scaled = std::min(scaled, 32767.0);
            scaled = std::max(scaled, -32768.0);
            CHECK(got[f] == std::int16_t(scaled));
        }
    }
}

TEST_CASE("quantized walk follows threshold comparisons") {
    QuantForest qf = identity_forest();
    qf.nodes.resize(3);
    qf.nodes[0].feature = 0;
    qf.nodes[0].threshold_q = 0;  // x <= 0 goes left
    qf.nodes[0].left = 1;
    qf.nodes[0].right = 2;
    qf.nodes[1].leaf_q = -65536;
    qf.nodes[2].leaf_q = 65536;

    CHECK(eval_quant(qf, std::vector<std::int16_t>{-256, 0, 0}) == -65536);
    CHECK(eval_quant(qf, std::vector<std::int16_t>{0, 0, 0}) == -65536);  // boundary left
    CHECK(eval_quant(qf, std::vector<std::int16_t>{1, 0, 0}) == 65536);

    const QuantPrediction neg = predict_quant(qf, env_vector(-1.0, 0.0, 0.0));
    CHECK(neg.score_q == -65536);
    CHECK(neg.label == 0);
    const QuantPrediction pos = predict_quant(qf, env_vector(1.0, 0.0, 0.0));
    CHECK(pos.label == 1);

    // Zero score decides "present": the threshold is >= 0.
    const QuantForest zero = identity_forest();
    const QuantPrediction z = predict_quant(zero, env_vector(0.0, 0.0, 0.0));
    CHECK(z.score_q == 0);
    CHECK(z.label == 1);
}

TEST_CASE("base score joins the accumulator") {
    QuantForest qf = identity_forest();
    qf.base_q = 1000;
    qf.nodes[0].leaf_q = -400;
    CHECK(eval_quant(qf, std::vector<std::int16_t>{0, 0, 0}) == 600);
}

TEST_CASE("corrupt structures raise instead of reading wild") {
    const std::vector<std::int16_t> x{0, 0, 0};
    auto expect_corrupt = [&](const QuantForest& qf) {
        try {
            eval_quant(qf, x);
            FAIL("expected CorruptModel");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::corrupt_model);
        }
    };

    QuantForest qf = identity_forest();
    qf.nodes[0].feature = 0;  // split with left = right = -1
    expect_corrupt(qf);

    qf = identity_forest();
    qf.nodes.resize(3);
    qf.nodes[0].feature = 0;
    qf.nodes[0].left = 7;  // past the node block, on the branch the walk takes
    qf.nodes[0].right = 1;
    expect_corrupt(qf);

    qf = identity_forest();
    qf.nodes[0].feature = 5;  // feature beyond the mask width
    qf.nodes[0].left = 0;
    qf.nodes[0].right = 0;
    expect_corrupt(qf);

    qf = identity_forest();
    qf.nodes.resize(2);
    qf.nodes[0].feature = 0;
    qf.nodes[0].left = 0;  // self-cycle: hop budget must end the walk
    qf.nodes[0].right = 1;
    expect_corrupt(qf);

    qf = identity_forest();
    qf.roots = {9};  // root outside the node block
    expect_corrupt(qf);

    QuantForest empty = identity_forest();
    empty.roots.clear();
    empty.nodes.clear();
    try {
        eval_quant(empty, x);
        FAIL("expected EmptyForest");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::empty_forest);
    }
}

TEST_CASE("input validation") {
    const QuantForest qf = identity_forest();
    CHECK_THROWS_AS(eval_quant(qf, std::vector<std::int16_t>{0, 0}), Error);

    FeatureVector nan_v = env_vector(std::nan(""), 0.0, 0.0);
    try {
        predict_quant(qf, nan_v);
        FAIL("expected NonFiniteInput");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_finite_input);
    }

    FeatureVector narrow;
    narrow.mask = FeatureMask::single(FeatureId::delta_t);
    CHECK_THROWS_AS(predict_quant(qf, narrow), Error);
}

TEST_CASE("tree walk does not allocate") {
    QuantForest qf = identity_forest();
    qf.nodes.resize(5);
    qf.nodes[0].feature = 0;
    qf.nodes[0].left = 1;
    qf.nodes[0].right = 2;
    qf.nodes[1].leaf_q = -100;
    qf.nodes[2].feature = 1;
    qf.nodes[2].threshold_q = 100;
    qf.nodes[2].left = 3;
    qf.nodes[2].right = 4;
    qf.nodes[3].leaf_q = 7;
    qf.nodes[4].leaf_q = 13;
    const std::vector<std::int16_t> x{5, 50, 0};

    std::int32_t sink = 0;
    const std::size_t before = g_allocs.load();
    for (int i = 0; i < 1000; ++i) sink += eval_quant(qf, x);
    CHECK(g_allocs.load() == before);
    CHECK(sink == 7 * 1000);
}

TEST_CASE("trained model keeps float/quant parity") {
    SynthConfig sc;
    sc.n_samples = 2000;
    sc.seed = 101;
    const Dataset tr = generate_synthetic(sc);
    sc.n_samples = 600;
    sc.seed = 102;
    const Dataset te = generate_synthetic(sc);
    gbdt::TrainConfig cfg;
    cfg.max_rounds = 25;
    const gbdt::Forest f = gbdt::train(tr, te, cfg).forest;
    const QuantForest qf = quantize::quantize_forest(f);

    const ParityReport rep = parity_report(f, qf, te);
    CHECK(rep.n == te.size());
    CHECK(rep.agreement >= 0.995);
    CHECK(rep.max_raw_dev <= 0x1p-10);
    CHECK(rep.mean_raw_dev <= rep.max_raw_dev);

    // Outside the quantization ambiguity band the labels must agree exactly.
    const double band = 2.0 * double(qf.n_trees() + 1) * 0x1p-16;
    for (const SensorSample& s : te.samples) {
        const FeatureVector v = compute_differentials(s);
        const double raw = gbdt::predict(f, v).raw;
        if (std::abs(raw) <= band) continue;
        CHECK(gbdt::predict(f, v).label == predict_quant(qf, v).label);
    }
}
