#include "queenwatch/kernels.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "queenwatch/rng.hpp"

using namespace queenwatch;
using namespace queenwatch::kernels;
using oracle::SplitInstance;

namespace {

std::vector<HistEntry> hist_of(const SplitInstance& in, Exec exec) {
    std::vector<HistEntry> out(in.bm.n_features * in.bm.max_bins());
    build_histogram(in.bm, in.grad, in.hess, in.samples, out, exec);
    return out;
}

bool hist_bits_equal(const std::vector<HistEntry>& a, const std::vector<HistEntry>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i].g) != std::bit_cast<std::uint64_t>(b[i].g) ||
            std::bit_cast<std::uint64_t>(a[i].h) != std::bit_cast<std::uint64_t>(b[i].h) ||
            a[i].n != b[i].n)
            return false;
    }
    return true;
}

void totals_of(const SplitInstance& in, double& g, double& h) {
    g = std::accumulate(in.grad.begin(), in.grad.end(), 0.0);
    h = std::accumulate(in.hess.begin(), in.hess.end(), 0.0);
}

}  // namespace

TEST_CASE("split gain closed form") {
    // gl=-2 hl=1, gr=2 hr=1, lambda=0: 0.5*(4 + 4 - 0) = 4
    CHECK(split_gain(-2.0, 1.0, 2.0, 1.0, 0.0) == 4.0);
    // Equal-sign children collapse to the parent score: zero gain.
    CHECK(split_gain(1.0, 1.0, 1.0, 1.0, 0.0) == 0.0);
    CHECK(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0) == doctest::Approx(0.5 * (2.0 + 2.0)));
}

TEST_CASE("histogram accumulates per bin") {
    // 4 rows, 1 feature, 3 bins; codes 0,1,1,2.
    BinnedMatrix bm;
    bm.n_rows = 4;
    bm.n_features = 1;
    bm.n_bins = {3};
    bm.bounds = {{0.5, 1.5}};
    bm.codes = {0, 1, 1, 2};
    const std::vector<double> grad{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> hess{0.1, 0.2, 0.3, 0.4};
    const std::vector<std::uint32_t> rows{0, 1, 2, 3};

    std::vector<HistEntry> out(3);
    build_histogram(bm, grad, hess, rows, out, Exec::serial);
    CHECK(out[0].g == 1.0);
    CHECK(out[1].g == 5.0);
    CHECK(out[1].h == doctest::Approx(0.5));
    CHECK(out[1].n == 2);
    CHECK(out[2].n == 1);

    // Subset of rows: only the listed samples contribute.
    const std::vector<std::uint32_t> subset{1, 3};
    build_histogram(bm, grad, hess, subset, out, Exec::serial);
    CHECK(out[0].n == 0);
    CHECK(out[1].g == 2.0);
    CHECK(out[2].g == 4.0);
}

TEST_CASE("parallel histogram is bit-identical to the serial reference") {
    Rng rng(404);
    // Large instance crosses many accumulation chunks.
    SplitInstance big = oracle::random_split_instance(rng, 100000, 64);
    std::vector<HistEntry> serial(big.bm.n_features * big.bm.max_bins());
    ref::build_histogram(big.bm, big.grad, big.hess, big.samples, serial);
    CHECK(hist_bits_equal(serial, hist_of(big, Exec::parallel)));
    CHECK(hist_bits_equal(serial, hist_of(big, Exec::automatic)));

    // Row subsets hit the gather path.
    std::vector<std::uint32_t> subset;
    for (std::uint32_t r = 0; r < big.bm.n_rows; r += 3) subset.push_back(r);
    std::vector<HistEntry> a(serial.size()), b(serial.size());
    ref::build_histogram(big.bm, big.grad, big.hess, subset, a);
    build_histogram(big.bm, big.grad, big.hess, subset, b, Exec::parallel);
    CHECK(hist_bits_equal(a, b));

    for (int it = 0; it < 20; ++it) {
        SplitInstance in = oracle::random_split_instance(rng, 5000, 255);
        std::vector<HistEntry> s(in.bm.n_features * in.bm.max_bins());
        ref::build_histogram(in.bm, in.grad, in.hess, in.samples, s);
        CHECK(hist_bits_equal(s, hist_of(in, Exec::parallel)));
    }
}

TEST_CASE("uniform gradients yield no positive-gain split") {
    Rng rng(7);
    SplitInstance in = oracle::random_split_instance(rng, 500, 32);
    std::fill(in.grad.begin(), in.grad.end(), 0.5);
    std::fill(in.hess.begin(), in.hess.end(), 0.25);
    const auto hist = hist_of(in, Exec::serial);
    const double g = 0.5 * double(in.bm.n_rows);
    const double h = 0.25 * double(in.bm.n_rows);
    // Constant ratio g/h on both sides makes every split's gain exactly zero
    // in exact arithmetic; the scan must not accept one.
    const SplitCandidate c = best_split_scan(hist, in.bm, g, h,
                                             std::uint32_t(in.bm.n_rows), 0.0, 1, Exec::serial);
    CHECK(!c.valid());
}

TEST_CASE("split scan matches exhaustive enumeration") {
    Rng rng(1234);
    for (int it = 0; it < 300; ++it) {
        SplitInstance in = oracle::random_split_instance(rng, 64, 8);
        const auto hist = hist_of(in, Exec::serial);
        double g, h;
        totals_of(in, g, h);
        const std::uint32_t n = std::uint32_t(in.bm.n_rows);
        const double lambda = (it % 3 == 0) ? 0.0 : 1e-2 * double(it % 7);
        const std::uint32_t msl = 1 + it % 5;

        const SplitCandidate want =
            oracle::exhaustive_best_split(hist, in.bm, g, h, n, lambda, msl);
        const SplitCandidate got = best_split_scan(hist, in.bm, g, h, n, lambda, msl, Exec::serial);
        const SplitCandidate par = best_split_scan(hist, in.bm, g, h, n, lambda, msl, Exec::parallel);

        CHECK(got.feature == want.feature);
        CHECK(got.bin == want.bin);
        CHECK(got.gain == want.gain);
        CHECK(got.g_left == want.g_left);
        CHECK(got.n_left == want.n_left);
        CHECK(par.feature == got.feature);
        CHECK(par.bin == got.bin);
        CHECK(par.gain == got.gain);
    }
}

TEST_CASE("min_samples_leaf suppresses lopsided splits") {
    // 10 rows: one row in bin 0, nine in bin 1. The only boundary puts a lone
    // sample left, so msl=2 must reject it no matter the gain.
    BinnedMatrix bm;
    bm.n_rows = 10;
    bm.n_features = 1;
    bm.n_bins = {2};
    bm.bounds = {{0.0}};
    bm.codes.assign(10, 1);
    bm.codes[0] = 0;
    std::vector<double> grad(10, 1.0), hess(10, 0.5);
    grad[0] = -9.0;  // makes the split enormously attractive
    std::vector<std::uint32_t> rows(10);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<HistEntry> hist(2);
    build_histogram(bm, grad, hess, rows, hist, Exec::serial);
    const double g = 0.0, h = 5.0;

    CHECK(best_split_scan(hist, bm, g, h, 10, 0.0, 1, Exec::serial).valid());
    CHECK(!best_split_scan(hist, bm, g, h, 10, 0.0, 2, Exec::serial).valid());
}

TEST_CASE("gain ties break to the lowest feature then the lowest bin") {
    // Two features with identical histograms: feature 0 must win.
    BinnedMatrix bm;
    bm.n_rows = 4;
    bm.n_features = 2;
    bm.n_bins = {2, 2};
    bm.bounds = {{0.0}, {0.0}};
    bm.codes = {0, 0, 1, 1, 0, 0, 1, 1};
    const std::vector<double> grad{-1.0, -1.0, 1.0, 1.0};
    const std::vector<double> hess{1.0, 1.0, 1.0, 1.0};
    const std::vector<std::uint32_t> rows{0, 1, 2, 3};
    std::vector<HistEntry> hist(4);
    build_histogram(bm, grad, hess, rows, hist, Exec::serial);
    SplitCandidate c = best_split_scan(hist, bm, 0.0, 4.0, 4, 0.0, 1, Exec::serial);
    REQUIRE(c.valid());
    CHECK(c.feature == 0);

    // One feature, three bins, symmetric gradients: boundaries 0 and 1 tie
    // (split {0|1,2} mirrors {0,1|2}); the scan must keep boundary 0.
    BinnedMatrix bm2;
    bm2.n_rows = 4;
    bm2.n_features = 1;
    bm2.n_bins = {3};
    bm2.bounds = {{0.0, 1.0}};
    bm2.codes = {0, 1, 1, 2};
    const std::vector<double> g2{-2.0, 1.0, -1.0, 2.0};
    const std::vector<double> h2{1.0, 0.5, 0.5, 1.0};
    std::vector<HistEntry> hist2(3);
    build_histogram(bm2, g2, h2, rows, hist2, Exec::serial);
    c = best_split_scan(hist2, bm2, 0.0, 3.0, 4, 0.0, 1, Exec::serial);
    REQUIRE(c.valid());
    CHECK(c.bin == 0);

    const SplitCandidate oracle_pick =
        oracle::exhaustive_best_split(hist2, bm2, 0.0, 3.0, 4, 0.0, 1);
    CHECK(c.bin == oracle_pick.bin);
}
