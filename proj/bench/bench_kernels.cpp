// Serial reference vs. OpenMP kernels on training-shaped data. Run with
// --benchmark_filter=histogram to isolate one family.

#include <benchmark/benchmark.h>

#include <vector>

#include "queenwatch/features.hpp"
#include "queenwatch/gbdt.hpp"
#include "queenwatch/ingest.hpp"
#include "queenwatch/kernels.hpp"
#include "queenwatch/rng.hpp"

namespace qw = queenwatch;
namespace qk = queenwatch::kernels;

namespace {

struct Fixture {
    qk::BinnedMatrix bm;
    std::vector<double> grad, hess;
    std::vector<std::uint32_t> rows;
    std::vector<qk::HistEntry> hist;

    explicit Fixture(std::size_t n_rows) {
        qw::SynthConfig sc;
        sc.n_samples = n_rows;
        const qw::Dataset ds = qw::generate_synthetic(sc);
        const qw::Matrix x = qw::build_matrix(ds, qw::FeatureMask::env());
        bm = qw::gbdt::bin_features(x, 255);
        qw::Rng rng(7);
        grad.resize(n_rows);
        hess.resize(n_rows);
        rows.resize(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) {
            grad[i] = rng.normal(0.0, 1.0);
            hess[i] = 0.25;
            rows[i] = static_cast<std::uint32_t>(i);
        }
        hist.resize(bm.n_features * bm.max_bins());
    }
};

Fixture& fixture(std::size_t n) {
    static Fixture f64k(65536);
    static Fixture f8k(8192);
    return n == 65536 ? f64k : f8k;
}

void bench_histogram(benchmark::State& state, qk::Exec exec) {
    Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        qk::build_histogram(f.bm, f.grad, f.hess, f.rows, f.hist, exec);
        benchmark::DoNotOptimize(f.hist.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bench_split_scan(benchmark::State& state, qk::Exec exec) {
    Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
    qk::build_histogram(f.bm, f.grad, f.hess, f.rows, f.hist, qk::Exec::serial);
    double g = 0.0, h = 0.0;
    for (std::size_t i = 0; i < f.grad.size(); ++i) {
        g += f.grad[i];
        h += f.hess[i];
    }
    for (auto _ : state) {
        auto cand = qk::best_split_scan(f.hist, f.bm, g, h,
                                        static_cast<std::uint32_t>(f.rows.size()), 0.0, 20, exec);
        benchmark::DoNotOptimize(cand);
    }
}

void bench_predict(benchmark::State& state, qk::Exec exec) {
    qw::SynthConfig sc;
    sc.n_samples = 6000;
    const qw::Dataset ds = qw::generate_synthetic(sc);
    qw::Dataset train{{ds.samples.begin(), ds.samples.begin() + 4000}, ds.source};
    qw::Dataset valid{{ds.samples.begin() + 4000, ds.samples.end()}, ds.source};
    const auto result = qw::gbdt::train(train, valid, {});
    const qw::Matrix x = qw::build_matrix(ds, result.forest.mask);
    std::vector<double> out(x.rows);
    for (auto _ : state) {
        qw::gbdt::predict_raw_batch(result.forest, x, out, exec);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.rows));
}

}  // namespace

BENCHMARK_CAPTURE(bench_histogram, serial, qk::Exec::serial)->Arg(8192)->Arg(65536);
BENCHMARK_CAPTURE(bench_histogram, parallel, qk::Exec::parallel)->Arg(8192)->Arg(65536);
BENCHMARK_CAPTURE(bench_split_scan, serial, qk::Exec::serial)->Arg(65536);
BENCHMARK_CAPTURE(bench_split_scan, parallel, qk::Exec::parallel)->Arg(65536);
BENCHMARK_CAPTURE(bench_predict, serial, qk::Exec::serial);
BENCHMARK_CAPTURE(bench_predict, parallel, qk::Exec::parallel);

BENCHMARK_MAIN();
