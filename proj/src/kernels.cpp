// Histogram and split-scan kernels. The parallel variants distribute fixed
// 2048-element chunks (histograms) or whole features (split scan) and fold
// partial results in a fixed order, so serial and parallel runs agree bitwise.

#include "queenwatch/kernels.hpp"

#include <algorithm>
#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace queenwatch::kernels {

bool parallel_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

namespace {

bool use_parallel(Exec exec) {
    switch (exec) {
        case Exec::serial: return false;
        case Exec::parallel: return parallel_available();
        case Exec::automatic: return parallel_available();
    }
    return false;
}

// Accumulate one feature's histogram over samples[begin, end) in order.
void accumulate_chunk(const BinnedMatrix& bm, std::size_t f, std::span<const double> grad,
                      std::span<const double> hess, std::span<const std::uint32_t> samples,
                      std::size_t begin, std::size_t end, HistEntry* out) {
    const std::uint8_t* codes = bm.codes.data() + f * bm.n_rows;
    for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t r = samples[i];
        HistEntry& e = out[codes[r]];
        e.g += grad[r];
        e.h += hess[r];
        e.n += 1;
    }
}

void fold_histograms(const HistEntry* base, std::size_t n_chunks, std::size_t stride,
                     HistEntry* out, std::size_t bins) {
    for (std::size_t b = 0; b < bins; ++b) {
        HistEntry acc;
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const HistEntry& p = base[c * stride + b];
            acc.g += p.g;
            acc.h += p.h;
            acc.n += p.n;
        }
        out[b] = acc;
    }
}

void histogram_impl(const BinnedMatrix& bm, std::span<const double> grad,
                    std::span<const double> hess, std::span<const std::uint32_t> samples,
                    std::span<HistEntry> out, bool parallel) {
    const std::size_t mb = bm.max_bins();
    assert(out.size() >= bm.n_features * mb);
    std::fill(out.begin(), out.end(), HistEntry{});

    const std::size_t n = samples.size();
    const std::size_t n_chunks = n == 0 ? 0 : (n + kChunkSize - 1) / kChunkSize;

    if (n_chunks <= 1) {
        // Single chunk: the fold is the identity, accumulate straight into out.
        for (std::size_t f = 0; f < bm.n_features; ++f)
            accumulate_chunk(bm, f, grad, hess, samples, 0, n, out.data() + f * mb);
        return;
    }

    std::vector<HistEntry> partials(n_chunks * bm.n_features * mb);
    const std::size_t tasks = bm.n_features * n_chunks;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (std::size_t t = 0; t < tasks; ++t) {
        const std::size_t f = t / n_chunks;
        const std::size_t c = t % n_chunks;
        const std::size_t begin = c * kChunkSize;
        const std::size_t end = std::min(begin + kChunkSize, n);
        accumulate_chunk(bm, f, grad, hess, samples, begin, end,
                         partials.data() + (c * bm.n_features + f) * mb);
    }
#ifndef _OPENMP
    (void)parallel;
#endif

    for (std::size_t f = 0; f < bm.n_features; ++f)
        fold_histograms(partials.data() + f * mb, n_chunks, bm.n_features * mb,
                        out.data() + f * mb, mb);
}

// Best boundary within one feature: ascending bins, strictly-greater gain wins,
// so equal gains keep the lowest bin.
SplitCandidate scan_feature(std::span<const HistEntry> hist, std::size_t f, std::size_t mb,
                            std::uint16_t bins, double g_total, double h_total,
                            std::uint32_t n_total, double lambda,
                            std::uint32_t min_samples_leaf) {
    SplitCandidate best;
    if (bins < 2) return best;
    double gl = 0.0, hl = 0.0;
    std::uint32_t nl = 0;
    const HistEntry* row = hist.data() + f * mb;
    for (std::uint16_t b = 0; b + 1 < bins; ++b) {
        gl += row[b].g;
        hl += row[b].h;
        nl += row[b].n;
        const std::uint32_t nr = n_total - nl;
        if (nl < min_samples_leaf) continue;
        if (nr < min_samples_leaf) break;
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        const double gain = split_gain(gl, hl, gr, hr, lambda);
        if (gain > best.gain) {
            best.feature = static_cast<int>(f);
            best.bin = b;
            best.gain = gain;
            best.g_left = gl;
            best.h_left = hl;
            best.n_left = nl;
            best.g_right = gr;
            best.h_right = hr;
            best.n_right = nr;
        }
    }
    return best;
}

// Ascending-feature fold with strictly-greater acceptance: equal gains keep
// the lowest feature index.
SplitCandidate fold_candidates(std::span<const SplitCandidate> per_feature) {
    SplitCandidate best;
    for (const SplitCandidate& c : per_feature)
        if (c.valid() && c.gain > best.gain) best = c;
    return best;
}

SplitCandidate split_impl(std::span<const HistEntry> hist, const BinnedMatrix& bm,
                          double g_total, double h_total, std::uint32_t n_total,
                          double lambda, std::uint32_t min_samples_leaf, bool parallel) {
    const std::size_t mb = bm.max_bins();
    std::vector<SplitCandidate> per_feature(bm.n_features);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && bm.n_features >= 8)
#endif
    for (std::size_t f = 0; f < bm.n_features; ++f)
        per_feature[f] = scan_feature(hist, f, mb, bm.n_bins[f], g_total, h_total, n_total,
                                      lambda, min_samples_leaf);
#ifndef _OPENMP
    (void)parallel;
#endif
    return fold_candidates(per_feature);
}

}  // namespace

std::size_t BinnedMatrix::max_bins() const {
    std::size_t mb = 0;
    for (std::uint16_t b : n_bins) mb = std::max<std::size_t>(mb, b);
    return mb;
}

void build_histogram(const BinnedMatrix& bm, std::span<const double> grad,
                     std::span<const double> hess, std::span<const std::uint32_t> samples,
                     std::span<HistEntry> out, Exec exec) {
    histogram_impl(bm, grad, hess, samples, out, use_parallel(exec));
}

void ref::build_histogram(const BinnedMatrix& bm, std::span<const double> grad,
                          std::span<const double> hess, std::span<const std::uint32_t> samples,
                          std::span<HistEntry> out) {
    histogram_impl(bm, grad, hess, samples, out, false);
}

SplitCandidate best_split_scan(std::span<const HistEntry> hist, const BinnedMatrix& bm,
                               double g_total, double h_total, std::uint32_t n_total,
                               double l2_lambda, std::uint32_t min_samples_leaf, Exec exec) {
    return split_impl(hist, bm, g_total, h_total, n_total, l2_lambda, min_samples_leaf,
                      use_parallel(exec));
}

SplitCandidate ref::best_split_scan(std::span<const HistEntry> hist, const BinnedMatrix& bm,
                                    double g_total, double h_total, std::uint32_t n_total,
                                    double l2_lambda, std::uint32_t min_samples_leaf) {
    return split_impl(hist, bm, g_total, h_total, n_total, l2_lambda, min_samples_leaf, false);
}

}  // namespace queenwatch::kernels
