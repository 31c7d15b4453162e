#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace queenwatch::kernels {

// Every parallel kernel in this namespace has a serial reference twin under
// kernels::ref computing the identical chunk-structured arithmetic, so results
// are bit-identical for any worker count. Tests compare the two; the bench
// target times them.

enum class Exec { automatic, serial, parallel };

bool parallel_available();

// Fixed accumulation chunk: floating-point partial sums are formed per chunk
// and folded in chunk order, independent of thread count.
inline constexpr std::size_t kChunkSize = 2048;

struct HistEntry {
    double g = 0.0;
    double h = 0.0;
    std::uint32_t n = 0;
};

// Feature-major bin codes plus per-feature boundary values in the scaled
// domain. bin(x) = #(bounds < x); splitting at boundary b sends codes <= b left.
struct BinnedMatrix {
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::vector<std::uint16_t> n_bins;              // per feature, = bounds.size() + 1
    std::vector<std::uint8_t> codes;                // [f * n_rows + r]
    std::vector<std::vector<double>> bounds;        // per feature, strictly increasing

    std::uint8_t code(std::size_t f, std::size_t r) const { return codes[f * n_rows + r]; }
    std::size_t max_bins() const;
};

// out must hold n_features * max_bins entries and is overwritten.
void build_histogram(const BinnedMatrix& bm, std::span<const double> grad,
                     std::span<const double> hess, std::span<const std::uint32_t> samples,
                     std::span<HistEntry> out, Exec exec = Exec::automatic);

namespace ref {
void build_histogram(const BinnedMatrix& bm, std::span<const double> grad,
                     std::span<const double> hess, std::span<const std::uint32_t> samples,
                     std::span<HistEntry> out);
}

struct SplitCandidate {
    int feature = -1;  // -1 = no split
    int bin = -1;      // boundary index; left child takes codes <= bin
    double gain = 0.0;
    double g_left = 0.0, h_left = 0.0;
    double g_right = 0.0, h_right = 0.0;
    std::uint32_t n_left = 0, n_right = 0;

    bool valid() const { return feature >= 0; }
};

// Split gain of the histogram objective.
inline double split_gain(double gl, double hl, double gr, double hr, double lambda) {
    const double parent = (gl + gr) * (gl + gr) / (hl + hr + lambda);
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
}

// Best (feature, boundary) pair by gain; ties resolved to the lowest feature
// index, then the lowest bin. Returns an invalid candidate when no positive-
// gain split satisfies min_samples_leaf on both sides.
SplitCandidate best_split_scan(std::span<const HistEntry> hist, const BinnedMatrix& bm,
                               double g_total, double h_total, std::uint32_t n_total,
                               double l2_lambda, std::uint32_t min_samples_leaf,
                               Exec exec = Exec::automatic);

namespace ref {
SplitCandidate best_split_scan(std::span<const HistEntry> hist, const BinnedMatrix& bm,
                               double g_total, double h_total, std::uint32_t n_total,
                               double l2_lambda, std::uint32_t min_samples_leaf);
}

}  // namespace queenwatch::kernels
