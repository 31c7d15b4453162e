#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "queenwatch/ingest.hpp"

namespace queenwatch {

// Feature slots are frozen across the whole system: training, quantization,
// the wire, and inference all agree on this ordering.
inline constexpr int kFeatureSlots = 4;
enum class FeatureId : std::uint8_t { delta_t = 0, delta_h = 1, delta_p = 2, audio_rms = 3 };

struct FeatureMask {
    std::uint8_t bits = 0x07;  // environmental differentials

    static FeatureMask env() { return {0x07}; }
    static FeatureMask env_audio() { return {0x0F}; }
    static FeatureMask single(FeatureId id) {
        return {static_cast<std::uint8_t>(1u << static_cast<int>(id))};
    }
    // Parses subsets like "t,h,p" or "t,h,p,a".
    static FeatureMask from_string(const std::string& spec);

    bool has(FeatureId id) const { return (bits >> static_cast<int>(id)) & 1u; }
    int count() const { return std::popcount(bits); }
    // Position of a slot among the active ones; slot must be active.
    int compact_index(FeatureId id) const {
        return std::popcount(static_cast<std::uint8_t>(bits & ((1u << static_cast<int>(id)) - 1u)));
    }
    std::string to_string() const;
    bool operator==(const FeatureMask&) const = default;
};

struct FeatureVector {
    std::array<double, kFeatureSlots> values{};  // slot order, inactive slots zero
    FeatureMask mask;
};

// ΔX = inside - outside for T, H, P; audio passes through when present.
FeatureVector compute_differentials(const SensorSample& s);

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;  // row-major

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {a.data() + r * cols, cols}; }
};

// Compacts the active features of every sample into a matrix, column order =
// ascending slot order of the mask. MissingAudio if the mask wants slot 3 and
// a sample lacks it.
Matrix build_matrix(const Dataset& ds, FeatureMask mask);
std::vector<int> labels_of(const Dataset& ds);

struct ScalerParams {
    std::vector<double> mean;  // one entry per active feature, compact order
    std::vector<double> std;   // strictly positive

    std::size_t size() const { return mean.size(); }
    bool operator==(const ScalerParams&) const = default;
};

// Column mean and population standard deviation. DegenerateFeature for a
// constant column.
ScalerParams fit_scaler(const Matrix& x);

// z = (x - mean) / std, per compact column.
void apply_scaler(Matrix& x, const ScalerParams& p);
FeatureVector apply_scaler(const FeatureVector& v, const ScalerParams& p);
std::vector<double> apply_scaler(std::span<const double> compact, const ScalerParams& p);

// RMS of the signal component inside [f_lo, f_hi] Hz, via the magnitude
// spectrum of the full window (Parseval-consistent).
double rms_band_energy(std::span<const double> frames, double rate_hz,
                       double f_lo = 200.0, double f_hi = 700.0);

}  // namespace queenwatch
