#pragma once

#include <cstdint>
#include <vector>

#include "queenwatch/features.hpp"
#include "queenwatch/gbdt.hpp"

namespace queenwatch::quantize {

inline constexpr std::uint8_t kLeafMarker = 0xFF;

struct QuantSpec {
    std::uint8_t feature_frac = 8;   // i16 features/thresholds, Q(15-f).f
    std::uint8_t leaf_frac = 16;     // i32 leaves/base, Q(31-f).f

    void validate() const;  // throws DegenerateConfig
};

struct QuantNode {
    std::uint8_t feature = kLeafMarker;
    std::int16_t threshold_q = 0;
    std::int16_t left = -1;    // root-relative; -1 = none
    std::int16_t right = -1;
    std::int32_t leaf_q = 0;

    bool is_leaf() const { return feature == kLeafMarker; }
};

struct QuantForest {
    FeatureMask mask;
    std::int32_t base_q = 0;
    std::vector<float> scaler_mean;  // compact order, f32 exactly as stored
    std::vector<float> scaler_std;
    std::uint8_t feature_frac = 8;
    std::uint8_t leaf_frac = 16;
    std::vector<std::uint16_t> roots;  // global node index per tree
    std::vector<QuantNode> nodes;      // trees concatenated

    std::size_t n_features() const { return static_cast<std::size_t>(mask.count()); }
    std::size_t n_trees() const { return roots.size(); }
};

// Round-half-even fixed-point conversion with saturation. Saturation is
// tolerated up to one LSB of displacement; past that it throws Overflow.
std::int32_t to_fixed(double x, int frac_bits, std::int32_t lo, std::int32_t hi);
double from_fixed(std::int64_t q, int frac_bits);

QuantForest quantize_forest(const gbdt::Forest& f, QuantSpec spec = {});

// Float model whose integer semantics match the quantized one: thresholds are
// reconstructed on the half-grid just below (q + 0.5) * 2^-frac.
gbdt::Forest dequantize_forest(const QuantForest& qf);

}  // namespace queenwatch::quantize
