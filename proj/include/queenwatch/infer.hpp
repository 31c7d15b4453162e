#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "queenwatch/gbdt.hpp"
#include "queenwatch/quantize.hpp"

namespace queenwatch::infer {

// Differentials → z-score with the stored f32 scaler → saturating i16 fixed
// point, round-half-even. Mirrors what the device firmware does on receipt.
std::vector<std::int16_t> prepare_features(const FeatureVector& v,
                                           const quantize::QuantForest& qf);

// Saturating fixed-point walk over all trees. Bounds-checked against corrupt
// blobs: out-of-range node hops raise CorruptModel instead of reading wild.
std::int32_t eval_quant(const quantize::QuantForest& qf, std::span<const std::int16_t> x_q);

struct QuantPrediction {
    std::int32_t score_q;
    int label;  // score_q >= 0
};

QuantPrediction predict_quant(const quantize::QuantForest& qf, const FeatureVector& v);

struct ParityReport {
    std::size_t n = 0;
    std::size_t label_agree = 0;
    double agreement = 0.0;
    double max_raw_dev = 0.0;
    double mean_raw_dev = 0.0;
};

// Float forest vs quantized forest over a dataset's samples.
ParityReport parity_report(const gbdt::Forest& f, const quantize::QuantForest& qf,
                           const Dataset& ds);

}  // namespace queenwatch::infer
