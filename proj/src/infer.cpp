// Quantized inference path shared by the host tools and the simulated device.

#include "queenwatch/infer.hpp"

#include <cmath>

#include "queenwatch/error.hpp"

namespace queenwatch::infer {

namespace {

std::int16_t saturate_i16(double scaled) {
    const double q = std::nearbyint(scaled);
    if (q >= 32767.0) return 32767;
    if (q <= -32768.0) return -32768;
    return static_cast<std::int16_t>(q);
}

std::int32_t sat_add(std::int32_t a, std::int32_t b) {
    const std::int64_t s = static_cast<std::int64_t>(a) + b;
    if (s > 0x7FFFFFFFLL) return 0x7FFFFFFF;
    if (s < -0x80000000LL) return static_cast<std::int32_t>(-0x80000000LL);
    return static_cast<std::int32_t>(s);
}

}  // namespace

std::vector<std::int16_t> prepare_features(const FeatureVector& v,
                                           const quantize::QuantForest& qf) {
    if ((v.mask.bits & qf.mask.bits) != qf.mask.bits)
        raise(Errc::dimension_mismatch, "sample lacks features the model needs");
    std::vector<std::int16_t> out;
    out.reserve(qf.n_features());
    std::size_t c = 0;
    for (int id = 0; id < kFeatureSlots; ++id) {
        const auto fid = static_cast<FeatureId>(id);
        if (!qf.mask.has(fid)) continue;
        const double x = v.values[static_cast<std::size_t>(id)];
        if (!std::isfinite(x)) raise(Errc::non_finite_input, "non-finite feature value");
        const double z = (x - static_cast<double>(qf.scaler_mean[c])) /
                         static_cast<double>(qf.scaler_std[c]);
        out.push_back(saturate_i16(std::ldexp(z, qf.feature_frac)));
        ++c;
    }
    return out;
}

std::int32_t eval_quant(const quantize::QuantForest& qf, std::span<const std::int16_t> x_q) {
    if (x_q.size() != qf.n_features())
        raise(Errc::dimension_mismatch, "feature vector width does not match the model");
    if (qf.roots.empty()) raise(Errc::empty_forest, "model has no trees");

    const std::size_t n = qf.nodes.size();
    std::int32_t acc = qf.base_q;
    for (std::size_t t = 0; t < qf.roots.size(); ++t) {
        const std::size_t root = qf.roots[t];
        const std::size_t end = t + 1 < qf.roots.size() ? qf.roots[t + 1] : n;
        if (root >= end || end > n) raise(Errc::corrupt_model, "root table out of range");
        std::size_t node = root;
        // A well-formed tree reaches a leaf in fewer hops than it has nodes.
        std::size_t hops = end - root;
        while (!qf.nodes[node].is_leaf()) {
            if (hops-- == 0) raise(Errc::corrupt_model, "cycle in tree structure");
            const quantize::QuantNode& q = qf.nodes[node];
            if (q.feature >= x_q.size()) raise(Errc::corrupt_model, "feature index out of range");
            const std::int16_t offset = x_q[q.feature] <= q.threshold_q ? q.left : q.right;
            const std::size_t next = root + static_cast<std::size_t>(static_cast<std::int32_t>(offset));
            if (offset < 0 || next >= end) raise(Errc::corrupt_model, "child offset out of range");
            node = next;
        }
        acc = sat_add(acc, qf.nodes[node].leaf_q);
    }
    return acc;
}

QuantPrediction predict_quant(const quantize::QuantForest& qf, const FeatureVector& v) {
    const std::vector<std::int16_t> x_q = prepare_features(v, qf);
    const std::int32_t score = eval_quant(qf, x_q);
    return {score, score >= 0 ? 1 : 0};
}

ParityReport parity_report(const gbdt::Forest& f, const quantize::QuantForest& qf,
                           const Dataset& ds) {
    if (f.mask != qf.mask) raise(Errc::dimension_mismatch, "models disagree on features");
    if (ds.samples.empty()) raise(Errc::empty_dataset, "no samples to compare");
    ParityReport r;
    r.n = ds.samples.size();
    double dev_sum = 0.0;
    for (const SensorSample& s : ds.samples) {
        const FeatureVector v = compute_differentials(s);
        const gbdt::Prediction ref = gbdt::predict(f, v);
        const QuantPrediction q = predict_quant(qf, v);
        const double dev = std::abs(ref.raw - std::ldexp(static_cast<double>(q.score_q),
                                                         -static_cast<int>(qf.leaf_frac)));
        dev_sum += dev;
        if (dev > r.max_raw_dev) r.max_raw_dev = dev;
        if (ref.label == q.label) ++r.label_agree;
    }
    r.agreement = static_cast<double>(r.label_agree) / static_cast<double>(r.n);
    r.mean_raw_dev = dev_sum / static_cast<double>(r.n);
    return r;
}

}  // namespace queenwatch::infer
