// Fixed-point conversion of a trained forest: i16 thresholds on the feature
// grid, i32 leaf values, f32 scaler. Saturation beyond one LSB is an error
// rather than a silent clamp.

#include "queenwatch/quantize.hpp"

#include <cmath>
#include <limits>

#include "queenwatch/error.hpp"

namespace queenwatch::quantize {

void QuantSpec::validate() const {
    if (feature_frac < 4 || feature_frac > 12)
        raise(Errc::degenerate_config, "feature_frac must be in [4,12]");
    if (leaf_frac < 8 || leaf_frac > 24)
        raise(Errc::degenerate_config, "leaf_frac must be in [8,24]");
}

std::int32_t to_fixed(double x, int frac_bits, std::int32_t lo, std::int32_t hi) {
    if (!std::isfinite(x)) raise(Errc::overflow, "non-finite value in fixed-point conversion");
    const double scaled = std::ldexp(x, frac_bits);
    const double q = std::nearbyint(scaled);  // ties to even under default rounding
    const double lsb = std::ldexp(1.0, -frac_bits);
    if (q > static_cast<double>(hi)) {
        if (x - static_cast<double>(hi) * lsb > lsb)
            raise(Errc::overflow, "value exceeds fixed-point range by more than one LSB");
        return hi;
    }
    if (q < static_cast<double>(lo)) {
        if (static_cast<double>(lo) * lsb - x > lsb)
            raise(Errc::overflow, "value exceeds fixed-point range by more than one LSB");
        return lo;
    }
    return static_cast<std::int32_t>(q);
}

double from_fixed(std::int64_t q, int frac_bits) {
    return std::ldexp(static_cast<double>(q), -frac_bits);
}

namespace {

constexpr std::int32_t kI16Min = -32768, kI16Max = 32767;
constexpr std::int32_t kI32Min = std::numeric_limits<std::int32_t>::min();
constexpr std::int32_t kI32Max = std::numeric_limits<std::int32_t>::max();
// Leaves are stored as signed 24-bit in the blob; reject anything wider here
// so the error names the offending node instead of surfacing at serialize.
constexpr std::int32_t kLeafMin = -(1 << 23), kLeafMax = (1 << 23) - 1;

float checked_f32(double x, const char* what) {
    const float y = static_cast<float>(x);
    if (!std::isfinite(y)) raise(Errc::overflow, std::string(what) + " not representable as f32");
    return y;
}

}  // namespace

QuantForest quantize_forest(const gbdt::Forest& f, QuantSpec spec) {
    spec.validate();
    QuantForest qf;
    qf.mask = f.mask;
    qf.feature_frac = spec.feature_frac;
    qf.leaf_frac = spec.leaf_frac;
    qf.base_q = to_fixed(f.base_score, spec.leaf_frac, kI32Min, kI32Max);
    qf.scaler_mean.reserve(f.scaler.mean.size());
    qf.scaler_std.reserve(f.scaler.std.size());
    for (double m : f.scaler.mean) qf.scaler_mean.push_back(checked_f32(m, "scaler mean"));
    for (double s : f.scaler.std) qf.scaler_std.push_back(checked_f32(s, "scaler std"));

    if (f.trees.size() > 0xFFFF) raise(Errc::too_many_nodes, "tree count exceeds u16");
    for (const gbdt::Tree& t : f.trees) {
        const std::size_t root = qf.nodes.size();
        if (t.nodes.size() > 32768)
            raise(Errc::too_many_nodes, "tree exceeds root-relative i16 addressing");
        if (root + t.nodes.size() > 0xFFFF)
            raise(Errc::too_many_nodes, "forest exceeds u16 node addressing");
        qf.roots.push_back(static_cast<std::uint16_t>(root));
        for (const gbdt::TreeNode& n : t.nodes) {
            QuantNode q;
            if (n.is_leaf()) {
                q.leaf_q = to_fixed(n.leaf_value, spec.leaf_frac, kLeafMin, kLeafMax);
            } else {
                q.feature = static_cast<std::uint8_t>(n.feature);
                q.threshold_q = static_cast<std::int16_t>(
                    to_fixed(n.threshold, spec.feature_frac, kI16Min, kI16Max));
                q.left = static_cast<std::int16_t>(n.left);
                q.right = static_cast<std::int16_t>(n.right);
            }
            qf.nodes.push_back(q);
        }
    }
    return qf;
}

gbdt::Forest dequantize_forest(const QuantForest& qf) {
    gbdt::Forest f;
    f.mask = qf.mask;
    f.base_score = from_fixed(qf.base_q, qf.leaf_frac);
    f.scaler.mean.assign(qf.scaler_mean.begin(), qf.scaler_mean.end());
    f.scaler.std.assign(qf.scaler_std.begin(), qf.scaler_std.end());

    // Threshold reconstruction mirrors the trainer's grid: just below the
    // midpoint, so float x <= t agrees with integer q(x) <= threshold_q.
    const double half = 0.5 - 0x1p-20;
    for (std::size_t t = 0; t < qf.roots.size(); ++t) {
        const std::size_t begin = qf.roots[t];
        const std::size_t end = t + 1 < qf.roots.size() ? qf.roots[t + 1] : qf.nodes.size();
        gbdt::Tree tree;
        tree.nodes.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const QuantNode& q = qf.nodes[i];
            gbdt::TreeNode n;
            if (q.is_leaf()) {
                n.leaf_value = from_fixed(q.leaf_q, qf.leaf_frac);
            } else {
                n.feature = static_cast<std::int16_t>(q.feature);
                n.threshold = from_fixed(q.threshold_q, 0) + half;
                n.threshold = std::ldexp(n.threshold, -qf.feature_frac);
                n.left = q.left;
                n.right = q.right;
            }
            tree.nodes.push_back(n);
        }
        f.trees.push_back(std::move(tree));
    }
    f.best_round = static_cast<std::uint32_t>(f.trees.size());
    return f;
}

}  // namespace queenwatch::quantize
