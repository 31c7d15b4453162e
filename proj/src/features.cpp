#include "queenwatch/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

#include "queenwatch/error.hpp"

namespace queenwatch {

FeatureMask FeatureMask::from_string(const std::string& spec) {
    FeatureMask m{0};
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        std::size_t end = spec.find(',', pos);
        if (end == std::string::npos) end = spec.size();
        const std::string item = spec.substr(pos, end - pos);
        pos = end + 1;
        if (item.empty()) {
            if (pos > spec.size()) break;
            continue;
        }
        if (item == "t") m.bits |= 1u << 0;
        else if (item == "h") m.bits |= 1u << 1;
        else if (item == "p") m.bits |= 1u << 2;
        else if (item == "a") m.bits |= 1u << 3;
        else raise(Errc::config_invalid, "unknown feature '" + item + "' (want t,h,p,a)");
        if (pos > spec.size()) break;
    }
    if (m.bits == 0) raise(Errc::config_invalid, "empty feature subset");
    return m;
}

std::string FeatureMask::to_string() const {
    static const char* names[kFeatureSlots] = {"t", "h", "p", "a"};
    std::string out;
    for (int i = 0; i < kFeatureSlots; ++i) {
        if (!(bits >> i & 1u)) continue;
        if (!out.empty()) out += ',';
        out += names[i];
    }
    return out;
}

FeatureVector compute_differentials(const SensorSample& s) {
    FeatureVector v;
    v.values[0] = s.t_in - s.t_out;
    v.values[1] = s.h_in - s.h_out;
    v.values[2] = s.p_in - s.p_out;
    v.mask = FeatureMask::env();
    if (s.audio_rms) {
        v.values[3] = *s.audio_rms;
        v.mask.bits |= 1u << 3;
    }
    return v;
}

Matrix build_matrix(const Dataset& ds, FeatureMask mask) {
    Matrix m;
    m.rows = ds.samples.size();
    m.cols = static_cast<std::size_t>(mask.count());
    m.a.resize(m.rows * m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const FeatureVector v = compute_differentials(ds.samples[r]);
        std::size_t c = 0;
        for (int slot = 0; slot < kFeatureSlots; ++slot) {
            if (!mask.has(static_cast<FeatureId>(slot))) continue;
            if (slot == 3 && !ds.samples[r].audio_rms) {
                raise(Errc::missing_audio,
                      "sample " + std::to_string(r) + " has no audio_rms but the subset wants it");
            }
            m.at(r, c++) = v.values[slot];
        }
    }
    return m;
}

std::vector<int> labels_of(const Dataset& ds) {
    std::vector<int> y;
    y.reserve(ds.samples.size());
    for (const auto& s : ds.samples) y.push_back(s.label);
    return y;
}

ScalerParams fit_scaler(const Matrix& x) {
    if (x.rows < 2) raise(Errc::degenerate_feature, "need at least 2 rows to fit a scaler");
    ScalerParams p;
    p.mean.resize(x.cols);
    p.std.resize(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) sum += x.at(r, c);
        const double mean = sum / static_cast<double>(x.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double d = x.at(r, c) - mean;
            ss += d * d;
        }
        const double var = ss / static_cast<double>(x.rows);
        if (!(var > 0.0)) {
            raise(Errc::degenerate_feature, "feature column " + std::to_string(c) + " is constant");
        }
        p.mean[c] = mean;
        p.std[c] = std::sqrt(var);
    }
    return p;
}

void apply_scaler(Matrix& x, const ScalerParams& p) {
    if (x.cols != p.size()) {
        raise(Errc::dimension_mismatch, "matrix has " + std::to_string(x.cols) +
                                            " columns, scaler has " + std::to_string(p.size()));
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            x.at(r, c) = (x.at(r, c) - p.mean[c]) / p.std[c];
        }
    }
}

FeatureVector apply_scaler(const FeatureVector& v, const ScalerParams& p) {
    if (static_cast<std::size_t>(v.mask.count()) != p.size()) {
        raise(Errc::dimension_mismatch, "vector has " + std::to_string(v.mask.count()) +
                                            " active features, scaler has " +
                                            std::to_string(p.size()));
    }
    FeatureVector out = v;
    std::size_t c = 0;
    for (int slot = 0; slot < kFeatureSlots; ++slot) {
        if (!v.mask.has(static_cast<FeatureId>(slot))) continue;
        out.values[slot] = (v.values[slot] - p.mean[c]) / p.std[c];
        ++c;
    }
    return out;
}

std::vector<double> apply_scaler(std::span<const double> compact, const ScalerParams& p) {
    if (compact.size() != p.size()) {
        raise(Errc::dimension_mismatch, "vector has " + std::to_string(compact.size()) +
                                            " features, scaler has " + std::to_string(p.size()));
    }
    std::vector<double> out(compact.size());
    for (std::size_t c = 0; c < compact.size(); ++c) {
        out[c] = (compact[c] - p.mean[c]) / p.std[c];
    }
    return out;
}

namespace {
// FFTW plan creation is not thread-safe.
std::mutex g_fftw_mutex;
}  // namespace

double rms_band_energy(std::span<const double> frames, double rate_hz, double f_lo, double f_hi) {
    if (frames.empty()) raise(Errc::empty_signal, "no frames");
    if (!(rate_hz > 2.0 * f_hi)) {
        raise(Errc::rate_too_low, "rate " + std::to_string(rate_hz) + " Hz cannot resolve " +
                                      std::to_string(f_hi) + " Hz");
    }

    const std::size_t n = frames.size();
    std::vector<double> in(frames.begin(), frames.end());
    std::vector<fftw_complex> out(n / 2 + 1);

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(plan);
    }

    // Parseval: mean power = sum|X_k|^2 / N^2 over all bins; band-restricted
    // positive-frequency bins count twice (conjugate mirror). The band never
    // touches DC (f_lo > 0) or Nyquist (rate > 2*f_hi).
    const double dn = static_cast<double>(n);
    const std::size_t k_lo =
        static_cast<std::size_t>(std::ceil(f_lo * dn / rate_hz));
    const std::size_t k_hi = std::min(
        n / 2, static_cast<std::size_t>(std::floor(f_hi * dn / rate_hz)));
    double power = 0.0;
    for (std::size_t k = std::max<std::size_t>(k_lo, 1); k <= k_hi; ++k) {
        power += out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
    return std::sqrt(2.0 * power / (dn * dn));
}

}  // namespace queenwatch
