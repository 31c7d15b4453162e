// Experiment harness: stratified partitions, report metrics, the ablation
// sweep, and the per-inference energy estimate.

#include "queenwatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "queenwatch/error.hpp"
#include "queenwatch/log.hpp"
#include "queenwatch/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace queenwatch::eval {

namespace {

std::array<std::vector<std::uint32_t>, 2> indices_by_class(std::span<const int> labels) {
    std::array<std::vector<std::uint32_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y != 0 && y != 1) raise(Errc::malformed_row, "labels must be 0 or 1");
        by_class[static_cast<std::size_t>(y)].push_back(static_cast<std::uint32_t>(i));
    }
    return by_class;
}

}  // namespace

SplitIndices stratified_split(std::span<const int> labels, double test_fraction,
                              std::uint64_t seed) {
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        raise(Errc::degenerate_config, "test fraction must lie in (0, 1)");
    auto by_class = indices_by_class(labels);
    if (by_class[0].empty() || by_class[1].empty())
        raise(Errc::single_class, "stratified split needs both classes");

    // Largest-remainder allocation: floor per class, then hand the remaining
    // slots (vs round(fraction * n)) to the classes with the biggest
    // fractional part, lower class index first on ties.
    const auto target =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(labels.size())));
    std::array<std::size_t, 2> want{};
    std::array<double, 2> frac_part{};
    std::size_t base_sum = 0;
    for (int c = 0; c < 2; ++c) {
        const double exact = test_fraction * static_cast<double>(by_class[c].size());
        want[c] = static_cast<std::size_t>(exact);
        frac_part[c] = exact - static_cast<double>(want[c]);
        base_sum += want[c];
    }
    std::size_t leftover = target > base_sum ? target - base_sum : 0;
    std::array<int, 2> order = frac_part[1] > frac_part[0] ? std::array<int, 2>{1, 0}
                                                           : std::array<int, 2>{0, 1};
    for (int c : order) {
        if (leftover == 0) break;
        if (want[c] < by_class[c].size()) {
            ++want[c];
            --leftover;
        }
    }

    Rng rng(seed);
    SplitIndices out;
    for (int c = 0; c < 2; ++c) {
        rng.shuffle(by_class[c]);
        for (std::size_t i = 0; i < by_class[c].size(); ++i)
            (i < want[c] ? out.test : out.train).push_back(by_class[c][i]);
    }
    if (out.test.empty() || out.train.empty())
        raise(Errc::too_small, "split leaves an empty side");
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<SplitIndices> stratified_kfold(std::span<const int> labels, std::uint32_t k,
                                           std::uint64_t seed) {
    if (k < 2) raise(Errc::degenerate_config, "k must be at least 2");
    auto by_class = indices_by_class(labels);
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < k)
            raise(Errc::class_too_small, "class " + std::to_string(c) + " has fewer than k samples");

    Rng rng(seed);
    std::vector<std::vector<std::uint32_t>> folds(k);
    for (int c = 0; c < 2; ++c) {
        rng.shuffle(by_class[c]);
        for (std::size_t i = 0; i < by_class[c].size(); ++i)
            folds[i % k].push_back(by_class[c][i]);
    }

    std::vector<SplitIndices> out(k);
    for (std::uint32_t f = 0; f < k; ++f) {
        out[f].test = folds[f];
        for (std::uint32_t g = 0; g < k; ++g)
            if (g != f)
                out[f].train.insert(out[f].train.end(), folds[g].begin(), folds[g].end());
        std::sort(out[f].train.begin(), out[f].train.end());
        std::sort(out[f].test.begin(), out[f].test.end());
    }
    return out;
}

Dataset take(const Dataset& ds, std::span<const std::uint32_t> idx) {
    Dataset out;
    out.source = ds.source;
    out.samples.reserve(idx.size());
    for (std::uint32_t i : idx) out.samples.push_back(ds.samples[i]);
    return out;
}

ClassReport classification_report(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size() || truth.empty())
        raise(Errc::length_mismatch, "label vectors must be non-empty and equally long");
    ClassReport r;
    r.n = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1))
            raise(Errc::malformed_row, "labels must be 0 or 1");
        if (t == 1 && p == 1) ++r.tp;
        else if (t == 1 && p == 0) ++r.fn;
        else if (t == 0 && p == 1) ++r.fp;
        else ++r.tn;
    }
    r.support = {r.tn + r.fp, r.tp + r.fn};
    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n);

    const auto ratio = [](std::size_t num, std::size_t den, double& out, bool& defined) {
        defined = den != 0;
        out = defined ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };
    ratio(r.tn, r.tn + r.fn, r.precision[0], r.precision_defined[0]);
    ratio(r.tp, r.tp + r.fp, r.precision[1], r.precision_defined[1]);
    ratio(r.tn, r.tn + r.fp, r.recall[0], r.recall_defined[0]);
    ratio(r.tp, r.tp + r.fn, r.recall[1], r.recall_defined[1]);
    for (int c = 0; c < 2; ++c) {
        const double pr = r.precision[c] + r.recall[c];
        r.f1_defined[c] = r.precision_defined[c] && r.recall_defined[c] && pr > 0.0;
        r.f1[c] = r.f1_defined[c] ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
    }

    r.macro_precision = 0.5 * (r.precision[0] + r.precision[1]);
    r.macro_recall = 0.5 * (r.recall[0] + r.recall[1]);
    r.macro_f1 = 0.5 * (r.f1[0] + r.f1[1]);
    const double n = static_cast<double>(r.n);
    for (int c = 0; c < 2; ++c) {
        const double w = static_cast<double>(r.support[c]) / n;
        r.weighted_precision += w * r.precision[c];
        r.weighted_recall += w * r.recall[c];
        r.weighted_f1 += w * r.f1[c];
    }
    return r;
}

std::string format_class_report(const ClassReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "              precision    recall  f1-score   support\n";
    for (int c = 0; c < 2; ++c) {
        os << "           " << c << "     " << r.precision[c] << "    " << r.recall[c] << "    "
           << r.f1[c] << "      " << r.support[c] << "\n";
    }
    os << "\n    accuracy                         " << r.accuracy << "      " << r.n << "\n";
    os << "   macro avg     " << r.macro_precision << "    " << r.macro_recall << "    "
       << r.macro_f1 << "      " << r.n << "\n";
    os << "weighted avg     " << r.weighted_precision << "    " << r.weighted_recall << "    "
       << r.weighted_f1 << "      " << r.n << "\n";
    os << "\nconfusion: tn=" << r.tn << " fp=" << r.fp << " fn=" << r.fn << " tp=" << r.tp << "\n";
    if (!r.precision_defined[0] || !r.precision_defined[1] || !r.recall_defined[0] ||
        !r.recall_defined[1])
        os << "note: zero-division metrics reported as 0\n";
    return os.str();
}

double estimate_energy_mj(const EnergyModel& m) {
    if (!(m.volts > 0.0) || !(m.milliwatts > 0.0) || !(m.seconds > 0.0))
        raise(Errc::degenerate_config, "energy model fields must be positive");
    return m.milliwatts * m.seconds;
}

EnergyModel energy_preset(const std::string& name) {
    // Two parameterizations ship because published figures disagree by an
    // order of magnitude; the estimator itself is just P * t.
    if (name == "paper-48mhz") return {name, 3.3, 44.5, 2.2};
    if (name == "table3-max") return {name, 3.3, 92.4, 6.45 / 92.4};
    raise(Errc::degenerate_config, "unknown energy preset: " + name);
}

std::vector<std::string> energy_preset_names() { return {"paper-48mhz", "table3-max"}; }

std::vector<FeatureMask> default_subsets(bool with_audio) {
    std::vector<FeatureMask> subsets = {
        FeatureMask::single(FeatureId::delta_t),
        FeatureMask::single(FeatureId::delta_h),
        FeatureMask::single(FeatureId::delta_p),
        FeatureMask{0x03},  // T+H
        FeatureMask{0x05},  // T+P
        FeatureMask{0x06},  // H+P
        FeatureMask::env(),
    };
    if (with_audio) subsets.push_back(FeatureMask::env_audio());
    return subsets;
}

namespace {

double accuracy_on(const gbdt::Forest& forest, const Dataset& ds) {
    std::size_t hit = 0;
    for (const SensorSample& s : ds.samples) {
        const auto v = compute_differentials(s);
        hit += gbdt::predict(forest, v).label == s.label ? 1u : 0u;
    }
    return static_cast<double>(hit) / static_cast<double>(ds.samples.size());
}

void mean_std(std::span<const double> xs, double& mean, double& stdev) {
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() < 2) {
        stdev = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::uint64_t derive_seed(std::uint64_t seed) {
    return seed * 6364136223846793005ULL + 1442695040888963407ULL;
}

}  // namespace

std::vector<AblationRow> run_ablation(const Dataset& ds,
                                      std::span<const FeatureMask> subsets,
                                      const AblationConfig& cfg, kernels::Exec exec) {
    if (subsets.empty()) raise(Errc::degenerate_config, "no feature subsets given");
    for (const FeatureMask m : subsets)
        if (m.count() == 0) raise(Errc::degenerate_config, "empty feature subset");
    if (cfg.n_seeds == 0) raise(Errc::degenerate_config, "n_seeds must be positive");

    const std::vector<int> labels = labels_of(ds);
    const std::size_t n_runs = subsets.size() * cfg.n_seeds;
    std::vector<double> val_acc(n_runs), test_acc(n_runs);
    std::vector<std::string> failures(n_runs);
    std::vector<Errc> failure_code(n_runs, Errc::degenerate_config);

    const bool outer_parallel = exec != kernels::Exec::serial && kernels::parallel_available();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (outer_parallel)
#endif
    for (std::size_t run = 0; run < n_runs; ++run) {
        const std::size_t si = run / cfg.n_seeds;
        const std::uint32_t k = static_cast<std::uint32_t>(run % cfg.n_seeds);
        const std::uint64_t seed = cfg.base_seed + k;
        try {
            const SplitIndices outer = stratified_split(labels, cfg.test_fraction, seed);
            const Dataset pool = take(ds, outer.train);
            const Dataset test_set = take(ds, outer.test);
            const std::vector<int> pool_labels = labels_of(pool);
            const SplitIndices inner =
                stratified_split(pool_labels, cfg.valid_fraction, derive_seed(seed));
            const Dataset fit_set = take(pool, inner.train);
            const Dataset val_set = take(pool, inner.test);

            gbdt::TrainConfig tc = cfg.train;
            tc.seed = seed;
            const gbdt::Forest forest =
                gbdt::train(fit_set, val_set, tc, subsets[si], kernels::Exec::serial).forest;
            val_acc[run] = accuracy_on(forest, val_set);
            test_acc[run] = accuracy_on(forest, test_set);
        } catch (const Error& e) {
            failures[run] = e.what();
            failure_code[run] = e.code();
        }
    }
#ifndef _OPENMP
    (void)outer_parallel;
#endif
    for (std::size_t run = 0; run < n_runs; ++run)
        if (!failures[run].empty()) raise(failure_code[run], failures[run]);

    std::vector<AblationRow> rows;
    rows.reserve(subsets.size());
    for (std::size_t si = 0; si < subsets.size(); ++si) {
        AblationRow row;
        row.mask = subsets[si];
        for (std::uint32_t k = 0; k < cfg.n_seeds; ++k) {
            row.val_acc.push_back(val_acc[si * cfg.n_seeds + k]);
            row.test_acc.push_back(test_acc[si * cfg.n_seeds + k]);
        }
        mean_std(row.val_acc, row.val_mean, row.val_std);
        mean_std(row.test_acc, row.test_mean, row.test_std);
        log_info("ablate", "subset=" + row.mask.to_string() +
                               " test_mean=" + std::to_string(row.test_mean));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
    std::ostringstream os;
    os << "Feature Set          Val. Accuracy    Test Accuracy\n";
    os << "-----------          -------------    -------------\n";
    os.setf(std::ios::fixed);
    for (const AblationRow& r : rows) {
        std::string name = r.mask.to_string();
        name.resize(21, ' ');
        os.precision(1);
        os << name << 100.0 * r.val_mean << " +/- " << 100.0 * r.val_std << "     "
           << 100.0 * r.test_mean << " +/- " << 100.0 * r.test_std << "\n";
    }
    return os.str();
}

}  // namespace queenwatch::eval
