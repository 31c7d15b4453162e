#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "queenwatch/gbdt.hpp"
#include "queenwatch/ingest.hpp"

namespace queenwatch::eval {

struct SplitIndices {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> test;  // holdout (or validation fold)
};

// Per-class largest-remainder allocation of round(fraction * n) holdout slots,
// per-class shuffle, outputs sorted by original index. Deterministic per seed.
SplitIndices stratified_split(std::span<const int> labels, double test_fraction,
                              std::uint64_t seed);

// Per-class shuffle dealt round-robin across k folds.
std::vector<SplitIndices> stratified_kfold(std::span<const int> labels, std::uint32_t k,
                                           std::uint64_t seed);

Dataset take(const Dataset& ds, std::span<const std::uint32_t> idx);

struct ClassReport {
    std::size_t n = 0;
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::array<std::size_t, 2> support{};
    std::array<double, 2> precision{}, recall{}, f1{};
    std::array<bool, 2> precision_defined{}, recall_defined{}, f1_defined{};
    double accuracy = 0.0;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
};

// Zero-division cells are reported as 0 with the matching flag cleared.
ClassReport classification_report(std::span<const int> truth, std::span<const int> pred);

std::string format_class_report(const ClassReport& r);

struct EnergyModel {
    std::string name;
    double volts = 0.0;
    double milliwatts = 0.0;
    double seconds = 0.0;
};

double estimate_energy_mj(const EnergyModel& m);  // P * t
EnergyModel energy_preset(const std::string& name);
std::vector<std::string> energy_preset_names();

struct AblationRow {
    FeatureMask mask;
    std::vector<double> val_acc;   // one per seed
    std::vector<double> test_acc;
    double val_mean = 0.0, val_std = 0.0;
    double test_mean = 0.0, test_std = 0.0;
};

struct AblationConfig {
    gbdt::TrainConfig train;
    std::uint32_t n_seeds = 10;
    std::uint64_t base_seed = 42;
    double test_fraction = 0.2;   // outer holdout
    double valid_fraction = 0.2;  // carved from the outer training part
};

// Per subset x seed: fresh stratified split, train with early stopping,
// accuracy on the validation carve-out and the untouched test holdout.
// Row order matches the subsets argument; std is the sample deviation.
std::vector<AblationRow> run_ablation(const Dataset& ds,
                                      std::span<const FeatureMask> subsets,
                                      const AblationConfig& cfg,
                                      kernels::Exec exec = kernels::Exec::automatic);

// The eight canonical ablation rows: each feature alone, each pair, all
// three, and all three plus audio (audio row only when the data carries it).
std::vector<FeatureMask> default_subsets(bool with_audio);

std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace queenwatch::eval
