#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "queenwatch/features.hpp"
#include "queenwatch/ingest.hpp"
#include "queenwatch/kernels.hpp"

namespace queenwatch::gbdt {

struct TrainConfig {
    double learning_rate = 0.1;
    std::uint32_t max_leaves = 31;
    std::uint32_t max_rounds = 200;
    std::uint32_t min_samples_leaf = 20;
    double l2_lambda = 0.0;
    std::uint32_t early_stop_patience = 10;
    std::uint32_t n_bins = 255;
    bool balanced_weights = true;
    std::uint64_t seed = 42;

    void validate() const;  // throws DegenerateConfig
};

struct TreeNode {
    std::int16_t feature = -1;  // compact feature index, -1 = leaf
    std::int16_t bin = -1;      // boundary index the split was found at
    double threshold = 0.0;     // scaled-domain boundary value; x <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double leaf_value = 0.0;
    double split_gain = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at index 0

    std::size_t n_leaves() const;
    double eval(std::span<const double> scaled_row) const;
};

struct ImportanceEntry {
    FeatureId feature;
    std::uint32_t splits = 0;
    double gain = 0.0;
};

struct Forest {
    std::vector<Tree> trees;
    double base_score = 0.0;
    ScalerParams scaler;
    FeatureMask mask;
    TrainConfig config;
    std::uint32_t best_round = 0;   // trees kept after early-stop truncation
    double best_valid_loss = 0.0;

    std::size_t n_features() const { return mask.count(); }
    std::size_t total_nodes() const;
};

std::array<double, 2> class_weights(std::span<const int> labels);

struct GradHess {
    double g;
    double h;
};
GradHess logistic_grad_hess(double raw, int label, double weight);

double sigmoid(double raw);

// Weighted mean log-loss; probabilities clamped away from {0,1}.
double weighted_log_loss(std::span<const double> raw, std::span<const int> labels,
                         std::span<const double> weights);

// Quantile binning with at most n_bins bins per feature. Boundary values are
// snapped to the half-integer grid t = (k + 0.5 - 2^-20) / 256 so the float
// rule x <= t and its later i16 form agree except on a 2^-28-wide sliver.
kernels::BinnedMatrix bin_features(const Matrix& scaled, std::uint32_t n_bins);

// One leaf-wise tree: repeatedly split the leaf with the best gain until
// max_leaves is reached or no leaf has a positive-gain split.
Tree grow_tree(const kernels::BinnedMatrix& bm, std::span<const double> grad,
               std::span<const double> hess, const TrainConfig& cfg,
               kernels::Exec exec = kernels::Exec::automatic);

struct TrainResult {
    Forest forest;
    std::vector<double> valid_loss_per_round;
    std::uint32_t rounds_trained = 0;  // before truncation
};

TrainResult train(const Dataset& train_set, const Dataset& valid_set,
                  const TrainConfig& cfg, FeatureMask mask = FeatureMask::env(),
                  kernels::Exec exec = kernels::Exec::automatic);

struct Prediction {
    double raw;
    double prob;
    int label;
};

// v.mask must cover the forest's mask; scaling is applied unless pre_scaled.
Prediction predict(const Forest& f, const FeatureVector& v, bool pre_scaled = false);

// raw[i] for each row of an already-scaled compact matrix.
void predict_raw_batch(const Forest& f, const Matrix& scaled, std::span<double> out,
                       kernels::Exec exec = kernels::Exec::automatic);
namespace ref {
void predict_raw_batch(const Forest& f, const Matrix& scaled, std::span<double> out);
}

enum class ImportanceKind { splits, gain };

// Entries for active features sorted by the chosen measure descending,
// ties by lower feature id. Throws EmptyForest if no tree has any split.
std::vector<ImportanceEntry> feature_importance(const Forest& f, ImportanceKind kind);

std::string dump_forest(const Forest& f);

std::string forest_to_json(const Forest& f);
Forest forest_from_json(const std::string& text);
void save_forest_json(const Forest& f, const std::string& path);
Forest load_forest_json(const std::string& path);

}  // namespace queenwatch::gbdt
