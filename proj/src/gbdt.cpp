// Gradient-boosted trees over binned differential features: quantile binning
// with thresholds snapped to the Q7.8 half-grid, leaf-wise growth driven by
// the histogram kernels, logistic loss with optional balanced class weights,
// and early stopping on validation loss with truncation to the best round.

#include "queenwatch/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "queenwatch/error.hpp"
#include "queenwatch/log.hpp"

namespace queenwatch::gbdt {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        raise(Errc::degenerate_config, "learning_rate must be positive and finite");
    if (max_leaves < 2) raise(Errc::degenerate_config, "max_leaves must be at least 2");
    if (max_rounds < 1) raise(Errc::degenerate_config, "max_rounds must be at least 1");
    if (min_samples_leaf < 1) raise(Errc::degenerate_config, "min_samples_leaf must be at least 1");
    if (l2_lambda < 0.0 || !std::isfinite(l2_lambda))
        raise(Errc::degenerate_config, "l2_lambda must be non-negative and finite");
    if (early_stop_patience < 1) raise(Errc::degenerate_config, "early_stop_patience must be at least 1");
    if (n_bins < 2 || n_bins > 255) raise(Errc::degenerate_config, "n_bins must be in [2, 255]");
}

std::size_t Tree::n_leaves() const {
    std::size_t k = 0;
    for (const TreeNode& n : nodes) k += n.is_leaf();
    return k;
}

double Tree::eval(std::span<const double> scaled_row) const {
    const TreeNode* n = &nodes[0];
    while (!n->is_leaf()) {
        const double x = scaled_row[static_cast<std::size_t>(n->feature)];
        n = &nodes[static_cast<std::size_t>(x <= n->threshold ? n->left : n->right)];
    }
    return n->leaf_value;
}

std::size_t Forest::total_nodes() const {
    std::size_t k = 0;
    for (const Tree& t : trees) k += t.nodes.size();
    return k;
}

std::array<double, 2> class_weights(std::span<const int> labels) {
    std::size_t counts[2] = {0, 0};
    for (int y : labels) counts[y] += 1;
    if (counts[0] == 0 || counts[1] == 0)
        raise(Errc::single_class, "both classes required to derive class weights");
    const double n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(counts[0])),
            n / (2.0 * static_cast<double>(counts[1]))};
}

double sigmoid(double raw) { return 1.0 / (1.0 + std::exp(-raw)); }

GradHess logistic_grad_hess(double raw, int label, double weight) {
    const double p = sigmoid(raw);
    return {weight * (p - static_cast<double>(label)), weight * p * (1.0 - p)};
}

double weighted_log_loss(std::span<const double> raw, std::span<const int> labels,
                         std::span<const double> weights) {
    if (raw.size() != labels.size() || raw.size() != weights.size())
        raise(Errc::length_mismatch, "log-loss inputs disagree in length");
    if (raw.empty()) raise(Errc::empty_split, "log-loss over an empty set");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double p = std::clamp(sigmoid(raw[i]), 1e-15, 1.0 - 1e-15);
        const double ell = labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
        num += weights[i] * ell;
        den += weights[i];
    }
    return num / den;
}

namespace {

// Threshold grid: boundaries live at t = (k + 0.5 - 2^-20) / 256, just below
// the midpoint between representable Q7.8 values, so integer comparison
// q(x) <= k and float comparison x <= t pick the same side away from a
// 2^-28-wide sliver.
constexpr double kGridStep = 1.0 / 256.0;
constexpr double kGridEps = 0x1p-20;

double snap_to_grid(double midpoint) {
    double k = std::llround(midpoint * 256.0 - 0.5);
    k = std::clamp(k, -32768.0, 32766.0);
    return (k + 0.5 - kGridEps) * kGridStep;
}

std::vector<double> quantile_bounds(std::span<const double> column, std::uint32_t n_bins) {
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());

    // Distinct runs (value, cumulative count up to and including the run).
    std::vector<std::pair<double, std::size_t>> runs;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        runs.emplace_back(sorted[i], j);
        i = j;
    }
    if (runs.size() < 2) return {};

    std::vector<double> bounds;
    if (runs.size() <= n_bins) {
        for (std::size_t i = 0; i + 1 < runs.size(); ++i)
            bounds.push_back(snap_to_grid(0.5 * (runs[i].first + runs[i + 1].first)));
    } else {
        const double n = static_cast<double>(sorted.size());
        std::size_t run = 0;
        for (std::uint32_t k = 1; k < n_bins; ++k) {
            const double target = n * static_cast<double>(k) / static_cast<double>(n_bins);
            while (run + 1 < runs.size() && static_cast<double>(runs[run].second) < target) ++run;
            if (run + 1 >= runs.size()) break;
            bounds.push_back(snap_to_grid(0.5 * (runs[run].first + runs[run + 1].first)));
        }
    }
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
    return bounds;
}

struct LeafState {
    std::int32_t node = -1;
    std::vector<std::uint32_t> samples;
    double g_sum = 0.0;
    double h_sum = 0.0;
    kernels::SplitCandidate cand;
    bool live = true;
};

void attach_candidate(LeafState& leaf, const kernels::BinnedMatrix& bm,
                      std::span<const double> grad, std::span<const double> hess,
                      const TrainConfig& cfg, std::vector<kernels::HistEntry>& hist_buf,
                      kernels::Exec exec) {
    leaf.cand = kernels::SplitCandidate{};
    if (leaf.samples.size() < 2 * static_cast<std::size_t>(cfg.min_samples_leaf)) return;
    kernels::build_histogram(bm, grad, hess, leaf.samples, hist_buf, exec);
    leaf.cand = kernels::best_split_scan(hist_buf, bm, leaf.g_sum, leaf.h_sum,
                                         static_cast<std::uint32_t>(leaf.samples.size()),
                                         cfg.l2_lambda, cfg.min_samples_leaf, exec);
}

}  // namespace

kernels::BinnedMatrix bin_features(const Matrix& scaled, std::uint32_t n_bins) {
    if (scaled.rows == 0) raise(Errc::empty_dataset, "cannot bin an empty matrix");
    kernels::BinnedMatrix bm;
    bm.n_rows = scaled.rows;
    bm.n_features = scaled.cols;
    bm.codes.resize(scaled.rows * scaled.cols);
    bm.bounds.resize(scaled.cols);
    bm.n_bins.resize(scaled.cols);

    std::vector<double> column(scaled.rows);
    for (std::size_t f = 0; f < scaled.cols; ++f) {
        for (std::size_t r = 0; r < scaled.rows; ++r) column[r] = scaled.at(r, f);
        bm.bounds[f] = quantile_bounds(column, n_bins);
        bm.n_bins[f] = static_cast<std::uint16_t>(bm.bounds[f].size() + 1);
        std::uint8_t* codes = bm.codes.data() + f * bm.n_rows;
        const auto& bd = bm.bounds[f];
        for (std::size_t r = 0; r < scaled.rows; ++r) {
            const auto it = std::lower_bound(bd.begin(), bd.end(), column[r]);
            codes[r] = static_cast<std::uint8_t>(it - bd.begin());
        }
    }
    return bm;
}

Tree grow_tree(const kernels::BinnedMatrix& bm, std::span<const double> grad,
               std::span<const double> hess, const TrainConfig& cfg, kernels::Exec exec) {
    const std::size_t n = bm.n_rows;
    Tree tree;
    tree.nodes.emplace_back();

    std::vector<kernels::HistEntry> hist_buf(bm.n_features * bm.max_bins());

    std::vector<LeafState> leaves;
    {
        LeafState root;
        root.node = 0;
        root.samples.resize(n);
        std::iota(root.samples.begin(), root.samples.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) {
            root.g_sum += grad[i];
            root.h_sum += hess[i];
        }
        attach_candidate(root, bm, grad, hess, cfg, hist_buf, exec);
        leaves.push_back(std::move(root));
    }

    std::size_t n_leaves = 1;
    while (n_leaves < cfg.max_leaves) {
        // Leaf with the best positive-gain candidate; earliest created wins ties.
        std::size_t pick = leaves.size();
        double best_gain = 0.0;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            if (!leaves[i].live || !leaves[i].cand.valid()) continue;
            if (leaves[i].cand.gain > best_gain) {
                best_gain = leaves[i].cand.gain;
                pick = i;
            }
        }
        if (pick == leaves.size()) break;

        LeafState& parent = leaves[pick];
        const kernels::SplitCandidate cand = parent.cand;
        const std::size_t f = static_cast<std::size_t>(cand.feature);
        const std::uint8_t b = static_cast<std::uint8_t>(cand.bin);
        const std::uint8_t* codes = bm.codes.data() + f * bm.n_rows;

        LeafState lhs, rhs;
        lhs.samples.reserve(cand.n_left);
        rhs.samples.reserve(cand.n_right);
        for (std::uint32_t r : parent.samples)
            (codes[r] <= b ? lhs.samples : rhs.samples).push_back(r);
        lhs.g_sum = cand.g_left;
        lhs.h_sum = cand.h_left;
        rhs.g_sum = cand.g_right;
        rhs.h_sum = cand.h_right;

        const std::int32_t li = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        const std::int32_t ri = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        lhs.node = li;
        rhs.node = ri;

        TreeNode& pn = tree.nodes[static_cast<std::size_t>(parent.node)];
        pn.feature = static_cast<std::int16_t>(cand.feature);
        pn.bin = static_cast<std::int16_t>(cand.bin);
        pn.threshold = bm.bounds[f][static_cast<std::size_t>(cand.bin)];
        pn.left = li;
        pn.right = ri;
        pn.split_gain = cand.gain;

        parent.live = false;
        parent.samples.clear();
        parent.samples.shrink_to_fit();

        attach_candidate(lhs, bm, grad, hess, cfg, hist_buf, exec);
        attach_candidate(rhs, bm, grad, hess, cfg, hist_buf, exec);
        leaves.push_back(std::move(lhs));
        leaves.push_back(std::move(rhs));
        ++n_leaves;
    }

    const double lr = cfg.learning_rate;
    for (const LeafState& leaf : leaves) {
        if (!leaf.live) continue;
        TreeNode& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
        const double denom = leaf.h_sum + cfg.l2_lambda;
        node.leaf_value = denom > 1e-12 ? -leaf.g_sum / denom * lr : 0.0;
    }
    return tree;
}

TrainResult train(const Dataset& train_set, const Dataset& valid_set,
                  const TrainConfig& cfg, FeatureMask mask, kernels::Exec exec) {
    cfg.validate();
    if (mask.count() == 0) raise(Errc::degenerate_config, "feature mask selects nothing");
    if (train_set.samples.empty()) raise(Errc::empty_split, "training split is empty");
    if (valid_set.samples.empty()) raise(Errc::empty_split, "validation split is empty");

    Matrix xt = build_matrix(train_set, mask);
    const std::vector<int> yt = labels_of(train_set);
    Matrix xv = build_matrix(valid_set, mask);
    const std::vector<int> yv = labels_of(valid_set);

    std::array<double, 2> cw{1.0, 1.0};
    if (cfg.balanced_weights) cw = class_weights(yt);
    else {
        // still reject single-class training sets: the prior would be degenerate
        std::size_t ones = 0;
        for (int y : yt) ones += static_cast<std::size_t>(y);
        if (ones == 0 || ones == yt.size())
            raise(Errc::single_class, "training split holds a single class");
    }

    Forest forest;
    forest.mask = mask;
    forest.config = cfg;
    forest.scaler = fit_scaler(xt);
    // Degrade the scaler to f32 up front: the embedded runtime stores it as
    // f32, and sharing the exact values keeps both paths routing identically.
    for (double& m : forest.scaler.mean) m = static_cast<double>(static_cast<float>(m));
    for (double& s : forest.scaler.std) s = static_cast<double>(static_cast<float>(s));
    apply_scaler(xt, forest.scaler);
    apply_scaler(xv, forest.scaler);

    std::vector<double> wt(yt.size()), wv(yv.size());
    for (std::size_t i = 0; i < yt.size(); ++i) wt[i] = cw[static_cast<std::size_t>(yt[i])];
    for (std::size_t i = 0; i < yv.size(); ++i) wv[i] = cw[static_cast<std::size_t>(yv[i])];

    double wy = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
        wy += wt[i] * yt[i];
        wsum += wt[i];
    }
    const double prior = std::clamp(wy / wsum, 1e-9, 1.0 - 1e-9);
    forest.base_score = std::log(prior / (1.0 - prior));

    const kernels::BinnedMatrix bm = bin_features(xt, cfg.n_bins);

    const std::size_t n = yt.size(), m = yv.size();
    std::vector<double> raw_t(n, forest.base_score), raw_v(m, forest.base_score);
    std::vector<double> grad(n), hess(n);

    TrainResult result;
    double best_loss = weighted_log_loss(raw_v, yv, wv);
    std::uint32_t best_round = 0;

    for (std::uint32_t round = 1; round <= cfg.max_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const GradHess gh = logistic_grad_hess(raw_t[i], yt[i], wt[i]);
            grad[i] = gh.g;
            hess[i] = gh.h;
        }
        Tree tree = grow_tree(bm, grad, hess, cfg, exec);
        for (std::size_t i = 0; i < n; ++i) raw_t[i] += tree.eval(xt.row(i));
        for (std::size_t i = 0; i < m; ++i) raw_v[i] += tree.eval(xv.row(i));
        forest.trees.push_back(std::move(tree));

        const double loss = weighted_log_loss(raw_v, yv, wv);
        result.valid_loss_per_round.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best_round = round;
        }
        log_debug("train", "round=" + std::to_string(round) +
                               " valid_loss=" + std::to_string(loss));
        if (round - best_round >= cfg.early_stop_patience) break;
    }

    result.rounds_trained = static_cast<std::uint32_t>(forest.trees.size());
    forest.trees.resize(best_round);
    forest.best_round = best_round;
    forest.best_valid_loss = best_loss;
    log_info("train", "rounds=" + std::to_string(result.rounds_trained) +
                          " kept=" + std::to_string(best_round) +
                          " valid_loss=" + std::to_string(best_loss));
    result.forest = std::move(forest);
    return result;
}

Prediction predict(const Forest& f, const FeatureVector& v, bool pre_scaled) {
    if ((v.mask.bits & f.mask.bits) != f.mask.bits)
        raise(Errc::dimension_mismatch, "sample lacks features the model needs");
    std::vector<double> compact;
    compact.reserve(f.mask.count());
    for (int id = 0; id < kFeatureSlots; ++id) {
        const auto fid = static_cast<FeatureId>(id);
        if (!f.mask.has(fid)) continue;
        const double x = v.values[static_cast<std::size_t>(id)];
        if (!std::isfinite(x)) raise(Errc::non_finite_input, "non-finite feature value");
        compact.push_back(x);
    }
    if (!pre_scaled) compact = apply_scaler(compact, f.scaler);
    double raw = f.base_score;
    for (const Tree& t : f.trees) raw += t.eval(compact);
    const double prob = sigmoid(raw);
    return {raw, prob, raw >= 0.0 ? 1 : 0};
}

namespace {

void predict_batch_impl(const Forest& f, const Matrix& scaled, std::span<double> out,
                        bool parallel) {
    if (scaled.cols != f.n_features())
        raise(Errc::dimension_mismatch, "matrix width does not match the model");
    const std::int64_t n = static_cast<std::int64_t>(scaled.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (std::int64_t r = 0; r < n; ++r) {
        double acc = f.base_score;
        for (const Tree& t : f.trees) acc += t.eval(scaled.row(static_cast<std::size_t>(r)));
        out[static_cast<std::size_t>(r)] = acc;
    }
#ifndef _OPENMP
    (void)parallel;
#endif
}

}  // namespace

void predict_raw_batch(const Forest& f, const Matrix& scaled, std::span<double> out,
                       kernels::Exec exec) {
    const bool par = exec == kernels::Exec::serial ? false : kernels::parallel_available();
    predict_batch_impl(f, scaled, out, par);
}

void ref::predict_raw_batch(const Forest& f, const Matrix& scaled,
                            std::span<double> out) {
    predict_batch_impl(f, scaled, out, false);
}

std::vector<ImportanceEntry> feature_importance(const Forest& f, ImportanceKind kind) {
    std::vector<ImportanceEntry> entries;
    for (int id = 0; id < kFeatureSlots; ++id) {
        const auto fid = static_cast<FeatureId>(id);
        if (f.mask.has(fid)) entries.push_back({fid, 0, 0.0});
    }
    std::size_t total_splits = 0;
    for (const Tree& t : f.trees) {
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) continue;
            ImportanceEntry& e = entries[static_cast<std::size_t>(n.feature)];
            e.splits += 1;
            e.gain += n.split_gain;
            ++total_splits;
        }
    }
    if (total_splits == 0) raise(Errc::empty_forest, "model contains no splits");
    std::stable_sort(entries.begin(), entries.end(),
                     [kind](const ImportanceEntry& a, const ImportanceEntry& b) {
                         if (kind == ImportanceKind::splits) {
                             if (a.splits != b.splits) return a.splits > b.splits;
                         } else if (a.gain != b.gain) {
                             return a.gain > b.gain;
                         }
                         return a.feature < b.feature;
                     });
    return entries;
}

std::string dump_forest(const Forest& f) {
    std::ostringstream os;
    os << "forest: trees=" << f.trees.size() << " base_score=" << f.base_score
       << " features=" << f.mask.to_string() << "\n";
    os << "scaler:";
    for (std::size_t i = 0; i < f.scaler.mean.size(); ++i)
        os << " [" << i << "] mean=" << f.scaler.mean[i] << " std=" << f.scaler.std[i];
    os << "\n";
    for (std::size_t t = 0; t < f.trees.size(); ++t) {
        const Tree& tree = f.trees[t];
        os << "tree " << t << ": nodes=" << tree.nodes.size() << " leaves=" << tree.n_leaves()
           << "\n";
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const TreeNode& n = tree.nodes[i];
            if (n.is_leaf()) {
                os << "  n" << i << ": leaf value=" << n.leaf_value << "\n";
            } else {
                os << "  n" << i << ": f" << n.feature << " <= " << n.threshold << " ? n" << n.left
                   << " : n" << n.right;
                // Dequantized forests carry no gain; don't print a made-up zero.
                if (n.split_gain > 0.0) os << "  gain=" << n.split_gain;
                os << "\n";
            }
        }
    }
    return os.str();
}

std::string forest_to_json(const Forest& f) {
    json j;
    j["format"] = "queenwatch-forest";
    j["version"] = 1;
    j["base_score"] = f.base_score;
    j["mask"] = f.mask.to_string();
    j["scaler"] = {{"mean", f.scaler.mean}, {"std", f.scaler.std}};
    j["config"] = {{"learning_rate", f.config.learning_rate},
                   {"max_leaves", f.config.max_leaves},
                   {"max_rounds", f.config.max_rounds},
                   {"min_samples_leaf", f.config.min_samples_leaf},
                   {"l2_lambda", f.config.l2_lambda},
                   {"early_stop_patience", f.config.early_stop_patience},
                   {"n_bins", f.config.n_bins},
                   {"balanced_weights", f.config.balanced_weights},
                   {"seed", f.config.seed}};
    j["best_round"] = f.best_round;
    j["best_valid_loss"] = f.best_valid_loss;
    json trees = json::array();
    for (const Tree& t : f.trees) {
        json jt;
        std::vector<int> feature, bin, left, right;
        std::vector<double> threshold, leaf_value, split_gain;
        for (const TreeNode& n : t.nodes) {
            feature.push_back(n.feature);
            bin.push_back(n.bin);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            leaf_value.push_back(n.leaf_value);
            split_gain.push_back(n.split_gain);
        }
        jt["feature"] = feature;
        jt["bin"] = bin;
        jt["threshold"] = threshold;
        jt["left"] = left;
        jt["right"] = right;
        jt["leaf_value"] = leaf_value;
        jt["split_gain"] = split_gain;
        trees.push_back(std::move(jt));
    }
    j["trees"] = std::move(trees);
    return j.dump(2);
}

Forest forest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        raise(Errc::structural_error, std::string("model json unreadable: ") + e.what());
    }
    try {
        if (j.at("format") != "queenwatch-forest" || j.at("version") != 1)
            raise(Errc::structural_error, "not a version-1 forest file");
        Forest f;
        f.base_score = j.at("base_score").get<double>();
        f.mask = FeatureMask::from_string(j.at("mask").get<std::string>());
        f.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
        f.scaler.std = j.at("scaler").at("std").get<std::vector<double>>();
        const json& c = j.at("config");
        f.config.learning_rate = c.at("learning_rate").get<double>();
        f.config.max_leaves = c.at("max_leaves").get<std::uint32_t>();
        f.config.max_rounds = c.at("max_rounds").get<std::uint32_t>();
        f.config.min_samples_leaf = c.at("min_samples_leaf").get<std::uint32_t>();
        f.config.l2_lambda = c.at("l2_lambda").get<double>();
        f.config.early_stop_patience = c.at("early_stop_patience").get<std::uint32_t>();
        f.config.n_bins = c.at("n_bins").get<std::uint32_t>();
        f.config.balanced_weights = c.at("balanced_weights").get<bool>();
        f.config.seed = c.at("seed").get<std::uint64_t>();
        f.best_round = j.at("best_round").get<std::uint32_t>();
        f.best_valid_loss = j.at("best_valid_loss").get<double>();
        const auto width = static_cast<std::size_t>(f.mask.count());
        if (f.scaler.mean.size() != width || f.scaler.std.size() != width)
            raise(Errc::structural_error, "scaler width does not match the mask");
        for (const json& jt : j.at("trees")) {
            const auto feature = jt.at("feature").get<std::vector<int>>();
            const auto bin = jt.at("bin").get<std::vector<int>>();
            const auto threshold = jt.at("threshold").get<std::vector<double>>();
            const auto left = jt.at("left").get<std::vector<int>>();
            const auto right = jt.at("right").get<std::vector<int>>();
            const auto leaf_value = jt.at("leaf_value").get<std::vector<double>>();
            const auto split_gain = jt.at("split_gain").get<std::vector<double>>();
            const std::size_t n = feature.size();
            if (bin.size() != n || threshold.size() != n || left.size() != n ||
                right.size() != n || leaf_value.size() != n || split_gain.size() != n || n == 0)
                raise(Errc::structural_error, "tree arrays disagree in length");
            Tree t;
            t.nodes.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                TreeNode& nd = t.nodes[i];
                nd.feature = static_cast<std::int16_t>(feature[i]);
                nd.bin = static_cast<std::int16_t>(bin[i]);
                nd.threshold = threshold[i];
                nd.left = left[i];
                nd.right = right[i];
                nd.leaf_value = leaf_value[i];
                nd.split_gain = split_gain[i];
                const auto lim = static_cast<int>(n);
                if (!nd.is_leaf() && (nd.left < 0 || nd.left >= lim || nd.right < 0 ||
                                      nd.right >= lim ||
                                      nd.feature >= static_cast<int>(f.mask.count())))
                    raise(Errc::structural_error, "node references out of range");
            }
            f.trees.push_back(std::move(t));
        }
        return f;
    } catch (const json::exception& e) {
        raise(Errc::structural_error, std::string("model json incomplete: ") + e.what());
    }
}

void save_forest_json(const Forest& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::io_error, "cannot open " + path + " for writing");
    out << forest_to_json(f) << "\n";
    if (!out) raise(Errc::io_error, "short write to " + path);
}

Forest load_forest_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::io_error, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return forest_from_json(ss.str());
}

}  // namespace queenwatch::gbdt
