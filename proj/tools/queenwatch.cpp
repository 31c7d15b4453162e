// queenwatch command-line tool: synthesize data, train and quantize models,
// run ablations, export and emit models, simulate the device link, and report
// metrics. Exit codes: 0 success, 1 parity/loopback check failed, 2 usage,
// 10+N for error class N (the class name is printed on stderr).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "queenwatch/error.hpp"
#include "queenwatch/eval.hpp"
#include "queenwatch/gbdt.hpp"
#include "queenwatch/infer.hpp"
#include "queenwatch/ingest.hpp"
#include "queenwatch/log.hpp"
#include "queenwatch/modelfmt.hpp"
#include "queenwatch/quantize.hpp"
#include "queenwatch/wire.hpp"

namespace qw = queenwatch;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string data_path;
    std::string schema;
    std::string out_path;
    std::uint64_t seed = 42;
    std::string format = "text";
};

qw::Dataset load_csv(const CommonOpts& o) {
    qw::CsvSchema schema = qw::CsvSchema::defaults();
    if (!o.schema.empty()) schema = qw::CsvSchema::from_string(o.schema);
    qw::ParseStats stats;
    qw::Dataset ds = qw::parse_dataset_csv(o.data_path, schema, {}, &stats);
    qw::log_info("ingest", "rows=" + std::to_string(stats.rows_total) +
                               " kept=" + std::to_string(stats.rows_kept) +
                               " rejected=" + std::to_string(stats.rows_rejected));
    return ds;
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path, std::ios::binary);
    if (!file) qw::raise(qw::Errc::io_error, "cannot open " + path + " for writing");
    return file;
}

qw::quantize::QuantForest load_qbf(const std::string& path) {
    return qw::modelfmt::deserialize(qw::modelfmt::load_blob(path));
}

int run_synth(const CommonOpts& common, const qw::SynthConfig& sc) {
    const qw::Dataset ds = qw::generate_synthetic(sc);
    if (common.out_path.empty())
        qw::raise(qw::Errc::config_invalid, "synth requires --out");
    qw::write_dataset_csv(common.out_path, ds);
    qw::log_info("synth", "rows=" + std::to_string(ds.samples.size()) + " out=" + common.out_path);
    return 0;
}

struct TrainOpts {
    qw::gbdt::TrainConfig cfg;
    std::string subset = "t,h,p";
    double valid_fraction = 0.2;
    std::string float_out;
    int frac_bits = 8;
    int leaf_bits = 16;
    std::string exec = "auto";
};

qw::kernels::Exec exec_of(const std::string& name) {
    if (name == "serial") return qw::kernels::Exec::serial;
    if (name == "parallel") return qw::kernels::Exec::parallel;
    if (name == "auto") return qw::kernels::Exec::automatic;
    qw::raise(qw::Errc::config_invalid, "unknown exec mode: " + name);
}

int run_train(const CommonOpts& common, const TrainOpts& t) {
    if (common.out_path.empty()) qw::raise(qw::Errc::config_invalid, "train requires --out");
    const qw::Dataset ds = load_csv(common);
    const auto mask = qw::FeatureMask::from_string(t.subset);
    const std::vector<int> labels = qw::labels_of(ds);
    qw::gbdt::TrainConfig cfg = t.cfg;
    cfg.seed = common.seed;
    const qw::eval::SplitIndices split =
        qw::eval::stratified_split(labels, t.valid_fraction, common.seed);
    const qw::Dataset fit_set = qw::eval::take(ds, split.train);
    const qw::Dataset val_set = qw::eval::take(ds, split.test);
    const qw::gbdt::TrainResult result =
        qw::gbdt::train(fit_set, val_set, cfg, mask, exec_of(t.exec));

    double val_hits = 0;
    for (const auto& s : val_set.samples) {
        const auto v = qw::compute_differentials(s);
        val_hits += qw::gbdt::predict(result.forest, v).label == s.label ? 1 : 0;
    }
    std::printf("trained trees=%zu valid_loss=%.6f valid_acc=%.4f\n", result.forest.trees.size(),
                result.forest.best_valid_loss,
                val_hits / static_cast<double>(val_set.samples.size()));

    qw::quantize::QuantSpec spec{static_cast<std::uint8_t>(t.frac_bits),
                                 static_cast<std::uint8_t>(t.leaf_bits)};
    const qw::quantize::QuantForest qf = qw::quantize::quantize_forest(result.forest, spec);
    const std::vector<std::uint8_t> blob = qw::modelfmt::serialize(qf);
    qw::modelfmt::save_blob(common.out_path, blob);
    qw::log_info("quantize", "bytes=" + std::to_string(blob.size()) + " trees=" +
                                 std::to_string(qf.n_trees()) + " out=" + common.out_path);
    if (!t.float_out.empty()) {
        qw::gbdt::save_forest_json(result.forest, t.float_out);
        qw::log_info("train", "float_out=" + t.float_out);
    }
    return 0;
}

int run_ablate(const CommonOpts& common, const qw::eval::AblationConfig& acfg,
               std::vector<std::string> subset_strs, const std::string& exec) {
    qw::Dataset ds;
    if (common.data_path.empty()) {
        qw::SynthConfig sc;
        sc.seed = common.seed;
        ds = qw::generate_synthetic(sc);
        qw::log_info("ablate", "data=synthetic rows=" + std::to_string(ds.samples.size()));
    } else {
        ds = load_csv(common);
    }
    std::vector<qw::FeatureMask> subsets;
    if (subset_strs.empty()) {
        subsets = qw::eval::default_subsets(ds.has_audio());
    } else {
        for (const std::string& s : subset_strs)
            subsets.push_back(qw::FeatureMask::from_string(s));
    }
    qw::eval::AblationConfig cfg = acfg;
    cfg.base_seed = common.seed;
    const std::vector<qw::eval::AblationRow> rows =
        qw::eval::run_ablation(ds, subsets, cfg, exec_of(exec));

    std::ofstream file;
    std::ostream& out = open_out(file, common.out_path);
    if (common.format == "rows") {
        for (const auto& r : rows) {
            json j{{"subset", r.mask.to_string()},
                   {"val_mean", r.val_mean},
                   {"val_std", r.val_std},
                   {"test_mean", r.test_mean},
                   {"test_std", r.test_std},
                   {"val_acc", r.val_acc},
                   {"test_acc", r.test_acc}};
            out << j.dump() << "\n";
        }
    } else {
        out << qw::eval::format_ablation_table(rows);
    }
    return 0;
}

int run_quantize(const CommonOpts& common, const std::string& model_json, int frac_bits,
                 int leaf_bits) {
    if (common.out_path.empty()) qw::raise(qw::Errc::config_invalid, "quantize requires --out");
    const qw::gbdt::Forest f = qw::gbdt::load_forest_json(model_json);
    qw::quantize::QuantSpec spec{static_cast<std::uint8_t>(frac_bits),
                                 static_cast<std::uint8_t>(leaf_bits)};
    const auto blob = qw::modelfmt::serialize(qw::quantize::quantize_forest(f, spec));
    qw::modelfmt::save_blob(common.out_path, blob);
    qw::log_info("quantize", "bytes=" + std::to_string(blob.size()) + " out=" + common.out_path);
    return 0;
}

int run_export(const CommonOpts& common, const std::string& model_path) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);
    const qw::gbdt::Forest f = qw::quantize::dequantize_forest(qf);
    std::ofstream file;
    std::ostream& out = open_out(file, common.out_path);
    out << "source: " << model_path << " (" << qf.n_trees() << " trees, "
        << qf.nodes.size() << " nodes, features " << qf.mask.to_string() << ", Q"
        << 15 - int(qf.feature_frac) << "." << int(qf.feature_frac) << " / Q"
        << 31 - int(qf.leaf_frac) << "." << int(qf.leaf_frac) << ")\n";
    out << qw::gbdt::dump_forest(f);
    return 0;
}

int run_emit_src(const CommonOpts& common, const std::string& model_path,
                 const std::string& prefix) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);
    std::ofstream file;
    std::ostream& out = open_out(file, common.out_path);
    out << qw::modelfmt::emit_static_source(qf, prefix);
    qw::log_info("emit-src", "nodes=" + std::to_string(qf.nodes.size()) + " prefix=" + prefix);
    return 0;
}

int run_serve(const CommonOpts& common, const std::string& model_path,
              const std::string& transport, const std::string& in_path,
              const std::string& reply_path, const std::string& port, int baud) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);

    if (transport == "loopback") {
        if (common.data_path.empty())
            qw::raise(qw::Errc::config_invalid, "loopback serve requires --data");
        const qw::Dataset ds = load_csv(common);
        qw::wire::LoopbackPair pair = qw::wire::make_loopback();
        qw::wire::DeviceStats stats;
        std::thread device([&] { stats = qw::wire::run_device_loop(*pair.device, qf); });
        std::size_t mismatches = 0;
        for (const auto& s : ds.samples) {
            const auto wire_p = qw::wire::host_request(*pair.host, s);
            const auto local_v = qw::wire::frame_of(s).differentials();
            const auto local_p = qw::infer::predict_quant(qf, local_v);
            if (wire_p.label != local_p.label || wire_p.score_q != local_p.score_q) ++mismatches;
        }
        pair.host->close();
        device.join();
        std::printf("loopback frames=%llu bad=%llu mismatches=%zu mean_us=%.1f\n",
                    static_cast<unsigned long long>(stats.frames_ok),
                    static_cast<unsigned long long>(stats.frames_bad), mismatches, stats.mean_us);
        return mismatches == 0 ? 0 : 1;
    }
    if (transport == "replay") {
        if (in_path.empty()) qw::raise(qw::Errc::config_invalid, "replay serve requires --in");
        auto t = qw::wire::make_replay(in_path, reply_path);
        const qw::wire::DeviceStats stats = qw::wire::run_device_loop(*t, qf);
        std::printf("replay frames=%llu bad=%llu replies=%llu\n",
                    static_cast<unsigned long long>(stats.frames_ok),
                    static_cast<unsigned long long>(stats.frames_bad),
                    static_cast<unsigned long long>(stats.replies_sent));
        return 0;
    }
    if (transport == "serial") {
        if (port.empty()) qw::raise(qw::Errc::config_invalid, "serial serve requires --port");
        auto t = qw::wire::make_serial(port, baud);
        qw::wire::run_device_loop(*t, qf);
        return 0;
    }
    qw::raise(qw::Errc::config_invalid, "unknown transport: " + transport);
}

int run_predict(const CommonOpts& common, const std::string& model_path) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);
    const qw::Dataset ds = load_csv(common);
    std::ofstream file;
    std::ostream& out = open_out(file, common.out_path);
    const double leaf_scale = std::ldexp(1.0, -int(qf.leaf_frac));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto v = qw::compute_differentials(ds.samples[i]);
        const auto p = qw::infer::predict_quant(qf, v);
        const double raw = static_cast<double>(p.score_q) * leaf_scale;
        if (common.format == "rows") {
            json j{{"index", i}, {"label", p.label}, {"score_q", p.score_q}, {"raw", raw}};
            out << j.dump() << "\n";
        } else {
            out << i << "\tlabel=" << p.label << "\tscore_q=" << p.score_q << "\traw=" << raw
                << "\n";
        }
    }
    return 0;
}

int run_report(const CommonOpts& common, const std::string& model_path,
               const std::string& energy_preset) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);
    const qw::Dataset ds = load_csv(common);
    std::vector<int> truth, pred;
    truth.reserve(ds.samples.size());
    pred.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        truth.push_back(s.label);
        pred.push_back(qw::infer::predict_quant(qf, qw::compute_differentials(s)).label);
    }
    const qw::eval::ClassReport r = qw::eval::classification_report(truth, pred);
    const qw::eval::EnergyModel em = qw::eval::energy_preset(energy_preset);
    const double mj = qw::eval::estimate_energy_mj(em);

    std::ofstream file;
    std::ostream& out = open_out(file, common.out_path);
    if (common.format == "rows") {
        json j{{"n", r.n},
               {"accuracy", r.accuracy},
               {"tn", r.tn},
               {"fp", r.fp},
               {"fn", r.fn},
               {"tp", r.tp},
               {"precision", r.precision},
               {"recall", r.recall},
               {"f1", r.f1},
               {"support", r.support},
               {"macro_f1", r.macro_f1},
               {"weighted_f1", r.weighted_f1},
               {"energy_preset", em.name},
               {"energy_mj", mj}};
        out << j.dump() << "\n";
    } else {
        out << qw::eval::format_class_report(r);
        char line[128];
        std::snprintf(line, sizeof line, "energy: preset=%s %.1f mW x %.4f s = %.1f mJ\n",
                      em.name.c_str(), em.milliwatts, em.seconds, mj);
        out << line;
    }
    return 0;
}

int run_parity(const CommonOpts& common, const std::string& model_path,
               const std::string& float_model_path, double floor) {
    const qw::quantize::QuantForest qf = load_qbf(model_path);
    const qw::gbdt::Forest f = float_model_path.empty()
                                   ? qw::quantize::dequantize_forest(qf)
                                   : qw::gbdt::load_forest_json(float_model_path);
    const qw::Dataset ds = load_csv(common);
    const qw::infer::ParityReport r = qw::infer::parity_report(f, qf, ds);
    std::printf("parity n=%zu agreement=%.4f max_raw_dev=%.3e mean_raw_dev=%.3e\n", r.n,
                r.agreement, r.max_raw_dev, r.mean_raw_dev);
    return r.agreement >= floor ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"queen-presence detector: train, quantize, serve, evaluate"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-style config file; command-line flags win");
    app.allow_config_extras(CLI::config_extras_mode::error);

    CommonOpts common;
    int exit_override = 0;

    auto add_common = [&](CLI::App* sub, bool with_data, bool with_out, bool with_format) {
        if (with_data) {
            sub->add_option("--data", common.data_path, "input CSV path");
            sub->add_option("--schema", common.schema,
                            "column remapping, e.g. t_in=temp_in,label=queen");
        }
        if (with_out) sub->add_option("--out", common.out_path, "output path");
        sub->add_option("--seed", common.seed, "random seed");
        if (with_format)
            sub->add_option("--format", common.format, "output format")
                ->check(CLI::IsMember({"text", "rows"}));
    };

    // synth
    qw::SynthConfig sc;
    bool no_audio = false;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    add_common(synth, false, true, false);
    synth->add_option("--n", sc.n_samples, "number of rows");
    synth->add_option("--queen-fraction", sc.queen_fraction, "fraction of queenright rows");
    synth->add_option("--class-separation", sc.class_separation,
                      "0 = identical classes, 1 = nominal");
    synth->add_option("--label-noise", sc.label_noise,
                      "fraction of rows with a wrong label (pair swaps)");
    synth->add_flag("--no-audio", no_audio, "omit the audio RMS column");
    synth->callback([&] {
        sc.seed = common.seed;
        sc.with_audio = !no_audio;
        exit_override = run_synth(common, sc);
    });

    // train
    TrainOpts topts;
    auto* train = app.add_subcommand("train", "train a model and write the quantized blob");
    add_common(train, true, true, false);
    train->add_option("--subset", topts.subset, "feature subset, e.g. t,h,p or t,h,p,a");
    train->add_option("--valid-fraction", topts.valid_fraction,
                      "held-out fraction for early stopping");
    train->add_option("--lr", topts.cfg.learning_rate, "learning rate");
    train->add_option("--max-leaves", topts.cfg.max_leaves, "leaves per tree");
    train->add_option("--max-rounds", topts.cfg.max_rounds, "boosting rounds cap");
    train->add_option("--min-samples-leaf", topts.cfg.min_samples_leaf, "min samples per leaf");
    train->add_option("--l2", topts.cfg.l2_lambda, "L2 regularization");
    train->add_option("--patience", topts.cfg.early_stop_patience, "early stopping patience");
    train->add_option("--bins", topts.cfg.n_bins, "histogram bins");
    bool no_balance = false;
    train->add_flag("--no-balanced", no_balance, "disable balanced class weights");
    train->add_option("--frac-bits", topts.frac_bits, "feature fixed-point fraction bits");
    train->add_option("--leaf-bits", topts.leaf_bits, "leaf fixed-point fraction bits");
    train->add_option("--float-out", topts.float_out, "also save the float model as JSON");
    train->add_option("--exec", topts.exec, "kernel execution policy")
        ->check(CLI::IsMember({"auto", "serial", "parallel"}));
    train->callback([&] {
        topts.cfg.balanced_weights = !no_balance;
        exit_override = run_train(common, topts);
    });

    // ablate
    qw::eval::AblationConfig acfg;
    std::vector<std::string> subset_strs;
    std::string ablate_exec = "auto";
    auto* ablate = app.add_subcommand("ablate", "feature-subset ablation table over seeds");
    add_common(ablate, true, true, true);
    ablate->add_option("--seeds", acfg.n_seeds, "number of repeated runs");
    ablate->add_option("--subset", subset_strs, "feature subset row (repeatable)");
    ablate->add_option("--test-fraction", acfg.test_fraction, "outer holdout fraction");
    ablate->add_option("--lr", acfg.train.learning_rate, "learning rate");
    ablate->add_option("--max-leaves", acfg.train.max_leaves, "leaves per tree");
    ablate->add_option("--max-rounds", acfg.train.max_rounds, "boosting rounds cap");
    ablate->add_option("--exec", ablate_exec, "kernel execution policy")
        ->check(CLI::IsMember({"auto", "serial", "parallel"}));
    ablate->callback([&] { exit_override = run_ablate(common, acfg, subset_strs, ablate_exec); });

    // quantize
    std::string model_json;
    int frac_bits = 8, leaf_bits = 16;
    auto* quant = app.add_subcommand("quantize", "lower a float JSON model to a QBF blob");
    add_common(quant, false, true, false);
    quant->add_option("--model", model_json, "float model JSON path")->required();
    quant->add_option("--frac-bits", frac_bits, "feature fixed-point fraction bits");
    quant->add_option("--leaf-bits", leaf_bits, "leaf fixed-point fraction bits");
    quant->callback(
        [&] { exit_override = run_quantize(common, model_json, frac_bits, leaf_bits); });

    // export
    std::string model_path;
    auto* exp = app.add_subcommand("export", "human-readable dump of a QBF model");
    add_common(exp, false, true, false);
    exp->add_option("--model", model_path, "QBF model path")->required();
    exp->callback([&] { exit_override = run_export(common, model_path); });

    // emit-src
    std::string prefix = "qw";
    auto* emit = app.add_subcommand("emit-src", "emit the model as standalone C source");
    add_common(emit, false, true, false);
    emit->add_option("--model", model_path, "QBF model path")->required();
    emit->add_option("--prefix", prefix, "symbol prefix for the generated code");
    emit->callback([&] { exit_override = run_emit_src(common, model_path, prefix); });

    // serve
    std::string transport = "loopback", in_path, reply_path, port;
    int baud = 115200;
    auto* serve = app.add_subcommand("serve", "run the device loop over a transport");
    add_common(serve, true, false, false);
    serve->add_option("--model", model_path, "QBF model path")->required();
    serve->add_option("--transport", transport, "loopback, replay, or serial")
        ->check(CLI::IsMember({"loopback", "replay", "serial"}));
    serve->add_option("--in", in_path, "replay: input frame stream file");
    serve->add_option("--replies", reply_path, "replay: reply sink file");
    serve->add_option("--port", port, "serial: device path");
    serve->add_option("--baud", baud, "serial: baud rate");
    serve->callback([&] {
        exit_override = run_serve(common, model_path, transport, in_path, reply_path, port, baud);
    });

    // predict
    auto* predict = app.add_subcommand("predict", "quantized predictions for CSV rows");
    add_common(predict, true, true, true);
    predict->add_option("--model", model_path, "QBF model path")->required();
    predict->callback([&] { exit_override = run_predict(common, model_path); });

    // report
    std::string energy_preset = "paper-48mhz";
    auto* report = app.add_subcommand("report", "classification report plus energy estimate");
    add_common(report, true, true, true);
    report->add_option("--model", model_path, "QBF model path")->required();
    report->add_option("--energy-preset", energy_preset, "energy parameterization")
        ->check(CLI::IsMember({"paper-48mhz", "table3-max"}));
    report->callback([&] { exit_override = run_report(common, model_path, energy_preset); });

    // parity
    std::string float_model_path;
    double floor = 0.995;
    auto* parity = app.add_subcommand("parity", "float vs quantized agreement on a dataset");
    add_common(parity, true, false, false);
    parity->add_option("--model", model_path, "QBF model path")->required();
    parity->add_option("--float-model", float_model_path,
                       "float JSON model (default: dequantized blob)");
    parity->add_option("--floor", floor, "agreement floor for exit status");
    parity->callback(
        [&] { exit_override = run_parity(common, model_path, float_model_path, floor); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const qw::Error& e) {
        std::fprintf(stderr, "queenwatch error: %s\n", e.what());
        return 10 + static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "queenwatch unexpected error: %s\n", e.what());
        return 70;
    }
    return exit_override;
}
