// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. Criteria cover the
// full pipeline: training quality, float/quant parity, gradient correctness,
// split-search optimality, storage format robustness, wire framing, the
// device loop, deployment budgets, reproducible evaluation, and the emitted
// C scorer.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracle_helpers.hpp"
#include "queenwatch/error.hpp"
#include "queenwatch/eval.hpp"
#include "queenwatch/features.hpp"
#include "queenwatch/gbdt.hpp"
#include "queenwatch/infer.hpp"
#include "queenwatch/ingest.hpp"
#include "queenwatch/kernels.hpp"
#include "queenwatch/modelfmt.hpp"
#include "queenwatch/quantize.hpp"
#include "queenwatch/rng.hpp"
#include "queenwatch/wire.hpp"

using namespace queenwatch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Dataset synth(std::size_t n, std::uint64_t seed, double fraction = 0.5) {
    SynthConfig cfg;
    cfg.n_samples = n;
    cfg.queen_fraction = fraction;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

// ---- criterion 1: quantized model tracks the float model ----------------
bool check_parity(std::string& detail) {
    const auto t0 = Clock::now();
    const Dataset tr = synth(5000, 1001);
    const Dataset va = synth(1000, 1002);
    const Dataset te = synth(2500, 1003);
    const gbdt::Forest f = gbdt::train(tr, va, {}).forest;
    const quantize::QuantForest qf = quantize::quantize_forest(f);
    const infer::ParityReport rep = infer::parity_report(f, qf, te);
    const double elapsed = seconds_since(t0);

    std::ostringstream os;
    os << "agreement " << rep.agreement << " on " << rep.n << " rows, max dev "
       << rep.max_raw_dev << ", " << elapsed << "s";
    detail = os.str();
    return rep.n == 2500 && rep.agreement >= 0.995 && rep.max_raw_dev <= 0x1p-10 &&
           elapsed < 10.0;
}

// ---- criterion 2: default training reaches 99% held-out accuracy --------
bool check_accuracy(std::string& detail) {
    const auto t0 = Clock::now();
    const Dataset tr = synth(5000, 2001);
    const Dataset te = synth(1000, 2002);
    const gbdt::TrainResult r = gbdt::train(tr, te, {});
    std::size_t hit = 0;
    for (const SensorSample& s : te.samples)
        hit += gbdt::predict(r.forest, compute_differentials(s)).label == s.label;
    const double acc = double(hit) / double(te.size());
    const double elapsed = seconds_since(t0);

    std::ostringstream os;
    os << "test accuracy " << acc << " with " << r.forest.trees.size() << " trees, "
       << elapsed << "s";
    detail = os.str();
    return acc >= 0.99 && elapsed < 60.0;
}

// ---- criterion 3: gradients match finite differences ---------------------
bool check_gradients(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(3001);
    double worst = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const double raw = -6.0 + 12.0 * rng.u01();
        const int label = int(rng.bounded(2));
        const double w = 0.25 + 4.0 * rng.u01();
        const gbdt::GradHess gh = gbdt::logistic_grad_hess(raw, label, w);

        const double eps = 1e-5;
        auto loss = [&](double r) {
            const double p = std::clamp(gbdt::sigmoid(r), 1e-15, 1.0 - 1e-15);
            return -w * (label ? std::log(p) : std::log(1.0 - p));
        };
        const double g_fd = (loss(raw + eps) - loss(raw - eps)) / (2.0 * eps);
        const double h_fd = (gbdt::logistic_grad_hess(raw + eps, label, w).g -
                             gbdt::logistic_grad_hess(raw - eps, label, w).g) /
                            (2.0 * eps);
        worst = std::max(worst, std::abs(gh.g - g_fd) / std::max(1.0, std::abs(g_fd)));
        worst = std::max(worst, std::abs(gh.h - h_fd) / std::max(1.0, std::abs(h_fd)));
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "worst relative error " << worst << " over 1000 draws, " << elapsed << "s";
    detail = os.str();
    return worst <= 1e-6 && elapsed < 1.0;
}

// ---- criterion 4: split scan equals exhaustive enumeration ---------------
bool check_split_oracle(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(4001);
    std::size_t mismatches = 0;
    for (int it = 0; it < 200; ++it) {
        oracle::SplitInstance in = oracle::random_split_instance(rng, 64, 8);
        std::vector<kernels::HistEntry> hist(in.bm.n_features * in.bm.max_bins());
        kernels::build_histogram(in.bm, in.grad, in.hess, in.samples, hist,
                                 kernels::Exec::serial);
        const double g = std::accumulate(in.grad.begin(), in.grad.end(), 0.0);
        const double h = std::accumulate(in.hess.begin(), in.hess.end(), 0.0);
        const std::uint32_t n = std::uint32_t(in.bm.n_rows);
        const double lambda = (it % 2) ? 0.0 : 0.1;
        const std::uint32_t msl = 1 + it % 4;

        const kernels::SplitCandidate want =
            oracle::exhaustive_best_split(hist, in.bm, g, h, n, lambda, msl);
        const kernels::SplitCandidate got =
            kernels::best_split_scan(hist, in.bm, g, h, n, lambda, msl);
        if (got.feature != want.feature || got.bin != want.bin || got.gain != want.gain ||
            got.n_left != want.n_left)
            ++mismatches;
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << mismatches << " mismatches in 200 instances, " << elapsed << "s";
    detail = os.str();
    return mismatches == 0 && elapsed < 5.0;
}

// ---- criterion 5: storage format round-trips and rejects corruption ------
bool check_model_format(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(5001);
    std::size_t bad_roundtrips = 0;
    for (int it = 0; it < 500; ++it) {
        const quantize::QuantForest qf = oracle::random_quant_forest(rng);
        const std::vector<std::uint8_t> blob = modelfmt::serialize(qf);
        const quantize::QuantForest back = modelfmt::deserialize(blob);
        if (!oracle::quant_forests_equal(qf, back) || modelfmt::serialize(back) != blob)
            ++bad_roundtrips;
    }

    quantize::QuantForest minimal;
    minimal.mask = FeatureMask::env();
    minimal.scaler_mean = {0.0f, 0.0f, 0.0f};
    minimal.scaler_std = {1.0f, 1.0f, 1.0f};
    minimal.roots = {0};
    minimal.nodes.resize(1);
    const std::vector<std::uint8_t> good = modelfmt::serialize(minimal);
    std::size_t accepted_corruptions = 0;
    for (std::size_t byte = 0; byte < good.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            std::vector<std::uint8_t> bad = good;
            bad[byte] ^= std::uint8_t(1u << bit);
            try {
                modelfmt::deserialize(bad);
                ++accepted_corruptions;
            } catch (const Error&) {
            }
        }
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << bad_roundtrips << " bad round-trips of 500, " << accepted_corruptions
       << " accepted corruptions of " << good.size() * 8 << ", " << elapsed << "s";
    detail = os.str();
    return bad_roundtrips == 0 && accepted_corruptions == 0 && elapsed < 30.0;
}

// ---- criterion 6: frame decoding is chunking-invariant and fuzz-safe -----
bool check_wire_framing(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(6001);
    std::vector<wire::SampleFrame> frames(100);
    for (wire::SampleFrame& f : frames) {
        f.t_in = float(rng.normal(34.0, 2.0));
        f.t_out = float(rng.normal(18.0, 8.0));
        f.h_in = float(rng.normal(55.0, 5.0));
        f.h_out = float(rng.normal(60.0, 15.0));
        f.p_in = float(rng.normal(1013.0, 8.0));
        f.p_out = float(rng.normal(1013.0, 8.0));
    }
    std::vector<std::uint8_t> bytes;
    for (const wire::SampleFrame& f : frames) {
        const auto enc = wire::encode_sample(f);
        bytes.insert(bytes.end(), enc.begin(), enc.end());
    }

    wire::Decoder whole;
    std::vector<wire::SampleFrame> reference;
    whole.feed(bytes, reference);
    bool ok = reference.size() == frames.size() && whole.errors() == 0;
    for (std::size_t i = 0; ok && i < frames.size(); ++i)
        ok = reference[i] == frames[i];

    std::size_t partition_failures = 0;
    for (int it = 0; it < 1000; ++it) {
        wire::Decoder dec;
        std::vector<wire::SampleFrame> got;
        std::size_t at = 0;
        while (at < bytes.size()) {
            const std::size_t take = std::min(1 + rng.bounded(61), bytes.size() - at);
            dec.feed({bytes.data() + at, take}, got);
            at += take;
        }
        if (got != reference || dec.errors() != 0) ++partition_failures;
    }

    // A megabyte of random bytes must not crash, hang, or overrun buffers.
    wire::Decoder fuzz;
    std::vector<wire::SampleFrame> junk;
    std::vector<std::uint8_t> chunk(1000);
    for (int it = 0; it < 1000; ++it) {
        for (std::uint8_t& b : chunk) b = std::uint8_t(rng.bounded(256));
        fuzz.feed(chunk, junk);
    }
    const bool fuzz_ok =
        junk.size() <= 1000000 / wire::kFrameBytes + 1 && fuzz.buffered() <= wire::kFrameBytes;

    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << partition_failures << " divergent partitions of 1000, fuzz frames "
       << junk.size() << ", " << elapsed << "s";
    detail = os.str();
    return ok && partition_failures == 0 && fuzz_ok && elapsed < 30.0;
}

// ---- criterion 7: device loop over loopback equals in-process inference --
bool check_device_loop(std::string& detail) {
    const Dataset tr = synth(2000, 7001);
    const Dataset va = synth(500, 7002);
    const Dataset te = synth(1420, 7003);
    gbdt::TrainConfig cfg;
    cfg.max_rounds = 40;
    const gbdt::Forest f = gbdt::train(tr, va, cfg).forest;
    const quantize::QuantForest qf = quantize::quantize_forest(f);

    wire::LoopbackPair pair = wire::make_loopback();
    wire::DeviceStats stats;
    std::thread device([&] { stats = wire::run_device_loop(*pair.device, qf); });

    std::size_t mismatches = 0;
    for (const SensorSample& s : te.samples) {
        const infer::QuantPrediction got = wire::host_request(*pair.host, s);
        const infer::QuantPrediction want =
            infer::predict_quant(qf, wire::frame_of(s).differentials());
        if (got.score_q != want.score_q || got.label != want.label) ++mismatches;
    }
    pair.host->close();
    device.join();

    std::ostringstream os;
    os << mismatches << " mismatches over " << te.size() << " requests, device ok="
       << stats.frames_ok << " bad=" << stats.frames_bad;
    detail = os.str();
    return mismatches == 0 && stats.frames_ok == te.size() && stats.frames_bad == 0;
}

// ---- criterion 8: deployment-size model fits the flash and RAM budgets ---
bool check_deployment_budget(std::string& detail) {
    const Dataset ds = synth(1420, 42, 1232.0 / 1420.0);
    const std::vector<int> labels = labels_of(ds);
    const eval::SplitIndices si = eval::stratified_split(labels, 0.2, 42);
    const Dataset tr = eval::take(ds, si.train);
    const Dataset va = eval::take(ds, si.test);

    gbdt::TrainConfig cfg;
    cfg.max_leaves = 8;  // deployment grid point; default elsewhere
    const gbdt::Forest f = gbdt::train(tr, va, cfg).forest;
    const quantize::QuantForest qf = quantize::quantize_forest(f);
    const std::vector<std::uint8_t> blob = modelfmt::serialize(qf);

    const SensorSample& s = ds.samples[0];
    const auto frame = wire::encode_sample(wire::frame_of(s));
    const std::size_t payload = frame.size() - wire::kMarker.size();

    std::ostringstream os;
    os << "blob " << blob.size() << " bytes (budget 10240), " << qf.n_trees()
       << " trees, payload " << payload << " bytes";
    detail = os.str();
    return blob.size() <= 10240 && payload == 24;
}

// ---- criterion 9: energy preset reproduces the measured budget ------------
bool check_energy(std::string& detail) {
    const eval::EnergyModel m = eval::energy_preset("paper-48mhz");
    const double mj = eval::estimate_energy_mj(m);
    std::ostringstream os;
    os << mj << " mJ per inference window";
    detail = os.str();
    return std::abs(mj - 97.9) <= 0.2;
}

// ---- criterion 10: evaluation splits are stratified within one sample ----
bool check_split_allocation(std::string& detail) {
    std::vector<int> labels(1420, 1);
    std::fill_n(labels.begin(), 188, 0);
    std::size_t violations = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const eval::SplitIndices si = eval::stratified_split(labels, 0.2, seed);
        std::size_t minority = 0;
        for (const std::uint32_t i : si.test) minority += labels[i] == 0;
        if (std::abs(double(minority) - 0.2 * 188.0) > 1.0) ++violations;
        if (si.train.size() + si.test.size() != labels.size()) ++violations;

        const auto folds = eval::stratified_kfold(labels, 5, seed);
        std::set<std::uint32_t> cover;
        for (const eval::SplitIndices& f : folds) {
            std::size_t m = 0;
            for (const std::uint32_t i : f.test) m += labels[i] == 0;
            if (std::abs(double(m) - 188.0 / 5.0) > 1.0) ++violations;
            cover.insert(f.test.begin(), f.test.end());
        }
        if (cover.size() != labels.size()) ++violations;
    }
    std::ostringstream os;
    os << violations << " allocation violations over 100 seeds";
    detail = os.str();
    return violations == 0;
}

// ---- criterion 12: emitted C scorer matches the interpreter exactly ------
bool check_emitted_source(std::string& detail) {
    const fs::path dir = fs::path("accept_emit");
    fs::create_directories(dir);
    Rng rng(12001);
    std::size_t mismatches = 0;
    std::size_t compile_failures = 0;

    for (int k = 0; k < 20; ++k) {
        const quantize::QuantForest qf = oracle::random_quant_forest(rng);
        const std::size_t nf = qf.n_features();

        std::ostringstream src;
        src << modelfmt::emit_static_source(qf, "m");
        src << "\n#include <stdio.h>\n"
               "int main(void) {\n"
               "    int16_t x[M_N_FEATURES];\n"
               "    int v, i;\n"
               "    for (;;) {\n"
               "        for (i = 0; i < M_N_FEATURES; ++i) {\n"
               "            if (scanf(\"%d\", &v) != 1) return 0;\n"
               "            x[i] = (int16_t)v;\n"
               "        }\n"
               "        printf(\"%ld\\n\", (long)m_score(x));\n"
               "    }\n"
               "}\n";

        const std::string base = (dir / ("model_" + std::to_string(k))).string();
        {
            std::ofstream out(base + ".c");
            out << src.str();
        }
        const std::string cc =
            "cc -O1 -w -o " + base + " " + base + ".c" + " >/dev/null 2>&1";
        if (std::system(cc.c_str()) != 0) {
            ++compile_failures;
            continue;
        }

        std::vector<std::vector<std::int16_t>> inputs(1000, std::vector<std::int16_t>(nf));
        {
            std::ofstream in_file(base + ".in");
            for (auto& row : inputs) {
                for (std::int16_t& v : row) {
                    v = std::int16_t(std::uint16_t(rng.bounded(65536)));
                    in_file << int(v) << " ";
                }
                in_file << "\n";
            }
        }

        FILE* pipe = popen(("./" + base + " < " + base + ".in").c_str(), "r");
        if (!pipe) {
            ++compile_failures;
            continue;
        }
        for (const auto& row : inputs) {
            long got = 0;
            if (std::fscanf(pipe, "%ld", &got) != 1) {
                ++mismatches;
                break;
            }
            const std::int32_t want = infer::eval_quant(qf, row);
            if (got != long(want)) ++mismatches;
        }
        pclose(pipe);
    }
    std::error_code ec;
    fs::remove_all(dir, ec);

    std::ostringstream os;
    os << mismatches << " score mismatches, " << compile_failures
       << " compile failures over 20 models x 1000 inputs";
    detail = os.str();
    return mismatches == 0 && compile_failures == 0;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "float/quant parity", check_parity},
        {2, "held-out accuracy", check_accuracy},
        {3, "gradient finite differences", check_gradients},
        {4, "split-search optimality", check_split_oracle},
        {5, "model format robustness", check_model_format},
        {6, "wire framing invariance", check_wire_framing},
        {7, "device loop end-to-end", check_device_loop},
        {8, "deployment budgets", check_deployment_budget},
        {9, "energy estimate", check_energy},
        {10, "split allocation", check_split_allocation},
        {12, "emitted C scorer parity", check_emitted_source},
    };

    bool all_ok = true;
    for (const Criterion& c : criteria) {
        if (c.id == 12) {
            // Field-recorded data is not bundled; replication on it runs
            // where that dataset is available.
            std::printf("criterion 11: SKIP (no field-recorded dataset bundled)\n");
        }
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d: %s (%s: %s)\n", c.id, ok ? "PASS" : "FAIL", c.name,
                    detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
