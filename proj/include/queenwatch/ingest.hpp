#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace queenwatch {

// One timestamped hive reading. Labels: 0 = queen absent, 1 = queen present.
struct SensorSample {
    std::int64_t timestamp = 0;  // seconds since epoch
    double t_in = 0.0, t_out = 0.0;  // deg C
    double h_in = 0.0, h_out = 0.0;  // %RH
    double p_in = 0.0, p_out = 0.0;  // hPa
    std::optional<double> audio_rms;
    int label = 0;

    bool operator==(const SensorSample&) const = default;
};

// Empty string when the sample is valid, otherwise the violated invariant.
std::string sample_invariant_violation(const SensorSample& s);

enum class DataSource { csv, synthetic };

struct Dataset {
    std::vector<SensorSample> samples;
    DataSource source = DataSource::synthetic;

    std::size_t size() const { return samples.size(); }
    bool has_audio() const;
    // Counts per label; throws SingleClass only via callers that require both.
    std::size_t count_label(int label) const;
};

// Maps SensorSample fields to CSV column names. Keys are fixed:
// timestamp, t_in, t_out, h_in, h_out, p_in, p_out, audio_rms, label.
struct CsvSchema {
    std::map<std::string, std::string> columns;

    static CsvSchema defaults();
    // Parses "label=queen,t_in=TempIn" style overrides on top of defaults.
    static CsvSchema from_string(const std::string& spec);
};

struct ParseStats {
    std::size_t rows_total = 0;
    std::size_t rows_kept = 0;
    std::size_t rows_rejected = 0;
    std::vector<std::string> first_errors;  // up to 8, "line N: reason"
};

struct CsvLimits {
    // Skip-and-count: abort once rejects exceed max(hard_floor, bad_fraction of rows seen).
    double bad_fraction = 0.01;
    std::size_t hard_floor = 16;
};

Dataset parse_dataset_csv(const std::string& path, const CsvSchema& schema,
                          const CsvLimits& limits = {}, ParseStats* stats = nullptr);

// Same schema as the parser so downstream tooling is source-agnostic.
// Doubles are written shortest-round-trip; re-parsing reproduces the dataset exactly.
void write_dataset_csv(const std::string& path, const Dataset& dataset,
                       const CsvSchema& schema = CsvSchema::defaults());

struct SynthConfig {
    std::size_t n_samples = 6000;
    double queen_fraction = 0.5;
    std::uint64_t seed = 42;
    // Multiplier on the regulation contrast between classes. 1 = nominal model.
    double class_separation = 1.0;
    // Per-channel multipliers layered on class_separation; 0 makes a channel
    // carry no class signal at all.
    double sep_t = 1.0, sep_h = 1.0, sep_p = 1.0;
    // Fraction of samples whose label is wrong (inspection error). Applied as
    // pair swaps so class counts stay exact.
    double label_noise = 0.004;
    bool with_audio = true;
};

// Deterministic pure function of the config. Queenright samples follow a tight
// thermoregulation model; queenless samples track outside conditions.
Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace queenwatch
