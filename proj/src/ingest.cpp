#include "queenwatch/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "queenwatch/error.hpp"
#include "queenwatch/rng.hpp"

namespace queenwatch {

std::string sample_invariant_violation(const SensorSample& s) {
    const double env[6] = {s.t_in, s.t_out, s.h_in, s.h_out, s.p_in, s.p_out};
    static const char* names[6] = {"t_in", "t_out", "h_in", "h_out", "p_in", "p_out"};
    for (int i = 0; i < 6; ++i) {
        if (!std::isfinite(env[i])) return std::string(names[i]) + " not finite";
    }
    if (s.h_in < 0.0 || s.h_in > 100.0) return "h_in out of [0,100]";
    if (s.h_out < 0.0 || s.h_out > 100.0) return "h_out out of [0,100]";
    if (s.label != 0 && s.label != 1) return "label not in {0,1}";
    if (s.audio_rms) {
        if (!std::isfinite(*s.audio_rms)) return "audio_rms not finite";
        if (*s.audio_rms < 0.0) return "audio_rms negative";
    }
    return {};
}

bool Dataset::has_audio() const {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(),
                       [](const SensorSample& s) { return s.audio_rms.has_value(); });
}

std::size_t Dataset::count_label(int label) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(),
                      [label](const SensorSample& s) { return s.label == label; }));
}

CsvSchema CsvSchema::defaults() {
    CsvSchema s;
    s.columns = {
        {"timestamp", "timestamp"}, {"t_in", "t_in"},   {"t_out", "t_out"},
        {"h_in", "h_in"},           {"h_out", "h_out"}, {"p_in", "p_in"},
        {"p_out", "p_out"},         {"audio_rms", "audio_rms"}, {"label", "queen"},
    };
    return s;
}

CsvSchema CsvSchema::from_string(const std::string& spec) {
    CsvSchema s = defaults();
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t end = spec.find(',', pos);
        if (end == std::string::npos) end = spec.size();
        const std::string item = spec.substr(pos, end - pos);
        pos = end + 1;
        if (item.empty()) continue;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) {
            raise(Errc::config_invalid, "schema item '" + item + "' is not key=column");
        }
        const std::string key = item.substr(0, eq);
        if (s.columns.find(key) == s.columns.end()) {
            raise(Errc::config_invalid, "unknown schema key '" + key + "'");
        }
        s.columns[key] = item.substr(eq + 1);
    }
    return s;
}

namespace {

void split_csv_line(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t pos = 0;
    while (true) {
        const std::size_t end = line.find(',', pos);
        if (end == std::string::npos) {
            out.push_back(line.substr(pos));
            return;
        }
        out.push_back(line.substr(pos, end - pos));
        pos = end + 1;
    }
}

std::string_view trimmed(const std::string& cell) {
    std::size_t b = 0, e = cell.size();
    while (b < e && (cell[b] == ' ' || cell[b] == '\t')) ++b;
    while (e > b && (cell[e - 1] == ' ' || cell[e - 1] == '\t' || cell[e - 1] == '\r')) --e;
    return std::string_view(cell).substr(b, e - b);
}

bool parse_double(std::string_view cell, double& out) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    const auto res = std::from_chars(first, last, out, std::chars_format::general);
    return res.ec == std::errc() && res.ptr == last;
}

bool parse_int64(std::string_view cell, std::int64_t& out) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

Dataset parse_dataset_csv(const std::string& path, const CsvSchema& schema,
                          const CsvLimits& limits, ParseStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::io_error, "cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) raise(Errc::empty_dataset, path + " has no header row");

    std::vector<std::string> header;
    split_csv_line(line, header);
    for (auto& h : header) h = std::string(trimmed(h));

    auto column_index = [&](const std::string& key) -> int {
        const auto it = schema.columns.find(key);
        if (it == schema.columns.end()) raise(Errc::config_invalid, "schema lacks key " + key);
        const auto col = std::find(header.begin(), header.end(), it->second);
        if (col == header.end()) return -1;
        return static_cast<int>(col - header.begin());
    };

    static const char* required[] = {"timestamp", "t_in", "t_out", "h_in",
                                     "h_out",     "p_in", "p_out", "label"};
    int idx[8];
    for (int i = 0; i < 8; ++i) {
        idx[i] = column_index(required[i]);
        if (idx[i] < 0) {
            raise(Errc::missing_column, std::string(required[i]) + " (column '" +
                                            schema.columns.at(required[i]) + "')");
        }
    }
    const int audio_idx = column_index("audio_rms");  // optional; -1 when absent

    Dataset ds;
    ds.source = DataSource::csv;
    ParseStats st;
    std::vector<std::string> cells;
    std::size_t line_no = 1;

    auto reject = [&](const std::string& reason) {
        ++st.rows_rejected;
        if (st.first_errors.size() < 8) {
            st.first_errors.push_back("line " + std::to_string(line_no) + ": " + reason);
        }
        const std::size_t limit = std::max<std::size_t>(
            limits.hard_floor,
            static_cast<std::size_t>(std::ceil(limits.bad_fraction *
                                               static_cast<double>(st.rows_total))));
        if (st.rows_rejected > limit) {
            if (stats) *stats = st;
            raise(Errc::malformed_row,
                  "too many malformed rows (" + std::to_string(st.rows_rejected) + " of " +
                      std::to_string(st.rows_total) + "), last at line " +
                      std::to_string(line_no) + ": " + reason);
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++st.rows_total;
        split_csv_line(line, cells);

        SensorSample s;
        std::string reason;
        bool ok = true;
        auto need = [&](int col, const char* name, double& out) {
            if (!ok) return;
            if (col >= static_cast<int>(cells.size())) {
                reason = std::string("missing cell ") + name;
                ok = false;
                return;
            }
            if (!parse_double(trimmed(cells[col]), out)) {
                reason = std::string("bad number in ") + name;
                ok = false;
            }
        };

        if (idx[0] >= static_cast<int>(cells.size()) ||
            !parse_int64(trimmed(cells[idx[0]]), s.timestamp)) {
            reject("bad timestamp");
            continue;
        }
        need(idx[1], "t_in", s.t_in);
        need(idx[2], "t_out", s.t_out);
        need(idx[3], "h_in", s.h_in);
        need(idx[4], "h_out", s.h_out);
        need(idx[5], "p_in", s.p_in);
        need(idx[6], "p_out", s.p_out);
        if (ok) {
            std::int64_t lab = -1;
            if (idx[7] >= static_cast<int>(cells.size()) ||
                !parse_int64(trimmed(cells[idx[7]]), lab)) {
                reason = "bad label";
                ok = false;
            } else {
                s.label = static_cast<int>(lab);
            }
        }
        if (ok && audio_idx >= 0 && audio_idx < static_cast<int>(cells.size())) {
            const auto cell = trimmed(cells[audio_idx]);
            if (!cell.empty()) {
                double a = 0.0;
                if (!parse_double(cell, a)) {
                    reason = "bad number in audio_rms";
                    ok = false;
                } else {
                    s.audio_rms = a;
                }
            }
        }
        if (ok) {
            reason = sample_invariant_violation(s);
            ok = reason.empty();
        }
        if (!ok) {
            reject(reason);
            continue;
        }
        ds.samples.push_back(s);
        ++st.rows_kept;
    }

    if (stats) *stats = st;
    if (ds.samples.empty()) raise(Errc::empty_dataset, path + " yielded no valid rows");
    return ds;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& dataset, const CsvSchema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::io_error, "cannot open " + path + " for writing");

    const bool audio = std::any_of(dataset.samples.begin(), dataset.samples.end(),
                                   [](const SensorSample& s) { return s.audio_rms.has_value(); });
    const auto& c = schema.columns;
    out << c.at("timestamp") << ',' << c.at("t_in") << ',' << c.at("t_out") << ','
        << c.at("h_in") << ',' << c.at("h_out") << ',' << c.at("p_in") << ',' << c.at("p_out");
    if (audio) out << ',' << c.at("audio_rms");
    out << ',' << c.at("label") << '\n';

    for (const auto& s : dataset.samples) {
        out << s.timestamp << ',' << format_double(s.t_in) << ',' << format_double(s.t_out)
            << ',' << format_double(s.h_in) << ',' << format_double(s.h_out) << ','
            << format_double(s.p_in) << ',' << format_double(s.p_out);
        if (audio) {
            out << ',';
            if (s.audio_rms) out << format_double(*s.audio_rms);
        }
        out << ',' << s.label << '\n';
    }
    if (!out) raise(Errc::io_error, "write failed for " + path);
}

namespace {

// Class-conditional channel model. The queenless mean is the regulated mean
// pushed toward the tracking mean by the separation factor; the noise level
// interpolates the same way so separation 0 collapses both classes onto one
// distribution.
struct ChannelModel {
    double regulated_mean;
    double tracking_mean;
    double sigma_regulated;
    double sigma_tracking;

    double draw(Rng& rng, bool queenright, double sep) const {
        if (queenright) return rng.normal(regulated_mean, sigma_regulated);
        const double mean = regulated_mean + sep * (tracking_mean - regulated_mean);
        const double sigma =
            std::max(1e-6, sigma_regulated + sep * (sigma_tracking - sigma_regulated));
        return rng.normal(mean, sigma);
    }
};

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_samples < 10) raise(Errc::degenerate_config, "n_samples must be >= 10");
    if (!(cfg.queen_fraction > 0.0 && cfg.queen_fraction < 1.0)) {
        raise(Errc::degenerate_config, "queen_fraction must be in (0,1)");
    }
    if (!(cfg.class_separation > 0.0)) {
        raise(Errc::degenerate_config, "class_separation must be > 0");
    }
    if (cfg.sep_t < 0.0 || cfg.sep_h < 0.0 || cfg.sep_p < 0.0) {
        raise(Errc::degenerate_config, "per-channel separation must be >= 0");
    }
    if (!(cfg.label_noise >= 0.0 && cfg.label_noise < 0.5)) {
        raise(Errc::degenerate_config, "label_noise must be in [0, 0.5)");
    }

    const std::size_t n = cfg.n_samples;
    const std::size_t n_present =
        static_cast<std::size_t>(std::llround(cfg.queen_fraction * static_cast<double>(n)));
    if (n_present == 0 || n_present == n) {
        raise(Errc::degenerate_config, "config yields a single-class dataset");
    }

    Rng rng(cfg.seed);
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_present), 1);
    rng.shuffle(labels);

    const double st = cfg.class_separation * cfg.sep_t;
    const double sh = cfg.class_separation * cfg.sep_h;
    const double sp = cfg.class_separation * cfg.sep_p;

    Dataset ds;
    ds.source = DataSource::synthetic;
    ds.samples.reserve(n);

    constexpr std::int64_t kEpoch = 1600000000;
    constexpr std::int64_t kStep = 300;

    for (std::size_t i = 0; i < n; ++i) {
        SensorSample s;
        s.timestamp = kEpoch + kStep * static_cast<std::int64_t>(i);
        s.label = labels[i];
        const bool qr = labels[i] == 1;

        // Externals: diurnal sinusoid plus uniform spread keeps T_out in [0,35].
        const double phase = 2.0 * std::numbers::pi *
                             (static_cast<double>(s.timestamp % 86400) / 86400.0);
        s.t_out = 17.5 + 10.0 * std::sin(phase) + rng.uniform(-7.5, 7.5);
        s.h_out = rng.uniform(30.0, 90.0);
        s.p_out = rng.normal(1013.0, 8.0);

        // Temperature: brood-nest regulation near 34.5 degC vs. tracking outside.
        const ChannelModel temp{34.5 + 0.05 * (s.t_out - 20.0), 2.0 + 0.5 * s.t_out, 0.4, 1.5};
        s.t_in = temp.draw(rng, qr, st);

        // Humidity: regulated near 55 %RH vs. tracking outside, same shape as
        // the temperature channel.
        const ChannelModel hum{55.0 + 0.05 * (s.h_out - 60.0), -20.0 + 0.65 * s.h_out, 2.0, 4.0};
        s.h_in = std::clamp(hum.draw(rng, qr, sh), 0.0, 100.0);

        // Pressure differential: near-zero when regulated, offset and noisy when not.
        const ChannelModel dp{0.0, 0.10, 0.05, 0.30};
        s.p_in = s.p_out + dp.draw(rng, qr, sp);

        if (cfg.with_audio) {
            // Weak acoustic cue: slightly higher in-band energy without the queen.
            const double base = qr ? 0.12 : 0.15;
            const double sigma = qr ? 0.04 : 0.05;
            s.audio_rms = std::abs(rng.normal(base, sigma));
        }
        ds.samples.push_back(s);
    }

    // Inspection mislabels: swap labels in pairs so the class counts are
    // untouched. The sensor channels keep following the true state.
    const std::size_t flips =
        static_cast<std::size_t>(std::llround(cfg.label_noise * static_cast<double>(n) / 2.0));
    if (flips > 0) {
        std::vector<std::size_t> by_class[2];
        for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
        rng.shuffle(by_class[0]);
        rng.shuffle(by_class[1]);
        const std::size_t k = std::min({flips, by_class[0].size(), by_class[1].size()});
        for (std::size_t i = 0; i < k; ++i) {
            ds.samples[by_class[0][i]].label = 1;
            ds.samples[by_class[1][i]].label = 0;
        }
    }
    return ds;
}

}  // namespace queenwatch
