#pragma once

#include <stdexcept>
#include <string>

namespace queenwatch {

enum class Errc {
    // ingest
    missing_column,
    malformed_row,
    empty_dataset,
    degenerate_config,
    // features
    degenerate_feature,
    dimension_mismatch,
    rate_too_low,
    empty_signal,
    missing_audio,
    // gbdt
    single_class,
    empty_split,
    empty_forest,
    // quantize
    overflow,
    // modelfmt
    too_many_nodes,
    bad_magic,
    unsupported_version,
    truncated_blob,
    crc_mismatch,
    structural_error,
    // infer
    non_finite_input,
    corrupt_model,
    // wire
    non_finite_payload,
    timeout,
    bad_reply,
    transport_closed,
    // eval
    too_small,
    class_too_small,
    length_mismatch,
    // cli / config
    config_invalid,
    io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

inline const char* errc_name(Errc code) {
    switch (code) {
        case Errc::missing_column: return "MissingColumn";
        case Errc::malformed_row: return "MalformedRow";
        case Errc::empty_dataset: return "EmptyDataset";
        case Errc::degenerate_config: return "DegenerateConfig";
        case Errc::degenerate_feature: return "DegenerateFeature";
        case Errc::dimension_mismatch: return "DimensionMismatch";
        case Errc::rate_too_low: return "RateTooLow";
        case Errc::empty_signal: return "EmptySignal";
        case Errc::missing_audio: return "MissingAudio";
        case Errc::single_class: return "SingleClass";
        case Errc::empty_split: return "EmptySplit";
        case Errc::empty_forest: return "EmptyForest";
        case Errc::overflow: return "Overflow";
        case Errc::too_many_nodes: return "TooManyNodes";
        case Errc::bad_magic: return "BadMagic";
        case Errc::unsupported_version: return "UnsupportedVersion";
        case Errc::truncated_blob: return "TruncatedBlob";
        case Errc::crc_mismatch: return "CrcMismatch";
        case Errc::structural_error: return "StructuralError";
        case Errc::non_finite_input: return "NonFiniteInput";
        case Errc::corrupt_model: return "CorruptModel";
        case Errc::non_finite_payload: return "NonFinitePayload";
        case Errc::timeout: return "Timeout";
        case Errc::bad_reply: return "BadReply";
        case Errc::transport_closed: return "TransportClosed";
        case Errc::too_small: return "TooSmall";
        case Errc::class_too_small: return "ClassTooSmall";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::config_invalid: return "ConfigInvalid";
        case Errc::io_error: return "IoError";
    }
    return "Error";
}

}  // namespace queenwatch
