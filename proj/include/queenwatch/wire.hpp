#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "queenwatch/infer.hpp"
#include "queenwatch/ingest.hpp"

namespace queenwatch::wire {

// Sample frame: six f32 little-endian (t_in, t_out, h_in, h_out, p_in, p_out)
// followed by the end marker FF FF FF FF. Payload floats must be finite; the
// marker byte pattern is a NaN, so finite payloads can never alias it.
inline constexpr std::size_t kPayloadBytes = 24;
inline constexpr std::size_t kFrameBytes = 28;
inline constexpr std::array<std::uint8_t, 4> kMarker = {0xFF, 0xFF, 0xFF, 0xFF};

// Reply frame: magic 0xB5, label u8, score_q i32 little-endian, XOR checksum
// of the preceding six bytes.
inline constexpr std::size_t kReplyBytes = 7;
inline constexpr std::uint8_t kReplyMagic = 0xB5;

struct SampleFrame {
    float t_in = 0, t_out = 0, h_in = 0, h_out = 0, p_in = 0, p_out = 0;

    bool operator==(const SampleFrame&) const = default;
    FeatureVector differentials() const;  // double math, env mask
};

// Narrows a sample's environmental fields through f32, the wire precision.
SampleFrame frame_of(const SensorSample& s);

std::array<std::uint8_t, kFrameBytes> encode_sample(const SampleFrame& f);

std::array<std::uint8_t, kReplyBytes> encode_reply(const infer::QuantPrediction& p);
infer::QuantPrediction decode_reply(std::span<const std::uint8_t, kReplyBytes> bytes);

// Incremental frame decoder. Pure per-byte state machine, so any chunking of
// the same byte stream yields the same frames and error count. Holds at most
// one frame of buffered bytes: while synced the buffer fills positionally;
// after a framing error the same buffer becomes a sliding window, and when a
// marker run ends with a full window the 24 bytes in front of it are emitted
// as the recovered frame. A single corrupted marker therefore costs exactly
// one frame and one error count.
class Decoder {
  public:
    void feed(std::span<const std::uint8_t> bytes, std::vector<SampleFrame>& out);
    std::uint64_t errors() const { return errors_; }
    std::size_t buffered() const { return fill_; }

  private:
    void byte_in(std::uint8_t b, std::vector<SampleFrame>& out);
    void emit(std::vector<SampleFrame>& out) const;

    enum class State { synced, scanning };
    State state_ = State::synced;
    std::array<std::uint8_t, kFrameBytes> buf_{};
    std::size_t fill_ = 0;
    std::uint32_t marker_run_ = 0;
    std::uint64_t errors_ = 0;
};

// Bidirectional byte pipe. read() blocks up to timeout_ms; it returns the
// byte count delivered, 0 on timeout, or -1 once the stream has ended and
// drained.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    virtual std::ptrdiff_t read(std::span<std::uint8_t> into, int timeout_ms) = 0;
    virtual void close() = 0;
};

// In-process pair of endpoints over shared queues.
struct LoopbackPair {
    std::unique_ptr<Transport> host;
    std::unique_ptr<Transport> device;
};
LoopbackPair make_loopback();

// Device side reads frames from a file; replies go to a sink file
// (empty path discards them).
std::unique_ptr<Transport> make_replay(const std::string& in_path, const std::string& out_path);

// POSIX serial port in raw 8N1 mode.
std::unique_ptr<Transport> make_serial(const std::string& device_path, int baud = 115200);

struct DeviceStats {
    std::uint64_t frames_ok = 0;
    std::uint64_t frames_bad = 0;
    std::uint64_t replies_sent = 0;
    double min_us = 0.0, mean_us = 0.0, max_us = 0.0;  // per-inference walk time
};

// Runs until the transport reports end of stream: decode frames, prepare
// fixed-point features, evaluate, reply. The model must be environmental-only
// since the wire carries no audio channel.
DeviceStats run_device_loop(Transport& t, const quantize::QuantForest& qf);

// One request/response exchange from the host side.
infer::QuantPrediction host_request(Transport& t, const SensorSample& s,
                                    int timeout_ms = 5000);

}  // namespace queenwatch::wire
