// Frame codec, resynchronizing decoder, transports, and the device loop.

#include "queenwatch/wire.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>

#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

#include "queenwatch/error.hpp"
#include "queenwatch/log.hpp"

namespace queenwatch::wire {

namespace {

void put_f32(std::uint8_t* at, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    at[0] = static_cast<std::uint8_t>(bits);
    at[1] = static_cast<std::uint8_t>(bits >> 8);
    at[2] = static_cast<std::uint8_t>(bits >> 16);
    at[3] = static_cast<std::uint8_t>(bits >> 24);
}

float get_f32(const std::uint8_t* at) {
    const std::uint32_t bits = static_cast<std::uint32_t>(at[0]) |
                               (static_cast<std::uint32_t>(at[1]) << 8) |
                               (static_cast<std::uint32_t>(at[2]) << 16) |
                               (static_cast<std::uint32_t>(at[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void put_i32(std::uint8_t* at, std::int32_t v) {
    const auto bits = static_cast<std::uint32_t>(v);
    at[0] = static_cast<std::uint8_t>(bits);
    at[1] = static_cast<std::uint8_t>(bits >> 8);
    at[2] = static_cast<std::uint8_t>(bits >> 16);
    at[3] = static_cast<std::uint8_t>(bits >> 24);
}

std::int32_t get_i32(const std::uint8_t* at) {
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(at[0]) |
                                     (static_cast<std::uint32_t>(at[1]) << 8) |
                                     (static_cast<std::uint32_t>(at[2]) << 16) |
                                     (static_cast<std::uint32_t>(at[3]) << 24));
}

}  // namespace

FeatureVector SampleFrame::differentials() const {
    FeatureVector v;
    v.mask = FeatureMask::env();
    v.values[0] = static_cast<double>(t_in) - static_cast<double>(t_out);
    v.values[1] = static_cast<double>(h_in) - static_cast<double>(h_out);
    v.values[2] = static_cast<double>(p_in) - static_cast<double>(p_out);
    return v;
}

SampleFrame frame_of(const SensorSample& s) {
    return {static_cast<float>(s.t_in),  static_cast<float>(s.t_out),
            static_cast<float>(s.h_in),  static_cast<float>(s.h_out),
            static_cast<float>(s.p_in),  static_cast<float>(s.p_out)};
}

std::array<std::uint8_t, kFrameBytes> encode_sample(const SampleFrame& f) {
    const float fields[6] = {f.t_in, f.t_out, f.h_in, f.h_out, f.p_in, f.p_out};
    std::array<std::uint8_t, kFrameBytes> out{};
    for (int i = 0; i < 6; ++i) {
        if (!std::isfinite(fields[i]))
            raise(Errc::non_finite_payload, "payload floats must be finite");
        put_f32(out.data() + 4 * i, fields[i]);
    }
    std::memcpy(out.data() + kPayloadBytes, kMarker.data(), kMarker.size());
    return out;
}

std::array<std::uint8_t, kReplyBytes> encode_reply(const infer::QuantPrediction& p) {
    std::array<std::uint8_t, kReplyBytes> out{};
    out[0] = kReplyMagic;
    out[1] = static_cast<std::uint8_t>(p.label);
    put_i32(out.data() + 2, p.score_q);
    std::uint8_t x = 0;
    for (int i = 0; i < 6; ++i) x ^= out[static_cast<std::size_t>(i)];
    out[6] = x;
    return out;
}

infer::QuantPrediction decode_reply(std::span<const std::uint8_t, kReplyBytes> bytes) {
    if (bytes[0] != kReplyMagic) raise(Errc::bad_reply, "reply magic mismatch");
    std::uint8_t x = 0;
    for (int i = 0; i < 6; ++i) x ^= bytes[static_cast<std::size_t>(i)];
    if (x != bytes[6]) raise(Errc::bad_reply, "reply checksum mismatch");
    if (bytes[1] > 1) raise(Errc::bad_reply, "reply label out of range");
    return {get_i32(bytes.data() + 2), bytes[1]};
}

void Decoder::emit(std::vector<SampleFrame>& out) const {
    SampleFrame f;
    f.t_in = get_f32(buf_.data() + 0);
    f.t_out = get_f32(buf_.data() + 4);
    f.h_in = get_f32(buf_.data() + 8);
    f.h_out = get_f32(buf_.data() + 12);
    f.p_in = get_f32(buf_.data() + 16);
    f.p_out = get_f32(buf_.data() + 20);
    out.push_back(f);
}

void Decoder::byte_in(std::uint8_t b, std::vector<SampleFrame>& out) {
    if (state_ == State::scanning) {
        if (b == 0xFF) {
            // Slide the window; markers are part of it, so a full window ends
            // with the run's last four bytes.
            if (fill_ == kFrameBytes) {
                std::memmove(buf_.data(), buf_.data() + 1, kFrameBytes - 1);
                buf_[kFrameBytes - 1] = b;
            } else {
                buf_[fill_++] = b;
            }
            ++marker_run_;
            return;
        }
        if (marker_run_ >= 4) {
            // A marker run just ended. If a whole frame's worth of bytes sits
            // in the window, the 24 in front of the marker are a recovered
            // payload; either way this byte starts the next synced frame.
            if (fill_ == kFrameBytes) emit(out);
            state_ = State::synced;
            fill_ = 0;
            marker_run_ = 0;
            buf_[fill_++] = b;
            return;
        }
        if (fill_ == kFrameBytes) {
            std::memmove(buf_.data(), buf_.data() + 1, kFrameBytes - 1);
            buf_[kFrameBytes - 1] = b;
        } else {
            buf_[fill_++] = b;
        }
        marker_run_ = 0;
        return;
    }

    buf_[fill_++] = b;
    if (fill_ < kFrameBytes) return;
    if (std::memcmp(buf_.data() + kPayloadBytes, kMarker.data(), kMarker.size()) == 0) {
        emit(out);
        fill_ = 0;
        return;
    }

    // Lost alignment: count the bad frame once and keep its bytes as the scan
    // window, since the next marker may start inside them.
    ++errors_;
    state_ = State::scanning;
    marker_run_ = 0;
    while (marker_run_ < 3 && buf_[kFrameBytes - 1 - marker_run_] == 0xFF) ++marker_run_;
}

void Decoder::feed(std::span<const std::uint8_t> bytes, std::vector<SampleFrame>& out) {
    for (std::uint8_t b : bytes) byte_in(b, out);
}

namespace {

// One direction of the loopback: a byte queue with closed-flag semantics.
struct Channel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> q;
    bool closed = false;

    void write(std::span<const std::uint8_t> bytes) {
        {
            std::lock_guard lock(mu);
            if (closed) raise(Errc::transport_closed, "peer endpoint closed");
            q.insert(q.end(), bytes.begin(), bytes.end());
        }
        cv.notify_all();
    }

    std::ptrdiff_t read(std::span<std::uint8_t> into, int timeout_ms) {
        std::unique_lock lock(mu);
        if (!cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                         [&] { return !q.empty() || closed; }))
            return 0;  // timeout
        if (q.empty()) return -1;  // closed and drained
        std::size_t n = 0;
        while (n < into.size() && !q.empty()) {
            into[n++] = q.front();
            q.pop_front();
        }
        return static_cast<std::ptrdiff_t>(n);
    }

    void close() {
        {
            std::lock_guard lock(mu);
            closed = true;
        }
        cv.notify_all();
    }
};

class LoopbackEndpoint final : public Transport {
  public:
    LoopbackEndpoint(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
        : in_(std::move(in)), out_(std::move(out)) {}

    ~LoopbackEndpoint() override { LoopbackEndpoint::close(); }

    void write(std::span<const std::uint8_t> bytes) override { out_->write(bytes); }
    std::ptrdiff_t read(std::span<std::uint8_t> into, int timeout_ms) override {
        return in_->read(into, timeout_ms);
    }
    void close() override {
        in_->close();
        out_->close();
    }

  private:
    std::shared_ptr<Channel> in_;
    std::shared_ptr<Channel> out_;
};

class ReplayTransport final : public Transport {
  public:
    ReplayTransport(const std::string& in_path, const std::string& out_path) {
        std::ifstream in(in_path, std::ios::binary);
        if (!in) raise(Errc::io_error, "cannot open " + in_path);
        data_.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!out_path.empty()) {
            sink_.open(out_path, std::ios::binary);
            if (!sink_) raise(Errc::io_error, "cannot open " + out_path + " for writing");
        }
    }

    void write(std::span<const std::uint8_t> bytes) override {
        if (sink_.is_open()) {
            sink_.write(reinterpret_cast<const char*>(bytes.data()),
                        static_cast<std::streamsize>(bytes.size()));
            if (!sink_) raise(Errc::io_error, "short write to reply sink");
        }
    }

    std::ptrdiff_t read(std::span<std::uint8_t> into, int) override {
        if (pos_ >= data_.size()) return -1;
        const std::size_t n = std::min(into.size(), data_.size() - pos_);
        std::memcpy(into.data(), data_.data() + pos_, n);
        pos_ += n;
        return static_cast<std::ptrdiff_t>(n);
    }

    void close() override {
        if (sink_.is_open()) sink_.close();
    }

  private:
    std::vector<std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::ofstream sink_;
};

class SerialTransport final : public Transport {
  public:
    SerialTransport(const std::string& path, int baud) {
        fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY);
        if (fd_ < 0) raise(Errc::io_error, "cannot open serial device " + path);
        termios tio{};
        if (tcgetattr(fd_, &tio) != 0) {
            ::close(fd_);
            raise(Errc::io_error, "tcgetattr failed on " + path);
        }
        cfmakeraw(&tio);
        speed_t speed = B115200;
        switch (baud) {
            case 9600: speed = B9600; break;
            case 19200: speed = B19200; break;
            case 38400: speed = B38400; break;
            case 57600: speed = B57600; break;
            case 115200: speed = B115200; break;
            default: ::close(fd_); raise(Errc::config_invalid, "unsupported baud rate");
        }
        cfsetispeed(&tio, speed);
        cfsetospeed(&tio, speed);
        tio.c_cc[VMIN] = 0;
        tio.c_cc[VTIME] = 1;  // 100 ms poll granularity
        if (tcsetattr(fd_, TCSANOW, &tio) != 0) {
            ::close(fd_);
            raise(Errc::io_error, "tcsetattr failed on " + path);
        }
    }

    ~SerialTransport() override { SerialTransport::close(); }

    void write(std::span<const std::uint8_t> bytes) override {
        std::size_t done = 0;
        while (done < bytes.size()) {
            const ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
            if (n < 0) raise(Errc::io_error, "serial write failed");
            done += static_cast<std::size_t>(n);
        }
    }

    std::ptrdiff_t read(std::span<std::uint8_t> into, int timeout_ms) override {
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
        while (true) {
            const ssize_t n = ::read(fd_, into.data(), into.size());
            if (n > 0) return static_cast<std::ptrdiff_t>(n);
            if (n < 0) raise(Errc::io_error, "serial read failed");
            if (std::chrono::steady_clock::now() >= deadline) return 0;
        }
    }

    void close() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

  private:
    int fd_ = -1;
};

}  // namespace

LoopbackPair make_loopback() {
    auto a = std::make_shared<Channel>();  // host -> device
    auto b = std::make_shared<Channel>();  // device -> host
    LoopbackPair pair;
    pair.host = std::make_unique<LoopbackEndpoint>(b, a);
    pair.device = std::make_unique<LoopbackEndpoint>(a, b);
    return pair;
}

std::unique_ptr<Transport> make_replay(const std::string& in_path, const std::string& out_path) {
    return std::make_unique<ReplayTransport>(in_path, out_path);
}

std::unique_ptr<Transport> make_serial(const std::string& device_path, int baud) {
    return std::make_unique<SerialTransport>(device_path, baud);
}

DeviceStats run_device_loop(Transport& t, const quantize::QuantForest& qf) {
    if (qf.mask.has(FeatureId::audio_rms))
        raise(Errc::dimension_mismatch, "wire frames carry no audio channel");

    DeviceStats stats;
    Decoder decoder;
    std::vector<SampleFrame> frames;
    std::array<std::uint8_t, 512> chunk{};
    double us_sum = 0.0;
    std::uint64_t dropped = 0;

    while (true) {
        const std::ptrdiff_t n = t.read(chunk, 100);
        if (n < 0) break;
        if (n == 0) continue;  // idle poll, stream still open
        frames.clear();
        decoder.feed(std::span<const std::uint8_t>(chunk.data(), static_cast<std::size_t>(n)),
                     frames);
        for (const SampleFrame& f : frames) {
            // Resync can surface frames carved from line noise; the protocol
            // reserves non-finite payloads, so those are drops, not replies.
            if (!std::isfinite(f.t_in) || !std::isfinite(f.t_out) || !std::isfinite(f.h_in) ||
                !std::isfinite(f.h_out) || !std::isfinite(f.p_in) || !std::isfinite(f.p_out)) {
                ++dropped;
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const FeatureVector v = f.differentials();
            const infer::QuantPrediction p = infer::predict_quant(qf, v);
            const auto t1 = std::chrono::steady_clock::now();
            const double us = std::chrono::duration<double, std::micro>(t1 - t0).count();
            if (stats.replies_sent == 0 || us < stats.min_us) stats.min_us = us;
            if (us > stats.max_us) stats.max_us = us;
            us_sum += us;
            const auto reply = encode_reply(p);
            t.write(reply);
            ++stats.replies_sent;
        }
    }
    stats.frames_ok = stats.replies_sent;
    stats.frames_bad = decoder.errors() + dropped;
    stats.mean_us = stats.replies_sent ? us_sum / static_cast<double>(stats.replies_sent) : 0.0;
    log_info("device", "frames_ok=" + std::to_string(stats.frames_ok) +
                           " frames_bad=" + std::to_string(stats.frames_bad) +
                           " mean_us=" + std::to_string(stats.mean_us));
    return stats;
}

infer::QuantPrediction host_request(Transport& t, const SensorSample& s, int timeout_ms) {
    const auto frame = encode_sample(frame_of(s));
    t.write(frame);
    std::array<std::uint8_t, kReplyBytes> reply{};
    std::size_t got = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (got < kReplyBytes) {
        const int remain = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                deadline - std::chrono::steady_clock::now())
                                                .count());
        if (remain <= 0) raise(Errc::timeout, "no reply within the deadline");
        const std::ptrdiff_t n =
            t.read(std::span<std::uint8_t>(reply.data() + got, kReplyBytes - got), remain);
        if (n < 0) raise(Errc::transport_closed, "peer closed mid-reply");
        got += static_cast<std::size_t>(n);
    }
    return decode_reply(std::span<const std::uint8_t, kReplyBytes>(reply));
}

}  // namespace queenwatch::wire
