// QBF1 encode/decode with a trailing CRC-32, plus the C source emitter.

#include "queenwatch/modelfmt.hpp"

#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "queenwatch/error.hpp"

namespace queenwatch::modelfmt {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

const std::array<std::uint32_t, 256> kCrcTable = make_crc_table();

class Writer {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
    void u32(std::uint32_t v) {
        u16(static_cast<std::uint16_t>(v));
        u16(static_cast<std::uint16_t>(v >> 16));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i24(std::int32_t v) {
        const auto u = static_cast<std::uint32_t>(v);
        buf_.push_back(static_cast<std::uint8_t>(u));
        buf_.push_back(static_cast<std::uint8_t>(u >> 8));
        buf_.push_back(static_cast<std::uint8_t>(u >> 16));
    }
    void f32(float v) {
        static_assert(sizeof(float) == 4);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    std::span<const std::uint8_t> view() const { return buf_; }

  private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> s) : s_(s) {}

    std::uint8_t u8() { return s_[pos_++]; }
    std::uint16_t u16() {
        const std::uint16_t lo = u8(), hi = u8();
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
    std::uint32_t u32() {
        const std::uint32_t lo = u16(), hi = u16();
        return lo | (hi << 16);
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int32_t i24() {
        const std::uint32_t lo = u8(), mid = u8(), hi = u8();
        std::uint32_t u = lo | (mid << 8) | (hi << 16);
        if (u & 0x800000u) u |= 0xFF000000u;  // sign-extend
        return static_cast<std::int32_t>(u);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

  private:
    std::span<const std::uint8_t> s_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) c = kCrcTable[(c ^ b) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> serialize(const quantize::QuantForest& qf) {
    const std::size_t nf = qf.n_features();
    if (nf == 0 || nf > 4) raise(Errc::structural_error, "feature count out of range");
    if (qf.scaler_mean.size() != nf || qf.scaler_std.size() != nf)
        raise(Errc::structural_error, "scaler width does not match the mask");
    if (qf.roots.empty()) raise(Errc::empty_forest, "no trees to serialize");
    if (qf.roots.size() > 0xFFFF) raise(Errc::too_many_nodes, "tree count exceeds u16");
    if (qf.nodes.size() > 0xFFFF) raise(Errc::too_many_nodes, "node count exceeds u16");
    for (const quantize::QuantNode& n : qf.nodes) {
        if (n.leaf_q < -(1 << 23) || n.leaf_q >= (1 << 23))
            raise(Errc::overflow, "leaf value exceeds the stored 24-bit range");
    }

    Writer w;
    w.u8('Q');
    w.u8('B');
    w.u8('F');
    w.u8('1');
    w.u16(1);
    w.u8(static_cast<std::uint8_t>(nf));
    w.u8(qf.mask.bits);
    w.i32(qf.base_q);
    for (std::size_t i = 0; i < nf; ++i) {
        w.f32(qf.scaler_mean[i]);
        w.f32(qf.scaler_std[i]);
    }
    w.u8(qf.feature_frac);
    w.u8(qf.leaf_frac);
    w.u16(static_cast<std::uint16_t>(qf.roots.size()));
    for (std::uint16_t r : qf.roots) w.u16(r);
    for (const quantize::QuantNode& n : qf.nodes) w.u8(n.feature);
    for (const quantize::QuantNode& n : qf.nodes) w.i16(n.threshold_q);
    for (const quantize::QuantNode& n : qf.nodes) w.i16(n.left);
    for (const quantize::QuantNode& n : qf.nodes) w.i16(n.right);
    for (const quantize::QuantNode& n : qf.nodes) w.i24(n.leaf_q);
    w.u32(crc32(w.view()));
    return w.take();
}

quantize::QuantForest deserialize(std::span<const std::uint8_t> blob) {
    if (blob.size() < kHeaderBytes + 4) raise(Errc::truncated_blob, "blob shorter than header");
    if (blob[0] != 'Q' || blob[1] != 'B' || blob[2] != 'F' || blob[3] != '1')
        raise(Errc::bad_magic, "magic mismatch");

    Reader header(blob.subspan(4));
    const std::uint16_t version = header.u16();
    if (version != 1) raise(Errc::unsupported_version, "version " + std::to_string(version));

    const std::uint32_t stored = Reader(blob.subspan(blob.size() - 4)).u32();
    if (crc32(blob.first(blob.size() - 4)) != stored)
        raise(Errc::crc_mismatch, "checksum does not match");

    quantize::QuantForest qf;
    const std::uint8_t nf = header.u8();
    const std::uint8_t flags = header.u8();
    if (nf == 0 || nf > 4 || std::popcount(flags) != nf || (flags & ~0x0Fu) != 0)
        raise(Errc::structural_error, "feature mask and count disagree");
    qf.mask.bits = flags;
    qf.base_q = header.i32();

    const std::size_t fixed = kHeaderBytes + 8u * nf + 2 + 2;
    if (blob.size() < fixed + 4) raise(Errc::truncated_blob, "blob shorter than scaler block");
    Reader body(blob.subspan(kHeaderBytes));
    for (std::uint8_t i = 0; i < nf; ++i) {
        qf.scaler_mean.push_back(body.f32());
        qf.scaler_std.push_back(body.f32());
    }
    qf.feature_frac = body.u8();
    qf.leaf_frac = body.u8();
    if (qf.feature_frac > 14 || qf.leaf_frac > 30)
        raise(Errc::structural_error, "fraction bits out of range");
    const std::uint16_t n_trees = body.u16();
    if (n_trees == 0) raise(Errc::structural_error, "blob encodes no trees");
    if (blob.size() < fixed + 2u * n_trees + 4)
        raise(Errc::truncated_blob, "blob shorter than tree table");
    for (std::uint16_t t = 0; t < n_trees; ++t) qf.roots.push_back(body.u16());

    const std::size_t node_bytes = blob.size() - (fixed + 2u * n_trees + 4);
    if (node_bytes % kNodeBytes != 0)
        raise(Errc::truncated_blob, "node block is not a whole number of nodes");
    const std::size_t n = node_bytes / kNodeBytes;
    if (n == 0 || n > 0xFFFF) raise(Errc::structural_error, "node count out of range");

    qf.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) qf.nodes[i].feature = body.u8();
    for (std::size_t i = 0; i < n; ++i) qf.nodes[i].threshold_q = body.i16();
    for (std::size_t i = 0; i < n; ++i) qf.nodes[i].left = body.i16();
    for (std::size_t i = 0; i < n; ++i) qf.nodes[i].right = body.i16();
    for (std::size_t i = 0; i < n; ++i) qf.nodes[i].leaf_q = body.i24();

    // Roots must be ascending from zero and partition the node block.
    if (qf.roots[0] != 0) raise(Errc::structural_error, "first root is not node zero");
    for (std::size_t t = 0; t < qf.roots.size(); ++t) {
        const std::size_t begin = qf.roots[t];
        const std::size_t end = t + 1 < qf.roots.size() ? qf.roots[t + 1] : n;
        if (begin >= end || end > n) raise(Errc::structural_error, "root table out of order");
        for (std::size_t i = begin; i < end; ++i) {
            const quantize::QuantNode& q = qf.nodes[i];
            if (q.is_leaf()) {
                if (q.left != -1 || q.right != -1)
                    raise(Errc::structural_error, "leaf with children");
            } else {
                if (q.feature >= nf) raise(Errc::structural_error, "feature index out of range");
                const std::size_t tree_n = end - begin;
                if (q.left < 0 || q.right < 0 || static_cast<std::size_t>(q.left) >= tree_n ||
                    static_cast<std::size_t>(q.right) >= tree_n)
                    raise(Errc::structural_error, "child offset out of range");
            }
        }
    }
    return qf;
}

void save_blob(const std::string& path, std::span<const std::uint8_t> blob) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::io_error, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) raise(Errc::io_error, "short write to " + path);
}

std::vector<std::uint8_t> load_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::io_error, "cannot open " + path);
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return blob;
}

std::string emit_static_source(const quantize::QuantForest& qf, const std::string& prefix) {
    const std::size_t n = qf.nodes.size();
    if (n == 0 || qf.roots.empty()) raise(Errc::empty_forest, "nothing to emit");
    const std::string up = [&] {
        std::string s = prefix;
        for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }();

    std::ostringstream os;
    os << "/* Auto-generated fixed-point tree model. DO NOT EDIT. */\n";
    os << "#include <math.h>\n";
    os << "#include <stdint.h>\n\n";
    os << "#define " << up << "_N_FEATURES " << qf.n_features() << "\n";
    os << "#define " << up << "_N_TREES " << qf.roots.size() << "\n";
    os << "#define " << up << "_FEATURE_FRAC " << int(qf.feature_frac) << "\n";
    os << "#define " << up << "_LEAF_FRAC " << int(qf.leaf_frac) << "\n";
    os << "#define " << up << "_BASE_Q " << qf.base_q << "\n\n";

    os << "static const float " << prefix << "_scaler_mean[" << up << "_N_FEATURES] = {";
    for (std::size_t i = 0; i < qf.scaler_mean.size(); ++i) {
        if (i) os << ", ";
        os << std::hexfloat << qf.scaler_mean[i] << std::defaultfloat << "f";
    }
    os << "};\n";
    os << "static const float " << prefix << "_scaler_std[" << up << "_N_FEATURES] = {";
    for (std::size_t i = 0; i < qf.scaler_std.size(); ++i) {
        if (i) os << ", ";
        os << std::hexfloat << qf.scaler_std[i] << std::defaultfloat << "f";
    }
    os << "};\n\n";

    auto table = [&](const char* type, const char* name, auto field) {
        os << "static const " << type << " " << prefix << "_" << name << "[" << n << "] = {";
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 12 == 0) os << "\n    ";
            os << field(qf.nodes[i]) << (i + 1 < n ? "," : "");
            if (i % 12 != 11 && i + 1 < n) os << " ";
        }
        os << "\n};\n";
    };
    table("uint8_t", "feature", [](const quantize::QuantNode& q) { return int(q.feature); });
    table("int16_t", "threshold_q",
          [](const quantize::QuantNode& q) { return int(q.threshold_q); });
    table("int16_t", "left", [](const quantize::QuantNode& q) { return int(q.left); });
    table("int16_t", "right", [](const quantize::QuantNode& q) { return int(q.right); });
    table("int32_t", "leaf_q", [](const quantize::QuantNode& q) { return q.leaf_q; });

    os << "static const uint16_t " << prefix << "_root[" << up << "_N_TREES] = {";
    for (std::size_t i = 0; i < qf.roots.size(); ++i) {
        if (i % 12 == 0) os << "\n    ";
        os << qf.roots[i] << (i + 1 < qf.roots.size() ? "," : "");
        if (i % 12 != 11 && i + 1 < qf.roots.size()) os << " ";
    }
    os << "\n};\n\n";

    os << "static int32_t " << prefix << "_sat_add(int32_t a, int32_t b) {\n";
    os << "    if (b > 0 && a > INT32_MAX - b) return INT32_MAX;\n";
    os << "    if (b < 0 && a < INT32_MIN - b) return INT32_MIN;\n";
    os << "    return a + b;\n";
    os << "}\n\n";

    os << "/* x: " << up << "_N_FEATURES differential feature values. Applies the\n";
    os << "   training z-score and converts to the feature fixed point, rounding to\n";
    os << "   nearest-even and saturating. Double math keeps it bit-identical to the\n";
    os << "   host pipeline. */\n";
    os << "void " << prefix << "_prepare(const double *x, int16_t *x_q) {\n";
    os << "    int i;\n";
    os << "    for (i = 0; i < " << up << "_N_FEATURES; ++i) {\n";
    os << "        const double z = (x[i] - (double)" << prefix << "_scaler_mean[i]) / (double)"
       << prefix << "_scaler_std[i];\n";
    os << "        const double s = nearbyint(ldexp(z, " << up << "_FEATURE_FRAC));\n";
    os << "        x_q[i] = (int16_t)(s >= 32767.0 ? 32767 : (s <= -32768.0 ? -32768 : s));\n";
    os << "    }\n";
    os << "}\n\n";

    os << "/* x_q: " << up << "_N_FEATURES features, Q" << 15 - int(qf.feature_frac) << "."
       << int(qf.feature_frac) << " fixed point. Returns the raw score in Q"
       << 31 - int(qf.leaf_frac) << "." << int(qf.leaf_frac) << ". */\n";
    os << "int32_t " << prefix << "_score(const int16_t *x_q) {\n";
    os << "    int32_t acc = " << up << "_BASE_Q;\n";
    os << "    uint16_t t;\n";
    os << "    for (t = 0; t < " << up << "_N_TREES; ++t) {\n";
    os << "        uint16_t n = " << prefix << "_root[t];\n";
    os << "        while (" << prefix << "_feature[n] != 0xFF) {\n";
    os << "            const int go_left = x_q[" << prefix << "_feature[n]] <= " << prefix
       << "_threshold_q[n];\n";
    os << "            n = (uint16_t)(" << prefix << "_root[t] + (go_left ? " << prefix
       << "_left[n] : " << prefix << "_right[n]));\n";
    os << "        }\n";
    os << "        acc = " << prefix << "_sat_add(acc, " << prefix << "_leaf_q[n]);\n";
    os << "    }\n";
    os << "    return acc;\n";
    os << "}\n\n";
    os << "int " << prefix << "_label(const int16_t *x_q) { return " << prefix
       << "_score(x_q) >= 0; }\n";
    return os.str();
}

}  // namespace queenwatch::modelfmt
