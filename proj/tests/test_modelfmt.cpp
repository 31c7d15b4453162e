#include "queenwatch/modelfmt.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "queenwatch/error.hpp"
#include "queenwatch/rng.hpp"

using namespace queenwatch;
using namespace queenwatch::modelfmt;
using queenwatch::quantize::QuantForest;
using queenwatch::quantize::QuantNode;

namespace {

// Smallest legal model: one tree, one zero leaf, env mask, identity scaler.
QuantForest minimal_forest() {
    QuantForest qf;
    qf.mask = FeatureMask::env();
    qf.base_q = 0;
    qf.scaler_mean = {0.0f, 0.0f, 0.0f};
    qf.scaler_std = {1.0f, 1.0f, 1.0f};
    qf.roots = {0};
    qf.nodes.resize(1);
    return qf;
}

std::uint32_t read_u32le(const std::vector<std::uint8_t>& b, std::size_t at) {
    return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 |
           std::uint32_t(b[at + 2]) << 16 | std::uint32_t(b[at + 3]) << 24;
}

// Flip/patch helper: recompute the trailing CRC so only the intended field is wrong.
void fix_crc(std::vector<std::uint8_t>& blob) {
    const std::uint32_t c =
        crc32({blob.data(), blob.size() - 4});
    blob[blob.size() - 4] = std::uint8_t(c);
    blob[blob.size() - 3] = std::uint8_t(c >> 8);
    blob[blob.size() - 2] = std::uint8_t(c >> 16);
    blob[blob.size() - 1] = std::uint8_t(c >> 24);
}

}  // namespace

TEST_CASE("crc32 check values") {
    const char* s = "123456789";
    CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s), 9}) == 0xCBF43926u);
    CHECK(crc32({}) == 0u);
}

TEST_CASE("minimal model is 56 bytes with the documented layout") {
    const std::vector<std::uint8_t> blob = serialize(minimal_forest());
    REQUIRE(blob.size() == 56);

    CHECK(std::memcmp(blob.data(), "QBF1", 4) == 0);
    CHECK(blob[4] == 1);   // version lo
    CHECK(blob[5] == 0);   // version hi
    CHECK(blob[6] == 3);   // n_features
    CHECK(blob[7] == 0x07);  // mask flags
    CHECK(read_u32le(blob, 8) == 0);  // base_q
    // scaler: mean 0.0f, std 1.0f = 0x3F800000 le
    CHECK(read_u32le(blob, 12) == 0);
    CHECK(read_u32le(blob, 16) == 0x3F800000u);
    const std::size_t after_scaler = 12 + 3 * 8;
    CHECK(blob[after_scaler] == 8);       // feature_frac
    CHECK(blob[after_scaler + 1] == 16);  // leaf_frac
    CHECK(blob[after_scaler + 2] == 1);   // n_trees lo
    CHECK(blob[after_scaler + 3] == 0);
    CHECK(blob[after_scaler + 4] == 0);   // root[0]
    CHECK(blob[after_scaler + 5] == 0);
    // Node SoA: feature 0xFF, threshold 0, children -1, leaf 0.
    const std::size_t nodes_at = after_scaler + 6;
    CHECK(blob[nodes_at] == 0xFF);
    CHECK(blob[nodes_at + 3] == 0xFF);  // left = -1 le
    CHECK(blob[nodes_at + 4] == 0xFF);
    CHECK(read_u32le(blob, blob.size() - 4) ==
          crc32({blob.data(), blob.size() - 4}));

    CHECK(serialize(minimal_forest()) == blob);  // byte-stable
}

TEST_CASE("negative leaf values survive the 24-bit encoding") {
    QuantForest qf = minimal_forest();
    qf.nodes[0].leaf_q = -1;
    const QuantForest back = deserialize(serialize(qf));
    CHECK(back.nodes[0].leaf_q == -1);

    qf.nodes[0].leaf_q = -(1 << 23);  // most negative representable
    CHECK(deserialize(serialize(qf)).nodes[0].leaf_q == -(1 << 23));
    qf.nodes[0].leaf_q = (1 << 23) - 1;
    CHECK(deserialize(serialize(qf)).nodes[0].leaf_q == (1 << 23) - 1);

    qf.nodes[0].leaf_q = 1 << 23;  // one past
    CHECK_THROWS_AS(serialize(qf), Error);
}

TEST_CASE("random forests round-trip exactly") {
    Rng rng(2024);
    for (int it = 0; it < 50; ++it) {
        const QuantForest qf = oracle::random_quant_forest(rng);
        const std::vector<std::uint8_t> blob = serialize(qf);
        CHECK(blob.size() ==
              kHeaderBytes + 8 * qf.n_features() + 4 + 2 * qf.n_trees() +
                  kNodeBytes * qf.nodes.size() + 4);
        const QuantForest back = deserialize(blob);
        CHECK(oracle::quant_forests_equal(qf, back));
        CHECK(serialize(back) == blob);
    }
}

TEST_CASE("every single-bit corruption is rejected") {
    const std::vector<std::uint8_t> good = serialize(minimal_forest());
    const std::set<Errc> acceptable{Errc::bad_magic, Errc::unsupported_version,
                                    Errc::crc_mismatch, Errc::structural_error,
                                    Errc::truncated_blob};
    for (std::size_t byte = 0; byte < good.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            std::vector<std::uint8_t> bad = good;
            bad[byte] ^= std::uint8_t(1u << bit);
            try {
                deserialize(bad);
                FAIL("bit flip at byte " << byte << " bit " << bit << " was accepted");
            } catch (const Error& e) {
                CHECK(acceptable.count(e.code()) == 1);
            }
        }
    }
}

TEST_CASE("truncated and oversized blobs are rejected") {
    const std::vector<std::uint8_t> good = serialize(minimal_forest());
    try {
        deserialize({});
        FAIL("expected TruncatedBlob");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::truncated_blob);
    }
    for (const std::size_t keep : {1ul, 4ul, 11ul, 30ul, good.size() - 1}) {
        std::vector<std::uint8_t> cut(good.begin(), good.begin() + long(keep));
        CHECK_THROWS_AS(deserialize(cut), Error);
    }
    // One stray byte before the CRC breaks the node-block modulus.
    std::vector<std::uint8_t> padded = good;
    padded.insert(padded.end() - 4, std::uint8_t(0));
    fix_crc(padded);
    try {
        deserialize(padded);
        FAIL("expected TruncatedBlob");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::truncated_blob);
    }
}

TEST_CASE("structurally invalid models fail after the crc passes") {
    auto expect_structural = [](std::vector<std::uint8_t> blob) {
        fix_crc(blob);
        try {
            deserialize(blob);
            FAIL("expected StructuralError");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::structural_error);
        }
    };

    // Two trees of one leaf each: header 12 | scaler 24 | fracs 2 | n_trees 2
    // puts the root table at byte 40 and the node SoA at 44.
    QuantForest two = minimal_forest();
    two.roots = {0, 1};
    two.nodes.resize(2);
    std::vector<std::uint8_t> good = serialize(two);
    const std::size_t roots_at = 40;

    std::vector<std::uint8_t> bad = good;
    bad[roots_at] = 1;  // first root != 0
    expect_structural(bad);

    bad = good;
    bad[roots_at + 2] = 0;  // second root not after the first
    expect_structural(bad);

    bad = good;
    bad[6] = 2;  // n_features no longer matches popcount(flags)
    fix_crc(bad);
    CHECK_THROWS_AS(deserialize(bad), Error);

    const std::size_t nodes_at = roots_at + 4;
    bad = good;
    bad[nodes_at] = 0;  // leaf gains a feature index but keeps children -1
    expect_structural(bad);

    // Single tree, one split over two leaves; SoA starts at byte 42:
    // feature u8[3] @42, threshold i16[3] @45, left i16[3] @51, right i16[3] @57.
    QuantForest split = minimal_forest();
    split.nodes.resize(3);
    split.nodes[0].feature = 0;
    split.nodes[0].left = 1;
    split.nodes[0].right = 2;
    good = serialize(split);
    const std::size_t soa = 42;

    bad = good;
    bad[soa] = 9;  // split feature index past the mask width
    expect_structural(bad);

    bad = good;
    bad[soa + 3 + 6 + 6] = 5;  // right[0] -> 5, past the 3-node tree block
    bad[soa + 3 + 6 + 6 + 1] = 0;
    expect_structural(bad);
}

TEST_CASE("blob file io round-trips") {
    const std::vector<std::uint8_t> blob = serialize(minimal_forest());
    const auto path = (std::filesystem::temp_directory_path() / "qw_min.qbf").string();
    save_blob(path, blob);
    CHECK(load_blob(path) == blob);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_blob("/nonexistent/qw.qbf"), Error);
}

TEST_CASE("emitted source matches the frozen golden") {
    QuantForest qf;
    qf.mask = FeatureMask::env();
    qf.base_q = -4096;
    qf.scaler_mean = {10.0f, 2.5f, 0.25f};
    qf.scaler_std = {4.0f, 8.0f, 0.5f};
    qf.roots = {0, 3};
    qf.nodes.resize(4);
    qf.nodes[0].feature = 0;
    qf.nodes[0].threshold_q = 64;
    qf.nodes[0].left = 1;
    qf.nodes[0].right = 2;
    qf.nodes[1].leaf_q = -30000;
    qf.nodes[2].leaf_q = 70000;
    qf.nodes[3].leaf_q = 12345;

    const std::string src = emit_static_source(qf, "tiny");
    CHECK(src.find("tiny_score") != std::string::npos);
    CHECK(src.find("TINY_BASE_Q -4096") != std::string::npos);
    CHECK(src.find("70000") != std::string::npos);

    const std::string golden_path = std::string(QW_TEST_DATA_DIR) + "/golden_tiny.c";
    std::ifstream in(golden_path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing golden file " << golden_path);
    std::string golden((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
    CHECK(src == golden);
}
