#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "queenwatch/quantize.hpp"

namespace queenwatch::modelfmt {

// QBF1 blob, little-endian throughout:
//   magic "QBF1" | version u16 | n_features u8 | flags u8 (feature mask) |
//   base_q i32 | n_features x (mean f32, std f32) | feature_frac u8 |
//   leaf_frac u8 | n_trees u16 | n_trees x root u16 |
//   node fields SoA: feature u8[n], threshold_q i16[n], left i16[n],
//   right i16[n], leaf_q i24[n] | crc32 u32.
// The node count is not stored; it is recovered from the blob length.
// Leaf values are stored as signed 24-bit so a node costs exactly 10 bytes;
// at Q15.16 that is +/-128 in log-odds, far beyond any reachable leaf. The
// in-memory representation stays i32.

inline constexpr std::size_t kHeaderBytes = 12;
inline constexpr std::size_t kNodeBytes = 10;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const quantize::QuantForest& qf);
quantize::QuantForest deserialize(std::span<const std::uint8_t> blob);

void save_blob(const std::string& path, std::span<const std::uint8_t> blob);
std::vector<std::uint8_t> load_blob(const std::string& path);

// Standalone C source with the model tables and a fixed-point scorer, for
// builds where the runtime library is not wanted.
std::string emit_static_source(const quantize::QuantForest& qf,
                               const std::string& prefix = "qw");

}  // namespace queenwatch::modelfmt
