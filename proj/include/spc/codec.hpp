#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spc/pointset.hpp"
#include "spc/tensor.hpp"

namespace spc {

constexpr uint8_t kStreamVersion = 1;
constexpr int kDefaultGeoBits = 12;
constexpr int kDefaultColorBits = 8;
constexpr int kMaxGeoBits = 16;
constexpr size_t kFixedHeaderBytes = 30;   // header size is this plus l^3

//============================================================================
// Seed quantization.  Positions in [-1, 1] map to q-bit indices, colors in
// [0, 1] to color_bits-bit indices; dequantization returns bin centers.

struct QSeed {
  std::array<uint32_t, 3> pos{};
  std::array<uint32_t, 3> col{};

  auto operator<=>(const QSeed&) const = default;
};

struct QuantizedSeeds {
  int geo_bits = kDefaultGeoBits;
  int color_bits = kDefaultColorBits;
  bool has_colors = true;
  std::vector<QSeed> seeds;

  bool operator==(const QuantizedSeeds&) const = default;
};

uint32_t quantize_coord(double x, int bits);
double dequantize_coord(uint32_t idx, int bits);
uint32_t quantize_color(double c, int bits);
double dequantize_color(uint32_t idx, int bits);

QuantizedSeeds quantize_seeds(const Mat& seeds6, int geo_bits, int color_bits, bool colors);
// S x 6; colors are white when absent.
Mat dequantize_seeds(const QuantizedSeeds& q);

// Morton order of the positions, ties broken by color: the order in which
// the octree coder emits seeds.
void canonical_sort(std::vector<QSeed>& seeds, int geo_bits);

//============================================================================
// Octree payload.  Breadth-first over the [0, 2^q)^3 grid; occupancy bits
// per child with context (depth, child position); per-leaf duplicate count
// in unary; colors as per-channel deltas (mod 2^color_bits) from the
// previous seed in canonical order, coded through a binary tree of models.

struct OctreeStats {
  std::vector<std::vector<uint8_t>> occupancy;   // per depth, per node
  size_t leaves = 0;
  size_t geometry_bits = 0;
};

std::vector<uint8_t> encode_octree(const QuantizedSeeds& q, OctreeStats* stats = nullptr);
// `base_offset` positions error offsets within an enclosing stream.
QuantizedSeeds decode_octree(
  std::span<const uint8_t> payload, int geo_bits, int color_bits, bool colors,
  int64_t base_offset = 0);

//============================================================================
// Stream: "SPC1", version, level, flags (bit0 colors), geo_bits,
// color_bits, reserved (0), center xyz and radius as float32 LE, l^3 bytes
// of per-cell round counts, u32 LE payload length, payload.

struct StreamHeader {
  int level = 1;
  bool has_colors = true;
  int geo_bits = kDefaultGeoBits;
  int color_bits = kDefaultColorBits;
  NormalizationScale scale;
  std::vector<uint8_t> cell_ns;   // l^3

  bool operator==(const StreamHeader&) const = default;
};

struct DecodedStream {
  StreamHeader header;
  QuantizedSeeds qseeds;   // canonical order
  Mat seeds;               // dequantized, S x 6
};

std::vector<uint8_t> encode_stream(const StreamHeader& header, const QuantizedSeeds& q);
std::vector<uint8_t> encode_stream(const StreamHeader& header, const Mat& seeds6);
DecodedStream decode_stream(std::span<const uint8_t> bytes);

// Scale as stored (float32 precision).
NormalizationScale stored_scale(const NormalizationScale& s);

uint64_t measure_bits(std::span<const uint8_t> bytes);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace spc
