#include "spc/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "spc/arith.hpp"
#include "spc/error.hpp"
#include "spc/patching.hpp"

namespace spc {

namespace {

  void
  check_bits(int geo_bits, int color_bits)
  {
    if (geo_bits < 1 || geo_bits > kMaxGeoBits)
      throw Error(Errc::kInvalidArgument, "geo_bits must be in [1, 16]");
    if (color_bits < 1 || color_bits > 8)
      throw Error(Errc::kInvalidArgument, "color_bits must be in [1, 8]");
  }

  uint64_t
  morton(const std::array<uint32_t, 3>& p, int bits)
  {
    uint64_t key = 0;
    for (int b = bits - 1; b >= 0; --b)
      key = key << 3 | (uint64_t(p[0] >> b & 1) << 2) | (uint64_t(p[1] >> b & 1) << 1) |
        uint64_t(p[2] >> b & 1);
    return key;
  }

  std::array<uint32_t, 3>
  unmorton(uint64_t key, int bits)
  {
    std::array<uint32_t, 3> p{};
    for (int b = 0; b < bits; ++b) {
      uint64_t c = key >> (3 * b) & 7;
      p[0] |= uint32_t(c >> 2 & 1) << b;
      p[1] |= uint32_t(c >> 1 & 1) << b;
      p[2] |= uint32_t(c & 1) << b;
    }
    return p;
  }

}  // namespace

//============================================================================

uint32_t
quantize_coord(double x, int bits)
{
  const double n = std::ldexp(1.0, bits);
  double v = std::floor((x + 1) / 2 * n);
  return uint32_t(std::clamp(v, 0.0, n - 1));
}

double
dequantize_coord(uint32_t idx, int bits)
{
  return (double(idx) + 0.5) / std::ldexp(1.0, bits) * 2 - 1;
}

uint32_t
quantize_color(double c, int bits)
{
  const double n = std::ldexp(1.0, bits);
  return uint32_t(std::clamp(std::floor(c * n), 0.0, n - 1));
}

double
dequantize_color(uint32_t idx, int bits)
{
  return (double(idx) + 0.5) / std::ldexp(1.0, bits);
}

QuantizedSeeds
quantize_seeds(const Mat& seeds6, int geo_bits, int color_bits, bool colors)
{
  check_bits(geo_bits, color_bits);
  if (seeds6.cols != 6)
    throw Error(Errc::kInvalidArgument, "quantize_seeds expects S x 6");
  QuantizedSeeds q;
  q.geo_bits = geo_bits;
  q.color_bits = color_bits;
  q.has_colors = colors;
  q.seeds.resize(seeds6.rows);
  for (size_t i = 0; i < seeds6.rows; ++i) {
    for (size_t d = 0; d < 3; ++d) {
      double x = seeds6(i, d);
      if (!(std::abs(x) <= 1 + 1e-9))
        throw Error(Errc::kInvalidArgument, "seed coordinate outside [-1, 1]");
      q.seeds[i].pos[d] = quantize_coord(x, geo_bits);
      if (colors) {
        double c = seeds6(i, 3 + d);
        if (!std::isfinite(c))
          throw Error(Errc::kInvalidArgument, "non-finite seed color");
        q.seeds[i].col[d] = quantize_color(c, color_bits);
      }
    }
  }
  return q;
}

Mat
dequantize_seeds(const QuantizedSeeds& q)
{
  Mat out(q.seeds.size(), 6);
  for (size_t i = 0; i < q.seeds.size(); ++i)
    for (size_t d = 0; d < 3; ++d) {
      out(i, d) = dequantize_coord(q.seeds[i].pos[d], q.geo_bits);
      out(i, 3 + d) = q.has_colors ? dequantize_color(q.seeds[i].col[d], q.color_bits) : 1.0;
    }
  return out;
}

void
canonical_sort(std::vector<QSeed>& seeds, int geo_bits)
{
  struct Keyed {
    uint64_t key;
    QSeed seed;
  };
  std::vector<Keyed> k(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i)
    k[i] = {morton(seeds[i].pos, geo_bits), seeds[i]};
  std::sort(k.begin(), k.end(), [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key)
      return a.key < b.key;
    return a.seed.col < b.seed.col;
  });
  for (size_t i = 0; i < seeds.size(); ++i)
    seeds[i] = k[i].seed;
}

//============================================================================

namespace {

  constexpr int kCountContexts = 8;

  struct Models {
    explicit Models(int geo_bits, int color_bits)
      : occupancy(size_t(geo_bits) * 8), count(kCountContexts),
        color(3, std::vector<BitModel>(size_t(1) << color_bits))
    {}

    BitModel& occ(int depth, int child) { return occupancy[size_t(depth * 8 + child)]; }

    std::vector<BitModel> occupancy;
    std::vector<BitModel> count;
    std::vector<std::vector<BitModel>> color;
  };

  struct Range {
    size_t begin, end;
  };

}  // namespace

std::vector<uint8_t>
encode_octree(const QuantizedSeeds& q, OctreeStats* stats)
{
  check_bits(q.geo_bits, q.color_bits);
  if (q.seeds.empty())
    throw Error(Errc::kInvalidArgument, "encode_octree needs at least one seed");
  const int bits = q.geo_bits;
  const uint32_t gmax = (1u << bits) - 1, cmax = (1u << q.color_bits) - 1;
  for (const auto& s : q.seeds)
    for (int d = 0; d < 3; ++d)
      if (s.pos[size_t(d)] > gmax || (q.has_colors && s.col[size_t(d)] > cmax))
        throw Error(Errc::kInvalidArgument, "quantized seed index out of range");

  std::vector<QSeed> seeds = q.seeds;
  if (!q.has_colors)
    for (auto& s : seeds)
      s.col = {};
  canonical_sort(seeds, bits);
  std::vector<uint64_t> keys(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i)
    keys[i] = morton(seeds[i].pos, bits);

  Models models(bits, q.color_bits);
  ArithEncoder enc;
  enc.encode_raw(uint32_t(seeds.size()), 32);
  if (stats)
    *stats = OctreeStats{};

  std::vector<Range> nodes{{0, seeds.size()}};
  for (int depth = 0; depth < bits; ++depth) {
    const int shift = 3 * (bits - 1 - depth);
    std::vector<Range> next;
    std::vector<uint8_t> level_occ;
    for (const Range& r : nodes) {
      uint8_t occ = 0;
      size_t b = r.begin;
      while (b < r.end) {
        int child = int(keys[b] >> shift & 7);
        size_t e = b;
        while (e < r.end && int(keys[e] >> shift & 7) == child)
          ++e;
        occ |= uint8_t(1u << child);
        next.push_back({b, e});
        b = e;
      }
      for (int c = 0; c < 8; ++c)
        enc.encode(occ >> c & 1, models.occ(depth, c));
      level_occ.push_back(occ);
    }
    if (stats)
      stats->occupancy.push_back(std::move(level_occ));
    nodes = std::move(next);
  }

  for (const Range& r : nodes) {
    size_t count = r.end - r.begin;
    for (size_t i = 0; i + 1 < count; ++i)
      enc.encode(1, models.count[std::min(i, size_t(kCountContexts - 1))]);
    enc.encode(0, models.count[std::min(count - 1, size_t(kCountContexts - 1))]);
  }
  if (stats) {
    stats->leaves = nodes.size();
    stats->geometry_bits = enc.bits_written();
  }

  if (q.has_colors) {
    std::array<uint32_t, 3> prev{};
    for (const auto& s : seeds) {
      for (size_t ch = 0; ch < 3; ++ch) {
        uint32_t delta = (s.col[ch] - prev[ch]) & cmax;
        size_t node = 1;
        for (int b = q.color_bits - 1; b >= 0; --b) {
          int bit = int(delta >> b & 1);
          enc.encode(bit, models.color[ch][node]);
          node = 2 * node + size_t(bit);
        }
      }
      prev = s.col;
    }
  }
  return enc.finish();
}

QuantizedSeeds
decode_octree(
  std::span<const uint8_t> payload, int geo_bits, int color_bits, bool colors,
  int64_t base)
{
  check_bits(geo_bits, color_bits);
  const int bits = geo_bits;
  const uint32_t cmax = (1u << color_bits) - 1;
  ArithDecoder dec(payload, base);
  Models models(bits, color_bits);

  const uint32_t total = dec.decode_raw(32);
  if (total == 0 || total > (1u << 26))
    throw Error(
      Errc::kDecodeError, "implausible seed count at byte " + std::to_string(dec.offset()),
      dec.offset());

  std::vector<uint64_t> nodes{0};
  for (int depth = 0; depth < bits; ++depth) {
    std::vector<uint64_t> next;
    for (uint64_t prefix : nodes) {
      int occ = 0;
      for (int c = 0; c < 8; ++c)
        occ |= dec.decode(models.occ(depth, c)) << c;
      if (occ == 0)
        throw Error(
          Errc::kDecodeError,
          "empty occupancy at depth " + std::to_string(depth) + ", byte " +
            std::to_string(dec.offset()),
          dec.offset());
      for (int c = 0; c < 8; ++c)
        if (occ >> c & 1)
          next.push_back(prefix << 3 | uint64_t(c));
      if (next.size() > total)
        throw Error(
          Errc::kDecodeError,
          "more octree nodes than seeds at byte " + std::to_string(dec.offset()),
          dec.offset());
    }
    nodes = std::move(next);
  }

  QuantizedSeeds q;
  q.geo_bits = geo_bits;
  q.color_bits = color_bits;
  q.has_colors = colors;
  q.seeds.reserve(total);
  for (uint64_t key : nodes) {
    size_t count = 1;
    while (dec.decode(models.count[std::min(count - 1, size_t(kCountContexts - 1))])) {
      ++count;
      if (q.seeds.size() + count > total)
        throw Error(
          Errc::kDecodeError,
          "leaf counts exceed seed count at byte " + std::to_string(dec.offset()),
          dec.offset());
    }
    QSeed s;
    s.pos = unmorton(key, bits);
    q.seeds.insert(q.seeds.end(), count, s);
  }
  if (q.seeds.size() != total)
    throw Error(
      Errc::kDecodeError,
      "leaf counts do not add up to the seed count at byte " + std::to_string(dec.offset()),
      dec.offset());

  if (colors) {
    std::array<uint32_t, 3> prev{};
    for (auto& s : q.seeds) {
      for (size_t ch = 0; ch < 3; ++ch) {
        size_t node = 1;
        for (int b = 0; b < color_bits; ++b)
          node = 2 * node + size_t(dec.decode(models.color[ch][node]));
        uint32_t delta = uint32_t(node - (size_t(1) << color_bits));
        s.col[ch] = (prev[ch] + delta) & cmax;
      }
      prev = s.col;
    }
  }
  return q;
}

//============================================================================

namespace {

  constexpr char kMagic[4] = {'S', 'P', 'C', '1'};

  void
  put_f32(std::vector<uint8_t>& out, double v)
  {
    uint32_t u = std::bit_cast<uint32_t>(float(v));
    for (int i = 0; i < 4; ++i)
      out.push_back(uint8_t(u >> (8 * i)));
  }

  uint32_t
  get_u32(std::span<const uint8_t> b, size_t at)
  {
    return uint32_t(b[at]) | uint32_t(b[at + 1]) << 8 | uint32_t(b[at + 2]) << 16 |
      uint32_t(b[at + 3]) << 24;
  }

  void
  check_header(const StreamHeader& h)
  {
    if (h.level < 1 || h.level > kMaxLevel)
      throw Error(Errc::kInvalidLevel, "level must be in [1, 10]");
    check_bits(h.geo_bits, h.color_bits);
    if (h.cell_ns.size() != size_t(h.level) * size_t(h.level) * size_t(h.level))
      throw Error(Errc::kInvalidArgument, "cell_ns must have l^3 entries");
  }

}  // namespace

NormalizationScale
stored_scale(const NormalizationScale& s)
{
  NormalizationScale o;
  for (int d = 0; d < 3; ++d)
    o.center[size_t(d)] = double(float(s.center[size_t(d)]));
  o.radius = double(float(s.radius));
  return o;
}

std::vector<uint8_t>
encode_stream(const StreamHeader& h, const QuantizedSeeds& q)
{
  check_header(h);
  if (q.geo_bits != h.geo_bits || q.color_bits != h.color_bits ||
      q.has_colors != h.has_colors)
    throw Error(Errc::kInvalidArgument, "quantization does not match the header");

  std::vector<uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kStreamVersion);
  out.push_back(uint8_t(h.level));
  out.push_back(h.has_colors ? 1 : 0);
  out.push_back(uint8_t(h.geo_bits));
  out.push_back(uint8_t(h.color_bits));
  out.push_back(0);
  for (double c : h.scale.center)
    put_f32(out, c);
  put_f32(out, h.scale.radius);
  out.insert(out.end(), h.cell_ns.begin(), h.cell_ns.end());

  std::vector<uint8_t> payload;
  if (!q.seeds.empty())
    payload = encode_octree(q);
  uint32_t len = uint32_t(payload.size());
  for (int i = 0; i < 4; ++i)
    out.push_back(uint8_t(len >> (8 * i)));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<uint8_t>
encode_stream(const StreamHeader& h, const Mat& seeds6)
{
  return encode_stream(h, quantize_seeds(seeds6, h.geo_bits, h.color_bits, h.has_colors));
}

DecodedStream
decode_stream(std::span<const uint8_t> b)
{
  if (b.size() < 4 || std::memcmp(b.data(), kMagic, 4) != 0)
    throw Error(Errc::kUnsupportedStream, "not an SPC1 stream", 0);
  if (b.size() < kFixedHeaderBytes)
    throw Error(Errc::kDecodeError, "truncated header", int64_t(b.size()));
  if (b[4] != kStreamVersion)
    throw Error(
      Errc::kUnsupportedStream, "unsupported stream version " + std::to_string(b[4]), 4);

  DecodedStream d;
  StreamHeader& h = d.header;
  h.level = b[5];
  if (h.level < 1 || h.level > kMaxLevel)
    throw Error(Errc::kDecodeError, "invalid level at byte 5", 5);
  if (b[6] & ~1u)
    throw Error(Errc::kDecodeError, "unknown flags at byte 6", 6);
  h.has_colors = b[6] & 1;
  h.geo_bits = b[7];
  if (h.geo_bits < 1 || h.geo_bits > kMaxGeoBits)
    throw Error(Errc::kDecodeError, "invalid geo_bits at byte 7", 7);
  h.color_bits = b[8];
  if (h.color_bits < 1 || h.color_bits > 8)
    throw Error(Errc::kDecodeError, "invalid color_bits at byte 8", 8);
  if (b[9] != 0)
    throw Error(Errc::kDecodeError, "nonzero reserved byte 9", 9);
  for (size_t i = 0; i < 4; ++i) {
    double v = double(std::bit_cast<float>(get_u32(b, 10 + 4 * i)));
    if (!std::isfinite(v))
      throw Error(Errc::kDecodeError, "non-finite scale", int64_t(10 + 4 * i));
    if (i < 3)
      h.scale.center[i] = v;
    else
      h.scale.radius = v;
  }
  if (!(h.scale.radius > 0))
    throw Error(Errc::kDecodeError, "non-positive radius at byte 22", 22);

  const size_t cells = size_t(h.level) * size_t(h.level) * size_t(h.level);
  const size_t header = kFixedHeaderBytes + cells;
  if (b.size() < header)
    throw Error(Errc::kDecodeError, "truncated cell table", int64_t(b.size()));
  h.cell_ns.assign(b.begin() + 26, b.begin() + std::ptrdiff_t(26 + cells));
  const uint32_t len = get_u32(b, 26 + cells);
  if (b.size() - header != len)
    throw Error(
      Errc::kDecodeError,
      "payload length " + std::to_string(len) + " does not match the " +
        std::to_string(b.size() - header) + " bytes present",
      int64_t(26 + cells));

  if (len == 0) {
    d.qseeds.geo_bits = h.geo_bits;
    d.qseeds.color_bits = h.color_bits;
    d.qseeds.has_colors = h.has_colors;
  } else {
    d.qseeds = decode_octree(
      b.subspan(header), h.geo_bits, h.color_bits, h.has_colors, int64_t(header));
  }
  d.seeds = dequantize_seeds(d.qseeds);
  return d;
}

uint64_t
measure_bits(std::span<const uint8_t> bytes)
{
  return 8 * uint64_t(bytes.size());
}

std::vector<uint8_t>
read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Errc::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void
write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes)
{
  std::ofstream out(path, std::ios::binary);
  if (!out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size())))
    throw Error(Errc::kIoError, "cannot write " + path.string());
}

}  // namespace spc
