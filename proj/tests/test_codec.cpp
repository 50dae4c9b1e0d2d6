#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>

#include "spc/arith.hpp"
#include "spc/codec.hpp"
#include "spc/error.hpp"
#include "support.hpp"

using namespace spc;

namespace {

template <class F>
const Error*
catch_error(F&& f, Error& slot)
{
  try {
    f();
  } catch (const Error& e) {
    slot = e;
    return &slot;
  }
  return nullptr;
}

QuantizedSeeds
random_qseeds(Rng& rng, size_t n, int gb, int cb, bool colors)
{
  QuantizedSeeds q;
  q.geo_bits = gb;
  q.color_bits = cb;
  q.has_colors = colors;
  for (size_t i = 0; i < n; ++i) {
    QSeed s;
    for (int k = 0; k < 3; ++k) {
      s.pos[size_t(k)] = uint32_t(uniform_int(rng, 0, (1 << gb) - 1));
      s.col[size_t(k)] = colors ? uint32_t(uniform_int(rng, 0, (1 << cb) - 1)) : 0;
    }
    q.seeds.push_back(s);
  }
  return q;
}

std::vector<QSeed>
sorted(std::vector<QSeed> v)
{
  std::sort(v.begin(), v.end());
  return v;
}

StreamHeader
header_for(int level, Rng& rng, bool colors = true)
{
  StreamHeader h;
  h.level = level;
  h.has_colors = colors;
  h.scale = stored_scale({{0.25, -3.5, 100.125}, 42.75});
  h.cell_ns.resize(size_t(level) * level * level);
  for (auto& c : h.cell_ns)
    c = uint8_t(uniform_int(rng, 0, 255));
  return h;
}

float
f32_at(const std::vector<uint8_t>& b, size_t at)
{
  float f;
  std::memcpy(&f, b.data() + at, 4);
  return f;
}

uint32_t
u32_at(const std::vector<uint8_t>& b, size_t at)
{
  return uint32_t(b[at]) | uint32_t(b[at + 1]) << 8 | uint32_t(b[at + 2]) << 16 |
    uint32_t(b[at + 3]) << 24;
}

}  // namespace

//============================================================================

TEST_CASE("quantization examples")
{
  CHECK(quantize_coord(-0.3, 1) == 0);
  CHECK(dequantize_coord(0, 1) == -0.5);
  CHECK(quantize_coord(1.0, 4) == 15);
  CHECK(quantize_coord(-1.0, 4) == 0);
  CHECK(quantize_coord(-1.0 - 1e-10, 4) == 0);
  CHECK(dequantize_coord(15, 4) == doctest::Approx((15.5 / 16) * 2 - 1));
  CHECK(quantize_color(1.0, 8) == 255);
  CHECK(quantize_color(0.0, 8) == 0);
  CHECK(dequantize_color(0, 1) == 0.25);

  Mat bad(1, 6, 0.5);
  bad(0, 1) = 1.01;
  CHECK_THROWS_AS(quantize_seeds(bad, 12, 8, true), Error);
}

TEST_CASE("quantization error stays within the half step")
{
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-1, 1), c(0, 1);
  Mat s(2000, 6);
  for (size_t i = 0; i < s.rows; ++i)
    for (size_t k = 0; k < 6; ++k)
      s(i, k) = k < 3 ? u(rng) : c(rng);
  auto q = quantize_seeds(s, 12, 8, true);
  Mat back = dequantize_seeds(q);
  double geo = 0, col = 0;
  for (size_t i = 0; i < s.rows; ++i)
    for (size_t k = 0; k < 6; ++k)
      (k < 3 ? geo : col) = std::max(k < 3 ? geo : col, std::abs(back(i, k) - s(i, k)));
  CHECK(geo <= std::ldexp(1.0, -12));
  CHECK(col <= 0.5 / 256 + 1e-15);

  auto plain = quantize_seeds(s, 12, 8, false);
  Mat white = dequantize_seeds(plain);
  for (size_t i = 0; i < white.rows; ++i)
    for (size_t k = 3; k < 6; ++k)
      CHECK(white(i, k) == 1.0);
}

TEST_CASE("canonical order is Morton order")
{
  Rng rng = make_rng(2);
  auto q = random_qseeds(rng, 300, 5, 8, true);
  auto v = q.seeds;
  canonical_sort(v, 5);
  auto morton = [](const QSeed& s) {
    uint64_t key = 0;
    for (int b = 4; b >= 0; --b)
      for (int k = 0; k < 3; ++k)
        key = key << 1 | ((s.pos[size_t(k)] >> b) & 1);
    return key;
  };
  for (size_t i = 1; i < v.size(); ++i) {
    uint64_t a = morton(v[i - 1]), b = morton(v[i]);
    CHECK(a <= b);
    if (a == b)
      CHECK(v[i - 1].col <= v[i].col);
  }
}

TEST_CASE("single seed walks one child per level")
{
  QuantizedSeeds q;
  q.geo_bits = 4;
  q.seeds.push_back({{5, 9, 14}, {1, 2, 3}});
  OctreeStats st;
  auto bytes = encode_octree(q, &st);
  REQUIRE(st.occupancy.size() == 4);
  for (const auto& level : st.occupancy) {
    REQUIRE(level.size() == 1);
    CHECK(std::popcount(unsigned(level[0])) == 1);
  }
  CHECK(st.leaves == 1);
  CHECK(decode_octree(bytes, 4, 8, true) == q);
}

TEST_CASE("duplicates share one leaf")
{
  QuantizedSeeds q;
  q.geo_bits = 6;
  q.seeds = {{{3, 3, 3}, {9, 0, 0}}, {{3, 3, 3}, {1, 0, 0}}, {{40, 2, 2}, {0, 0, 0}}};
  OctreeStats st;
  auto bytes = encode_octree(q, &st);
  CHECK(st.leaves == 2);
  auto back = decode_octree(bytes, 6, 8, true);
  CHECK(back.seeds.size() == 3);
  CHECK(sorted(back.seeds) == sorted(q.seeds));
}

TEST_CASE("octree round trips random seed sets")
{
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    int gb = trial == 0 ? 12 : uniform_int(rng, 1, kMaxGeoBits);
    int cb = uniform_int(rng, 1, 8);
    bool colors = trial % 3 != 0;
    size_t n = trial == 0 ? 1024 : size_t(uniform_int(rng, 1, 800));
    auto q = random_qseeds(rng, n, gb, cb, colors);
    auto bytes = encode_octree(q);
    auto back = decode_octree(bytes, gb, cb, colors);
    auto expect = q.seeds;
    canonical_sort(expect, gb);
    CHECK(back.seeds == expect);
    CHECK(encode_octree(back) == bytes);
  }
}

//============================================================================

TEST_CASE("empty stream is header only")
{
  Rng rng = make_rng(4);
  StreamHeader h = header_for(1, rng);
  QuantizedSeeds none;
  auto bytes = encode_stream(h, none);
  REQUIRE(bytes.size() == 31);
  CHECK(measure_bits(bytes) == 248);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPC1");
  CHECK(bytes[4] == kStreamVersion);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 12);
  CHECK(bytes[8] == 8);
  CHECK(bytes[9] == 0);
  CHECK(f32_at(bytes, 10) == 0.25f);
  CHECK(f32_at(bytes, 14) == -3.5f);
  CHECK(f32_at(bytes, 18) == 100.125f);
  CHECK(f32_at(bytes, 22) == 42.75f);
  CHECK(bytes[26] == h.cell_ns[0]);
  CHECK(u32_at(bytes, 27) == 0);

  auto d = decode_stream(bytes);
  CHECK(d.header == h);
  CHECK(d.qseeds.seeds.empty());
  CHECK(d.seeds.rows == 0);
}

TEST_CASE("stream layout and byte-exact round trip")
{
  Rng rng = make_rng(5);
  for (int level : {1, 2, 5, 10}) {
    for (bool colors : {true, false}) {
      StreamHeader h = header_for(level, rng, colors);
      auto q = random_qseeds(rng, 200, 12, 8, colors);
      auto bytes = encode_stream(h, q);
      size_t hdr = kFixedHeaderBytes + size_t(level * level * level);
      REQUIRE(bytes.size() > hdr);
      CHECK(u32_at(bytes, hdr - 4) == bytes.size() - hdr);
      CHECK(bytes[6] == (colors ? 1 : 0));

      auto d = decode_stream(bytes);
      CHECK(d.header == h);
      CHECK(sorted(d.qseeds.seeds) == sorted(q.seeds));
      CHECK(d.seeds == dequantize_seeds(d.qseeds));
      CHECK(encode_stream(d.header, d.qseeds) == bytes);
      if (!colors)
        for (size_t i = 0; i < d.seeds.rows; ++i)
          CHECK(d.seeds(i, 4) == 1.0);
    }
  }
}

TEST_CASE("real seeds are quantized on the way in")
{
  Rng rng = make_rng(6);
  StreamHeader h = header_for(2, rng);
  Mat seeds(50, 6);
  std::uniform_real_distribution<double> u(-1, 1), c(0, 1);
  for (size_t i = 0; i < 50; ++i)
    for (size_t k = 0; k < 6; ++k)
      seeds(i, k) = k < 3 ? u(rng) : c(rng);
  auto d = decode_stream(encode_stream(h, seeds));
  CHECK(sorted(d.qseeds.seeds) == sorted(quantize_seeds(seeds, 12, 8, true).seeds));
}

TEST_CASE("malformed streams are rejected with a location")
{
  Rng rng = make_rng(7);
  StreamHeader h = header_for(2, rng);
  auto good = encode_stream(h, random_qseeds(rng, 64, 12, 8, true));
  Error err(Errc::kInvalidArgument, "");

  auto expect = [&](std::vector<uint8_t> b, Errc code) {
    const Error* e = catch_error([&] { decode_stream(b); }, err);
    REQUIRE(e != nullptr);
    CHECK(e->code() == code);
    if (code == Errc::kDecodeError)
      CHECK(e->location() >= 0);
  };

  auto b = good;
  b[0] = 'X';
  expect(b, Errc::kUnsupportedStream);
  b = good;
  b[4] = 2;
  expect(b, Errc::kUnsupportedStream);
  b = good;
  b[5] = 0;
  expect(b, Errc::kDecodeError);
  b = good;
  b[5] = 11;
  expect(b, Errc::kDecodeError);
  b = good;
  b[9] = 1;
  expect(b, Errc::kDecodeError);
  b = good;
  b[7] = 0;
  expect(b, Errc::kDecodeError);
  b = good;
  b.pop_back();
  expect(b, Errc::kDecodeError);
  b = good;
  b.push_back(0);
  expect(b, Errc::kDecodeError);
  expect({good.begin(), good.begin() + 20}, Errc::kDecodeError);
  expect({}, Errc::kUnsupportedStream);
}

TEST_CASE("random payload damage never escapes as anything but a decode error")
{
  Rng rng = make_rng(8);
  StreamHeader h = header_for(1, rng);
  auto good = encode_stream(h, random_qseeds(rng, 300, 12, 8, true));
  size_t hdr = kFixedHeaderBytes + 1;
  Error err(Errc::kInvalidArgument, "");
  int detected = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto b = good;
    size_t at = hdr + size_t(uniform_int(rng, 0, int(b.size() - hdr) - 1));
    b[at] ^= uint8_t(1 << uniform_int(rng, 0, 7));
    const Error* e = catch_error([&] { decode_stream(b); }, err);
    if (e) {
      ++detected;
      CHECK(e->code() == Errc::kDecodeError);
      CHECK(e->location() >= int64_t(hdr));
    }
  }
  MESSAGE("detected " << detected << " of 200 bit flips");
}

TEST_CASE("measured size equals the file size")
{
  Rng rng = make_rng(9);
  auto bytes = encode_stream(header_for(3, rng), random_qseeds(rng, 100, 12, 8, true));
  auto path = std::filesystem::temp_directory_path() / "spc_codec_test.spcz";
  write_file(path, bytes);
  CHECK(measure_bits(bytes) == 8 * std::filesystem::file_size(path));
  CHECK(read_file(path) == bytes);
  std::filesystem::remove(path);
  CHECK(measure_bits({}) == 0);
  CHECK_THROWS_AS(read_file(path), Error);
}

//============================================================================

TEST_CASE("arithmetic coder round trips mixed contexts")
{
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = size_t(uniform_int(rng, 0, 5000));
    std::vector<int> ctx(n), bits(n);
    std::vector<uint32_t> raw;
    std::vector<double> p{0.5, 0.01, 0.99, 0.2};
    for (size_t i = 0; i < n; ++i) {
      ctx[i] = uniform_int(rng, 0, 3);
      bits[i] = std::bernoulli_distribution(p[size_t(ctx[i])])(rng);
    }
    std::vector<BitModel> enc_models(4), dec_models(4);
    ArithEncoder enc;
    for (size_t i = 0; i < n; ++i) {
      enc.encode(bits[i], enc_models[size_t(ctx[i])]);
      if (i % 97 == 0) {
        raw.push_back(uint32_t(uniform_int(rng, 0, (1 << 20) - 1)));
        enc.encode_raw(raw.back(), 20);
      }
    }
    auto bytes = enc.finish();
    ArithDecoder dec(bytes);
    size_t r = 0;
    for (size_t i = 0; i < n; ++i) {
      REQUIRE(dec.decode(dec_models[size_t(ctx[i])]) == bits[i]);
      if (i % 97 == 0)
        REQUIRE(dec.decode_raw(20) == raw[r++]);
    }
  }
}

TEST_CASE("arithmetic coder approaches the entropy")
{
  Rng rng = make_rng(11);
  std::bernoulli_distribution skew(0.99);
  std::vector<int> bits(10000);
  for (auto& b : bits)
    b = skew(rng);
  BitModel m;
  ArithEncoder enc;
  for (int b : bits)
    enc.encode(b, m);
  auto bytes = enc.finish();
  double bound = shannon_bits(bits);
  INFO("bytes " << bytes.size() << " bound " << bound);
  CHECK(double(8 * bytes.size()) <= 1.25 * bound + 64);

  std::vector<int> fair(1000, 0);
  for (size_t i = 0; i < fair.size(); i += 2)
    fair[i] = 1;
  CHECK(shannon_bits(fair) == doctest::Approx(1000.0));
  CHECK(shannon_bits(std::vector<int>(50, 1)) == 0.0);
}

TEST_CASE("bit model adaptation")
{
  BitModel m;
  CHECK(m.p1() == BitModel::kOne / 2);
  for (int i = 0; i < 10000; ++i)
    m.update(1);
  CHECK(m.p1() <= BitModel::kOne - BitModel::kMin);
  CHECK(m.p1() > BitModel::kOne * 0.99);
  for (int i = 0; i < 10000; ++i)
    m.update(0);
  CHECK(m.p1() >= BitModel::kMin);
  CHECK(m.p1() < BitModel::kOne * 0.01);
}

TEST_CASE("reading far past the end is a decode error")
{
  std::vector<uint8_t> none;
  ArithDecoder dec(none, 100);
  BitModel m;
  Error err(Errc::kInvalidArgument, "");
  const Error* e = catch_error([&] {
    for (int i = 0; i < 1000; ++i)
      dec.decode(m);
  }, err);
  REQUIRE(e != nullptr);
  CHECK(e->code() == Errc::kDecodeError);
  CHECK(e->location() >= 100);
}
