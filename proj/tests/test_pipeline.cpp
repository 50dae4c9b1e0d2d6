#include <doctest.h>

#include "spc/error.hpp"
#include "spc/metrics.hpp"
#include "spc/pipeline.hpp"
#include "spc/shapes.hpp"
#include "support.hpp"

using namespace spc;

namespace {

PointCloud
test_sphere(size_t n, uint64_t seed)
{
  Rng rng = make_rng(seed);
  ShapeSpec s;
  s.size = 0.9;
  auto c = synth_shape(s, n, rng);
  // move off the origin and rescale so that denormalization matters
  Mat p = c.positions();
  for (size_t i = 0; i < p.rows; ++i)
    for (size_t k = 0; k < 3; ++k)
      p(i, k) = p(i, k) * 40 + double(k) * 10 - 5;
  return {p, c.colors()};
}

CompressConfig
quick_config(int iterations)
{
  CompressConfig c;
  c.level = 2;
  c.tune.iterations = iterations;
  c.tune.lr = kFastLr;
  c.tune.seeds_per_patch = 64;
  c.tune.k = 8;
  c.tune.radius = 0.1;
  c.tune.sample_points = 256;
  return c;
}

}  // namespace

TEST_CASE("round counts per cell")
{
  PatchGrid g;
  g.level = 2;
  g.counts = {0, 1000, 4000, 6144, 30720, 1000000, 4607, 4608};
  CHECK(cell_rounds(g) == std::vector<uint8_t>{0, 1, 1, 2, 10, 255, 1, 2});
}

TEST_CASE("denoiser specifications")
{
  CHECK(DenoiserSpec::parse("seed-snap").kind == DenoiserKind::kSeedSnap);
  CHECK(DenoiserSpec::parse("oracle").kind == DenoiserKind::kOracle);
  auto ck = DenoiserSpec::parse("model.sptd");
  CHECK(ck.kind == DenoiserKind::kCheckpoint);
  CHECK(ck.checkpoint == "model.sptd");
  CHECK_THROWS_AS(make_diffusion(DenoiserSpec::parse("oracle"), 8, {}), Error);
  auto d = make_diffusion({}, 5, {});
  CHECK(d.schedule.T == 5);
  CHECK(d.denoiser->name() == "seed-snap");
}

TEST_CASE("regrouping seeds by cell")
{
  // level 2: cell index = ix + 2 iy + 4 iz
  Mat seeds(5, 6, 0.5);
  auto put = [&](size_t i, double x, double y, double z) {
    seeds(i, 0) = x;
    seeds(i, 1) = y;
    seeds(i, 2) = z;
  };
  put(0, -0.5, -0.5, -0.5);   // cell 0
  put(1, -0.4, -0.5, -0.5);   // cell 0
  put(2, 0.5, -0.5, -0.5);    // cell 1, inactive -> nearest active centre
  put(3, 0.5, 0.5, 0.5);      // cell 7
  put(4, 0.1, -0.9, -0.9);    // cell 1, closer to cell 0's centre than cell 7's
  std::vector<uint8_t> ns{1, 0, 0, 0, 0, 0, 2, 1};
  auto groups = regroup_seeds(seeds, 2, ns);
  // one group per cell with rounds, in cell order: 0, 6, 7
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].rows == 4);
  CHECK(groups[2].rows == 1);
  CHECK(groups[2](0, 0) == 0.5);
  // cell 6 has rounds but no seeds: it borrows the nearest ones
  CHECK(groups[1].rows == 5);

  CHECK_THROWS_AS(regroup_seeds(seeds, 2, std::vector<uint8_t>(7, 1)), Error);
}

TEST_CASE("compression is deterministic and decodable")
{
  auto cloud = test_sphere(5000, 1);
  auto cfg = quick_config(20);
  auto a = compress(cloud, true, cfg);
  auto b = compress(cloud, true, cfg);
  CHECK(a.stream == b.stream);
  CHECK(a.input_points == 5000);
  CHECK(a.header.level == 2);
  CHECK(a.log.size() == 20);

  auto d = decode_stream(a.stream);
  CHECK(d.header == a.header);
  CHECK(d.qseeds.seeds.size() == a.num_seeds);
  size_t active = 0;
  for (auto n : d.header.cell_ns)
    active += n > 0;
  CHECK(active == a.num_patches);

  cfg.tune.seed = 7;
  CHECK(compress(cloud, true, cfg).stream != a.stream);
}

TEST_CASE("zero iterations encodes the initial seeds")
{
  auto cloud = test_sphere(3000, 2);
  auto cfg = quick_config(0);
  auto r = compress(cloud, true, cfg);
  CHECK(r.log.empty());
  auto d = decode_stream(r.stream);

  auto [norm, scale] = normalize(cloud);
  (void)scale;
  auto patches = divide(norm, 2);
  auto init = init_patches(patches, cfg.tune);
  Mat picked(0, 6);
  for (size_t i = 0; i < init.size(); ++i)
    picked = vconcat(picked, gather_rows(patches.clouds[i].rows6(), init[i].selection.rows));
  REQUIRE(picked.rows == d.seeds.rows);
  // every decoded seed sits within quantization plus the 1e-4 blend of a picked row
  std::vector<double> d2;
  nearest_rows(d.seeds, picked, &d2);
  for (double v : d2)
    CHECK(std::sqrt(v) <= 0.01);
}

TEST_CASE("decompression emits whole rounds at the original scale")
{
  auto cloud = test_sphere(7000, 3);
  auto cfg = quick_config(10);
  auto r = compress(cloud, true, cfg);
  size_t rounds = 0;
  for (auto n : r.header.cell_ns)
    rounds += n;

  DecompressConfig dc;
  dc.seed = 11;
  auto out = decompress(r.stream, dc);
  CHECK(out.cloud.size() == kPointsPerRound * rounds);
  CHECK(out.has_colors);
  auto again = decompress(r.stream, dc);
  CHECK(again.cloud == out.cloud);
  dc.jobs = 3;
  CHECK(decompress(r.stream, dc).cloud == out.cloud);
  dc.seed = 12;
  CHECK_FALSE(decompress(r.stream, dc).cloud == out.cloud);

  double cd = chamfer(cloud, out.cloud);
  INFO("chamfer in original units " << cd);
  CHECK(cd < 0.05 * 40);
}

TEST_CASE("oracle pipeline reconstructs the sphere")
{
  auto cloud = test_sphere(6144, 4);
  auto cfg = quick_config(10);
  cfg.level = 1;
  cfg.tune.seeds_per_patch = kDefaultSeedsPerPatch;
  cfg.denoiser = DenoiserSpec::parse("oracle");
  auto r = compress(cloud, true, cfg);
  DecompressConfig dc;
  dc.denoiser = cfg.denoiser;
  dc.oracle_target = &cloud;
  auto out = decompress(r.stream, dc);
  CHECK(out.cloud.size() == 6144);
  auto [norm, scale] = normalize(cloud);
  double cd = chamfer(norm, apply_scale(out.cloud, scale));
  INFO("normalized chamfer " << cd);
  CHECK(cd <= 0.05);
}

TEST_CASE("geometry-only input decodes white")
{
  auto cloud = test_sphere(2000, 5);
  auto r = compress(cloud, false, quick_config(0));
  CHECK_FALSE(r.header.has_colors);
  auto out = decompress(r.stream, {});
  CHECK_FALSE(out.has_colors);
  for (size_t i = 0; i < out.cloud.size(); ++i)
    CHECK(out.cloud.colors()(i, 1) == 1.0);
}

TEST_CASE("corrupt streams surface decode errors")
{
  auto r = compress(test_sphere(2000, 6), true, quick_config(0));
  auto bad = r.stream;
  bad.resize(bad.size() - 2);
  try {
    decompress(bad, {});
    FAIL("expected a decode error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDecodeError);
  }
}
