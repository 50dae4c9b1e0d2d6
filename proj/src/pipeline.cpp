#include "spc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "spc/error.hpp"
#include "spc/parallel.hpp"
#include "spc/patching.hpp"
#include "spc/spatial.hpp"

namespace spc {

namespace {

  using Clock = std::chrono::steady_clock;

  double
  ms_since(Clock::time_point t0)
  {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  constexpr size_t kBorrowedSeeds = 64;

}  // namespace

DenoiserSpec
DenoiserSpec::parse(const std::string& text)
{
  DenoiserSpec s;
  if (text == "seed-snap") {
    s.kind = DenoiserKind::kSeedSnap;
  } else if (text == "oracle") {
    s.kind = DenoiserKind::kOracle;
  } else {
    s.kind = DenoiserKind::kCheckpoint;
    s.checkpoint = text;
  }
  return s;
}

DiffusionSetup
make_diffusion(
  const DenoiserSpec& spec, int T, const ScheduleConfig& schedule, const Mat* target6)
{
  DiffusionSetup d;
  switch (spec.kind) {
  case DenoiserKind::kSeedSnap:
    d.schedule = make_schedule(T, schedule);
    d.denoiser = std::make_unique<SeedSnapDenoiser>(d.schedule);
    break;
  case DenoiserKind::kOracle:
    if (!target6)
      throw Error(Errc::kInvalidArgument, "the oracle denoiser needs a target cloud");
    d.schedule = make_schedule(T, schedule);
    d.denoiser = std::make_unique<OracleDenoiser>(*target6, d.schedule);
    break;
  case DenoiserKind::kCheckpoint: {
    Checkpoint ckpt = load_checkpoint(spec.checkpoint);
    ScheduleConfig sc = schedule;
    sc.kind = ckpt.schedule;
    d.schedule = make_schedule(ckpt.steps, sc);
    d.denoiser = std::make_unique<ToyDenoiser>(std::move(ckpt.params), d.schedule);
    break;
  }
  }
  return d;
}

//============================================================================

std::vector<uint8_t>
cell_rounds(const PatchGrid& grid)
{
  std::vector<uint8_t> ns(grid.num_cells(), 0);
  for (size_t c = 0; c < ns.size(); ++c)
    if (grid.counts[c] > 0)
      ns[c] = uint8_t(std::min(255, sampling_rounds(size_t(grid.counts[c]))));
  return ns;
}

CompressResult
compress(const PointCloud& cloud, bool colors, const CompressConfig& cfg)
{
  auto t0 = Clock::now();
  if (cloud.empty())
    throw Error(Errc::kInvalidCloud, "cannot compress an empty cloud");

  auto [normalized, scale] = normalize(cloud);
  const int level = cfg.level ? *cfg.level : select_level(cloud.size());
  Patches patches = divide(normalized, level);

  Mat target6 = normalized.rows6();
  DiffusionSetup diff = make_diffusion(cfg.denoiser, cfg.T, cfg.schedule, &target6);

  auto t1 = Clock::now();
  TuneResult tuned = tune(patches, *diff.denoiser, diff.schedule, cfg.tune);
  CompressResult res;
  res.tune_ms = ms_since(t1);

  res.header.level = level;
  res.header.has_colors = colors;
  res.header.geo_bits = cfg.geo_bits;
  res.header.color_bits = cfg.color_bits;
  res.header.scale = stored_scale(scale);
  res.header.cell_ns = cell_rounds(patches.grid);

  Mat seeds = tuned.all_seeds();
  res.stream = encode_stream(res.header, seeds);
  res.input_points = cloud.size();
  res.num_patches = patches.clouds.size();
  res.num_seeds = seeds.rows;
  res.log = std::move(tuned.log);
  res.total_ms = ms_since(t0);
  return res;
}

//============================================================================

std::vector<Mat>
regroup_seeds(const Mat& seeds6, int level, std::span<const uint8_t> cell_ns)
{
  const size_t cells = size_t(level) * size_t(level) * size_t(level);
  if (cell_ns.size() != cells)
    throw Error(Errc::kInvalidArgument, "cell table does not match the level");
  std::vector<int> active;
  for (size_t c = 0; c < cells; ++c)
    if (cell_ns[c] > 0)
      active.push_back(int(c));
  std::vector<std::vector<int>> members(active.size());
  if (active.empty())
    return {};
  if (seeds6.rows == 0)
    throw Error(Errc::kDecodeError, "stream has occupied cells but no seeds");

  std::vector<int> slot_of(cells, -1);
  for (size_t i = 0; i < active.size(); ++i)
    slot_of[size_t(active[i])] = int(i);
  Mat centers(active.size(), 3);
  for (size_t i = 0; i < active.size(); ++i) {
    auto c = cell_center(active[i], level);
    for (size_t d = 0; d < 3; ++d)
      centers(i, d) = c[d];
  }

  Mat pos(seeds6.rows, 3);
  for (size_t i = 0; i < seeds6.rows; ++i)
    for (size_t d = 0; d < 3; ++d)
      pos(i, d) = seeds6(i, d);
  PatchGrid grid = assign_cells(pos, level);
  std::vector<int> orphans;
  for (size_t i = 0; i < seeds6.rows; ++i) {
    int slot = slot_of[size_t(grid.cell_of_point[i])];
    if (slot >= 0)
      members[size_t(slot)].push_back(int(i));
    else
      orphans.push_back(int(i));
  }
  if (!orphans.empty()) {
    auto nearest = nearest_rows(gather_rows(pos, orphans), centers);
    for (size_t i = 0; i < orphans.size(); ++i)
      members[size_t(nearest[i])].push_back(orphans[i]);
  }

  KdIndex index(pos);
  std::vector<Mat> out(active.size());
  for (size_t i = 0; i < active.size(); ++i) {
    if (members[i].empty()) {
      for (const auto& nb : index.knn(centers.row(i), std::min(kBorrowedSeeds, pos.rows)))
        members[i].push_back(nb.row);
    }
    out[i] = gather_rows(seeds6, members[i]);
  }
  return out;
}

DecompressResult
decompress(std::span<const uint8_t> stream, const DecompressConfig& cfg)
{
  auto t0 = Clock::now();
  DecodedStream dec = decode_stream(stream);
  const StreamHeader& h = dec.header;

  Mat target6;
  if (cfg.oracle_target)
    target6 = apply_scale(*cfg.oracle_target, h.scale).rows6();
  DiffusionSetup diff = make_diffusion(
    cfg.denoiser, cfg.T, cfg.schedule, cfg.oracle_target ? &target6 : nullptr);

  std::vector<Mat> groups = regroup_seeds(dec.seeds, h.level, h.cell_ns);
  std::vector<int> active;
  for (size_t c = 0; c < h.cell_ns.size(); ++c)
    if (h.cell_ns[c] > 0)
      active.push_back(int(c));

  std::vector<Mat> parts(active.size());
  parallel_for(active.size(), cfg.jobs, [&](size_t i) {
    Rng rng = make_rng(cfg.seed, uint64_t(active[i]));
    size_t n = size_t(h.cell_ns[size_t(active[i])]) * kPointsPerRound;
    parts[i] = sample_patch(*diff.denoiser, groups[i], n, diff.schedule, rng);
  });

  size_t total = 0;
  for (const auto& p : parts)
    total += p.rows;
  Mat rows(total, 6);
  size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p.data.begin(), p.data.end(), rows.data.begin() + std::ptrdiff_t(r * 6));
    r += p.rows;
  }
  if (!h.has_colors)
    for (size_t i = 0; i < rows.rows; ++i)
      for (size_t d = 3; d < 6; ++d)
        rows(i, d) = 1.0;

  DecompressResult res;
  res.cloud = denormalize(PointCloud::from_rows(rows), h.scale);
  res.has_colors = h.has_colors;
  res.total_ms = ms_since(t0);
  return res;
}

}  // namespace spc
