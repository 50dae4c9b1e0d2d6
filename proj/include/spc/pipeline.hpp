#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "spc/codec.hpp"
#include "spc/toydenoiser.hpp"
#include "spc/tuning.hpp"

namespace spc {

enum class DenoiserKind
{
  kSeedSnap,     // analytic surrogate, needs nothing
  kOracle,       // snaps to a known target cloud
  kCheckpoint,   // trained toy denoiser
};

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::kSeedSnap;
  std::filesystem::path checkpoint;

  // "seed-snap", "oracle", or a checkpoint path.
  static DenoiserSpec parse(const std::string& text);
};

struct DiffusionSetup {
  std::unique_ptr<ConditionalDenoiser> denoiser;
  NoiseSchedule schedule;
};

// Builds the denoiser and its schedule.  A checkpoint carries its own step
// count and schedule kind, which override `T` and `schedule`.  The oracle
// needs the normalized target rows.
DiffusionSetup make_diffusion(
  const DenoiserSpec& spec, int T, const ScheduleConfig& schedule,
  const Mat* oracle_target6 = nullptr);

//============================================================================

struct CompressConfig {
  std::optional<int> level;
  TuneConfig tune;
  int T = kDefaultSteps;
  ScheduleConfig schedule;
  int geo_bits = kDefaultGeoBits;
  int color_bits = kDefaultColorBits;
  DenoiserSpec denoiser;
};

struct CompressResult {
  std::vector<uint8_t> stream;
  StreamHeader header;
  size_t input_points = 0;
  size_t num_patches = 0;
  size_t num_seeds = 0;
  std::vector<TuneLogEntry> log;
  double tune_ms = 0;
  double total_ms = 0;
};

// max(1, round(num_i / 3072)) clamped to 255; 0 for empty cells.
std::vector<uint8_t> cell_rounds(const PatchGrid& grid);

CompressResult compress(const PointCloud& cloud, bool colors, const CompressConfig& config);

struct DecompressConfig {
  int T = kDefaultSteps;
  ScheduleConfig schedule;
  DenoiserSpec denoiser;
  const PointCloud* oracle_target = nullptr;   // original scale
  uint64_t seed = 0;
  int jobs = 1;
};

struct DecompressResult {
  PointCloud cloud;
  bool has_colors = true;
  double total_ms = 0;
};

// Seeds of each cell with a nonzero round count; seeds falling in a cell
// without rounds go to the nearest such cell, and a cell left without seeds
// borrows the seeds nearest to its center.
std::vector<Mat> regroup_seeds(
  const Mat& seeds6, int level, std::span<const uint8_t> cell_ns);

DecompressResult decompress(std::span<const uint8_t> stream, const DecompressConfig& config);

}  // namespace spc
