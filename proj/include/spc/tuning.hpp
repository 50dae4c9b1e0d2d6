#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "spc/diffusion.hpp"
#include "spc/optim.hpp"
#include "spc/patching.hpp"

namespace spc {

constexpr size_t kDefaultSeedsPerPatch = 1024;
constexpr size_t kDefaultBallK = 32;
constexpr double kDefaultBallRadius = 0.004;
constexpr double kInitOffWeight = 1e-4;

//============================================================================
// Initial seeds: rows near the faces of the patch bounding box first
// (boundary shell of width 0.02 * cell_edge, at most m / 4 of them, thinned
// by farthest point sampling), then farthest point sampling for the rest.

struct SeedSelection {
  std::vector<int> rows;
  std::vector<char> boundary;   // per selected row
};

SeedSelection bdsam(const PointCloud& patch, size_t m, double cell_edge);

//----------------------------------------------------------------------------

struct SeedWeights {
  size_t k = 0;
  std::vector<int> neighbors;   // S * k rows of the source
  Mat weights;                  // S x k
  std::vector<char> frozen;     // S

  size_t num_seeds() const { return weights.rows; }
};

// One-hot rows (1 at the seed's own row, 1e-4 elsewhere) over the ball
// neighbourhood of each seed in `source`.
SeedWeights init_weights(
  const PointCloud& source, const SeedSelection& seeds, size_t k = kDefaultBallK,
  double radius = kDefaultBallRadius);

// seed_s = sum_j |w_sj| / sum_j |w_sj| * source[n_sj], over 6-D rows.
Mat aggregate(const SeedWeights& w, const Mat& source6);
ad::Var aggregate(ad::Var weights, std::span<const int> neighbors, ad::Var source6);

//============================================================================
// Losses.  Chamfer distance uses unsquared Euclidean distances:
//   cd(a, b) = 0.5 * (mean_a min_b |a - b| + mean_b min_a |a - b|)

double loss_cd(const Mat& a, const Mat& b);
ad::Var loss_cd(ad::Var a, ad::Var b);

enum class LossKind
{
  kCdm,     // cd(x_{t-1}, posterior mean)
  kDm,      // mean squared noise error
  kInver,   // cd(x0, predicted x0)
};

LossKind parse_loss(std::string_view name);
std::string_view to_string(LossKind k);

ad::Var diffusion_loss(
  LossKind kind, ad::Tape& tape, const Mat& x0, ad::Var seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& schedule);

double loss_dm(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& schedule);
double loss_cdm(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& schedule);
double loss_inver(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& schedule);

//============================================================================
// Prompt tuning of the seed weights of every patch.

constexpr double kPaperLr = 5e-5;
constexpr double kFastLr = 1e-3;

struct TuneConfig {
  int iterations = 1000;
  double lr = kPaperLr;
  LossKind loss = LossKind::kCdm;
  uint64_t seed = 0;
  size_t seeds_per_patch = kDefaultSeedsPerPatch;
  size_t k = kDefaultBallK;
  double radius = kDefaultBallRadius;
  size_t sample_points = kPointsPerRound;
  // > 1: disjoint patch groups tuned concurrently, each with its own
  // optimizer and a share of the iterations proportional to its size.
  int jobs = 1;
};

struct TuneLogEntry {
  int iteration;
  int patch;
  int t;
  double loss;
};

struct PatchState {
  SeedSelection selection;
  SeedWeights weights;
};

struct TuneResult {
  std::vector<PatchState> patches;   // canonical patch order
  std::vector<Mat> seeds;            // aggregated, per patch
  std::vector<TuneLogEntry> log;

  Mat all_seeds() const;
};

// Seed selection and initial weights for every patch.
std::vector<PatchState> init_patches(const Patches& patches, const TuneConfig& config);

TuneResult tune(
  const Patches& patches, const ConditionalDenoiser& denoiser,
  const NoiseSchedule& schedule, const TuneConfig& config);

void write_tune_csv(const std::vector<TuneLogEntry>& log, std::ostream& out);

}  // namespace spc
