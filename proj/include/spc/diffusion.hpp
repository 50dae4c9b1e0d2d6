#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spc/autodiff.hpp"
#include "spc/rng.hpp"
#include "spc/spatial.hpp"
#include "spc/tensor.hpp"

namespace spc {

constexpr size_t kPointsPerRound = 3072;   // width of one sampling round
constexpr int kDefaultSteps = 8;

enum class ScheduleKind
{
  kCosine,     // squared-cosine alpha_bar, offset 0.008, beta <= 0.999
  kLinear,     // beta linear in [1e-4, 0.02]
  kConstant,   // beta = constant_beta for every step (tests)
};

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kCosine;
  int base_steps = 1024;        // the full schedule whose head is used
  double constant_beta = 0.1;
};

//============================================================================
// Index t runs over 1..T; entry 0 holds alpha_bar[0] = 1 (and beta[0] = 0,
// alpha[0] = 1, sigma[0] = 0) so that expressions at t - 1 = 0 need no
// special case.

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;   // DDPM posterior standard deviation
};

NoiseSchedule make_schedule(int T, const ScheduleConfig& config = {});

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps; t = 0 returns x0.
Mat add_noise(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& s);

// (1 / sqrt(a_t)) (x_t - (1 - a_t) / sqrt(1 - ab_t) * eps_hat)
Mat posterior_mean(const Mat& x_t, const Mat& eps_hat, int t, const NoiseSchedule& s);
ad::Var posterior_mean(ad::Var x_t, ad::Var eps_hat, int t, const NoiseSchedule& s);

// (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)
Mat predict_x0(const Mat& x_t, const Mat& eps_hat, int t, const NoiseSchedule& s);
ad::Var predict_x0(ad::Var x_t, ad::Var eps_hat, int t, const NoiseSchedule& s);

//============================================================================
// eps(x_t, cond, t): predicted noise for M x 6 noisy rows conditioned on
// K x 6 seed rows.  Must be pure.  The traced overload must make the result
// differentiable with respect to `cond`.

class ConditionalDenoiser {
public:
  virtual ~ConditionalDenoiser() = default;

  virtual ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const = 0;

  // Untraced evaluation; by default runs the traced path on constants.
  virtual Mat eps(const Mat& x_t, const Mat& cond, int t) const;

  virtual std::string name() const = 0;
};

// Analytic noise predictor for a known target patch: maps each noisy row to
// its nearest target row (6-D) and returns the noise that would have
// produced it.  Ignores the conditioning.
class OracleDenoiser final : public ConditionalDenoiser {
public:
  OracleDenoiser(Mat target6, NoiseSchedule schedule);

  using ConditionalDenoiser::eps;
  ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const override;
  Mat eps(const Mat& x_t, const Mat& cond, int t) const override;
  std::string name() const override { return "oracle"; }

private:
  std::shared_ptr<const Mat> target_;
  std::shared_ptr<const KdIndex> index_;
  NoiseSchedule schedule_;
};

// Same construction with the seeds themselves as the target: the predicted
// clean row is the nearest seed row.  Differentiable in the seeds, so it
// serves as an exactly analysable surrogate for prompt tuning.
class SeedSnapDenoiser final : public ConditionalDenoiser {
public:
  explicit SeedSnapDenoiser(NoiseSchedule schedule);

  using ConditionalDenoiser::eps;
  ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const override;
  std::string name() const override { return "seed-snap"; }

private:
  NoiseSchedule schedule_;
};

// max(1, round(num_i / 3072)).
int sampling_rounds(size_t num_points);

// Decompresses one patch from its seeds: N_s rounds of T denoising steps,
// each starting from the seeds (resampled to 3072 rows) plus noise.
// Returns N_s * 3072 rows with colors clamped to [0, 1].
Mat sample_patch(
  const ConditionalDenoiser& denoiser, const Mat& seeds, size_t num_points,
  const NoiseSchedule& schedule, Rng& rng);

}  // namespace spc
