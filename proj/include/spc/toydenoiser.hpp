#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "spc/diffusion.hpp"
#include "spc/shapes.hpp"

namespace spc {

//============================================================================
// Small trainable conditional noise predictor.
//
//   f_x  = x_t W_in + b_in                                  (per noisy row)
//   e    = sinusoid(t) W_time + b_time                      (per step)
//   f_s  = relu(cond W_seed + b_seed)                       (per seed)
//   a_ij = inverse-distance weights over the m nearest seeds of row i,
//          shifted so the weight vanishes at the (m+1)-th distance
//   c_i  = sum_j a_ij f_s[j]
//   o_i  = sum_j a_ij (x_t[i] - cond[j]) / sqrt(1 - ab_t)
//   h    = relu(f_x + c + o W_off + e)
//   out  = head(h), three dense layers (relu, relu, linear) -> 6
//
// Permutation-equivariant in the noisy rows and invariant in the seed rows.

struct ToyDenoiserParams {
  size_t hidden = 64;
  std::vector<Mat> tensors;

  static ToyDenoiserParams random_init(size_t hidden, Rng& rng);
  size_t count() const;
  bool operator==(const ToyDenoiserParams&) const = default;
};

constexpr size_t kToyNeighbors = 8;

ad::Var toy_forward(
  ad::Tape& tape, const std::vector<ad::Var>& params, ad::Var x_t, ad::Var cond,
  int t, const NoiseSchedule& schedule);

class ToyDenoiser final : public ConditionalDenoiser {
public:
  ToyDenoiser(ToyDenoiserParams params, NoiseSchedule schedule);

  using ConditionalDenoiser::eps;
  ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const override;
  std::string name() const override { return "toy"; }

  const ToyDenoiserParams& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }

private:
  ToyDenoiserParams params_;
  NoiseSchedule schedule_;
};

//----------------------------------------------------------------------------
// Checkpoint: "SPTD", u32 version, u32 hidden, u32 T, u32 schedule kind,
// u32 tensor count, (u32 rows, u32 cols) per tensor, then every parameter as
// float32 little-endian in tensor order.

struct Checkpoint {
  ToyDenoiserParams params;
  int steps = kDefaultSteps;
  ScheduleKind schedule = ScheduleKind::kCosine;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

//----------------------------------------------------------------------------

struct TrainConfig {
  int steps = 2000;
  double lr = 1e-3;
  size_t batch = 256;        // noisy rows per step
  size_t seeds = 96;         // conditioning rows per step
  size_t hidden = 64;
  int T = kDefaultSteps;
  ScheduleConfig schedule;
  std::vector<ShapeKind> shapes{ShapeKind::kSphere};
  uint64_t seed = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss;   // one entry per step
};

// Minimises the mean squared noise-prediction error with Adam on synthetic
// shapes.  Throws kNumericError when the loss diverges (> 1e6 or NaN).
TrainResult train_toy_denoiser(
  const TrainConfig& config,
  const std::function<void(int, double)>& on_step = nullptr);

// Exponential moving average used to judge training progress.
std::vector<double> smooth(const std::vector<double>& v, double alpha = 0.02);

void write_loss_csv(const std::vector<double>& loss, std::ostream& out);

}  // namespace spc
