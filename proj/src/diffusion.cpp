#include "spc/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spc/error.hpp"
#include "spc/kernels.hpp"
#include "spc/pointset.hpp"

namespace spc {

NoiseSchedule
make_schedule(int T, const ScheduleConfig& config)
{
  if (T < 1 || T > 1024)
    throw Error(Errc::kInvalidArgument, "step count must lie in [1, 1024]");
  if (config.base_steps < T)
    throw Error(Errc::kInvalidArgument, "base schedule shorter than T");

  NoiseSchedule s;
  s.T = T;
  s.beta.assign(size_t(T) + 1, 0.0);
  s.alpha.assign(size_t(T) + 1, 1.0);
  s.alpha_bar.assign(size_t(T) + 1, 1.0);
  s.sigma.assign(size_t(T) + 1, 0.0);

  const double n = config.base_steps;
  for (int t = 1; t <= T; ++t) {
    double b = 0;
    switch (config.kind) {
    case ScheduleKind::kCosine: {
      auto f = [](double u) {
        constexpr double off = 0.008;
        double c = std::cos((u + off) / (1 + off) * std::numbers::pi / 2);
        return c * c;
      };
      b = std::min(1.0 - f(t / n) / f((t - 1) / n), 0.999);
      break;
    }
    case ScheduleKind::kLinear:
      b = 1e-4 + (0.02 - 1e-4) * (t - 1) / (n - 1);
      break;
    case ScheduleKind::kConstant:
      b = config.constant_beta;
      break;
    }
    if (!(b > 0 && b < 1))
      throw Error(Errc::kInvalidArgument, "beta must lie in (0, 1)");
    s.beta[size_t(t)] = b;
    s.alpha[size_t(t)] = 1 - b;
    s.alpha_bar[size_t(t)] = s.alpha[size_t(t)] * s.alpha_bar[size_t(t) - 1];
  }
  for (int t = 1; t <= T; ++t) {
    double ab = s.alpha_bar[size_t(t)], ab_prev = s.alpha_bar[size_t(t) - 1];
    s.sigma[size_t(t)] = std::sqrt(s.beta[size_t(t)] * (1 - ab_prev) / (1 - ab));
  }
  return s;
}

namespace {

  void
  check_step(int t, const NoiseSchedule& s, int lo)
  {
    if (t < lo || t > s.T)
      throw Error(Errc::kInvalidArgument, "diffusion step out of range");
  }

  Mat
  axpby(double a, const Mat& x, double b, const Mat& y)
  {
    if (!x.same_shape(y))
      throw Error(Errc::kInvalidArgument, "shape mismatch");
    Mat out(x.rows, x.cols);
    kernels::axpby(a, x.data.data(), b, y.data.data(), out.data.data(), out.size());
    return out;
  }

  std::pair<double, double>
  posterior_coeffs(int t, const NoiseSchedule& s)
  {
    double a = s.alpha[size_t(t)], ab = s.alpha_bar[size_t(t)];
    double inv = 1.0 / std::sqrt(a);
    return {inv, -inv * (1 - a) / std::sqrt(1 - ab)};
  }

  std::pair<double, double>
  x0_coeffs(int t, const NoiseSchedule& s)
  {
    double ab = s.alpha_bar[size_t(t)];
    double inv = 1.0 / std::sqrt(ab);
    return {inv, -inv * std::sqrt(1 - ab)};
  }

}  // namespace

Mat
add_noise(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& s)
{
  check_step(t, s, 0);
  double ab = s.alpha_bar[size_t(t)];
  return axpby(std::sqrt(ab), x0, std::sqrt(1 - ab), eps);
}

Mat
posterior_mean(const Mat& x_t, const Mat& eps_hat, int t, const NoiseSchedule& s)
{
  check_step(t, s, 1);
  auto [a, b] = posterior_coeffs(t, s);
  return axpby(a, x_t, b, eps_hat);
}

ad::Var
posterior_mean(ad::Var x_t, ad::Var eps_hat, int t, const NoiseSchedule& s)
{
  check_step(t, s, 1);
  auto [a, b] = posterior_coeffs(t, s);
  return ad::affine(a, x_t, b, eps_hat);
}

Mat
predict_x0(const Mat& x_t, const Mat& eps_hat, int t, const NoiseSchedule& s)
{
  check_step(t, s, 1);
  auto [a, b] = x0_coeffs(t, s);
  return axpby(a, x_t, b, eps_hat);
}

ad::Var
predict_x0(ad::Var x_t, ad::Var eps_hat, int t, const NoiseSchedule& s)
{
  check_step(t, s, 1);
  auto [a, b] = x0_coeffs(t, s);
  return ad::affine(a, x_t, b, eps_hat);
}

//============================================================================

Mat
ConditionalDenoiser::eps(const Mat& x_t, const Mat& cond, int t) const
{
  ad::Tape tape;
  return eps(tape, tape.constant(x_t), tape.constant(cond), t).value();
}

namespace {

  // (x_t - sqrt(ab) * clean) / sqrt(1 - ab)
  ad::Var
  noise_from_clean(ad::Var x_t, ad::Var clean, int t, const NoiseSchedule& s)
  {
    if (t < 1 || t > s.T)
      throw Error(Errc::kInvalidArgument, "diffusion step out of range");
    double ab = s.alpha_bar[size_t(t)];
    double inv = 1.0 / std::sqrt(1 - ab);
    return ad::affine(inv, x_t, -std::sqrt(ab) * inv, clean);
  }

}  // namespace

OracleDenoiser::OracleDenoiser(Mat target6, NoiseSchedule schedule)
  : schedule_(std::move(schedule))
{
  if (target6.rows == 0 || target6.cols != 6)
    throw Error(Errc::kInvalidArgument, "oracle target must be non-empty N x 6");
  target_ = std::make_shared<const Mat>(std::move(target6));
  index_ = std::make_shared<const KdIndex>(*target_);
}

ad::Var
OracleDenoiser::eps(ad::Tape& tape, ad::Var x_t, ad::Var /*cond*/, int t) const
{
  auto idx = tape.select([&] {
    std::vector<int> out(x_t.rows());
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = index_->nearest(x_t.value().row(i)).row;
    return out;
  });
  ad::Var clean = tape.constant(spc::gather_rows(*target_, idx));
  return noise_from_clean(x_t, clean, t, schedule_);
}

Mat
OracleDenoiser::eps(const Mat& x_t, const Mat& cond, int t) const
{
  return ConditionalDenoiser::eps(x_t, cond, t);
}

SeedSnapDenoiser::SeedSnapDenoiser(NoiseSchedule schedule)
  : schedule_(std::move(schedule))
{}

ad::Var
SeedSnapDenoiser::eps(ad::Tape& tape, ad::Var x_t, ad::Var cond, int t) const
{
  if (cond.rows() == 0)
    throw Error(Errc::kInvalidArgument, "seed-snap denoiser needs seeds");
  auto idx = tape.select([&] { return nearest_rows(x_t.value(), cond.value()); });
  ad::Var clean = ad::gather_rows(cond, idx);
  return noise_from_clean(x_t, clean, t, schedule_);
}

//============================================================================

int
sampling_rounds(size_t num_points)
{
  long r = std::lround(double(num_points) / double(kPointsPerRound));
  return int(std::max(1L, r));
}

Mat
sample_patch(
  const ConditionalDenoiser& denoiser, const Mat& seeds, size_t num_points,
  const NoiseSchedule& s, Rng& rng)
{
  if (seeds.rows == 0 || seeds.cols != 6)
    throw Error(Errc::kInvalidArgument, "sample_patch needs K x 6 seeds, K >= 1");
  if (num_points < 1)
    throw Error(Errc::kInvalidArgument, "sample_patch needs num_points >= 1");

  const int rounds = sampling_rounds(num_points);
  const int T = s.T;
  Mat out(size_t(rounds) * kPointsPerRound, 6);
  for (int r = 0; r < rounds; ++r) {
    Mat init = seeds.rows == kPointsPerRound
      ? seeds
      : random_sample(seeds, kPointsPerRound, rng);
    Mat x = add_noise(init, T, normal_matrix(rng, kPointsPerRound, 6), s);
    for (int t = T; t >= 1; --t) {
      Mat eps_hat = denoiser.eps(x, seeds, t);
      x = posterior_mean(x, eps_hat, t, s);
      if (t > 1) {
        Mat z = normal_matrix(rng, x.rows, x.cols);
        Mat next(x.rows, x.cols);
        kernels::axpby(1.0, x.data.data(), s.sigma[size_t(t)], z.data.data(),
                       next.data.data(), next.size());
        x = std::move(next);
      }
    }
    std::copy(x.data.begin(), x.data.end(),
              out.data.begin() + ptrdiff_t(size_t(r) * x.size()));
  }
  for (size_t i = 0; i < out.rows; ++i)
    for (size_t c = 3; c < 6; ++c)
      out(i, c) = std::clamp(out(i, c), 0.0, 1.0);
  return out;
}

}  // namespace spc
