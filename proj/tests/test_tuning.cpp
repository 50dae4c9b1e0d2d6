#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "spc/error.hpp"
#include "spc/shapes.hpp"
#include "spc/toydenoiser.hpp"
#include "spc/tuning.hpp"
#include "support.hpp"

using namespace spc;
using spc::testing::fd_check;

namespace {

class ZeroDenoiser final : public ConditionalDenoiser {
public:
  using ConditionalDenoiser::eps;
  ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var, int) const override
  {
    return tape.constant(Mat(x_t.rows(), x_t.cols()));
  }
  std::string name() const override { return "zero"; }
};

NoiseSchedule
constant_schedule(int T)
{
  ScheduleConfig c;
  c.kind = ScheduleKind::kConstant;
  return make_schedule(T, c);
}

Mat
rows(std::initializer_list<std::initializer_list<double>> r)
{
  Mat m(r.size(), r.begin()->size());
  size_t i = 0;
  for (const auto& row : r) {
    size_t j = 0;
    for (double v : row)
      m(i, j++) = v;
    ++i;
  }
  return m;
}

PointCloud
sphere(size_t n, double size, Rng& rng)
{
  ShapeSpec s;
  s.size = size;
  return synth_shape(s, n, rng);
}

template <class F>
bool
throws_code(F&& f, Errc code)
{
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

//============================================================================

TEST_CASE("bdsam keeps small patches whole")
{
  Rng rng = make_rng(1);
  auto p = sphere(500, 0.5, rng);
  auto s = bdsam(p, 1024, 2.0);
  std::vector<int> all(500);
  std::iota(all.begin(), all.end(), 0);
  CHECK(s.rows == all);
  CHECK(s.boundary.size() == 500);

  CHECK(throws_code([&] { bdsam(PointCloud(), 4, 1.0); }, Errc::kEmptyPatch));
  CHECK(throws_code([&] { bdsam(p, 0, 1.0); }, Errc::kInvalidArgument));
}

TEST_CASE("bdsam returns distinct rows with a capped boundary")
{
  Rng rng = make_rng(2);
  auto p = sphere(4000, 0.9, rng);
  for (size_t m : {1, 7, 64, 1024}) {
    auto s = bdsam(p, m, 2.0);
    CHECK(s.rows.size() == m);
    CHECK(std::set<int>(s.rows.begin(), s.rows.end()).size() == m);
    size_t b = size_t(std::count(s.boundary.begin(), s.boundary.end(), 1));
    CHECK(b <= m / 4);
  }
}

TEST_CASE("bdsam keeps the corners of a cube")
{
  Rng rng = make_rng(3);
  ShapeSpec spec;
  spec.kind = ShapeKind::kBox;
  spec.size = 0.5;
  auto surface = synth_shape(spec, 3000, rng);
  Mat corners(8, 3);
  for (int c = 0; c < 8; ++c)
    for (int k = 0; k < 3; ++k)
      corners(size_t(c), size_t(k)) = (c >> k) & 1 ? 0.5 : -0.5;
  auto cloud = concat(surface, PointCloud(corners, Mat(8, 3, 0.5)));
  auto s = bdsam(cloud, 64, 1.0);
  for (int c = 0; c < 8; ++c)
    CHECK(std::find(s.rows.begin(), s.rows.end(), 3000 + c) != s.rows.end());
}

TEST_CASE("initial weights are one-hot up to 1e-4")
{
  Rng rng = make_rng(4);
  auto p = sphere(2000, 0.9, rng);
  auto sel = bdsam(p, 128, 2.0);
  for (double radius : {0.004, 0.2}) {
    auto w = init_weights(p, sel, 32, radius);
    REQUIRE(w.num_seeds() == 128);
    CHECK(w.k == 32);
    CHECK(w.weights.cols == 32);
    CHECK(w.neighbors.size() == 128 * 32);
    CHECK(w.frozen == sel.boundary);
    for (size_t s = 0; s < 128; ++s) {
      int ones = 0, small = 0;
      for (size_t j = 0; j < 32; ++j) {
        double v = w.weights(s, j);
        if (v == 1.0) {
          ++ones;
          CHECK(w.neighbors[s * 32 + j] == sel.rows[s]);
        } else if (v == kInitOffWeight) {
          ++small;
        }
      }
      CHECK(ones == 1);
      CHECK(small == 31);
    }
  }
}

TEST_CASE("aggregation examples")
{
  Mat src = rows({{0, 0, 0, 0, 0, 0}, {1, 0, 0, 1, 1, 1}});
  SeedWeights w;
  w.k = 2;
  w.neighbors = {0, 1, 1, 0, 0, 1};
  w.weights = rows({{1, 1}, {-1, 1}, {0, 3}});
  w.frozen.assign(3, 0);
  Mat out = aggregate(w, src);
  CHECK(out(0, 0) == 0.5);
  CHECK(out(0, 3) == 0.5);
  CHECK(out(1, 0) == 0.5);
  CHECK(out(2, 0) == 1.0);
  CHECK(out(2, 5) == 1.0);

  w.weights(2, 1) = 0;
  CHECK(throws_code([&] { aggregate(w, src); }, Errc::kDegenerateWeights));
}

TEST_CASE("aggregated seeds stay in the bounding box of their neighbours")
{
  Rng rng = make_rng(5);
  Mat src = normal_matrix(rng, 50, 6);
  SeedWeights w;
  w.k = 5;
  w.weights = spc::testing::away_from_zero(rng, 20, 5);
  for (size_t i = 0; i < 100; ++i)
    w.neighbors.push_back(uniform_int(rng, 0, 49));
  w.frozen.assign(20, 0);
  Mat out = aggregate(w, src);
  ad::Tape tape;
  Mat traced = aggregate(tape.constant(w.weights), w.neighbors, tape.constant(src)).value();
  CHECK(max_abs_diff(out, traced) <= 1e-15);
  for (size_t s = 0; s < 20; ++s)
    for (size_t c = 0; c < 6; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (size_t j = 0; j < 5; ++j) {
        double v = src(size_t(w.neighbors[s * 5 + j]), c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(out(s, c) >= lo - 1e-12);
      CHECK(out(s, c) <= hi + 1e-12);
    }
}

//============================================================================

TEST_CASE("chamfer examples and properties")
{
  Mat a = rows({{0, 0, 0}});
  Mat b = rows({{1, 0, 0}, {0, 1, 0}});
  CHECK(loss_cd(a, b) == doctest::Approx(1.0));
  CHECK(loss_cd(b, b) == 0.0);

  Rng rng = make_rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    Mat x = normal_matrix(rng, size_t(uniform_int(rng, 1, 40)), 6);
    Mat y = normal_matrix(rng, size_t(uniform_int(rng, 1, 40)), 6);
    double v = loss_cd(x, y);
    CHECK(v >= 0);
    CHECK(v == loss_cd(y, x));
    CHECK(v == doctest::Approx(spc::testing::brute_chamfer(x, y, 6)).epsilon(1e-12));
    ad::Tape tape;
    CHECK(loss_cd(tape.constant(x), tape.constant(y)).value()(0, 0) ==
          doctest::Approx(v).epsilon(1e-14));
  }
  CHECK_THROWS_AS(loss_cd(Mat(0, 3), a), Error);
  CHECK_THROWS_AS(loss_cd(Mat(1, 6), a), Error);
}

TEST_CASE("loss names")
{
  for (auto k : {LossKind::kCdm, LossKind::kDm, LossKind::kInver})
    CHECK(parse_loss(to_string(k)) == k);
  CHECK(parse_loss("cdm") == LossKind::kCdm);
  CHECK_THROWS_AS(parse_loss("l2"), Error);
}

TEST_CASE("losses with a zero noise predictor")
{
  auto s = make_schedule(8);
  Rng rng = make_rng(7);
  Mat x0 = normal_matrix(rng, 30, 6), eps = normal_matrix(rng, 30, 6);
  Mat seeds = normal_matrix(rng, 4, 6);
  ZeroDenoiser zero;
  int t = 3;
  double mean_sq = 0;
  for (double v : eps.data)
    mean_sq += v * v;
  mean_sq /= double(eps.size());
  CHECK(loss_dm(x0, seeds, t, eps, zero, s) == doctest::Approx(mean_sq).epsilon(1e-14));

  Mat xt = add_noise(x0, t, eps, s);
  Mat scaled = xt;
  for (auto& v : scaled.data)
    v /= std::sqrt(s.alpha_bar[size_t(t)]);
  CHECK(loss_inver(x0, seeds, t, eps, zero, s) ==
        doctest::Approx(spc::testing::brute_chamfer(x0, scaled, 6)).epsilon(1e-12));

  Mat mean = xt;
  for (auto& v : mean.data)
    v /= std::sqrt(s.alpha[size_t(t)]);
  CHECK(loss_cdm(x0, seeds, t, eps, zero, s) ==
        doctest::Approx(spc::testing::brute_chamfer(add_noise(x0, t - 1, eps, s), mean, 6))
          .epsilon(1e-12));
}

TEST_CASE("losses with the oracle")
{
  auto s = constant_schedule(2);
  Rng rng = make_rng(8);
  Mat x0 = normal_matrix(rng, 40, 6);
  Mat eps = normal_matrix(rng, 40, 6);
  for (auto& v : eps.data)
    v *= 1e-3;
  OracleDenoiser oracle(x0, s);
  Mat seeds = normal_matrix(rng, 4, 6);
  CHECK(loss_dm(x0, seeds, 2, eps, oracle, s) <= 1e-18);
  CHECK(loss_inver(x0, seeds, 2, eps, oracle, s) <= 1e-12);
  CHECK(loss_cdm(x0, seeds, 1, eps, oracle, s) <= 1e-12);

  // at t = 2 the posterior mean differs from x_1 by a known multiple of eps
  double coef = std::sqrt(1 - 0.9) * (std::sqrt(0.9 * (1 - 0.9)) - std::sqrt(1 - 0.81)) /
    std::sqrt(1 - 0.81);
  Mat x1 = add_noise(x0, 1, eps, s);
  Mat shifted = x1;
  for (size_t i = 0; i < shifted.size(); ++i)
    shifted.data[i] += coef * eps.data[i];
  CHECK(loss_cdm(x0, seeds, 2, eps, oracle, s) ==
        doctest::Approx(spc::testing::brute_chamfer(x1, shifted, 6)).epsilon(1e-9));
}

TEST_CASE("chamfer losses ignore row order, the noise loss does not")
{
  auto s = make_schedule(8);
  Rng rng = make_rng(9);
  Mat x0 = normal_matrix(rng, 64, 6), eps = normal_matrix(rng, 64, 6);
  OracleDenoiser oracle(x0, s);
  int t = 4;
  Mat xt = add_noise(x0, t, eps, s);
  Mat pred = oracle.eps(xt, Mat(1, 6), t);
  Mat prev = add_noise(x0, t - 1, eps, s);
  Mat mean = posterior_mean(xt, pred, t, s);

  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  double cdm = loss_cd(prev, mean), cdm_p = loss_cd(gather_rows(prev, perm), mean);
  CHECK(std::abs(cdm - cdm_p) <= 1e-12);
  Mat x0_hat = predict_x0(xt, pred, t, s);
  CHECK(std::abs(loss_cd(x0, x0_hat) - loss_cd(gather_rows(x0, perm), x0_hat)) <= 1e-12);

  auto mse = [](const Mat& a, const Mat& b) {
    double sum = 0;
    for (size_t i = 0; i < a.size(); ++i)
      sum += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    return sum / double(a.size());
  };
  double dm = mse(eps, pred), dm_p = mse(gather_rows(eps, perm), pred);
  CHECK(std::abs(dm - dm_p) > 1e-3);
}

TEST_CASE("gradients with respect to the weights match finite differences")
{
  auto s = make_schedule(8);
  Rng rng = make_rng(10);
  auto patch = sphere(256, 0.8, rng);
  Mat src = patch.rows6();
  auto sel = bdsam(patch, 32, 2.0);
  auto w = init_weights(patch, sel, 32, 0.5);
  Mat weights = spc::testing::away_from_zero(rng, 32, 32);
  ToyDenoiser toy(ToyDenoiserParams::random_init(64, rng), s);
  Mat eps = normal_matrix(rng, 256, 6);
  for (auto kind : {LossKind::kDm, LossKind::kInver, LossKind::kCdm}) {
    auto f = [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
      ad::Var seeds = aggregate(v[0], w.neighbors, tape.constant(src));
      return diffusion_loss(kind, tape, src, seeds, 3, eps, toy, s);
    };
    auto r = fd_check(f, {weights});
    INFO(to_string(kind) << ": worst " << r.worst_abs << " ratio " << r.worst_ratio);
    CHECK(r.checked == 1024);
    CHECK(r.failed == 0);
  }
}

//============================================================================

TEST_CASE("adam examples")
{
  Mat p(1, 1, 0.5);
  AdamState st;
  adam_step(p, st, Mat(1, 1, 1.0), 1e-3);
  CHECK(p(0, 0) - 0.5 == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-9));

  Mat q(2, 2, 0.25);
  AdamState z;
  adam_step(q, z, Mat(2, 2), 1e-3);
  CHECK(q == Mat(2, 2, 0.25));

  Mat r(2, 2, 0.25);
  AdamState fr;
  std::vector<char> frozen{1, 0};
  adam_step(r, fr, Mat(2, 2, 3.0), 1e-2, frozen);
  CHECK(r(0, 0) == 0.25);
  CHECK(r(0, 1) == 0.25);
  CHECK(r(1, 0) < 0.25);
}

namespace {

Patches
sphere_patches(uint64_t seed, size_t n, int level)
{
  Rng rng = make_rng(seed);
  auto [norm, scale] = normalize(sphere(n, 0.9, rng));
  (void)scale;
  return divide(norm, level);
}

TuneConfig
small_config()
{
  TuneConfig c;
  c.seeds_per_patch = 64;
  c.k = 8;
  c.radius = 0.1;
  c.sample_points = 256;
  c.lr = kFastLr;
  return c;
}

}  // namespace

TEST_CASE("zero iterations returns the initial seeds")
{
  auto patches = sphere_patches(11, 3000, 2);
  auto sched = make_schedule(8);
  SeedSnapDenoiser snap(sched);
  auto cfg = small_config();
  cfg.iterations = 0;
  auto r = tune(patches, snap, sched, cfg);
  CHECK(r.log.empty());
  REQUIRE(r.seeds.size() == patches.clouds.size());
  auto init = init_patches(patches, cfg);
  size_t total = 0;
  for (size_t i = 0; i < r.seeds.size(); ++i) {
    Mat src = patches.clouds[i].rows6();
    CHECK(r.seeds[i] == aggregate(init[i].weights, src));
    Mat picked = gather_rows(src, init[i].selection.rows);
    CHECK(max_abs_diff(r.seeds[i], picked) <= 1e-2);
    total += r.seeds[i].rows;
  }
  CHECK(r.all_seeds().rows == total);
}

TEST_CASE("tuning moves free rows only and is reproducible")
{
  auto patches = sphere_patches(12, 3000, 2);
  auto sched = make_schedule(8);
  SeedSnapDenoiser snap(sched);
  auto cfg = small_config();
  cfg.iterations = 40;
  auto init = init_patches(patches, cfg);
  auto r = tune(patches, snap, sched, cfg);
  CHECK(r.log.size() == 40);
  size_t moved = 0, frozen_rows = 0;
  for (size_t i = 0; i < init.size(); ++i) {
    const auto& a = init[i].weights;
    const auto& b = r.patches[i].weights;
    for (size_t s = 0; s < a.num_seeds(); ++s) {
      bool same = std::equal(a.weights.row(s).begin(), a.weights.row(s).end(),
                             b.weights.row(s).begin());
      if (a.frozen[s]) {
        ++frozen_rows;
        CHECK(same);
      } else if (!same) {
        ++moved;
      }
    }
  }
  CHECK(frozen_rows > 0);
  CHECK(moved > 0);

  auto again = tune(patches, snap, sched, cfg);
  CHECK(again.all_seeds() == r.all_seeds());
  for (const auto& e : r.log) {
    CHECK(e.t >= 1);
    CHECK(e.t <= 8);
    CHECK(e.patch >= 0);
    CHECK(size_t(e.patch) < patches.clouds.size());
    CHECK(std::isfinite(e.loss));
  }

  std::stringstream csv;
  write_tune_csv(r.log, csv);
  CHECK(csv.str().rfind("iteration,patch,t,loss\n", 0) == 0);

  cfg.jobs = 3;
  auto par = tune(patches, snap, sched, cfg);
  CHECK(par.all_seeds() == tune(patches, snap, sched, cfg).all_seeds());
}

TEST_CASE("a NaN loss aborts tuning")
{
  class NanDenoiser final : public ConditionalDenoiser {
  public:
    using ConditionalDenoiser::eps;
    ad::Var eps(ad::Tape& tape, ad::Var x_t, ad::Var, int) const override
    {
      return tape.constant(Mat(x_t.rows(), x_t.cols(), NAN));
    }
    std::string name() const override { return "nan"; }
  };
  auto patches = sphere_patches(13, 500, 1);
  auto sched = make_schedule(8);
  auto cfg = small_config();
  cfg.iterations = 3;
  CHECK(throws_code([&] { tune(patches, NanDenoiser(), sched, cfg); }, Errc::kNumericError));
}

TEST_CASE("tuning lowers the held-out chamfer diffusion loss")
{
  auto sched = make_schedule(8);
  SeedSnapDenoiser snap(sched);
  std::vector<double> before, after;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto patches = sphere_patches(100 + seed, 8192, 1);
    TuneConfig cfg;
    cfg.seeds_per_patch = 256;
    cfg.k = 16;
    cfg.radius = 0.08;
    cfg.lr = kFastLr;
    cfg.iterations = 200;
    cfg.seed = seed;
    auto init = init_patches(patches, cfg);
    Mat src = patches.clouds[0].rows6();
    Mat s0 = aggregate(init[0].weights, src);
    Mat s1 = tune(patches, snap, sched, cfg).seeds[0];

    Rng rng = make_rng(500 + seed);
    double l0 = 0, l1 = 0;
    for (int d = 0; d < 16; ++d) {
      Mat x0 = random_sample(src, 3072, rng);
      Mat eps = normal_matrix(rng, 3072, 6);
      int t = uniform_int(rng, 1, 8);
      l0 += loss_cdm(x0, s0, t, eps, snap, sched);
      l1 += loss_cdm(x0, s1, t, eps, snap, sched);
    }
    before.push_back(l0 / 16);
    after.push_back(l1 / 16);
  }
  double mb = spc::testing::median(before), ma = spc::testing::median(after);
  INFO("initial " << mb << " final " << ma);
  CHECK(ma < mb);
}
