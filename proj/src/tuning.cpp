#include "spc/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "spc/error.hpp"
#include "spc/parallel.hpp"
#include "spc/spatial.hpp"

namespace spc {

namespace {

  std::vector<int>
  gather_index(const std::vector<int>& v, const std::vector<int>& idx)
  {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx)
      out.push_back(v[size_t(i)]);
    return out;
  }

}  // namespace

SeedSelection
bdsam(const PointCloud& patch, size_t m, double cell_edge)
{
  if (patch.empty())
    throw Error(Errc::kEmptyPatch, "bdsam on an empty patch");
  if (m < 1)
    throw Error(Errc::kInvalidArgument, "bdsam requires m >= 1");

  const Mat& pos = patch.positions();
  const size_t n = pos.rows;
  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = hi[d] = pos(0, size_t(d));
    for (size_t i = 1; i < n; ++i) {
      lo[d] = std::min(lo[d], pos(i, size_t(d)));
      hi[d] = std::max(hi[d], pos(i, size_t(d)));
    }
  }
  // face count per shell row: 1 face, 2 edge, 3 corner
  const double delta = 0.02 * cell_edge;
  std::vector<int> shell, faces;
  for (size_t i = 0; i < n; ++i) {
    int f = 0;
    for (int d = 0; d < 3; ++d) {
      double v = pos(i, size_t(d));
      f += v - lo[d] <= delta || hi[d] - v <= delta;
    }
    if (f > 0) {
      shell.push_back(int(i));
      faces.push_back(f);
    }
  }

  const size_t cap = m / 4;
  std::vector<int> boundary;
  if (shell.size() <= cap) {
    boundary = shell;
  } else if (cap > 0) {
    // corners first, then edges, then faces
    std::vector<int> picked;
    for (int tier = 3; tier >= 1 && picked.size() < cap; --tier) {
      std::vector<int> cand;
      for (size_t j = 0; j < shell.size(); ++j)
        if (faces[j] >= tier)
          cand.push_back(int(j));
      if (cand.size() <= picked.size())
        continue;
      std::vector<int> slot(shell.size(), -1);
      for (size_t j = 0; j < cand.size(); ++j)
        slot[size_t(cand[j])] = int(j);
      std::vector<int> init;
      for (int p : picked)
        init.push_back(slot[size_t(p)]);
      Mat cand_pos = gather_rows(pos, gather_index(shell, cand));
      auto r = init.empty()
        ? farthest_point_sample(cand_pos, std::min(cap, cand.size()), 0)
        : farthest_point_sample(cand_pos, std::min(cap, cand.size()), init);
      picked.clear();
      for (int j : r)
        picked.push_back(cand[size_t(j)]);
    }
    for (int j : picked)
      boundary.push_back(shell[size_t(j)]);
  }

  SeedSelection out;
  if (n <= m) {
    out.rows.resize(n);
    for (size_t i = 0; i < n; ++i)
      out.rows[i] = int(i);
  } else {
    out.rows = farthest_point_sample(pos, m, boundary);
  }
  std::vector<char> is_boundary(n, 0);
  for (int r : boundary)
    is_boundary[size_t(r)] = 1;
  for (int r : out.rows)
    out.boundary.push_back(is_boundary[size_t(r)]);
  return out;
}

SeedWeights
init_weights(
  const PointCloud& source, const SeedSelection& seeds, size_t k, double radius)
{
  if (k < 1)
    throw Error(Errc::kInvalidArgument, "init_weights requires k >= 1");
  if (seeds.rows.size() != seeds.boundary.size())
    throw Error(Errc::kInvalidArgument, "init_weights: inconsistent selection");

  KdIndex index(source.positions());
  const size_t S = seeds.rows.size();
  SeedWeights w;
  w.k = k;
  w.neighbors.resize(S * k);
  w.weights = Mat(S, k, kInitOffWeight);
  w.frozen = seeds.boundary;
  for (size_t s = 0; s < S; ++s) {
    int self = seeds.rows[s];
    if (self < 0 || size_t(self) >= source.size())
      throw Error(Errc::kInvalidArgument, "init_weights: seed row out of range");
    auto nbs = index.ball_query(source.positions().row(size_t(self)), k, radius);
    auto it = std::find(nbs.begin(), nbs.end(), self);
    size_t slot = 0;
    if (it == nbs.end())
      nbs[0] = self;
    else
      slot = size_t(it - nbs.begin());
    std::copy(nbs.begin(), nbs.end(), w.neighbors.begin() + std::ptrdiff_t(s * k));
    w.weights(s, slot) = 1.0;
  }
  return w;
}

namespace {

  void
  check_weights(const Mat& w, size_t num_neighbors, const Mat& source)
  {
    if (w.rows * w.cols != num_neighbors)
      throw Error(Errc::kInvalidArgument, "aggregate: neighbor table size mismatch");
    for (size_t s = 0; s < w.rows; ++s) {
      bool any = false;
      for (double v : w.row(s))
        any |= v != 0.0;
      if (!any)
        throw Error(
          Errc::kDegenerateWeights, "all-zero weight row " + std::to_string(s));
    }
    if (source.rows == 0)
      throw Error(Errc::kInvalidArgument, "aggregate: empty source");
  }

}  // namespace

Mat
aggregate(const SeedWeights& w, const Mat& source6)
{
  check_weights(w.weights, w.neighbors.size(), source6);
  const size_t S = w.weights.rows, k = w.weights.cols, d = source6.cols;
  Mat out(S, d);
  for (size_t s = 0; s < S; ++s) {
    double total = 0;
    for (size_t j = 0; j < k; ++j)
      total += std::abs(w.weights(s, j));
    for (size_t j = 0; j < k; ++j) {
      double a = std::abs(w.weights(s, j)) / total;
      auto src = source6.row(size_t(w.neighbors[s * k + j]));
      for (size_t c = 0; c < d; ++c)
        out(s, c) += a * src[c];
    }
  }
  return out;
}

ad::Var
aggregate(ad::Var weights, std::span<const int> neighbors, ad::Var source6)
{
  check_weights(weights.value(), neighbors.size(), source6.value());
  ad::Var a = ad::abs(weights);
  ad::Var norm = ad::div_col(a, ad::row_sum(a));
  return ad::weighted_rows(norm, neighbors, source6);
}

//============================================================================

namespace {

  void
  check_sets(const Mat& a, const Mat& b)
  {
    if (a.rows == 0 || b.rows == 0)
      throw Error(Errc::kInvalidArgument, "chamfer distance of an empty set");
    if (a.cols != b.cols)
      throw Error(Errc::kInvalidArgument, "chamfer distance: dimension mismatch");
    for (const Mat* m : {&a, &b})
      for (double v : m->data)
        if (!std::isfinite(v))
          throw Error(Errc::kNumericError, "chamfer distance of non-finite rows");
  }

  double
  mean_nn_distance(const Mat& q, const Mat& ref)
  {
    std::vector<double> d2;
    nearest_rows(q, ref, &d2);
    double s = 0;
    for (double v : d2)
      s += std::sqrt(v);
    return s / double(q.rows);
  }

}  // namespace

double
loss_cd(const Mat& a, const Mat& b)
{
  check_sets(a, b);
  return 0.5 * (mean_nn_distance(a, b) + mean_nn_distance(b, a));
}

ad::Var
loss_cd(ad::Var a, ad::Var b)
{
  check_sets(a.value(), b.value());
  ad::Tape& tape = *a.tape;
  auto ab = tape.select([&] { return nearest_rows(a.value(), b.value()); });
  auto ba = tape.select([&] { return nearest_rows(b.value(), a.value()); });
  ad::Var d_ab = ad::mean(ad::row_norm(a - ad::gather_rows(b, ab)));
  ad::Var d_ba = ad::mean(ad::row_norm(b - ad::gather_rows(a, ba)));
  return ad::affine(0.5, d_ab, 0.5, d_ba);
}

LossKind
parse_loss(std::string_view name)
{
  if (name == "cdm")
    return LossKind::kCdm;
  if (name == "dm")
    return LossKind::kDm;
  if (name == "inver")
    return LossKind::kInver;
  throw Error(Errc::kInvalidArgument, "unknown loss '" + std::string(name) + "'");
}

std::string_view
to_string(LossKind k)
{
  switch (k) {
  case LossKind::kCdm: return "cdm";
  case LossKind::kDm: return "dm";
  case LossKind::kInver: return "inver";
  }
  return "?";
}

ad::Var
diffusion_loss(
  LossKind kind, ad::Tape& tape, const Mat& x0, ad::Var seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& sched)
{
  if (t < 1 || t > sched.T)
    throw Error(Errc::kInvalidArgument, "diffusion step out of range");
  if (!x0.same_shape(eps) || x0.cols != 6)
    throw Error(Errc::kInvalidArgument, "x0 and eps must both be M x 6");

  ad::Var x_t = tape.constant(add_noise(x0, t, eps, sched));
  ad::Var pred = denoiser.eps(tape, x_t, seeds, t);
  switch (kind) {
  case LossKind::kDm: {
    ad::Var err = tape.constant(eps) - pred;
    return ad::mean(err * err);
  }
  case LossKind::kCdm: {
    ad::Var prev = tape.constant(add_noise(x0, t - 1, eps, sched));
    return loss_cd(prev, posterior_mean(x_t, pred, t, sched));
  }
  case LossKind::kInver:
    return loss_cd(tape.constant(x0), predict_x0(x_t, pred, t, sched));
  }
  throw Error(Errc::kInvalidArgument, "unknown loss kind");
}

namespace {

  double
  plain_loss(
    LossKind kind, const Mat& x0, const Mat& seeds, int t, const Mat& eps,
    const ConditionalDenoiser& denoiser, const NoiseSchedule& sched)
  {
    ad::Tape tape;
    return diffusion_loss(kind, tape, x0, tape.constant(seeds), t, eps, denoiser, sched)
      .value()(0, 0);
  }

}  // namespace

double
loss_dm(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& sched)
{
  return plain_loss(LossKind::kDm, x0, seeds, t, eps, denoiser, sched);
}

double
loss_cdm(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& sched)
{
  return plain_loss(LossKind::kCdm, x0, seeds, t, eps, denoiser, sched);
}

double
loss_inver(
  const Mat& x0, const Mat& seeds, int t, const Mat& eps,
  const ConditionalDenoiser& denoiser, const NoiseSchedule& sched)
{
  return plain_loss(LossKind::kInver, x0, seeds, t, eps, denoiser, sched);
}

//============================================================================

Mat
TuneResult::all_seeds() const
{
  size_t total = 0;
  for (const auto& s : seeds)
    total += s.rows;
  Mat out(total, 6);
  size_t r = 0;
  for (const auto& s : seeds) {
    std::copy(s.data.begin(), s.data.end(), out.data.begin() + std::ptrdiff_t(r * 6));
    r += s.rows;
  }
  return out;
}

std::vector<PatchState>
init_patches(const Patches& patches, const TuneConfig& cfg)
{
  const double cell_edge = 2.0 / double(patches.grid.level);
  std::vector<PatchState> out(patches.clouds.size());
  parallel_for(out.size(), cfg.jobs, [&](size_t i) {
    out[i].selection = bdsam(patches.clouds[i], cfg.seeds_per_patch, cell_edge);
    out[i].weights = init_weights(patches.clouds[i], out[i].selection, cfg.k, cfg.radius);
  });
  return out;
}

namespace {

  // Tunes the patches [first, last) with one optimizer over their stacked
  // weight rows.
  std::vector<TuneLogEntry>
  tune_group(
    std::vector<PatchState>& states, const std::vector<Mat>& sources, size_t first,
    size_t last, int iterations, Rng& rng, const ConditionalDenoiser& denoiser,
    const NoiseSchedule& sched, const TuneConfig& cfg)
  {
    const size_t k = cfg.k;
    std::vector<size_t> offset{0};
    for (size_t p = first; p < last; ++p)
      offset.push_back(offset.back() + states[p].weights.num_seeds());
    Mat W(offset.back(), k);
    std::vector<char> frozen;
    for (size_t p = first; p < last; ++p) {
      const auto& w = states[p].weights;
      std::copy(
        w.weights.data.begin(), w.weights.data.end(),
        W.data.begin() + std::ptrdiff_t(offset[p - first] * k));
      frozen.insert(frozen.end(), w.frozen.begin(), w.frozen.end());
    }

    AdamState adam;
    std::vector<TuneLogEntry> log;
    const int n = int(last - first);
    for (int it = 0; it < iterations; ++it) {
      const int local = uniform_int(rng, 0, n - 1);
      const size_t p = first + size_t(local);
      const int t = uniform_int(rng, 1, sched.T);
      Mat x0 = random_sample(sources[p], cfg.sample_points, rng);
      Mat eps = normal_matrix(rng, x0.rows, 6);

      const size_t r0 = offset[size_t(local)], r1 = offset[size_t(local) + 1];
      Mat Wp(r1 - r0, k);
      std::copy(
        W.data.begin() + std::ptrdiff_t(r0 * k), W.data.begin() + std::ptrdiff_t(r1 * k),
        Wp.data.begin());

      ad::Tape tape;
      ad::Var wv = tape.input(std::move(Wp));
      ad::Var seeds =
        aggregate(wv, states[p].weights.neighbors, tape.constant(sources[p]));
      auto where = [&] {
        return " at iteration " + std::to_string(it) + " (patch " + std::to_string(p) +
          ", t=" + std::to_string(t) + ")";
      };
      ad::Var loss;
      try {
        loss = diffusion_loss(cfg.loss, tape, x0, seeds, t, eps, denoiser, sched);
      } catch (const Error& e) {
        if (e.code() != Errc::kNumericError)
          throw;
        throw Error(Errc::kNumericError, e.what() + where());
      }
      const double lv = loss.value()(0, 0);
      if (!std::isfinite(lv))
        throw Error(Errc::kNumericError, "non-finite loss" + where());
      tape.backward(loss);
      Mat gp = tape.grad(wv);
      Mat G(W.rows, k);
      std::copy(gp.data.begin(), gp.data.end(), G.data.begin() + std::ptrdiff_t(r0 * k));
      adam_step(W, adam, G, cfg.lr, frozen);
      log.push_back({it, int(p), t, lv});
    }

    for (size_t p = first; p < last; ++p) {
      auto& w = states[p].weights.weights;
      auto begin = W.data.begin() + std::ptrdiff_t(offset[p - first] * k);
      std::copy(begin, begin + std::ptrdiff_t(w.size()), w.data.begin());
    }
    return log;
  }

}  // namespace

TuneResult
tune(
  const Patches& patches, const ConditionalDenoiser& denoiser,
  const NoiseSchedule& sched, const TuneConfig& cfg)
{
  if (cfg.iterations < 0)
    throw Error(Errc::kInvalidArgument, "iterations must be >= 0");
  if (!(cfg.lr >= 0))
    throw Error(Errc::kInvalidArgument, "learning rate must be >= 0");
  if (cfg.sample_points < 1)
    throw Error(Errc::kInvalidArgument, "sample_points must be >= 1");

  TuneResult res;
  res.patches = init_patches(patches, cfg);
  const size_t n = res.patches.size();
  std::vector<Mat> sources;
  for (const auto& c : patches.clouds)
    sources.push_back(c.rows6());

  if (n > 0 && cfg.iterations > 0) {
    const size_t groups = std::min(n, size_t(std::max(1, cfg.jobs)));
    std::vector<std::vector<TuneLogEntry>> logs(groups);
    parallel_for(groups, int(groups), [&](size_t g) {
      const size_t first = g * n / groups, last = (g + 1) * n / groups;
      int iters = groups == 1
        ? cfg.iterations
        : int(std::lround(double(cfg.iterations) * double(last - first) / double(n)));
      Rng rng = make_rng(cfg.seed, groups == 1 ? 0 : g + 1);
      logs[g] = tune_group(
        res.patches, sources, first, last, iters, rng, denoiser, sched, cfg);
    });
    for (auto& l : logs)
      res.log.insert(res.log.end(), l.begin(), l.end());
  }

  for (size_t p = 0; p < n; ++p)
    res.seeds.push_back(aggregate(res.patches[p].weights, sources[p]));
  return res;
}

void
write_tune_csv(const std::vector<TuneLogEntry>& log, std::ostream& out)
{
  out << "iteration,patch,t,loss\n";
  out.precision(10);
  for (const auto& e : log)
    out << e.iteration << ',' << e.patch << ',' << e.t << ',' << e.loss << '\n';
}

}  // namespace spc
