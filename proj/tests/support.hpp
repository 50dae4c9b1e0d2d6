#pragma once

// Shared helpers for the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "spc/autodiff.hpp"
#include "spc/rng.hpp"

namespace spc::testing {

using Traced = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct FdReport {
  size_t checked = 0;
  size_t failed = 0;
  double worst_abs = 0;     // largest |fd - grad|
  double worst_ratio = 0;   // largest |fd - grad| / tolerance
};

// Central finite differences of a traced scalar function against its tape
// gradient, one component at a time.  Every perturbed evaluation replays the
// integer selections (nearest neighbours) of the reference pass.  A component
// passes when |fd - grad| <= max(1e-6, 1e-4 |grad|).
inline FdReport
fd_check(const Traced& f, const std::vector<Mat>& inputs, double h = 1e-6)
{
  ad::Tape ref;
  std::vector<ad::Var> vars;
  for (const auto& m : inputs)
    vars.push_back(ref.input(m));
  ad::Var out = f(ref, vars);
  ref.backward(out);

  auto eval = [&](size_t which, size_t at, double delta) {
    ad::Tape tape;
    tape.replay_selections_from(ref);
    std::vector<ad::Var> v;
    for (size_t i = 0; i < inputs.size(); ++i) {
      Mat m = inputs[i];
      if (i == which)
        m.data[at] += delta;
      v.push_back(tape.constant(std::move(m)));
    }
    return f(tape, v).value()(0, 0);
  };

  FdReport r;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Mat g = ref.grad(vars[i]);
    for (size_t e = 0; e < inputs[i].size(); ++e) {
      double fd = (eval(i, e, h) - eval(i, e, -h)) / (2 * h);
      double err = std::abs(fd - g.data[e]);
      double tol = std::max(1e-6, 1e-4 * std::abs(g.data[e]));
      ++r.checked;
      if (err > tol)
        ++r.failed;
      r.worst_abs = std::max(r.worst_abs, err);
      r.worst_ratio = std::max(r.worst_ratio, err / tol);
    }
  }
  return r;
}

// Uniform matrix whose entries stay at least `gap` away from zero.
inline Mat
away_from_zero(Rng& rng, size_t rows, size_t cols, double gap = 0.2, double hi = 1.2)
{
  std::uniform_real_distribution<double> u(gap, hi);
  std::bernoulli_distribution sign(0.5);
  Mat m(rows, cols);
  for (auto& v : m.data)
    v = sign(rng) ? u(rng) : -u(rng);
  return m;
}

inline double
median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace spc::testing

namespace spc::testing {

// Brute-force symmetric Chamfer distance with unsquared distances over the
// first `dims` columns.
inline double
brute_chamfer(const Mat& a, const Mat& b, size_t dims)
{
  auto one_way = [dims](const Mat& p, const Mat& q) {
    double s = 0;
    for (size_t i = 0; i < p.rows; ++i) {
      double best = INFINITY;
      for (size_t j = 0; j < q.rows; ++j) {
        double d = 0;
        for (size_t k = 0; k < dims; ++k) {
          double e = p(i, k) - q(j, k);
          d += e * e;
        }
        best = std::min(best, d);
      }
      s += std::sqrt(best);
    }
    return s / double(p.rows);
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

}  // namespace spc::testing
