#include "spc/pointset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spc/error.hpp"

namespace spc {

PointCloud::PointCloud(Mat positions, Mat colors)
  : positions_(std::move(positions)), colors_(std::move(colors))
{
  if (positions_.cols != 3 || colors_.cols != 3)
    throw Error(Errc::kInvalidCloud, "positions and colors must have 3 columns");
  if (positions_.rows != colors_.rows)
    throw Error(Errc::kInvalidCloud, "positions and colors row counts differ");
  for (double v : positions_.data)
    if (!std::isfinite(v))
      throw Error(Errc::kInvalidCloud, "non-finite coordinate");
  for (double v : colors_.data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw Error(Errc::kInvalidCloud, "color component outside [0,1]");
}

PointCloud
PointCloud::from_rows(const Mat& rows6)
{
  if (rows6.cols != 6)
    throw Error(Errc::kInvalidCloud, "expected N x 6 rows");
  Mat p(rows6.rows, 3), c(rows6.rows, 3);
  for (size_t i = 0; i < rows6.rows; ++i)
    for (int k = 0; k < 3; ++k) {
      p(i, k) = rows6(i, k);
      c(i, k) = rows6(i, k + 3);
    }
  return PointCloud(std::move(p), std::move(c));
}

Mat
PointCloud::rows6() const
{
  return hconcat(positions_, colors_);
}

PointCloud
PointCloud::select(std::span<const int> rows) const
{
  PointCloud out;
  out.positions_ = gather_rows(positions_, rows);
  out.colors_ = gather_rows(colors_, rows);
  return out;
}

PointCloud
concat(const PointCloud& a, const PointCloud& b)
{
  return PointCloud(
    vconcat(a.positions(), b.positions()), vconcat(a.colors(), b.colors()));
}

//----------------------------------------------------------------------------

std::pair<PointCloud, NormalizationScale>
normalize(const PointCloud& cloud)
{
  if (cloud.empty())
    throw Error(Errc::kInvalidCloud, "cannot normalize an empty cloud");

  const Mat& p = cloud.positions();
  std::array<double, 3> lo{p(0, 0), p(0, 1), p(0, 2)};
  std::array<double, 3> hi = lo;
  for (size_t i = 1; i < p.rows; ++i)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p(i, k));
      hi[k] = std::max(hi[k], p(i, k));
    }

  NormalizationScale s;
  for (int k = 0; k < 3; ++k)
    s.center[k] = 0.5 * (lo[k] + hi[k]);

  double r2 = 0;
  for (size_t i = 0; i < p.rows; ++i) {
    double d2 = 0;
    for (int k = 0; k < 3; ++k)
      d2 += (p(i, k) - s.center[k]) * (p(i, k) - s.center[k]);
    r2 = std::max(r2, d2);
  }
  s.radius = std::max(std::sqrt(r2), kMinRadius);

  PointCloud out = apply_scale(cloud, s);
  return {std::move(out), s};
}

PointCloud
apply_scale(const PointCloud& cloud, const NormalizationScale& s)
{
  Mat p = cloud.positions();
  for (size_t i = 0; i < p.rows; ++i)
    for (int k = 0; k < 3; ++k)
      p(i, k) = (p(i, k) - s.center[k]) / s.radius;
  return PointCloud(std::move(p), cloud.colors());
}

PointCloud
denormalize(const PointCloud& cloud, const NormalizationScale& s)
{
  if (!(s.radius > 0))
    throw Error(Errc::kInvalidArgument, "normalization radius must be > 0");
  Mat p = cloud.positions();
  for (size_t i = 0; i < p.rows; ++i)
    for (int k = 0; k < 3; ++k)
      p(i, k) = p(i, k) * s.radius + s.center[k];
  return PointCloud(std::move(p), cloud.colors());
}

//----------------------------------------------------------------------------

std::vector<int>
random_sample_rows(size_t n, size_t m, Rng& rng)
{
  if (m == 0)
    throw Error(Errc::kInvalidArgument, "sample size must be >= 1");
  if (n == 0)
    throw Error(Errc::kInvalidCloud, "cannot sample from an empty cloud");

  std::vector<int> out;
  out.reserve(m);
  if (m <= n) {
    // Partial Fisher-Yates.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (size_t i = 0; i < m; ++i) {
      size_t j = i + size_t(uniform_int(rng, 0, int(n - 1 - i)));
      std::swap(perm[i], perm[j]);
      out.push_back(perm[i]);
    }
  } else {
    for (size_t i = 0; i < m; ++i)
      out.push_back(uniform_int(rng, 0, int(n - 1)));
  }
  return out;
}

PointCloud
random_sample(const PointCloud& cloud, size_t m, Rng& rng)
{
  auto rows = random_sample_rows(cloud.size(), m, rng);
  return cloud.select(rows);
}

Mat
random_sample(const Mat& rows, size_t m, Rng& rng)
{
  auto idx = random_sample_rows(rows.rows, m, rng);
  return gather_rows(rows, idx);
}

uint8_t
to_u8(double c)
{
  double v = std::floor(std::clamp(c, 0.0, 1.0) * 255.0 + 0.5);
  return uint8_t(std::min(v, 255.0));
}

double
from_u8(uint8_t v)
{
  return double(v) / 255.0;
}

}  // namespace spc
