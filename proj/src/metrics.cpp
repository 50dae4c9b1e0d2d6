#include "spc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "spc/error.hpp"
#include "spc/spatial.hpp"

namespace spc {

namespace {

  constexpr double kInf = std::numeric_limits<double>::infinity();

  void
  check_clouds(const PointCloud& a, const PointCloud& b)
  {
    if (a.empty() || b.empty())
      throw Error(Errc::kInvalidArgument, "metrics need non-empty clouds");
  }

  // Mean over `from` of the error to its nearest point in `to`.
  // D2 projects onto the normal of the gt point on either side of the match.
  double
  one_way(const PointCloud& from, const PointCloud& to, GeometryMode mode,
          PsnrFormula formula, const NormalEstimate* normals, bool normals_of_from)
  {
    std::vector<double> d2;
    auto nn = nearest_rows(from.positions(), to.positions(), &d2);
    double s = 0;
    for (size_t i = 0; i < nn.size(); ++i) {
      double e;
      if (mode == GeometryMode::kD1) {
        e = d2[i];
      } else {
        size_t j = size_t(nn[i]);
        size_t owner = normals_of_from ? i : j;
        double dot = 0;
        for (size_t d = 0; d < 3; ++d)
          dot += (from.positions()(i, d) - to.positions()(j, d)) *
            normals->normals(owner, d);
        e = dot * dot;
      }
      s += formula == PsnrFormula::kPaper ? std::sqrt(e) : e;
    }
    return s / double(from.size());
  }

}  // namespace

double
bpp(uint64_t bits, size_t n_points)
{
  if (n_points < 1)
    throw Error(Errc::kInvalidArgument, "bpp needs N >= 1");
  return double(bits) / double(n_points);
}

PsnrFormula
parse_psnr_formula(std::string_view name)
{
  if (name == "mpeg")
    return PsnrFormula::kMpeg;
  if (name == "paper")
    return PsnrFormula::kPaper;
  throw Error(Errc::kInvalidArgument, "unknown PSNR formula '" + std::string(name) + "'");
}

std::string_view
to_string(PsnrFormula f)
{
  return f == PsnrFormula::kMpeg ? "mpeg" : "paper";
}

double
intrinsic_resolution(const Mat& positions)
{
  if (positions.rows < 2)
    return 0;
  KdIndex index(positions);
  double res = 0;
  for (size_t i = 0; i < positions.rows; ++i) {
    auto nb = index.knn(positions.row(i), 2);
    res = std::max(res, nb[1].distance);
  }
  return res;
}

GeometryError
geometry_error(
  const PointCloud& gt, const PointCloud& rec, GeometryMode mode, PsnrFormula formula)
{
  check_clouds(gt, rec);
  NormalEstimate gt_n;
  if (mode == GeometryMode::kD2) {
    if (gt.size() < 3)
      throw Error(Errc::kInvalidArgument, "point-to-plane error needs >= 3 gt points");
    gt_n = estimate_normals(gt.positions(), std::min(kNormalNeighbors, gt.size()));
  }
  GeometryError g;
  g.dis = 0.5 * (one_way(rec, gt, mode, formula, &gt_n, false) +
                 one_way(gt, rec, mode, formula, &gt_n, true));
  double res = intrinsic_resolution(gt.positions());
  g.peak = formula == PsnrFormula::kPaper ? res : 3 * res * res;
  g.psnr = g.dis == 0 ? kInf : 10 * std::log10(g.peak / g.dis);
  return g;
}

double
psnr_geometry(
  const PointCloud& gt, const PointCloud& rec, GeometryMode mode, PsnrFormula formula)
{
  return geometry_error(gt, rec, mode, formula).psnr;
}

std::array<double, 3>
rgb_to_yuv(double r, double g, double b)
{
  return {
    0.299 * r + 0.587 * g + 0.114 * b,
    -0.168736 * r - 0.331264 * g + 0.5 * b + 128,
    0.5 * r - 0.418688 * g - 0.081312 * b + 128,
  };
}

namespace {

  std::vector<std::array<double, 3>>
  yuv_of(const PointCloud& c)
  {
    std::vector<std::array<double, 3>> out(c.size());
    for (size_t i = 0; i < c.size(); ++i)
      out[i] = rgb_to_yuv(
        to_u8(c.colors()(i, 0)), to_u8(c.colors()(i, 1)), to_u8(c.colors()(i, 2)));
    return out;
  }

  double
  one_way_color(
    const PointCloud& from, const std::vector<std::array<double, 3>>& from_yuv,
    const PointCloud& to, const std::vector<std::array<double, 3>>& to_yuv)
  {
    auto nn = nearest_rows(from.positions(), to.positions());
    double s = 0;
    for (size_t i = 0; i < nn.size(); ++i) {
      double e = 0;
      for (size_t ch = 0; ch < 3; ++ch) {
        double d = from_yuv[i][ch] - to_yuv[size_t(nn[i])][ch];
        e += d * d;
      }
      s += e / 3;
    }
    return s / double(from.size());
  }

}  // namespace

ColorError
color_error(const PointCloud& gt, const PointCloud& rec)
{
  check_clouds(gt, rec);
  auto gy = yuv_of(gt), ry = yuv_of(rec);
  ColorError c;
  c.dis = 0.5 * (one_way_color(rec, ry, gt, gy) + one_way_color(gt, gy, rec, ry));
  c.psnr = c.dis == 0 ? kInf : 10 * std::log10(255.0 * 255.0 / c.dis);
  return c;
}

double
psnr_color(const PointCloud& gt, const PointCloud& rec)
{
  return color_error(gt, rec).psnr;
}

//----------------------------------------------------------------------------

std::array<double, 4>
fit_cubic(const RdCurve& curve)
{
  if (curve.size() < 4)
    throw Error(Errc::kInvalidArgument, "BD fit needs at least 4 points");
  Eigen::MatrixXd A(curve.size(), 4);
  Eigen::VectorXd y(curve.size());
  for (size_t i = 0; i < curve.size(); ++i) {
    if (!(curve[i].bpp > 0) || !std::isfinite(curve[i].psnr))
      throw Error(Errc::kInvalidArgument, "RD points need bpp > 0 and finite PSNR");
    double x = std::log10(curve[i].bpp);
    A(Eigen::Index(i), 0) = 1;
    A(Eigen::Index(i), 1) = x;
    A(Eigen::Index(i), 2) = x * x;
    A(Eigen::Index(i), 3) = x * x * x;
    y(Eigen::Index(i)) = curve[i].psnr;
  }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  return {c(0), c(1), c(2), c(3)};
}

namespace {

  double
  integral(const std::array<double, 4>& c, double a, double b)
  {
    auto prim = [&](double x) {
      return c[0] * x + c[1] * x * x / 2 + c[2] * x * x * x / 3 + c[3] * x * x * x * x / 4;
    };
    return prim(b) - prim(a);
  }

  std::pair<double, double>
  log_range(const RdCurve& c)
  {
    double lo = kInf, hi = -kInf;
    for (const auto& p : c) {
      lo = std::min(lo, std::log10(p.bpp));
      hi = std::max(hi, std::log10(p.bpp));
    }
    return {lo, hi};
  }

}  // namespace

double
bd_psnr(const RdCurve& reference, const RdCurve& test)
{
  auto cr = fit_cubic(reference), ct = fit_cubic(test);
  auto [rl, rh] = log_range(reference);
  auto [tl, th] = log_range(test);
  double lo = std::max(rl, tl), hi = std::min(rh, th);
  if (!(hi > lo))
    throw Error(Errc::kNoOverlap, "rate ranges do not overlap");
  return (integral(ct, lo, hi) - integral(cr, lo, hi)) / (hi - lo);
}

double
chamfer(const PointCloud& a, const PointCloud& b)
{
  return loss_cd(a.positions(), b.positions());
}

}  // namespace spc
