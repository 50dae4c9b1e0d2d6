#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "spc/pointset.hpp"
#include "spc/tuning.hpp"

namespace spc {

double bpp(uint64_t bits, size_t n_points);

enum class GeometryMode
{
  kD1,   // point to point
  kD2,   // point to plane, normals of the reference cloud
};

enum class PsnrFormula
{
  kMpeg,    // 10 log10(3 res^2 / Dis), squared errors
  kPaper,   // 10 log10(res / Dis), unsquared errors
};

PsnrFormula parse_psnr_formula(std::string_view name);
std::string_view to_string(PsnrFormula f);

struct GeometryError {
  double dis = 0;         // two-way mean error
  double peak = 0;
  double psnr = 0;        // +inf when dis == 0
};

constexpr size_t kNormalNeighbors = 16;

// Intrinsic resolution: max over the cloud of the distance to its nearest
// other point.
double intrinsic_resolution(const Mat& positions);

GeometryError geometry_error(
  const PointCloud& gt, const PointCloud& rec, GeometryMode mode,
  PsnrFormula formula = PsnrFormula::kMpeg);
double psnr_geometry(
  const PointCloud& gt, const PointCloud& rec, GeometryMode mode,
  PsnrFormula formula = PsnrFormula::kMpeg);

// Full-range BT.601 on 8-bit values.
std::array<double, 3> rgb_to_yuv(double r, double g, double b);

struct ColorError {
  double dis = 0;
  double psnr = 0;
};

ColorError color_error(const PointCloud& gt, const PointCloud& rec);
double psnr_color(const PointCloud& gt, const PointCloud& rec);

//----------------------------------------------------------------------------

struct RdPoint {
  double bpp;
  double psnr;
};
using RdCurve = std::vector<RdPoint>;

// Average PSNR gap of `test` over `reference` across the overlap of their
// log10(bpp) ranges, from cubic least-squares fits.
double bd_psnr(const RdCurve& reference, const RdCurve& test);

// Coefficients c0..c3 of the cubic least-squares fit psnr(log10 bpp).
std::array<double, 4> fit_cubic(const RdCurve& curve);

// Chamfer distance over positions only, as used in reports.
double chamfer(const PointCloud& a, const PointCloud& b);

}  // namespace spc
