#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>

#include "spc/rng.hpp"
#include "spc/tensor.hpp"

namespace spc {

//============================================================================
// Colored point cloud: N x 3 positions and N x 3 colors in [0, 1].  The
// constructor enforces finiteness, matching row counts and the color range.

class PointCloud {
public:
  PointCloud() : positions_(0, 3), colors_(0, 3) {}
  PointCloud(Mat positions, Mat colors);

  // Splits an N x 6 (xyz, rgb) matrix.
  static PointCloud from_rows(const Mat& rows6);

  size_t size() const { return positions_.rows; }
  bool empty() const { return positions_.rows == 0; }

  const Mat& positions() const { return positions_; }
  const Mat& colors() const { return colors_; }

  // N x 6 (xyz, rgb), the representation used by the diffusion path.
  Mat rows6() const;

  PointCloud select(std::span<const int> rows) const;

  bool operator==(const PointCloud&) const = default;

private:
  Mat positions_;
  Mat colors_;
};

PointCloud concat(const PointCloud& a, const PointCloud& b);

struct NormalizationScale {
  std::array<double, 3> center{0, 0, 0};
  double radius = 1;
  bool operator==(const NormalizationScale&) const = default;
};

constexpr double kMinRadius = 1e-12;

// Center = AABB midpoint, radius = max distance to the center (clamped to
// kMinRadius); output positions lie in the closed unit ball.
std::pair<PointCloud, NormalizationScale> normalize(const PointCloud& cloud);

// Applies a known scale (x - c) / r, e.g. to a reference cloud at decode.
PointCloud apply_scale(const PointCloud& cloud, const NormalizationScale& s);

// positions * r + c; colors untouched.
PointCloud denormalize(const PointCloud& cloud, const NormalizationScale& s);

// m distinct rows when m <= N, otherwise m rows drawn with replacement.
std::vector<int> random_sample_rows(size_t n, size_t m, Rng& rng);
PointCloud random_sample(const PointCloud& cloud, size_t m, Rng& rng);
Mat random_sample(const Mat& rows, size_t m, Rng& rng);

// 8-bit conversion at I/O boundaries, round-half-up.
uint8_t to_u8(double c);
double from_u8(uint8_t v);

//============================================================================
// PLY: ascii and binary_little_endian 1.0, vertex x,y,z (+ red,green,blue).

enum class PlyFormat
{
  kAscii,
  kBinaryLittleEndian,
};

struct PlyReadResult {
  PointCloud cloud;
  // No red/green/blue properties: colors were filled with white.
  bool colors_missing = false;
};

PlyReadResult read_ply(std::istream& in);
PlyReadResult load_ply(const std::filesystem::path& path);

void write_ply(const PointCloud& cloud, std::ostream& out, PlyFormat format);
void save_ply(
  const PointCloud& cloud, const std::filesystem::path& path,
  PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace spc
