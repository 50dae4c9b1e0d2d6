#include "spc/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spc/error.hpp"

namespace spc {

ShapeKind
parse_shape(std::string_view name)
{
  if (name == "sphere")
    return ShapeKind::kSphere;
  if (name == "box")
    return ShapeKind::kBox;
  if (name == "torus")
    return ShapeKind::kTorus;
  throw Error(Errc::kInvalidArgument, "unknown shape '" + std::string(name) + "'");
}

PointCloud
synth_shape(const ShapeSpec& spec, size_t n, Rng& rng)
{
  if (n < 1)
    throw Error(Errc::kInvalidArgument, "synth_shape needs n_points >= 1");
  if (!(spec.size > 0 && spec.size <= 1))
    throw Error(Errc::kInvalidArgument, "shape size must lie in (0, 1]");

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s = spec.size;
  constexpr double kTwoPi = 2 * std::numbers::pi;

  Mat pos(n, 3);
  for (size_t i = 0; i < n; ++i) {
    double x = 0, y = 0, z = 0;
    switch (spec.kind) {
    case ShapeKind::kSphere: {
      double nrm = 0;
      while (nrm < 1e-12) {
        x = gauss(rng);
        y = gauss(rng);
        z = gauss(rng);
        nrm = std::sqrt(x * x + y * y + z * z);
      }
      x = x / nrm * s;
      y = y / nrm * s;
      z = z / nrm * s;
      break;
    }
    case ShapeKind::kBox: {
      int face = uniform_int(rng, 0, 5);
      double a = (2 * u01(rng) - 1) * s, b = (2 * u01(rng) - 1) * s;
      double side = (face & 1) ? s : -s;
      switch (face / 2) {
      case 0: x = side; y = a; z = b; break;
      case 1: x = a; y = side; z = b; break;
      default: x = a; y = b; z = side; break;
      }
      break;
    }
    case ShapeKind::kTorus: {
      // Tube radius r, ring radius R with R + r = size.  Area element is
      // proportional to R + r cos(phi): rejection-sample phi.
      const double r = 0.3 * s, R = 0.7 * s;
      double theta = kTwoPi * u01(rng), phi;
      do {
        phi = kTwoPi * u01(rng);
      } while (u01(rng) * (R + r) > R + r * std::cos(phi));
      x = (R + r * std::cos(phi)) * std::cos(theta);
      y = (R + r * std::cos(phi)) * std::sin(theta);
      z = r * std::sin(phi);
      break;
    }
    }
    pos(i, 0) = x;
    pos(i, 1) = y;
    pos(i, 2) = z;
  }

  Mat col(n, 3);
  for (size_t i = 0; i < n; ++i) {
    if (spec.coloring == Coloring::kGradient) {
      for (size_t k = 0; k < 3; ++k)
        col(i, k) = std::clamp((pos(i, k) + 1) / 2, 0.0, 1.0);
    } else {
      long cell = 0;
      for (size_t k = 0; k < 3; ++k)
        cell += long(std::floor(pos(i, k) / 0.25));
      bool odd = (cell % 2) != 0;
      col(i, 0) = odd ? 0.9 : 0.2;
      col(i, 1) = odd ? 0.2 : 0.3;
      col(i, 2) = odd ? 0.2 : 0.9;
    }
  }
  return PointCloud(std::move(pos), std::move(col));
}

}  // namespace spc
