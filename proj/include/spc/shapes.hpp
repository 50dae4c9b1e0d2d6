#pragma once

#include <string_view>

#include "spc/pointset.hpp"

namespace spc {

enum class ShapeKind
{
  kSphere,
  kBox,
  kTorus,
};

enum class Coloring
{
  kGradient,   // rgb = (xyz + 1) / 2
  kChecker,    // two colors on a 0.25 lattice
};

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kSphere;
  double size = 1.0;   // sphere radius, box half-extent, torus outer radius
  Coloring coloring = Coloring::kGradient;
};

ShapeKind parse_shape(std::string_view name);

// Points uniformly distributed (by area) on the shape surface, centered at
// the origin.  size must be in (0, 1] so that gradient colors stay in range.
PointCloud synth_shape(const ShapeSpec& spec, size_t n_points, Rng& rng);

}  // namespace spc
