#pragma once

#include <vector>

#include "spc/pointset.hpp"

namespace spc {

constexpr int kMaxLevel = 10;

//============================================================================
// Voxel patch division of the normalized box [-1, 1]^3 into an l^3 grid.
// Cell index = ix + iy*l + iz*l^2, ix = clamp(floor((x + 1) / 2 * l), 0, l-1);
// canonical cell order is ascending cell index.

struct PatchGrid {
  int level = 1;
  std::vector<int> cell_of_point;   // N
  std::vector<int> counts;          // l^3, num_i
  std::vector<int> occupied;        // ascending cell index

  size_t num_cells() const { return counts.size(); }
};

struct Patches {
  PatchGrid grid;
  std::vector<PointCloud> clouds;         // one per occupied cell, same order
  std::vector<std::vector<int>> rows;     // source rows of each patch
};

int cell_coord(double x, int level);
int cell_index(double x, double y, double z, int level);
std::array<double, 3> cell_center(int cell, int level);

PatchGrid assign_cells(const Mat& positions, int level);
Patches divide(const PointCloud& cloud, int level);

// Smallest l in [1, 10] with n / l^3 <= target (10 if none).
constexpr int kDefaultPointsPerPatch = 8 * 3072;
int select_level(size_t n_points, size_t target = kDefaultPointsPerPatch);

}  // namespace spc
