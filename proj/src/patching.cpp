#include "spc/patching.hpp"

#include <algorithm>
#include <cmath>

#include "spc/error.hpp"

namespace spc {

namespace {

  void
  check_level(int level)
  {
    if (level < 1 || level > kMaxLevel)
      throw Error(
        Errc::kInvalidLevel,
        "patch level must lie in [1, 10], got " + std::to_string(level));
  }

}  // namespace

int
cell_coord(double x, int level)
{
  double v = std::floor((x + 1.0) / 2.0 * level);
  return int(std::clamp(v, 0.0, double(level - 1)));
}

int
cell_index(double x, double y, double z, int level)
{
  return cell_coord(x, level) + cell_coord(y, level) * level +
    cell_coord(z, level) * level * level;
}

std::array<double, 3>
cell_center(int cell, int level)
{
  int ix = cell % level, iy = (cell / level) % level, iz = cell / (level * level);
  auto c = [&](int i) { return (i + 0.5) / level * 2.0 - 1.0; };
  return {c(ix), c(iy), c(iz)};
}

PatchGrid
assign_cells(const Mat& positions, int level)
{
  check_level(level);
  constexpr double kSlack = 1e-9;
  PatchGrid g;
  g.level = level;
  g.counts.assign(size_t(level) * level * level, 0);
  g.cell_of_point.resize(positions.rows);
  for (size_t i = 0; i < positions.rows; ++i) {
    for (int k = 0; k < 3; ++k) {
      double v = positions(i, size_t(k));
      if (!(v >= -1.0 - kSlack && v <= 1.0 + kSlack))
        throw Error(
          Errc::kInvalidArgument, "patch division expects normalized positions");
    }
    int c = cell_index(positions(i, 0), positions(i, 1), positions(i, 2), level);
    g.cell_of_point[i] = c;
    ++g.counts[size_t(c)];
  }
  for (int c = 0; c < int(g.counts.size()); ++c)
    if (g.counts[size_t(c)] > 0)
      g.occupied.push_back(c);
  return g;
}

Patches
divide(const PointCloud& cloud, int level)
{
  Patches p;
  p.grid = assign_cells(cloud.positions(), level);

  std::vector<int> slot(p.grid.num_cells(), -1);
  for (size_t i = 0; i < p.grid.occupied.size(); ++i)
    slot[size_t(p.grid.occupied[i])] = int(i);
  p.rows.resize(p.grid.occupied.size());
  for (size_t i = 0; i < cloud.size(); ++i)
    p.rows[size_t(slot[size_t(p.grid.cell_of_point[i])])].push_back(int(i));
  for (const auto& r : p.rows)
    p.clouds.push_back(cloud.select(r));
  return p;
}

int
select_level(size_t n_points, size_t target)
{
  if (n_points < 1)
    throw Error(Errc::kInvalidArgument, "select_level requires n_points >= 1");
  for (int l = 1; l <= kMaxLevel; ++l)
    if (double(n_points) / double(l * l * l) <= double(target))
      return l;
  return kMaxLevel;
}

}  // namespace spc
