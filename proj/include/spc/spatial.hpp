#pragma once

#include <span>
#include <vector>

#include "spc/kernels.hpp"
#include "spc/tensor.hpp"

namespace spc {

struct Neighbor {
  int row;
  double distance;

  bool operator==(const Neighbor&) const = default;
};

//============================================================================
// Balanced kd-tree over the rows of an N x D matrix (1 <= D <= 8).  Leaves
// keep their points in structure-of-arrays form so that leaf scans go
// through the SIMD distance kernels.  Ties are always broken by the lower
// row index, so results equal a brute-force scan exactly.

class KdIndex {
public:
  explicit KdIndex(const Mat& points, int leaf_size = 16);

  size_t size() const { return n_; }
  int dim() const { return dim_; }

  // k nearest rows, ascending by distance.  When fewer than k rows exist the
  // nearest row is repeated to reach k.
  std::vector<Neighbor> knn(std::span<const double> query, size_t k) const;

  Neighbor nearest(std::span<const double> query) const;

  // All rows within `radius` (inclusive), ascending by distance.
  std::vector<Neighbor> within(std::span<const double> query, double radius) const;

  // Exactly k rows: up to k rows within `radius`, padded by repeating the
  // first one found; an empty ball falls back to knn.
  std::vector<int> ball_query(
    std::span<const double> query, size_t k, double radius) const;

private:
  struct Node {
    int begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);
  kernels::Columns columns() const;
  void check_query(std::span<const double> query) const;

  size_t n_ = 0;
  int dim_ = 0;
  int leaf_size_;
  std::vector<int> order_;                  // tree position -> row
  std::vector<std::vector<double>> cols_;   // SoA in tree order
  std::vector<double> ids_;                 // row index as double, tree order
  std::vector<Node> nodes_;
  const Mat* build_src_ = nullptr;
};

// Nearest row of `reference` for every row of `queries` (same column count).
// Brute-force SIMD scan for small inputs, kd-tree otherwise; identical
// results either way.  Optional squared distances.
std::vector<int> nearest_rows(
  const Mat& queries, const Mat& reference, std::vector<double>* d2 = nullptr);

// Greedy max-min selection over the rows of `points`.  Starts from the rows
// in `initial` (which are included first, in order) or from `start`.
std::vector<int> farthest_point_sample(const Mat& points, size_t m, int start);
std::vector<int> farthest_point_sample(
  const Mat& points, size_t m, std::span<const int> initial);

struct NormalEstimate {
  Mat normals;                    // N x 3, unit length
  std::vector<bool> degenerate;   // neighborhood rank < 2, normal = (0,0,1)
};

// PCA normal: eigenvector of the smallest eigenvalue of the k-NN covariance.
NormalEstimate estimate_normals(const Mat& positions, size_t k);

}  // namespace spc
