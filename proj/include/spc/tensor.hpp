#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace spc {

//============================================================================
// Dense row-major matrix of doubles.  Used for point rows (M x 6), network
// activations and seed weights alike.

struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill)
  {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const
  {
    return {data.data() + r * cols, cols};
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Mat& o) const = default;
};

// Rows of `src` selected by `idx`, in order.
Mat gather_rows(const Mat& src, std::span<const int> idx);

// Column-wise concatenation [a | b]; both must have the same row count.
Mat hconcat(const Mat& a, const Mat& b);

// Vertical concatenation.
Mat vconcat(const Mat& a, const Mat& b);

double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace spc
