#pragma once

#include <span>

#include "spc/tensor.hpp"

namespace spc {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Mat m;
  Mat v;
  int step = 0;
};

// One bias-corrected Adam update of `param`.  Rows flagged in `frozen` keep
// their parameters and moments untouched.
void adam_step(
  Mat& param, AdamState& state, const Mat& grad, double lr,
  std::span<const char> frozen = {}, const AdamHyper& h = {});

}  // namespace spc
