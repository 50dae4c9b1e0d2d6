#include "spc/optim.hpp"

#include <cmath>

#include "spc/error.hpp"

namespace spc {

void
adam_step(
  Mat& param, AdamState& st, const Mat& grad, double lr,
  std::span<const char> frozen, const AdamHyper& h)
{
  if (!param.same_shape(grad))
    throw Error(Errc::kInvalidArgument, "adam_step: gradient shape mismatch");
  if (!frozen.empty() && frozen.size() != param.rows)
    throw Error(Errc::kInvalidArgument, "adam_step: frozen mask size mismatch");
  if (st.m.empty()) {
    st.m = Mat(param.rows, param.cols);
    st.v = Mat(param.rows, param.cols);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(h.beta1, st.step);
  const double c2 = 1.0 - std::pow(h.beta2, st.step);
  for (size_t r = 0; r < param.rows; ++r) {
    if (!frozen.empty() && frozen[r])
      continue;
    for (size_t c = 0; c < param.cols; ++c) {
      size_t i = r * param.cols + c;
      double g = grad.data[i];
      st.m.data[i] = h.beta1 * st.m.data[i] + (1 - h.beta1) * g;
      st.v.data[i] = h.beta2 * st.v.data[i] + (1 - h.beta2) * g * g;
      double mhat = st.m.data[i] / c1;
      double vhat = st.v.data[i] / c2;
      param.data[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

}  // namespace spc
