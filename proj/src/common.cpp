#include <algorithm>
#include <cmath>

#include "spc/error.hpp"
#include "spc/rng.hpp"
#include "spc/tensor.hpp"

namespace spc {

const char*
to_string(Errc code)
{
  switch (code) {
  case Errc::kInvalidCloud: return "InvalidCloud";
  case Errc::kInvalidArgument: return "InvalidArgument";
  case Errc::kParseError: return "ParseError";
  case Errc::kIoError: return "IoError";
  case Errc::kEmptyIndex: return "EmptyIndex";
  case Errc::kInvalidLevel: return "InvalidLevel";
  case Errc::kEmptyPatch: return "EmptyPatch";
  case Errc::kDegenerateWeights: return "DegenerateWeights";
  case Errc::kUseAfterBackward: return "UseAfterBackward";
  case Errc::kDecodeError: return "DecodeError";
  case Errc::kUnsupportedStream: return "UnsupportedStream";
  case Errc::kNoOverlap: return "NoOverlap";
  case Errc::kNumericError: return "NumericError";
  }
  return "Unknown";
}

//----------------------------------------------------------------------------

Mat
gather_rows(const Mat& src, std::span<const int> idx)
{
  Mat out(idx.size(), src.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    auto s = src.row(size_t(idx[i]));
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

Mat
hconcat(const Mat& a, const Mat& b)
{
  assert(a.rows == b.rows);
  Mat out(a.rows, a.cols + b.cols);
  for (size_t r = 0; r < a.rows; ++r) {
    auto o = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), o.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), o.begin() + a.cols);
  }
  return out;
}

Mat
vconcat(const Mat& a, const Mat& b)
{
  if (a.empty())
    return b;
  if (b.empty())
    return a;
  assert(a.cols == b.cols);
  Mat out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
  return out;
}

double
max_abs_diff(const Mat& a, const Mat& b)
{
  assert(a.same_shape(b));
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

//----------------------------------------------------------------------------

Rng
make_rng(uint64_t root, uint64_t stream)
{
  std::seed_seq seq{
    uint32_t(root), uint32_t(root >> 32), uint32_t(stream),
    uint32_t(stream >> 32)};
  return Rng(seq);
}

int
uniform_int(Rng& rng, int lo, int hi)
{
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Mat
normal_matrix(Rng& rng, size_t rows, size_t cols)
{
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (auto& v : m.data)
    v = dist(rng);
  return m;
}

}  // namespace spc
