#include "spc/kernels.hpp"

namespace spc::kernels::scalar {

void
squared_distances(
  const double* query, const Columns& pts, size_t begin, size_t end,
  double* out)
{
  for (size_t i = begin; i < end; ++i) {
    double d = pts.col[0][i] - query[0];
    double s = d * d;
    for (int k = 1; k < pts.dim; ++k) {
      d = pts.col[k][i] - query[k];
      s = s + d * d;
    }
    out[i - begin] = s;
  }
}

void
nearest_scan(
  const double* query, const Columns& pts, size_t begin, size_t end,
  Nearest& best)
{
  for (size_t i = begin; i < end; ++i) {
    double d = pts.col[0][i] - query[0];
    double s = d * d;
    for (int k = 1; k < pts.dim; ++k) {
      d = pts.col[k][i] - query[k];
      s = s + d * d;
    }
    double id = pts.id[i];
    if (s < best.d2 || (s == best.d2 && id < best.id))
      best = {s, id};
  }
}

void
axpby(double a, const double* x, double b, const double* y, double* out, size_t n)
{
  for (size_t i = 0; i < n; ++i) {
    double ax = a * x[i];
    double by = b * y[i];
    out[i] = ax + by;
  }
}

void
gemm_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  for (size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    for (size_t k = 0; k < K; ++k) {
      const double a = A[i * K + k];
      const double* b = B + k * N;
      for (size_t j = 0; j < N; ++j)
        c[j] = c[j] + a * b[j];
    }
  }
}

void
gemm_tn_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  for (size_t m = 0; m < M; ++m) {
    const double* b = B + m * N;
    for (size_t k = 0; k < K; ++k) {
      const double a = A[m * K + k];
      double* c = C + k * N;
      for (size_t j = 0; j < N; ++j)
        c[j] = c[j] + a * b[j];
    }
  }
}

}  // namespace spc::kernels::scalar
