// Compiled with -mavx2 only; never called unless the CPU reports AVX2.

#include <immintrin.h>

#include "spc/kernels.hpp"

namespace spc::kernels::avx2 {

namespace {

  inline __m256d
  squared_distance4(const double* query, const Columns& pts, size_t i)
  {
    __m256d d = _mm256_sub_pd(
      _mm256_loadu_pd(pts.col[0] + i), _mm256_set1_pd(query[0]));
    __m256d s = _mm256_mul_pd(d, d);
    for (int k = 1; k < pts.dim; ++k) {
      d = _mm256_sub_pd(
        _mm256_loadu_pd(pts.col[k] + i), _mm256_set1_pd(query[k]));
      s = _mm256_add_pd(s, _mm256_mul_pd(d, d));
    }
    return s;
  }

  inline void
  axpy_row(double a, const double* b, double* c, size_t n)
  {
    const __m256d va = _mm256_set1_pd(a);
    size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d vc = _mm256_loadu_pd(c + j);
      __m256d vb = _mm256_loadu_pd(b + j);
      _mm256_storeu_pd(c + j, _mm256_add_pd(vc, _mm256_mul_pd(va, vb)));
    }
    for (; j < n; ++j)
      c[j] = c[j] + a * b[j];
  }

}  // namespace

void
squared_distances(
  const double* query, const Columns& pts, size_t begin, size_t end,
  double* out)
{
  size_t i = begin;
  for (; i + 4 <= end; i += 4)
    _mm256_storeu_pd(out + (i - begin), squared_distance4(query, pts, i));
  if (i < end)
    scalar::squared_distances(query, pts, i, end, out + (i - begin));
}

void
nearest_scan(
  const double* query, const Columns& pts, size_t begin, size_t end,
  Nearest& best)
{
  size_t i = begin;
  if (end - begin >= 4) {
    __m256d bd = _mm256_set1_pd(best.d2);
    __m256d bid = _mm256_set1_pd(best.id);
    for (; i + 4 <= end; i += 4) {
      __m256d s = squared_distance4(query, pts, i);
      __m256d id = _mm256_loadu_pd(pts.id + i);
      __m256d lt = _mm256_cmp_pd(s, bd, _CMP_LT_OQ);
      __m256d eq = _mm256_and_pd(
        _mm256_cmp_pd(s, bd, _CMP_EQ_OQ), _mm256_cmp_pd(id, bid, _CMP_LT_OQ));
      __m256d take = _mm256_or_pd(lt, eq);
      bd = _mm256_blendv_pd(bd, s, take);
      bid = _mm256_blendv_pd(bid, id, take);
    }
    alignas(32) double lane_d[4];
    alignas(32) double lane_id[4];
    _mm256_store_pd(lane_d, bd);
    _mm256_store_pd(lane_id, bid);
    for (int l = 0; l < 4; ++l) {
      if (lane_d[l] < best.d2 || (lane_d[l] == best.d2 && lane_id[l] < best.id))
        best = {lane_d[l], lane_id[l]};
    }
  }
  if (i < end)
    scalar::nearest_scan(query, pts, i, end, best);
}

void
axpby(double a, const double* x, double b, const double* y, double* out, size_t n)
{
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(ax, by));
  }
  if (i < n)
    scalar::axpby(a, x + i, b, y + i, out + i, n - i);
}

void
gemm_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  for (size_t i = 0; i < M; ++i)
    for (size_t k = 0; k < K; ++k)
      axpy_row(A[i * K + k], B + k * N, C + i * N, N);
}

void
gemm_tn_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  for (size_t m = 0; m < M; ++m)
    for (size_t k = 0; k < K; ++k)
      axpy_row(A[m * K + k], B + m * N, C + k * N, N);
}

}  // namespace spc::kernels::avx2
