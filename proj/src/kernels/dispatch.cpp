#include <cstdlib>
#include <cstring>

#include "spc/error.hpp"
#include "spc/kernels.hpp"

namespace spc::kernels {

namespace {

  struct Table {
    Backend backend;
    decltype(&scalar::squared_distances) squared_distances;
    decltype(&scalar::nearest_scan) nearest_scan;
    decltype(&scalar::axpby) axpby;
    decltype(&scalar::gemm_acc) gemm_acc;
    decltype(&scalar::gemm_tn_acc) gemm_tn_acc;
  };

  constexpr Table kScalarTable{
    Backend::kScalar,     scalar::squared_distances, scalar::nearest_scan,
    scalar::axpby,        scalar::gemm_acc,          scalar::gemm_tn_acc};

#if defined(SPC_HAVE_AVX2)
  constexpr Table kAvx2Table{
    Backend::kAvx2,     avx2::squared_distances, avx2::nearest_scan,
    avx2::axpby,        avx2::gemm_acc,          avx2::gemm_tn_acc};
#endif

  const Table&
  table_for(Backend b)
  {
#if defined(SPC_HAVE_AVX2)
    if (b == Backend::kAvx2)
      return kAvx2Table;
#endif
    return kScalarTable;
  }

  Backend
  initial_backend()
  {
    const char* env = std::getenv("SPC_KERNELS");
    if (env && std::strcmp(env, "scalar") == 0)
      return Backend::kScalar;
    return available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
  }

  const Table*&
  current()
  {
    static const Table* t = &table_for(initial_backend());
    return t;
  }

}  // namespace

const char*
to_string(Backend b)
{
  return b == Backend::kAvx2 ? "avx2" : "scalar";
}

bool
available(Backend b)
{
  if (b == Backend::kScalar)
    return true;
#if defined(SPC_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend
active()
{
  return current()->backend;
}

void
select(Backend b)
{
  if (!available(b))
    throw Error(
      Errc::kInvalidArgument,
      std::string("kernel backend not available: ") + to_string(b));
  current() = &table_for(b);
}

void
squared_distances(
  const double* query, const Columns& pts, size_t begin, size_t end,
  double* out)
{
  current()->squared_distances(query, pts, begin, end, out);
}

void
nearest_scan(
  const double* query, const Columns& pts, size_t begin, size_t end,
  Nearest& best)
{
  current()->nearest_scan(query, pts, begin, end, best);
}

void
axpby(double a, const double* x, double b, const double* y, double* out, size_t n)
{
  current()->axpby(a, x, b, y, out, n);
}

void
gemm_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  current()->gemm_acc(A, B, C, M, K, N);
}

void
gemm_tn_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N)
{
  current()->gemm_tn_acc(A, B, C, M, K, N);
}

}  // namespace spc::kernels
