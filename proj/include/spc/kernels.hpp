#pragma once

// Data-parallel inner loops.  Each kernel has a scalar reference
// implementation and an AVX2 implementation chosen at runtime.  The two are
// required to produce bit-identical results: both evaluate the same
// operations in the same order and the library is compiled without
// floating-point contraction.

#include <cstddef>

namespace spc::kernels {

enum class Backend
{
  kScalar,
  kAvx2,
};

const char* to_string(Backend b);
bool available(Backend b);

// Backend used by the dispatching entry points below.  The initial choice is
// the widest available ISA unless SPC_KERNELS=scalar is set in the
// environment.
Backend active();

// Throws spc::Error(kInvalidArgument) if the backend is not available.
void select(Backend b);

constexpr int kMaxDim = 8;

// Structure-of-arrays point block; `id` holds the original row index of each
// point as a double so that tie-breaking can be vectorised.
struct Columns {
  const double* col[kMaxDim] = {};
  const double* id = nullptr;
  int dim = 0;
};

struct Nearest {
  double d2;
  double id;
};

// out[i] = sum over d of (col[d][begin + i] - query[d])^2, summed in
// dimension order.
void squared_distances(
  const double* query, const Columns& pts, size_t begin, size_t end,
  double* out);

// Lowers `best` to the lexicographically smallest (d2, id) in [begin, end).
void nearest_scan(
  const double* query, const Columns& pts, size_t begin, size_t end,
  Nearest& best);

// out[i] = a * x[i] + b * y[i]
void axpby(
  double a, const double* x, double b, const double* y, double* out, size_t n);

// C(MxN) += A(MxK) * B(KxN), row-major, k ascending.
void gemm_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N);

// C(KxN) += A(MxK)^T * B(MxN), row-major, m ascending.
void gemm_tn_acc(
  const double* A, const double* B, double* C, size_t M, size_t K, size_t N);

//============================================================================
// Per-backend entry points, exposed for equivalence testing.

namespace scalar {
void squared_distances(const double*, const Columns&, size_t, size_t, double*);
void nearest_scan(const double*, const Columns&, size_t, size_t, Nearest&);
void axpby(double, const double*, double, const double*, double*, size_t);
void gemm_acc(const double*, const double*, double*, size_t, size_t, size_t);
void gemm_tn_acc(const double*, const double*, double*, size_t, size_t, size_t);
}  // namespace scalar

#if defined(SPC_HAVE_AVX2)
namespace avx2 {
void squared_distances(const double*, const Columns&, size_t, size_t, double*);
void nearest_scan(const double*, const Columns&, size_t, size_t, Nearest&);
void axpby(double, const double*, double, const double*, double*, size_t);
void gemm_acc(const double*, const double*, double*, size_t, size_t, size_t);
void gemm_tn_acc(const double*, const double*, double*, size_t, size_t, size_t);
}  // namespace avx2
#endif

}  // namespace spc::kernels
