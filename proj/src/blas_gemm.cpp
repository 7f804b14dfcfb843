#include <cblas.h>

#include <cstdint>

#include "gdiff/tensor.hpp"

// Keep OpenBLAS single threaded: batch-level parallelism happens above this
// layer, and a fixed thread count keeps results bit-reproducible.
extern "C" void openblas_set_num_threads(int);

namespace gdiff {
namespace detail {

namespace {
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init_once;
}  // namespace

void gemm_f64(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
              std::int64_t lda, const double* b, std::int64_t ldb, double beta, double* c,
              std::int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              int(m), int(n), int(k), 1.0, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

void gemm_f32(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
              std::int64_t lda, const float* b, std::int64_t ldb, float beta, float* c,
              std::int64_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              int(m), int(n), int(k), 1.0f, a, int(lda), b, int(ldb), beta, c, int(ldc));
}

}  // namespace detail
}  // namespace gdiff
