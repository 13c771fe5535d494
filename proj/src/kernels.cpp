#include "hft/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hft::kernels {

namespace {

bool g_parallel = true;
int g_threads = 0;  // 0: runtime default

inline double cell(const double* p, int r, int c, int ld) {
  return p[static_cast<std::size_t>(r) * ld + c];
}

inline void row_product(const double* a, const double* b, double* c, int i,
                        int k, int n, bool trans_a, bool trans_b, int lda,
                        int ldb, bool accumulate) {
  double* crow = c + static_cast<std::size_t>(i) * n;
  if (!accumulate) {
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
  }
  // Fixed k-major accumulation order per output element.
  for (int p = 0; p < k; ++p) {
    const double av = trans_a ? cell(a, p, i, lda) : cell(a, i, p, lda);
    if (av == 0.0) continue;
    if (!trans_b) {
      const double* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    } else {
      for (int j = 0; j < n; ++j) crow[j] += av * cell(b, j, p, ldb);
    }
  }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, int m, int k,
                   int n, bool trans_a, bool trans_b, bool accumulate) {
  const int lda = trans_a ? m : k;
  const int ldb = trans_b ? k : n;
  for (int i = 0; i < m; ++i) {
    row_product(a, b, c, i, k, n, trans_a, trans_b, lda, ldb, accumulate);
  }
}

void matmul_omp(const double* a, const double* b, double* c, int m, int k,
                int n, bool trans_a, bool trans_b, bool accumulate) {
  const int lda = trans_a ? m : k;
  const int ldb = trans_b ? k : n;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    row_product(a, b, c, i, k, n, trans_a, trans_b, lda, ldb, accumulate);
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate) {
  const long long flops = 2ll * m * k * n;
  if (g_parallel && flops >= (1 << 18)) {
    matmul_omp(a, b, c, m, k, n, trans_a, trans_b, accumulate);
  } else {
    matmul_serial(a, b, c, m, k, n, trans_a, trans_b, accumulate);
  }
}

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

void set_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace hft::kernels
