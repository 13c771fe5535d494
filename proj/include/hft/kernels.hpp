#pragma once

#include <cstdint>

namespace hft::kernels {

// Matrix product kernels. C[m x n] = op(A) * op(B), where op is an
// optional transpose. A is m x k (or k x m when trans_a), B is k x n
// (or n x k when trans_b). `accumulate` adds into C instead of
// overwriting.
//
// The serial variant is the reference; the OpenMP variant parallelizes
// over rows of C. Each output element is reduced in the same k-order in
// both, so the two are bitwise identical for any thread count.
void matmul_serial(const double* a, const double* b, double* c, int m, int k,
                   int n, bool trans_a, bool trans_b, bool accumulate);
void matmul_omp(const double* a, const double* b, double* c, int m, int k,
                int n, bool trans_a, bool trans_b, bool accumulate);

// Dispatch: OpenMP kernel when enabled and the problem is big enough to
// amortize the fork, serial otherwise.
void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a = false, bool trans_b = false, bool accumulate = false);

// Process-wide switches (set once at startup from the CLI).
void set_parallel(bool enabled);
bool parallel_enabled();
void set_threads(int n);
int threads();

}  // namespace hft::kernels
