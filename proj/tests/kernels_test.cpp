#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <vector>

#include "doctest.h"
#include "hft/kernels.hpp"
#include "hft/rng.hpp"
#include "hft/tensor.hpp"

using namespace hft;

namespace {

std::vector<double> rand_vec(std::size_t n, Stream& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * 1.5;
  return v;
}

}  // namespace

TEST_CASE("serial kernel multiplies a known 2x3 * 3x2") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};
  std::vector<double> c(4, -1.0);
  kernels::matmul_serial(a.data(), b.data(), c.data(), 2, 3, 2, false, false, false);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("transpose flags match explicit transposition") {
  Stream rng(5);
  const int m = 7, k = 5, n = 6;
  auto a = rand_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = rand_vec(static_cast<std::size_t>(k) * n, rng);

  // Materialize A^T (k x m) and B^T (n x k).
  std::vector<double> at(a.size()), bt(b.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];

  std::vector<double> base(static_cast<std::size_t>(m) * n, 0.0);
  kernels::matmul_serial(a.data(), b.data(), base.data(), m, k, n, false, false, false);

  std::vector<double> c(base.size(), 0.0);
  kernels::matmul_serial(at.data(), b.data(), c.data(), m, k, n, true, false, false);
  CHECK(c == base);

  std::fill(c.begin(), c.end(), 0.0);
  kernels::matmul_serial(a.data(), bt.data(), c.data(), m, k, n, false, true, false);
  CHECK(c == base);

  std::fill(c.begin(), c.end(), 0.0);
  kernels::matmul_serial(at.data(), bt.data(), c.data(), m, k, n, true, true, false);
  CHECK(c == base);
}

TEST_CASE("accumulate adds on top of existing contents") {
  const std::vector<double> a = {1, 0, 0, 1};
  const std::vector<double> b = {2, 3, 4, 5};
  std::vector<double> c = {10, 10, 10, 10};
  kernels::matmul_serial(a.data(), b.data(), c.data(), 2, 2, 2, false, false, true);
  CHECK(c == std::vector<double>{12, 13, 14, 15});
}

TEST_CASE("OpenMP kernel is bitwise identical to the serial reference") {
  Stream rng(42);
  const struct { int m, k, n; } shapes[] = {
      {1, 1, 1}, {3, 17, 5}, {64, 64, 64}, {33, 129, 65}, {128, 40, 96}};
  for (const auto& s : shapes) {
    auto a = rand_vec(static_cast<std::size_t>(s.m) * s.k, rng);
    auto b = rand_vec(static_cast<std::size_t>(s.k) * s.n, rng);
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        for (bool acc : {false, true}) {
          std::vector<double> c0(static_cast<std::size_t>(s.m) * s.n, 0.25);
          std::vector<double> c1 = c0;
          kernels::matmul_serial(a.data(), b.data(), c0.data(), s.m, s.k, s.n, ta, tb, acc);
          kernels::matmul_omp(a.data(), b.data(), c1.data(), s.m, s.k, s.n, ta, tb, acc);
          CHECK(std::memcmp(c0.data(), c1.data(), c0.size() * sizeof(double)) == 0);
        }
      }
    }
  }
}

TEST_CASE("OpenMP kernel is invariant to the thread count") {
  Stream rng(9);
  const int m = 96, k = 64, n = 80;
  auto a = rand_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = rand_vec(static_cast<std::size_t>(k) * n, rng);
  std::vector<double> ref(static_cast<std::size_t>(m) * n, 0.0);
  const int saved = kernels::threads();
  kernels::set_threads(1);
  kernels::matmul_omp(a.data(), b.data(), ref.data(), m, k, n, false, false, false);
  for (int t : {2, 3, 4}) {
    kernels::set_threads(t);
    std::vector<double> c(ref.size(), 0.0);
    kernels::matmul_omp(a.data(), b.data(), c.data(), m, k, n, false, false, false);
    CHECK(std::memcmp(ref.data(), c.data(), ref.size() * sizeof(double)) == 0);
  }
  kernels::set_threads(saved);
}

TEST_CASE("dispatch honours the process-wide parallel switch") {
  const bool saved = kernels::parallel_enabled();
  kernels::set_parallel(false);
  CHECK_FALSE(kernels::parallel_enabled());
  Stream rng(3);
  auto a = rand_vec(64 * 64, rng);
  auto b = rand_vec(64 * 64, rng);
  std::vector<double> c0(64 * 64, 0.0), c1(64 * 64, 0.0);
  kernels::matmul(a.data(), b.data(), c0.data(), 64, 64, 64);
  kernels::set_parallel(true);
  kernels::matmul(a.data(), b.data(), c1.data(), 64, 64, 64);
  CHECK(std::memcmp(c0.data(), c1.data(), c0.size() * sizeof(double)) == 0);
  kernels::set_parallel(saved);
}
