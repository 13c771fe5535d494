// Compares the serial reference kernels against the OpenMP kernels: raw
// matrix products at several sizes, then one masked training step on the
// default model shape. Verifies bitwise agreement while timing.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "hft/kernels.hpp"
#include "hft/tasks.hpp"
#include "hft/trainer.hpp"

using namespace hft;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void bench_matmul(int n, int reps) {
  Stream rng(1);
  std::vector<double> a(static_cast<std::size_t>(n) * n), b(a.size()),
      c0(a.size()), c1(a.size());
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    kernels::matmul_serial(a.data(), b.data(), c0.data(), n, n, n, false, false, false);
  }
  const double serial_ms = ms_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) {
    kernels::matmul_omp(a.data(), b.data(), c1.data(), n, n, n, false, false, false);
  }
  const double omp_ms = ms_since(t0) / reps;

  const bool identical = std::memcmp(c0.data(), c1.data(), c0.size() * 8) == 0;
  std::printf("matmul %4dx%-4d serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
              n, n, serial_ms, omp_ms, serial_ms / omp_ms,
              identical ? "bitwise-equal" : "MISMATCH");
}

double bench_step(bool parallel) {
  kernels::set_parallel(parallel);
  ModelConfig mc;  // default desk-scale shape
  Model model = build_model(mc, 7);
  TaskConfig tc;
  tc.train_size = 32;
  tc.eval_size = 8;
  TaskSpec task = make_task(TaskKind::Copy, 3, tc, 0);
  Dataset data = task_dataset(task);

  SelectionPlan plan = plan_category(model.registry(), 1, 5, false);
  OptimizerConfig oc;
  oc.epochs = 2;
  oc.batch_size = 8;
  auto t0 = Clock::now();
  TrainLog log = train_round(model, plan, data, oc, 0, 1);
  const double per_step = ms_since(t0) / log.steps;
  std::printf("train step (%s kernels): %8.3f ms/step over %d steps\n",
              parallel ? "openmp" : "serial", per_step, log.steps);
  return per_step;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", kernels::threads());
  for (int n : {64, 128, 256}) bench_matmul(n, n <= 128 ? 20 : 5);
  std::printf("\n");
  const double serial = bench_step(false);
  const double omp = bench_step(true);
  std::printf("training-step speedup: %.2fx\n", serial / omp);
  kernels::set_parallel(true);
  return 0;
}
