#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hft/analysis.hpp"

using namespace hft;

namespace {
ModelConfig cfg4() {
  ModelConfig cfg;
  cfg.vocab_size = 32;
  cfg.d_model = 8;
  cfg.n_layers = 4;
  cfg.n_heads = 2;
  cfg.d_ff = 12;
  cfg.max_seq_len = 8;
  cfg.dtype = DType::F64;
  return cfg;
}
}  // namespace

TEST_CASE("block variation of a model with itself is zero everywhere") {
  Model m = build_model(cfg4(), 1);
  auto rows = block_variation(m.registry(), m.registry());
  // 2 layer pairs x {SAN, FFN}.
  CHECK(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.variation == 0.0);
}

TEST_CASE("perturbing one matrix moves exactly its own block") {
  Model base = build_model(cfg4(), 1);
  Model moved = build_model(cfg4(), 1);
  // layer 2 belongs to pair 1; bump one FFN matrix by +0.5 everywhere.
  Tensor& t = moved.registry().tensor("layer.2.ffn.w_gate");
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] += 0.5;

  auto rows = block_variation(moved.registry(), base.registry());
  for (const auto& r : rows) {
    if (r.layer_pair == 1 && r.category == Category::FFN) {
      // Mean over the pair's 6 FFN matrices; only one moved, by 0.5.
      CHECK(r.variation == doctest::Approx(0.5 / 6).epsilon(1e-12));
    } else {
      CHECK(r.variation == 0.0);
    }
  }

  auto l2_rows = block_variation(moved.registry(), base.registry(), VariationNorm::L2);
  for (const auto& r : l2_rows) {
    if (r.layer_pair == 1 && r.category == Category::FFN) {
      CHECK(r.variation == doctest::Approx(0.5 / 6).epsilon(1e-12));  // RMS of flat shift
    } else {
      CHECK(r.variation == 0.0);
    }
  }
}

TEST_CASE("block variation requires an even layer count") {
  ModelConfig cfg = cfg4();
  cfg.n_layers = 3;
  Model m = build_model(cfg, 1);
  CHECK_THROWS_AS(block_variation(m.registry(), m.registry()), AnalysisError);
}

TEST_CASE("selected-times buckets cover 0..T and empty buckets carry zero variation") {
  Model base = build_model(cfg4(), 1);
  Model moved = build_model(cfg4(), 1);

  SelectionHistory history;
  for (int round = 1; round <= 3; ++round) {
    history.push(plan_category(base.registry(), round, 42, false));
  }

  // Move only matrices that were trainable at least once; never-selected
  // ones stay bitwise put.
  for (std::size_t i = 0; i < moved.registry().count(); ++i) {
    auto& e = moved.registry().entry(i);
    if (e.layer < 0) continue;
    if (history.times_selected(e.name) > 0) {
      for (std::int64_t k = 0; k < e.tensor.size(); ++k) e.tensor.data()[k] += 0.1;
    }
  }

  auto buckets = variation_by_selected_times(moved.registry(), base.registry(), history);
  REQUIRE(buckets.size() == 4);  // times 0..3
  int total_matrices = 0;
  for (int t = 0; t < 4; ++t) {
    CHECK(buckets[t].times == t);
    total_matrices += buckets[t].matrices;
    if (buckets[t].matrices == 0) {
      CHECK(buckets[t].mean_variation == 0.0);
    } else if (t == 0) {
      CHECK(buckets[t].mean_variation == 0.0);  // never selected, never moved
    } else {
      CHECK(buckets[t].mean_variation == doctest::Approx(0.1).epsilon(1e-12));
    }
  }
  CHECK(total_matrices == 36);  // transformer matrices only
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // Monotone but nonlinear is still rho = 1.
  CHECK(spearman_rho({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}) == doctest::Approx(1.0));
  // Hand-computed with one swap: d = (0,0,1,-1) -> rho = 1 - 6*2/(4*15) = 0.8
  CHECK(spearman_rho({1, 2, 3, 4}, {1, 2, 4, 3}) == doctest::Approx(0.8));
  // Ties get average ranks; a constant input has no ranking.
  CHECK(spearman_rho({1, 1, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman_rho({1, 1, 1}, {1, 2, 3}), AnalysisError);
  CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2, 3}), AnalysisError);
}

TEST_CASE("runtime report normalizes to the full-training run") {
  auto log_with = [](int steps, double ms) {
    TrainLog log;
    log.steps = steps;
    log.total_wall_ms = ms;
    return log;
  };
  std::vector<std::pair<double, TrainLog>> ladder = {
      {1.0, log_with(40, 200.0)},
      {0.5, log_with(40, 150.0)},
      {0.25, log_with(40, 120.0)},
  };
  auto rows = runtime_report(ladder);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].trainable_percent == 100.0);
  CHECK(rows[0].percent_of_fft == doctest::Approx(100.0));
  CHECK(rows[1].percent_of_fft == doctest::Approx(75.0));
  CHECK(rows[2].percent_of_fft == doctest::Approx(60.0));

  // Mismatched step counts or a missing 100% run are rejected.
  CHECK_THROWS_AS(runtime_report({{0.5, log_with(40, 1.0)}}), AnalysisError);
  CHECK_THROWS_AS(runtime_report({{1.0, log_with(40, 1.0)}, {0.5, log_with(30, 1.0)}}),
                  AnalysisError);
}

TEST_CASE("csv emitters label their norm and columns") {
  Model m = build_model(cfg4(), 1);
  auto rows = block_variation(m.registry(), m.registry(), VariationNorm::L2);
  std::string csv = block_variation_csv(rows, VariationNorm::L2);
  CHECK(csv.find("# norm=") != std::string::npos);
  CHECK(csv.find("layer_pair") != std::string::npos);

  SelectionHistory h;
  h.push(plan_category(m.registry(), 1, 1, false));
  auto buckets = variation_by_selected_times(m.registry(), m.registry(), h);
  std::string csv2 = selected_times_csv(buckets, VariationNorm::MeanAbs);
  CHECK(csv2.find("selected_times") != std::string::npos);

  TrainLog log;
  log.steps = 4;
  log.total_wall_ms = 8.0;
  std::string csv3 = runtime_csv(runtime_report({{1.0, log}}));
  CHECK(csv3.find("percent_of_fft") != std::string::npos);
}
