#pragma once

#include <map>

#include "hft/selection.hpp"
#include "hft/trainer.hpp"

namespace hft {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class VariationNorm { MeanAbs, L2 };

// Mean variation per (adjacent-layer pair, category) block, SAN and FFN
// only. The value for a block is the mean over its matrices of each
// matrix's mean absolute (or RMS) elementwise difference.
struct BlockVariation {
  int layer_pair = 0;  // pair p covers layers 2p and 2p+1
  Category category = Category::SAN;
  double variation = 0.0;
};

std::vector<BlockVariation> block_variation(const ParameterRegistry& theta_final,
                                            const ParameterRegistry& theta_0,
                                            VariationNorm norm = VariationNorm::MeanAbs);

struct SelectedTimesBucket {
  int times = 0;  // rounds in which the matrices were trainable
  int matrices = 0;
  double mean_variation = 0.0;
};

// Transformer matrices bucketed by how many rounds they were trainable;
// buckets 0..T are all present (empty ones with zero matrices).
std::vector<SelectedTimesBucket> variation_by_selected_times(
    const ParameterRegistry& theta_final, const ParameterRegistry& theta_0,
    const SelectionHistory& history, VariationNorm norm = VariationNorm::MeanAbs);

// Spearman rank correlation over (x, y) pairs; average ranks on ties.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct RuntimeRow {
  double trainable_percent = 0.0;
  double wall_ms = 0.0;
  double percent_of_fft = 0.0;
};

// Wall-times of a ratio ladder, normalized to the 100% (FFT) run. Logs
// must cover identical step counts.
std::vector<RuntimeRow> runtime_report(
    const std::vector<std::pair<double, TrainLog>>& ladder);

std::string block_variation_csv(const std::vector<BlockVariation>& rows,
                                VariationNorm norm);
std::string selected_times_csv(const std::vector<SelectedTimesBucket>& rows,
                               VariationNorm norm);
std::string runtime_csv(const std::vector<RuntimeRow>& rows);

}  // namespace hft
