#pragma once

#include <optional>

#include "hft/merge.hpp"
#include "hft/tasks.hpp"
#include "hft/trainer.hpp"

namespace hft {

struct ContinualError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lower-triangular score matrix S[t][i], 1 <= i <= t <= T, percent.
class EvalMatrix {
 public:
  EvalMatrix() = default;
  explicit EvalMatrix(std::vector<std::string> task_names);

  void push_row(const std::vector<double>& scores);  // length = rows()+1
  int rows() const { return static_cast<int>(scores_.size()); }
  double score(int t, int i) const;  // 1-based, i <= t
  const std::vector<std::string>& task_names() const { return names_; }

  std::string to_csv() const;
  static EvalMatrix from_csv(const std::string& text);

  // OP_t = (1/t) sum_{i<=t} S_{t,i}
  double op_score(int t) const;
  // BWT_t = (1/t) sum_{i<t} (S_{t,i} - S_{i,i}); nullopt for t < 2
  std::optional<double> bwt_score(int t) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> scores_;
};

enum class CLStrategy { SeqFT, Replay };

const char* cl_strategy_name(CLStrategy s);
CLStrategy cl_strategy_from_name(const std::string& s);

struct MaskingConfig {
  bool hft = false;                              // false: FFT
  SelStrategy strategy = SelStrategy::Category;  // when hft
  double ratio = 0.5;                            // when strategy == Ratio
  bool freeze_io = false;
};

struct RunConfig {
  CLStrategy strategy = CLStrategy::SeqFT;
  MaskingConfig masking;
  double replay_fraction = 0.10;  // ignored for SeqFT
  std::uint64_t seed = 1;
  std::vector<int> epochs_per_task = {5, 3, 7, 5, 3, 5, 5, 7};
  OptimizerConfig opt;
  bool reset_opt_per_round = true;

  void validate() const;
};

struct RunResult {
  EvalMatrix matrix;
  SelectionHistory history;
  ParameterRegistry theta0;                  // run-start snapshot
  std::vector<ParameterRegistry> round_end;  // registry after each round
  std::vector<TrainLog> round_logs;
};

// Seeded sample without replacement of ceil(fraction*|D_i|) examples from
// each prior dataset, concatenated with `current`, shuffled with the
// round seed.
Dataset replay_mix(const std::vector<Dataset>& history, const Dataset& current,
                   double fraction, std::uint64_t seed, int round);

// Sequential harness: trains on tasks in order, evaluates tasks 1..t
// after round t, draws a fresh plan per round for HFT.
RunResult run_sequence(Model& model, const std::vector<TaskSpec>& tasks,
                       const RunConfig& cfg);

}  // namespace hft
