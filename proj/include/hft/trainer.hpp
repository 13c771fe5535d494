#pragma once

#include <functional>
#include <map>
#include <optional>

#include "hft/model.hpp"
#include "hft/selection.hpp"

namespace hft {

struct TrainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OptKind { Sgd, AdamW };
enum class LrSchedule { Constant, LinearDecay };

struct OptimizerConfig {
  OptKind kind = OptKind::AdamW;
  double learning_rate = 3e-4;
  double warmup_fraction = 0.03;
  LrSchedule schedule = LrSchedule::LinearDecay;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int epochs = 1;
  int batch_size = 8;
  double grad_clip_norm = 1.0;  // <=0 disables clipping

  void validate() const;
};

// One training example: model input tokens plus per-position targets
// (pad_id marks ignored positions).
struct TrainExample {
  std::vector<int> tokens;
  std::vector<int> targets;
};

using Dataset = std::vector<TrainExample>;

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
  double trainable_fraction = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  double total_wall_ms = 0.0;
  int steps = 0;
};

// Builds the traced batch loss over `param_ids` (one leaf per registry
// entry, in registry order). Lets the same optimizer loop drive both the
// transformer and small test problems.
using BatchLossFn = std::function<ValueId(Tape&, const std::vector<ValueId>&,
                                          const Dataset&)>;

class Trainer {
 public:
  Trainer(ParameterRegistry& registry, OptimizerConfig cfg, BatchLossFn loss_fn);

  // One optimizer step on `batch` under `plan`. Frozen parameters and
  // their optimizer state are untouched; their weight gradients are not
  // computed at all. Returns the batch loss.
  double step(const Dataset& batch, const SelectionPlan& plan);

  // Epoch loop with seeded shuffling; lr schedule spans the whole round.
  TrainLog train_round(const Dataset& data, const SelectionPlan& plan,
                       std::uint64_t shuffle_seed);

  // Penalty form: every parameter trains; gradient gains
  // 2*lambda*(theta - theta0) on the plan's frozen coordinates.
  TrainLog train_penalty(const Dataset& data, const ParameterRegistry& theta0,
                         const SelectionPlan& mask_plan, double lambda,
                         std::uint64_t shuffle_seed);

  void reset_optimizer_state();
  void set_epochs(int epochs) { cfg_.epochs = epochs; }
  const Tensor& first_moment(const std::string& name) const;
  const Tensor& second_moment(const std::string& name) const;

 private:
  struct PenaltyRef {
    const ParameterRegistry* theta0 = nullptr;
    const SelectionPlan* mask_plan = nullptr;
    double lambda = 0.0;
  };

  TrainLog run_epochs(const Dataset& data, const SelectionPlan& plan,
                      std::uint64_t shuffle_seed, const PenaltyRef* penalty);
  double step_impl(const Dataset& batch, const SelectionPlan& plan,
                   double lr, const PenaltyRef* penalty);
  double lr_at(int step, int total_steps) const;

  ParameterRegistry& reg_;
  OptimizerConfig cfg_;
  BatchLossFn loss_fn_;
  std::map<std::string, Tensor> m_, v_;
  std::map<std::string, int> adam_t_;
};

// Convenience loss builder for the transformer: mean of per-example CE.
BatchLossFn model_loss_fn(const Model& model, int pad_id);

// Trains `model` in place for one round.
TrainLog train_round(Model& model, const SelectionPlan& plan, const Dataset& data,
                     const OptimizerConfig& cfg, int pad_id,
                     std::uint64_t shuffle_seed);

// Fraction of backward FLOPs skipped because frozen matrices' weight
// gradients are elided (activation gradients still flow).
double grad_skip_fraction(const SelectionPlan& plan, const Model& model,
                          int seq_len);

// Share of total backward FLOPs spent on transformer-layer weight
// gradients (the part HFT can skip).
double transformer_weight_grad_share(const Model& model, int seq_len);

}  // namespace hft
