#pragma once

#include "hft/selection.hpp"

namespace hft {

struct MergeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Elementwise theta_ft - theta_0, keyed by registry name.
struct TaskVector {
  std::map<std::string, Tensor> entries;

  double l2_norm() const;
  std::map<Category, double> l2_norm_by_category(const ParameterRegistry& reg) const;
};

TaskVector task_vector(const ParameterRegistry& theta_ft,
                       const ParameterRegistry& theta_0);

// theta_0 + tv, reconstructing theta_ft exactly when tv is untouched.
ParameterRegistry apply_task_vector(const ParameterRegistry& theta_0,
                                    const TaskVector& tv);

// Post-hoc reconstruction theta_0 + M*delta: entries in keep_plan.trainable
// come from theta_ft, entries in keep_plan.frozen revert to theta_0.
ParameterRegistry half_reset(const ParameterRegistry& theta_ft,
                             const ParameterRegistry& theta_0,
                             const SelectionPlan& keep_plan);

// Zero a seeded fraction q of the vector's matrices (by count).
TaskVector drop_ratio(const TaskVector& tv, double q, std::uint64_t seed);

// half_reset with a plan drawn by the named selection strategy.
// EMB/HEAD stay fine-tuned unless freeze_io.
ParameterRegistry reset_strategy(const ParameterRegistry& theta_ft,
                                 const ParameterRegistry& theta_0,
                                 SelStrategy strategy, std::uint64_t seed,
                                 bool freeze_io = false);

}  // namespace hft
