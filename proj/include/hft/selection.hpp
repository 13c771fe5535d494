#pragma once

#include <set>
#include <string>
#include <vector>

#include "hft/model.hpp"

namespace hft {

struct SelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SelStrategy { Category, Layer, Model, Ratio };

const char* sel_strategy_name(SelStrategy s);
SelStrategy sel_strategy_from_name(const std::string& s);

// Per-round parameter partition. `trainable` and `frozen` cover the
// registry exactly; masks are whole-matrix (no sub-matrix granularity).
struct SelectionPlan {
  int round_index = 1;
  SelStrategy strategy = SelStrategy::Category;
  std::uint64_t seed = 0;
  double ratio = 0.5;  // only meaningful for SelStrategy::Ratio
  bool freeze_io = false;
  std::set<std::string> trainable;
  std::set<std::string> frozen;

  bool is_trainable(const std::string& name) const { return trainable.count(name) != 0; }
};

struct SelectionHistory {
  std::vector<SelectionPlan> plans;  // round indices contiguous from 1

  void push(SelectionPlan p);
  // Rounds in which `name` was trainable.
  int times_selected(const std::string& name) const;
};

// Algorithm: per layer freeze 2 of 4 SAN matrices and 1 of 2 LN vectors;
// a seeded half of the layers freeze ceil(3/2)=2 FFN matrices, the other
// half floor(3/2)=1, so exactly half of all FFN matrices freeze across
// the model. Requires even n_layers.
SelectionPlan plan_category(const ParameterRegistry& reg, int round,
                            std::uint64_t seed, bool freeze_io);

// Alternating whole layers; a seeded coin picks the parity that freezes.
SelectionPlan plan_layer(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, bool freeze_io);

// A uniform half (by matrix count, floor on odd totals) of all
// transformer-layer matrices.
SelectionPlan plan_model(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, bool freeze_io);

// Greedy seeded matrix picking toward trainable element fraction p
// (transformer-layers calibre). p=1 is FFT; p=0 freezes every
// transformer matrix.
SelectionPlan plan_ratio(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, double p, bool freeze_io);

SelectionPlan plan_for(SelStrategy strategy, const ParameterRegistry& reg,
                       int round, std::uint64_t seed, double ratio, bool freeze_io);

// Complement within the same registry (trainable and frozen swapped).
SelectionPlan complement(const SelectionPlan& plan, const ParameterRegistry& reg);

struct MaskStats {
  std::int64_t trainable_layer_elements = 0;
  std::int64_t total_layer_elements = 0;
  std::int64_t trainable_total_elements = 0;
  std::int64_t total_elements = 0;
  std::map<Category, CensusRow> trainable_by_category;

  double layers_only_fraction() const {
    return total_layer_elements == 0
               ? 0.0
               : static_cast<double>(trainable_layer_elements) / total_layer_elements;
  }
  double total_fraction() const {
    return total_elements == 0
               ? 0.0
               : static_cast<double>(trainable_total_elements) / total_elements;
  }
  // Exact rational test for the half split (no floating point).
  bool layers_only_exact_half() const {
    return 2 * trainable_layer_elements == total_layer_elements;
  }
};

MaskStats mask_stats(const SelectionPlan& plan, const ParameterRegistry& reg);

}  // namespace hft
