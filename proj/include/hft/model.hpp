#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hft/autograd.hpp"
#include "hft/tensor.hpp"

namespace hft {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Category { SAN, FFN, LN, EMB, HEAD };

const char* category_name(Category c);
Category category_from_name(const std::string& s);

struct ModelConfig {
  int vocab_size = 64;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 128;
  int max_seq_len = 32;
  DType dtype = DType::F32;

  void validate() const;
};

struct ParamEntry {
  std::string name;
  Category category;
  int layer = -1;  // -1 for EMB/HEAD
  Tensor tensor;
};

// Ordered, name-addressable parameter store. Layer l contributes, in
// order: wq wk wv wo (SAN), w_gate w_up w_down (FFN), ln_attn ln_ffn (LN);
// then embed (EMB) and lm_head (HEAD). Iteration order is construction
// order and survives save/load.
class ParameterRegistry {
 public:
  void add(std::string name, Category cat, int layer, Tensor t);
  std::size_t count() const { return entries_.size(); }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
  ParamEntry& entry(std::size_t i) { return entries_[i]; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  std::vector<std::string> names() const;

  // Same names, shapes, categories and order.
  bool structurally_equal(const ParameterRegistry& o) const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct CensusRow {
  int matrices = 0;
  std::int64_t elements = 0;
};

struct Census {
  std::map<Category, CensusRow> by_category;
  std::map<int, CensusRow> by_layer;  // transformer layers only
  std::int64_t total_elements = 0;
  std::int64_t transformer_elements = 0;  // excludes EMB/HEAD
};

Census param_census(const ParameterRegistry& reg);

class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, ParameterRegistry reg)
      : config_(cfg), registry_(std::move(reg)) {}

  const ModelConfig& config() const { return config_; }
  const ParameterRegistry& registry() const { return registry_; }
  ParameterRegistry& registry() { return registry_; }

  // Traced forward for one token sequence; returns the logits node
  // [T x vocab]. `param_ids` maps registry entry index -> tape leaf id.
  ValueId trace_logits(Tape& tape, const std::vector<ValueId>& param_ids,
                       const std::vector<int>& tokens) const;

  // Traced mean cross-entropy over non-pad target positions.
  ValueId trace_loss(Tape& tape, const std::vector<ValueId>& param_ids,
                     const std::vector<int>& tokens,
                     const std::vector<int>& targets, int pad_id) const;

  // Untraced logits for a batch; result shape [batch, T, vocab].
  Tensor forward_logits(const std::vector<std::vector<int>>& batch) const;

  // Untraced logits for one sequence, [T x vocab].
  Tensor forward_logits_one(const std::vector<int>& tokens) const;

  // Mean NLL over non-pad targets, untraced.
  double loss_ce(const std::vector<int>& tokens, const std::vector<int>& targets,
                 int pad_id) const;

  // Leaves for every registry entry; `trainable` marks requires_grad per
  // entry index (empty -> all trainable).
  std::vector<ValueId> make_leaves(Tape& tape,
                                   const std::vector<bool>& trainable = {}) const;

 private:
  void check_tokens(const std::vector<int>& tokens) const;

  ModelConfig config_;
  ParameterRegistry registry_;
};

Model build_model(const ModelConfig& cfg, std::uint64_t init_seed);

std::string layer_param_name(int layer, const char* leaf);

}  // namespace hft
