#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hft/model.hpp"
#include "hft/trainer.hpp"

namespace hft {

struct TaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskKind {
  Copy,
  Reverse,
  SortTokens,
  ModularAdd,
  Parity,
  Successor,
  Dedup,
  HistogramMax,
};

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& s);

// Shared token layout: 0 pad, 1 eos, 2 sep, 3..10 task markers,
// 16..63 data tokens.
struct Vocab {
  static constexpr int pad = 0;
  static constexpr int eos = 1;
  static constexpr int sep = 2;
  static constexpr int marker_base = 3;
  static constexpr int data_base = 16;
  static constexpr int size = 64;
};

struct TaskExample {
  std::vector<int> input;   // data tokens, task rule applies to these
  std::vector<int> answer;  // unique correct output
};

struct TaskConfig {
  int train_size = 128;
  int eval_size = 500;
  int min_len = 3;
  int max_len = 6;
  int vocab_lo = Vocab::data_base;   // inclusive
  int vocab_hi = Vocab::data_base + 32;  // exclusive
};

struct TaskSpec {
  std::string name;
  TaskKind kind;
  std::uint64_t seed = 0;
  TaskConfig config;
  int marker = 0;
  std::vector<TaskExample> train;
  std::vector<TaskExample> eval;
  int max_answer_len = 0;
  // Present when every answer has the same length (single-token tasks);
  // evaluation then decodes exactly that many tokens with no EOS.
  std::optional<int> fixed_answer_len;
  std::vector<int> answer_alphabet;  // tokens that may appear in answers
};

// Deterministic dataset materialization: eval drawn first from its own
// stream, train deduplicated against eval by input, all regenerable
// byte-identically from (kind, seed, config).
TaskSpec make_task(TaskKind kind, std::uint64_t seed, const TaskConfig& config,
                   int marker_index);

// The eight-task suite in fixed order, markers 0..7.
std::vector<TaskSpec> make_suite(std::uint64_t seed, const TaskConfig& config);

// The task rule as a pure function; generation and tests both call it.
std::vector<int> task_rule(TaskKind kind, const std::vector<int>& input,
                           const TaskConfig& config);

// Training sequence: marker input... sep answer... eos, next-token
// targets with loss restricted to answer positions and the eos.
TrainExample to_train_example(const TaskSpec& task, const TaskExample& ex);
Dataset task_dataset(const TaskSpec& task);

// Greedy decode restricted to the task's answer alphabet; percentage of
// eval examples reproduced token-for-token.
double eval_exact_match(const Model& model, const TaskSpec& task);

// Decode one example (exposed for tests).
std::vector<int> greedy_decode(const Model& model, const TaskSpec& task,
                               const TaskExample& ex);

}  // namespace hft
