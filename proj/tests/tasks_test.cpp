#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "hft/tasks.hpp"

using namespace hft;

namespace {

// Independent check that `answer` satisfies the rule for `input`, written
// as predicates rather than by re-running the generator's transform.
bool rule_holds(TaskKind kind, const std::vector<int>& in,
                const std::vector<int>& ans, const TaskConfig& cfg) {
  const int lo = cfg.vocab_lo;
  switch (kind) {
    case TaskKind::Copy:
      return ans == in;
    case TaskKind::Reverse: {
      if (ans.size() != in.size()) return false;
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (ans[i] != in[in.size() - 1 - i]) return false;
      }
      return true;
    }
    case TaskKind::SortTokens: {
      if (!std::is_sorted(ans.begin(), ans.end())) return false;
      std::vector<int> a = in, b = ans;
      std::sort(a.begin(), a.end());
      return a == b;  // same multiset
    }
    case TaskKind::ModularAdd:
      return in.size() == 2 && ans.size() == 1 &&
             (ans[0] - lo) == ((in[0] - lo) + (in[1] - lo)) % 7;
    case TaskKind::Parity: {
      int ones = 0;
      for (int t : in) ones += t == lo + 1;
      return ans.size() == 1 && ans[0] == (ones % 2 ? lo + 1 : lo);
    }
    case TaskKind::Successor: {
      const int span = cfg.vocab_hi - cfg.vocab_lo;
      return in.size() == 1 && ans.size() == 1 &&
             (ans[0] - lo) == ((in[0] - lo) + 1) % span;
    }
    case TaskKind::Dedup: {
      // No adjacent repeats, and expanding answer runs can reproduce input.
      for (std::size_t i = 1; i < ans.size(); ++i) {
        if (ans[i] == ans[i - 1]) return false;
      }
      std::vector<int> collapsed;
      for (int t : in) {
        if (collapsed.empty() || collapsed.back() != t) collapsed.push_back(t);
      }
      return ans == collapsed;
    }
    case TaskKind::HistogramMax: {
      if (ans.size() != 1) return false;
      std::map<int, int> counts;
      for (int t : in) ++counts[t];
      if (!counts.count(ans[0])) return false;
      const int c = counts[ans[0]];
      for (const auto& [tok, n] : counts) {
        if (n > c) return false;
        if (n == c && tok < ans[0]) return false;  // ties break to smallest id
      }
      return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("every generated example satisfies its rule") {
  TaskConfig cfg;
  cfg.train_size = 64;
  cfg.eval_size = 64;
  for (const TaskSpec& task : make_suite(5, cfg)) {
    for (const auto* split : {&task.train, &task.eval}) {
      for (const auto& ex : *split) {
        CHECK(rule_holds(task.kind, ex.input, ex.answer, cfg));
        for (int t : ex.input) {
          CHECK(t >= cfg.vocab_lo);
          CHECK(t < cfg.vocab_hi);
        }
      }
    }
  }
}

TEST_CASE("hand-checked cases") {
  TaskConfig cfg;
  // 3 + 6 = 9 = 2 (mod 7), in token space offset by vocab_lo.
  const int lo = cfg.vocab_lo;
  CHECK(task_rule(TaskKind::ModularAdd, {lo + 3, lo + 6}, cfg) ==
        std::vector<int>{lo + 2});
  CHECK(task_rule(TaskKind::Parity, {lo + 1, lo, lo + 1, lo + 1}, cfg) ==
        std::vector<int>{lo + 1});
  CHECK(task_rule(TaskKind::Reverse, {lo, lo + 2, lo + 5}, cfg) ==
        std::vector<int>{lo + 5, lo + 2, lo});
  CHECK(task_rule(TaskKind::Dedup, {lo, lo, lo + 1, lo + 1, lo}, cfg) ==
        std::vector<int>{lo, lo + 1, lo});
  // Tie at count 2 between lo+4 and lo+2: smallest token id wins.
  CHECK(task_rule(TaskKind::HistogramMax, {lo + 4, lo + 2, lo + 4, lo + 2, lo + 7}, cfg) ==
        std::vector<int>{lo + 2});
}

TEST_CASE("splits have the requested sizes and are disjoint") {
  TaskConfig cfg;
  cfg.train_size = 48;
  cfg.eval_size = 100;
  for (const TaskSpec& task : make_suite(9, cfg)) {
    CHECK(task.train.size() == 48);
    CHECK(task.eval.size() == 100);
    std::set<std::vector<int>> train_inputs, eval_inputs;
    for (const auto& ex : task.train) train_inputs.insert(ex.input);
    for (const auto& ex : task.eval) eval_inputs.insert(ex.input);
    for (const auto& in : eval_inputs) CHECK(train_inputs.count(in) == 0);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  TaskConfig cfg;
  cfg.train_size = 32;
  cfg.eval_size = 32;
  for (TaskKind k : {TaskKind::Copy, TaskKind::ModularAdd, TaskKind::Dedup}) {
    TaskSpec a = make_task(k, 3, cfg, 0);
    TaskSpec b = make_task(k, 3, cfg, 0);
    CHECK(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].input == b.train[i].input);
    }
    TaskSpec c = make_task(k, 4, cfg, 0);
    bool differs = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      differs = differs || a.train[i].input != c.train[i].input;
    }
    CHECK(differs);
  }
}

TEST_CASE("suite layout: eight tasks with distinct markers") {
  TaskConfig cfg;
  cfg.train_size = 8;
  cfg.eval_size = 8;
  auto suite = make_suite(1, cfg);
  CHECK(suite.size() == 8);
  std::set<int> markers;
  std::set<std::string> names;
  for (const auto& t : suite) {
    markers.insert(t.marker);
    names.insert(t.name);
    CHECK(t.marker >= Vocab::marker_base);
    CHECK(t.marker < Vocab::data_base);
  }
  CHECK(markers.size() == 8);
  CHECK(names.size() == 8);
}

TEST_CASE("single-token tasks report a fixed answer length") {
  TaskConfig cfg;
  cfg.train_size = 16;
  cfg.eval_size = 16;
  for (TaskKind k : {TaskKind::ModularAdd, TaskKind::Parity, TaskKind::Successor,
                     TaskKind::HistogramMax}) {
    TaskSpec t = make_task(k, 2, cfg, 0);
    REQUIRE(t.fixed_answer_len.has_value());
    CHECK(*t.fixed_answer_len == 1);
  }
  TaskSpec parity = make_task(TaskKind::Parity, 2, cfg, 0);
  CHECK(parity.answer_alphabet == std::vector<int>{cfg.vocab_lo, cfg.vocab_lo + 1});
  // Length-preserving tasks over variable lengths have no fixed answer length.
  TaskSpec copy = make_task(TaskKind::Copy, 2, cfg, 0);
  CHECK_FALSE(copy.fixed_answer_len.has_value());
}

TEST_CASE("training sequences encode marker, separator, answer and end marker") {
  TaskConfig cfg;
  TaskSpec t = make_task(TaskKind::ModularAdd, 1, cfg, 3);
  const TaskExample& ex = t.train[0];
  TrainExample te = to_train_example(t, ex);
  // tokens: marker, input..., sep, answer...   (next-token view of the
  // sequence that continues with eos)
  CHECK(te.tokens[0] == t.marker);
  CHECK(te.tokens[1] == ex.input[0]);
  CHECK(te.tokens[2] == ex.input[1]);
  CHECK(te.tokens[3] == Vocab::sep);
  CHECK(te.tokens[4] == ex.answer[0]);
  CHECK(te.tokens.size() == te.targets.size());
  // Supervision only on the answer and the end marker.
  CHECK(te.targets[0] == Vocab::pad);
  CHECK(te.targets[1] == Vocab::pad);
  CHECK(te.targets[2] == Vocab::pad);
  CHECK(te.targets[3] == ex.answer[0]);
  CHECK(te.targets[4] == Vocab::eos);
}

TEST_CASE("an untrained model scores near chance on the two-answer task") {
  ModelConfig mc;  // default desk-scale shape
  Model model = build_model(mc, 123);
  TaskConfig cfg;
  cfg.eval_size = 500;
  TaskSpec parity = make_task(TaskKind::Parity, 7, cfg, 4);
  const double acc = eval_exact_match(model, parity);
  CHECK(acc >= 40.0);
  CHECK(acc <= 60.0);
}

TEST_CASE("decode length respects the task contract") {
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_ff = 24;
  Model model = build_model(mc, 5);
  TaskConfig cfg;
  cfg.train_size = 8;
  cfg.eval_size = 8;

  TaskSpec fixed = make_task(TaskKind::ModularAdd, 1, cfg, 0);
  for (const auto& ex : fixed.eval) {
    auto out = greedy_decode(model, fixed, ex);
    CHECK(out.size() == 1);
    CHECK(std::count(fixed.answer_alphabet.begin(), fixed.answer_alphabet.end(),
                     out[0]) == 1);
  }

  TaskSpec var = make_task(TaskKind::Copy, 1, cfg, 1);
  for (const auto& ex : var.eval) {
    auto out = greedy_decode(model, var, ex);
    CHECK(static_cast<int>(out.size()) <= var.max_answer_len + 1);
    for (int t : out) {
      CHECK(std::count(var.answer_alphabet.begin(), var.answer_alphabet.end(), t) == 1);
    }
  }
}

TEST_CASE("invalid configurations are rejected") {
  TaskConfig cfg;
  cfg.train_size = 0;
  CHECK_THROWS_AS(make_task(TaskKind::Copy, 1, cfg, 0), TaskError);
  cfg = TaskConfig{};
  cfg.vocab_lo = 16;
  cfg.vocab_hi = 20;  // too narrow for the arithmetic tasks
  CHECK_THROWS_AS(make_task(TaskKind::ModularAdd, 1, cfg, 0), TaskError);
  CHECK_THROWS_AS(task_kind_from_name("no_such_task"), TaskError);
  CHECK(task_kind_from_name("parity") == TaskKind::Parity);
}
