#include "hft/tasks.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "hft/rng.hpp"

namespace hft {

namespace {
constexpr std::uint64_t kTrainSalt = 0x7121ull;
constexpr std::uint64_t kEvalSalt = 0xeb71ull;
constexpr int kModBase = 7;
constexpr int kEnumCap = 4096;
}  // namespace

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::SortTokens: return "sort_tokens";
    case TaskKind::ModularAdd: return "modular_add";
    case TaskKind::Parity: return "parity";
    case TaskKind::Successor: return "successor";
    case TaskKind::Dedup: return "dedup";
    case TaskKind::HistogramMax: return "histogram_max";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(TaskKind::HistogramMax); ++k) {
    if (s == task_kind_name(static_cast<TaskKind>(k))) return static_cast<TaskKind>(k);
  }
  throw TaskError("unknown task kind: " + s);
}

std::vector<int> task_rule(TaskKind kind, const std::vector<int>& input,
                           const TaskConfig& cfg) {
  const int lo = cfg.vocab_lo;
  switch (kind) {
    case TaskKind::Copy:
      return input;
    case TaskKind::Reverse: {
      std::vector<int> out(input.rbegin(), input.rend());
      return out;
    }
    case TaskKind::SortTokens: {
      std::vector<int> out = input;
      std::sort(out.begin(), out.end());
      return out;
    }
    case TaskKind::ModularAdd: {
      if (input.size() != 2) throw TaskError("modular_add expects two tokens");
      const int a = input[0] - lo, b = input[1] - lo;
      return {lo + (a + b) % kModBase};
    }
    case TaskKind::Parity: {
      int ones = 0;
      for (int t : input) ones += (t == lo + 1) ? 1 : 0;
      return {ones % 2 == 1 ? lo + 1 : lo};
    }
    case TaskKind::Successor: {
      if (input.size() != 1) throw TaskError("successor expects one token");
      const int span = cfg.vocab_hi - cfg.vocab_lo;
      return {lo + (input[0] - lo + 1) % span};
    }
    case TaskKind::Dedup: {
      std::vector<int> out;
      for (int t : input) {
        if (out.empty() || out.back() != t) out.push_back(t);
      }
      return out;
    }
    case TaskKind::HistogramMax: {
      std::map<int, int> counts;
      for (int t : input) ++counts[t];
      int best = input[0], best_n = 0;
      for (const auto& [tok, n] : counts) {  // ties: smallest token id wins
        if (n > best_n) {
          best = tok;
          best_n = n;
        }
      }
      return {best};
    }
  }
  throw TaskError("unreachable kind");
}

namespace {

std::vector<int> gen_input(TaskKind kind, Stream& rng, const TaskConfig& cfg) {
  const int lo = cfg.vocab_lo;
  const int span = cfg.vocab_hi - cfg.vocab_lo;
  const int len = cfg.min_len + static_cast<int>(rng.below(cfg.max_len - cfg.min_len + 1));
  switch (kind) {
    case TaskKind::ModularAdd:
      return {lo + static_cast<int>(rng.below(kModBase)),
              lo + static_cast<int>(rng.below(kModBase))};
    case TaskKind::Parity: {
      std::vector<int> v(len);
      for (int& t : v) t = lo + static_cast<int>(rng.below(2));
      return v;
    }
    case TaskKind::Successor:
      return {lo + static_cast<int>(rng.below(span))};
    case TaskKind::Dedup: {
      std::vector<int> v(len);
      for (int i = 0; i < len; ++i) {
        // Half the positions repeat their predecessor so the rule bites.
        if (i > 0 && rng.coin()) {
          v[i] = v[i - 1];
        } else {
          v[i] = lo + static_cast<int>(rng.below(span));
        }
      }
      return v;
    }
    default: {
      std::vector<int> v(len);
      for (int& t : v) t = lo + static_cast<int>(rng.below(span));
      return v;
    }
  }
}

// Full input space for kinds whose space is small enough to enumerate.
std::optional<std::vector<std::vector<int>>> enumerate_inputs(TaskKind kind,
                                                              const TaskConfig& cfg) {
  const int lo = cfg.vocab_lo;
  const int span = cfg.vocab_hi - cfg.vocab_lo;
  std::vector<std::vector<int>> all;
  switch (kind) {
    case TaskKind::ModularAdd:
      for (int a = 0; a < kModBase; ++a)
        for (int b = 0; b < kModBase; ++b) all.push_back({lo + a, lo + b});
      return all;
    case TaskKind::Successor:
      for (int x = 0; x < span; ++x) all.push_back({lo + x});
      return all;
    case TaskKind::Parity: {
      long long total = 0;
      for (int len = cfg.min_len; len <= cfg.max_len; ++len) total += 1ll << len;
      if (total > kEnumCap) return std::nullopt;
      for (int len = cfg.min_len; len <= cfg.max_len; ++len) {
        for (long long bits = 0; bits < (1ll << len); ++bits) {
          std::vector<int> v(len);
          for (int i = 0; i < len; ++i) v[i] = lo + ((bits >> i) & 1);
          all.push_back(v);
        }
      }
      return all;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace

TaskSpec make_task(TaskKind kind, std::uint64_t seed, const TaskConfig& cfg,
                   int marker_index) {
  if (cfg.train_size <= 0 || cfg.eval_size <= 0) throw TaskError("sizes must be positive");
  if (cfg.vocab_hi - cfg.vocab_lo < kModBase) {
    throw TaskError("vocabulary slice too small for the task suite");
  }
  if (cfg.vocab_hi > Vocab::size) throw TaskError("vocabulary slice exceeds vocab");

  TaskSpec t;
  t.name = task_kind_name(kind);
  t.kind = kind;
  t.seed = seed;
  t.config = cfg;
  t.marker = Vocab::marker_base + marker_index;

  auto enumerated = enumerate_inputs(kind, cfg);
  if (enumerated) {
    // Small input space: partition it between the splits, then cycle
    // each split's pool up to the requested size. Splits stay disjoint.
    Stream rng(seed, 0, kEvalSalt);
    auto& all = *enumerated;
    rng.shuffle(all);
    const int n = static_cast<int>(all.size());
    const int n_eval = std::max(1, std::min(n - 1, n / 2));
    for (int i = 0; i < cfg.eval_size; ++i) {
      const auto& in = all[i % n_eval];
      t.eval.push_back(TaskExample{in, task_rule(kind, in, cfg)});
    }
    for (int i = 0; i < cfg.train_size; ++i) {
      const auto& in = all[n_eval + i % (n - n_eval)];
      t.train.push_back(TaskExample{in, task_rule(kind, in, cfg)});
    }
  } else {
    std::set<std::vector<int>> seen;
    auto draw = [&](Stream& rng, int count, std::vector<TaskExample>& out) {
      for (int i = 0; i < count; ++i) {
        std::vector<int> in;
        for (int attempt = 0;; ++attempt) {
          if (attempt > 10000) throw TaskError("input space exhausted during dedup");
          in = gen_input(kind, rng, cfg);
          if (seen.insert(in).second) break;
        }
        out.push_back(TaskExample{in, task_rule(kind, in, cfg)});
      }
    };
    Stream eval_rng(seed, 0, kEvalSalt);
    draw(eval_rng, cfg.eval_size, t.eval);
    Stream train_rng(seed, 0, kTrainSalt);
    draw(train_rng, cfg.train_size, t.train);
  }

  std::set<int> alphabet;
  std::set<int> lens;
  for (const auto* split : {&t.train, &t.eval}) {
    for (const auto& ex : *split) {
      lens.insert(static_cast<int>(ex.answer.size()));
      for (int tok : ex.answer) alphabet.insert(tok);
      t.max_answer_len = std::max(t.max_answer_len, static_cast<int>(ex.answer.size()));
    }
  }
  t.answer_alphabet.assign(alphabet.begin(), alphabet.end());
  if (lens.size() == 1) t.fixed_answer_len = *lens.begin();
  return t;
}

std::vector<TaskSpec> make_suite(std::uint64_t seed, const TaskConfig& cfg) {
  const TaskKind order[] = {TaskKind::Copy,      TaskKind::Reverse,
                            TaskKind::SortTokens, TaskKind::ModularAdd,
                            TaskKind::Parity,    TaskKind::Successor,
                            TaskKind::Dedup,     TaskKind::HistogramMax};
  std::vector<TaskSpec> suite;
  int marker = 0;
  for (TaskKind k : order) {
    suite.push_back(make_task(k, seed + marker, cfg, marker));
    ++marker;
  }
  return suite;
}

TrainExample to_train_example(const TaskSpec& task, const TaskExample& ex) {
  std::vector<int> seq;
  seq.push_back(task.marker);
  seq.insert(seq.end(), ex.input.begin(), ex.input.end());
  seq.push_back(Vocab::sep);
  const std::size_t answer_start = seq.size();
  seq.insert(seq.end(), ex.answer.begin(), ex.answer.end());
  seq.push_back(Vocab::eos);

  TrainExample out;
  out.tokens.assign(seq.begin(), seq.end() - 1);
  out.targets.assign(out.tokens.size(), Vocab::pad);
  for (std::size_t t = answer_start - 1; t < out.tokens.size(); ++t) {
    out.targets[t] = seq[t + 1];
  }
  return out;
}

Dataset task_dataset(const TaskSpec& task) {
  Dataset out;
  out.reserve(task.train.size());
  for (const auto& ex : task.train) out.push_back(to_train_example(task, ex));
  return out;
}

std::vector<int> greedy_decode(const Model& model, const TaskSpec& task,
                               const TaskExample& ex) {
  std::vector<int> seq;
  seq.push_back(task.marker);
  seq.insert(seq.end(), ex.input.begin(), ex.input.end());
  seq.push_back(Vocab::sep);

  const bool fixed = task.fixed_answer_len.has_value();
  const int cap = fixed ? *task.fixed_answer_len : task.max_answer_len + 1;
  std::vector<int> allowed = task.answer_alphabet;
  if (!fixed) allowed.push_back(Vocab::eos);

  std::vector<int> out;
  for (int step = 0; step < cap; ++step) {
    Tensor logits = model.forward_logits_one(seq);
    const int last = logits.rows() - 1;
    int best = allowed[0];
    for (int tok : allowed) {
      if (logits.at(last, tok) > logits.at(last, best)) best = tok;
    }
    if (!fixed && best == Vocab::eos) return out;
    out.push_back(best);
    seq.push_back(best);
  }
  // Variable-length answers must terminate with EOS inside the cap; a
  // full-cap emission can never equal any answer (cap > max answer len).
  return out;
}

double eval_exact_match(const Model& model, const TaskSpec& task) {
  if (task.eval.empty()) throw TaskError("empty eval split");
  const int n = static_cast<int>(task.eval.size());
  int hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    hits += greedy_decode(model, task, task.eval[i]) == task.eval[i].answer ? 1 : 0;
  }
  return 100.0 * hits / n;
}

}  // namespace hft
