#include "hft/continual.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hft/rng.hpp"

namespace hft {

namespace {
constexpr std::uint64_t kReplaySalt = 0x3e91ull;
constexpr std::uint64_t kTrainSalt = 0x5eedull;
}  // namespace

EvalMatrix::EvalMatrix(std::vector<std::string> task_names)
    : names_(std::move(task_names)) {}

void EvalMatrix::push_row(const std::vector<double>& scores) {
  if (static_cast<int>(scores.size()) != rows() + 1) {
    throw ContinualError("row length must equal round index");
  }
  if (!names_.empty() && scores.size() > names_.size()) {
    throw ContinualError("more rounds than tasks");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 100.0)) throw ContinualError("score outside [0,100]");
  }
  scores_.push_back(scores);
}

double EvalMatrix::score(int t, int i) const {
  if (t < 1 || t > rows() || i < 1 || i > t) throw ContinualError("score index out of range");
  return scores_[t - 1][i - 1];
}

double EvalMatrix::op_score(int t) const {
  if (t < 1 || t > rows()) throw ContinualError("op_score: incomplete row");
  double s = 0.0;
  for (int i = 1; i <= t; ++i) s += score(t, i);
  return s / t;
}

std::optional<double> EvalMatrix::bwt_score(int t) const {
  if (t < 2) return std::nullopt;
  if (t > rows()) throw ContinualError("bwt_score: incomplete rows");
  double s = 0.0;
  for (int i = 1; i <= t - 1; ++i) s += score(t, i) - score(i, i);
  return s / t;  // 1/t normalization over t-1 terms
}

std::string EvalMatrix::to_csv() const {
  std::ostringstream os;
  os << "round";
  const int T = names_.empty() ? rows() : static_cast<int>(names_.size());
  for (int i = 0; i < T; ++i) {
    os << ',' << (i < static_cast<int>(names_.size()) ? names_[i]
                                                      : "task" + std::to_string(i + 1));
  }
  os << '\n';
  for (int t = 1; t <= rows(); ++t) {
    os << t;
    for (int i = 1; i <= T; ++i) {
      os << ',';
      if (i <= t) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", score(t, i));
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

EvalMatrix EvalMatrix::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ContinualError("empty CSV");
  std::vector<std::string> names;
  {
    std::istringstream hs(line);
    std::string cell;
    bool first = true;
    while (std::getline(hs, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      names.push_back(cell);
    }
  }
  EvalMatrix m(names);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    bool first = true;
    while (std::getline(ls, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      if (cell.empty()) continue;
      std::size_t pos = 0;
      double v = std::stod(cell, &pos);
      if (pos != cell.size()) throw ContinualError("malformed CSV cell: " + cell);
      row.push_back(v);
    }
    if (static_cast<int>(row.size()) != m.rows() + 1) {
      throw ContinualError("CSV row " + std::to_string(m.rows() + 1) +
                           " has wrong entry count");
    }
    m.push_row(row);
  }
  return m;
}

const char* cl_strategy_name(CLStrategy s) {
  return s == CLStrategy::SeqFT ? "seqft" : "replay";
}

CLStrategy cl_strategy_from_name(const std::string& s) {
  if (s == "seqft") return CLStrategy::SeqFT;
  if (s == "replay") return CLStrategy::Replay;
  throw ContinualError("unknown continual strategy: " + s);
}

void RunConfig::validate() const {
  if (replay_fraction < 0.0 || replay_fraction > 1.0) {
    throw ContinualError("replay_fraction must lie in [0,1]");
  }
  for (int e : epochs_per_task) {
    if (e < 0) throw ContinualError("epochs_per_task entries must be nonnegative");
  }
  opt.validate();
}

Dataset replay_mix(const std::vector<Dataset>& history, const Dataset& current,
                   double fraction, std::uint64_t seed, int round) {
  if (fraction < 0.0 || fraction > 1.0) throw ContinualError("fraction outside [0,1]");
  Dataset mixed = current;
  Stream rng(seed, static_cast<std::uint64_t>(round), kReplaySalt);
  for (const Dataset& prior : history) {
    if (prior.empty() || fraction == 0.0) continue;
    const int k = static_cast<int>(
        std::ceil(fraction * static_cast<double>(prior.size())));
    for (int idx : rng.sample_indices(static_cast<int>(prior.size()), k)) {
      mixed.push_back(prior[idx]);
    }
  }
  rng.shuffle(mixed);
  return mixed;
}

RunResult run_sequence(Model& model, const std::vector<TaskSpec>& tasks,
                       const RunConfig& cfg) {
  if (tasks.empty()) throw ContinualError("need at least one task");
  cfg.validate();

  RunResult res;
  res.theta0 = model.registry();
  std::vector<std::string> names;
  for (const auto& t : tasks) names.push_back(t.name);
  res.matrix = EvalMatrix(names);

  std::vector<Dataset> datasets;
  for (const auto& t : tasks) datasets.push_back(task_dataset(t));

  Trainer trainer(model.registry(), cfg.opt, model_loss_fn(model, Vocab::pad));

  for (int round = 1; round <= static_cast<int>(tasks.size()); ++round) {
    SelectionPlan plan;
    if (cfg.masking.hft) {
      plan = plan_for(cfg.masking.strategy, model.registry(), round, cfg.seed,
                      cfg.masking.ratio, cfg.masking.freeze_io);
    } else {
      plan.round_index = round;
      plan.strategy = SelStrategy::Ratio;
      plan.ratio = 1.0;
      plan.seed = cfg.seed;
      for (const auto& n : model.registry().names()) plan.trainable.insert(n);
    }
    res.history.push(plan);

    Dataset round_data = datasets[round - 1];
    if (cfg.strategy == CLStrategy::Replay && round > 1) {
      std::vector<Dataset> prior(datasets.begin(), datasets.begin() + round - 1);
      round_data = replay_mix(prior, round_data, cfg.replay_fraction, cfg.seed, round);
    }

    const auto& epochs = cfg.epochs_per_task;
    if (!epochs.empty()) trainer.set_epochs(epochs[(round - 1) % epochs.size()]);
    if (cfg.reset_opt_per_round) trainer.reset_optimizer_state();
    res.round_logs.push_back(trainer.train_round(
        round_data, plan, cfg.seed + kTrainSalt * static_cast<std::uint64_t>(round)));

    std::vector<double> row;
    for (int i = 0; i < round; ++i) {
      row.push_back(eval_exact_match(model, tasks[i]));
    }
    res.matrix.push_row(row);
    res.round_end.push_back(model.registry());
  }
  return res;
}

}  // namespace hft
