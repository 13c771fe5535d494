// Command-line front end: train a single task, run a continual-learning
// sequence, compute matrix metrics, merge checkpoints, analyze drift, or
// benchmark the training step at several trainable ratios.
//
// Exit codes: 0 success, 2 configuration error, 3 non-finite training
// state, 4 I/O failure.
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hft/analysis.hpp"
#include "hft/checkpoint.hpp"
#include "hft/continual.hpp"
#include "hft/kernels.hpp"
#include "json.hpp"

using namespace hft;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;
constexpr int kExitIo = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliOptions {
  std::string config_path;
  std::string mask = "fft";  // fft | hft-category | hft-layer | hft-model | ratio
  double ratio = 0.5;
  bool freeze_io = false;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: leave the OpenMP default
  std::string out_dir = "out";
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void reject_unknown_keys(const json& obj, const char* section,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ConfigError(std::string("unknown key '") + key + "' in config section '" +
                        section + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

ModelConfig model_config(const json& root) {
  const json obj = root.value("model", json::object());
  reject_unknown_keys(obj, "model",
                      {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff",
                       "max_seq_len", "dtype"});
  ModelConfig cfg;
  cfg.vocab_size = get_or(obj, "vocab_size", cfg.vocab_size);
  cfg.d_model = get_or(obj, "d_model", cfg.d_model);
  cfg.n_layers = get_or(obj, "n_layers", cfg.n_layers);
  cfg.n_heads = get_or(obj, "n_heads", cfg.n_heads);
  cfg.d_ff = get_or(obj, "d_ff", cfg.d_ff);
  cfg.max_seq_len = get_or(obj, "max_seq_len", cfg.max_seq_len);
  if (obj.contains("dtype")) {
    try {
      cfg.dtype = dtype_from_name(obj.at("dtype").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

TaskConfig task_config(const json& root) {
  const json obj = root.value("tasks", json::object());
  reject_unknown_keys(obj, "tasks",
                      {"train_size", "eval_size", "min_len", "max_len"});
  TaskConfig cfg;
  cfg.train_size = get_or(obj, "train_size", cfg.train_size);
  cfg.eval_size = get_or(obj, "eval_size", cfg.eval_size);
  cfg.min_len = get_or(obj, "min_len", cfg.min_len);
  cfg.max_len = get_or(obj, "max_len", cfg.max_len);
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len) {
    throw ConfigError("tasks.min_len/max_len out of order");
  }
  return cfg;
}

OptimizerConfig optimizer_config(const json& root) {
  const json obj = root.value("optimizer", json::object());
  reject_unknown_keys(obj, "optimizer",
                      {"kind", "learning_rate", "warmup_fraction", "schedule", "beta1",
                       "beta2", "eps", "weight_decay", "epochs", "batch_size",
                       "grad_clip_norm"});
  OptimizerConfig cfg;
  const std::string kind = get_or<std::string>(obj, "kind", "adamw");
  if (kind == "sgd") cfg.kind = OptKind::Sgd;
  else if (kind == "adamw") cfg.kind = OptKind::AdamW;
  else throw ConfigError("optimizer.kind must be 'sgd' or 'adamw'");
  const std::string sched = get_or<std::string>(obj, "schedule", "linear_decay");
  if (sched == "constant") cfg.schedule = LrSchedule::Constant;
  else if (sched == "linear_decay") cfg.schedule = LrSchedule::LinearDecay;
  else throw ConfigError("optimizer.schedule must be 'constant' or 'linear_decay'");
  cfg.learning_rate = get_or(obj, "learning_rate", cfg.learning_rate);
  cfg.warmup_fraction = get_or(obj, "warmup_fraction", cfg.warmup_fraction);
  cfg.beta1 = get_or(obj, "beta1", cfg.beta1);
  cfg.beta2 = get_or(obj, "beta2", cfg.beta2);
  cfg.eps = get_or(obj, "eps", cfg.eps);
  cfg.weight_decay = get_or(obj, "weight_decay", cfg.weight_decay);
  cfg.epochs = get_or(obj, "epochs", cfg.epochs);
  cfg.batch_size = get_or(obj, "batch_size", cfg.batch_size);
  cfg.grad_clip_norm = get_or(obj, "grad_clip_norm", cfg.grad_clip_norm);
  try {
    cfg.validate();
  } catch (const TrainerError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

MaskingConfig masking_config(const CliOptions& opt) {
  MaskingConfig m;
  m.freeze_io = opt.freeze_io;
  m.ratio = opt.ratio;
  if (opt.mask == "fft") {
    m.hft = false;
  } else if (opt.mask == "hft-category") {
    m.hft = true;
    m.strategy = SelStrategy::Category;
  } else if (opt.mask == "hft-layer") {
    m.hft = true;
    m.strategy = SelStrategy::Layer;
  } else if (opt.mask == "hft-model") {
    m.hft = true;
    m.strategy = SelStrategy::Model;
  } else if (opt.mask == "ratio") {
    m.hft = true;
    m.strategy = SelStrategy::Ratio;
    if (m.ratio < 0.0 || m.ratio > 1.0) throw ConfigError("--ratio must lie in [0,1]");
  } else {
    throw ConfigError("unknown --mask value: " + opt.mask);
  }
  return m;
}

std::string config_hash(const json& root, const CliOptions& opt) {
  json canonical = root;
  canonical["_cli"] = {{"mask", opt.mask},       {"ratio", opt.ratio},
                       {"freeze_io", opt.freeze_io}, {"seed", opt.seed}};
  const std::string dump = canonical.dump();
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(crc64(dump.data(), dump.size())));
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write: " + path.string());
  f << content;
  if (!f) throw IoError("write failure: " + path.string());
}

std::string train_log_jsonl(const TrainLog& log) {
  std::string out;
  for (const auto& e : log.entries) {
    json line{{"step", e.step},
              {"loss", e.loss},
              {"wall_ms", e.wall_ms},
              {"trainable_fraction", e.trainable_fraction}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

json metrics_json(const EvalMatrix& m) {
  json rounds = json::array();
  for (int t = 1; t <= m.rows(); ++t) {
    json row{{"round", t}, {"op", m.op_score(t)}};
    auto bwt = m.bwt_score(t);
    row["bwt"] = bwt ? json(*bwt) : json(nullptr);
    rounds.push_back(row);
  }
  json out{{"rounds", rounds}, {"final_op", m.op_score(m.rows())}};
  auto bwt = m.bwt_score(m.rows());
  out["final_bwt"] = bwt ? json(*bwt) : json(nullptr);
  return out;
}

Checkpoint load_or_io_error(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw IoError(e.what());
  }
}

void save_or_io_error(const Checkpoint& ckpt, const std::string& path) {
  try {
    save_checkpoint(ckpt, path);
  } catch (const CheckpointError& e) {
    // Non-finite weights are a training failure, not an I/O one.
    if (std::string(e.what()).find("non-finite") != std::string::npos) throw;
    throw IoError(e.what());
  }
}

// ---- subcommands ----------------------------------------------------------

int cmd_train(const CliOptions& opt, const std::string& task_name) {
  const json root = load_config(opt.config_path);
  const ModelConfig mc = model_config(root);
  const TaskConfig tc = task_config(root);
  const OptimizerConfig oc = optimizer_config(root);
  const MaskingConfig mask = masking_config(opt);

  Model model = build_model(mc, opt.seed);
  TaskSpec task = make_task(task_kind_from_name(task_name), opt.seed, tc, 0);
  Dataset data = task_dataset(task);

  SelectionPlan plan;
  if (mask.hft) {
    plan = plan_for(mask.strategy, model.registry(), 1, opt.seed, mask.ratio,
                    mask.freeze_io);
  } else {
    for (const auto& n : model.registry().names()) plan.trainable.insert(n);
  }

  TrainLog log = train_round(model, plan, data, oc, Vocab::pad, opt.seed);
  const double acc = eval_exact_match(model, task);

  fs::create_directories(opt.out_dir);
  write_file(fs::path(opt.out_dir) / "train_log.jsonl", train_log_jsonl(log));

  Checkpoint ckpt;
  ckpt.config = mc;
  ckpt.registry = model.registry();
  ckpt.history.push(plan);
  ckpt.metadata_json = json{{"command", "train"},
                            {"task", task.name},
                            {"seed", opt.seed},
                            {"exact_match", acc},
                            {"config_hash", config_hash(root, opt)}}
                           .dump();
  save_or_io_error(ckpt, (fs::path(opt.out_dir) / "model.ckpt").string());

  std::cout << "task=" << task.name << " steps=" << log.steps
            << " exact_match=" << acc << "\n";
  return 0;
}

int cmd_clrun(const CliOptions& opt, const std::string& strategy_name) {
  const json root = load_config(opt.config_path);
  const ModelConfig mc = model_config(root);
  const TaskConfig tc = task_config(root);

  RunConfig rc;
  rc.opt = optimizer_config(root);
  rc.masking = masking_config(opt);
  rc.seed = opt.seed;
  try {
    rc.strategy = cl_strategy_from_name(strategy_name);
  } catch (const ContinualError& e) {
    throw ConfigError(e.what());
  }
  const json run = root.value("run", json::object());
  reject_unknown_keys(run, "run",
                      {"replay_fraction", "epochs_per_task", "reset_opt_per_round"});
  rc.replay_fraction = get_or(run, "replay_fraction", rc.replay_fraction);
  rc.epochs_per_task = get_or(run, "epochs_per_task", rc.epochs_per_task);
  rc.reset_opt_per_round = get_or(run, "reset_opt_per_round", rc.reset_opt_per_round);
  try {
    rc.validate();
  } catch (const ContinualError& e) {
    throw ConfigError(e.what());
  }

  Model model = build_model(mc, opt.seed);
  auto tasks = make_suite(opt.seed, tc);
  RunResult res = run_sequence(model, tasks, rc);

  fs::create_directories(opt.out_dir);
  write_file(fs::path(opt.out_dir) / "matrix.csv", res.matrix.to_csv());
  write_file(fs::path(opt.out_dir) / "metrics.json", metrics_json(res.matrix).dump(2));
  std::string jsonl;
  for (const auto& log : res.round_logs) jsonl += train_log_jsonl(log);
  write_file(fs::path(opt.out_dir) / "train_log.jsonl", jsonl);

  Checkpoint ckpt;
  ckpt.config = mc;
  ckpt.registry = model.registry();
  ckpt.history = res.history;
  ckpt.metadata_json = json{{"command", "clrun"},
                            {"strategy", cl_strategy_name(rc.strategy)},
                            {"mask", opt.mask},
                            {"seed", opt.seed},
                            {"config_hash", config_hash(root, opt)}}
                           .dump();
  save_or_io_error(ckpt, (fs::path(opt.out_dir) / "final.ckpt").string());

  Checkpoint start;
  start.config = mc;
  start.registry = res.theta0;
  start.metadata_json = json{{"command", "clrun"}, {"snapshot", "start"}}.dump();
  save_or_io_error(start, (fs::path(opt.out_dir) / "start.ckpt").string());

  const auto bwt = res.matrix.bwt_score(res.matrix.rows());
  std::cout << "rounds=" << res.matrix.rows()
            << " op=" << res.matrix.op_score(res.matrix.rows())
            << " bwt=" << (bwt ? std::to_string(*bwt) : std::string("n/a")) << "\n";
  return 0;
}

int cmd_metrics(const CliOptions& opt, const std::string& matrix_path) {
  std::ifstream f(matrix_path);
  if (!f) throw IoError("cannot open matrix CSV: " + matrix_path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  EvalMatrix m;
  try {
    m = EvalMatrix::from_csv(text);
  } catch (const ContinualError& e) {
    throw ConfigError(e.what());
  }
  const json out = metrics_json(m);
  fs::create_directories(opt.out_dir);
  write_file(fs::path(opt.out_dir) / "metrics.json", out.dump(2));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_merge(const CliOptions& opt, const std::string& tuned_path,
              const std::string& base_path) {
  const MaskingConfig mask = masking_config(opt);
  if (!mask.hft) throw ConfigError("merge requires an hft-* mask strategy");
  Checkpoint tuned = load_or_io_error(tuned_path);
  Checkpoint base = load_or_io_error(base_path);

  ParameterRegistry merged;
  try {
    merged = reset_strategy(tuned.registry, base.registry, mask.strategy, opt.seed,
                            mask.freeze_io);
  } catch (const MergeError& e) {
    throw ConfigError(e.what());
  }

  fs::create_directories(opt.out_dir);
  Checkpoint out;
  out.config = tuned.config;
  out.registry = std::move(merged);
  out.history = tuned.history;
  out.metadata_json = json{{"command", "merge"},
                           {"mask", opt.mask},
                           {"seed", opt.seed},
                           {"tuned", tuned_path},
                           {"base", base_path}}
                          .dump();
  save_or_io_error(out, (fs::path(opt.out_dir) / "merged.ckpt").string());
  std::cout << "merged " << out.registry.count() << " tensors\n";
  return 0;
}

int cmd_analyze(const CliOptions& opt, const std::string& final_path,
                const std::string& start_path) {
  Checkpoint fin = load_or_io_error(final_path);
  Checkpoint start = load_or_io_error(start_path);
  fs::create_directories(opt.out_dir);
  try {
    for (VariationNorm norm : {VariationNorm::MeanAbs, VariationNorm::L2}) {
      auto rows = block_variation(fin.registry, start.registry, norm);
      const char* name = norm == VariationNorm::MeanAbs ? "block_variation_mean_abs.csv"
                                                        : "block_variation_l2.csv";
      write_file(fs::path(opt.out_dir) / name, block_variation_csv(rows, norm));
    }
    if (!fin.history.plans.empty()) {
      auto buckets = variation_by_selected_times(fin.registry, start.registry,
                                                 fin.history);
      write_file(fs::path(opt.out_dir) / "variation_by_selected_times.csv",
                 selected_times_csv(buckets, VariationNorm::MeanAbs));
    }
  } catch (const AnalysisError& e) {
    throw ConfigError(e.what());
  }
  std::cout << "analysis written to " << opt.out_dir << "\n";
  return 0;
}

int cmd_bench(const CliOptions& opt) {
  const json root = load_config(opt.config_path);
  const ModelConfig mc = model_config(root);
  const TaskConfig tc = task_config(root);
  const OptimizerConfig oc = optimizer_config(root);

  TaskSpec task = make_task(TaskKind::Copy, opt.seed, tc, 0);
  Dataset data = task_dataset(task);

  std::vector<std::pair<double, TrainLog>> ladder;
  for (double ratio : {1.0, 0.75, 0.5, 0.25}) {
    Model model = build_model(mc, opt.seed);
    SelectionPlan plan =
        plan_ratio(model.registry(), 1, opt.seed, ratio, false);
    ladder.emplace_back(ratio,
                        train_round(model, plan, data, oc, Vocab::pad, opt.seed));
  }
  auto rows = runtime_report(ladder);
  const std::string csv = runtime_csv(rows);
  fs::create_directories(opt.out_dir);
  write_file(fs::path(opt.out_dir) / "runtime.csv", csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale laboratory for selective-freezing fine-tuning"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_option("--mask", opt.mask,
                 "fft | hft-category | hft-layer | hft-model | ratio");
  app.add_option("--ratio", opt.ratio, "trainable fraction for --mask ratio");
  app.add_flag("--freeze-io", opt.freeze_io, "freeze embedding and output head too");
  app.add_option("--seed", opt.seed, "run seed");
  app.add_option("--threads", opt.threads, "worker threads (0: library default)");
  app.add_option("--out", opt.out_dir, "output directory");

  std::string task_name = "copy";
  auto* train = app.add_subcommand("train", "train one task and checkpoint the result");
  train->add_option("task", task_name, "task name (e.g. copy, parity)");

  std::string cl_strategy = "seqft";
  auto* clrun = app.add_subcommand("clrun", "sequential run over the task suite");
  clrun->add_option("strategy", cl_strategy, "seqft | replay");

  std::string matrix_path;
  auto* metrics = app.add_subcommand("metrics", "summary metrics of a score matrix CSV");
  metrics->add_option("matrix", matrix_path, "matrix CSV path")->required();

  std::string tuned_path, base_path;
  auto* merge = app.add_subcommand("merge", "selective reset of a fine-tuned checkpoint");
  merge->add_option("tuned", tuned_path, "fine-tuned checkpoint")->required();
  merge->add_option("base", base_path, "reference checkpoint")->required();

  std::string final_path, start_path;
  auto* analyze = app.add_subcommand("analyze", "weight-drift reports for a run");
  analyze->add_option("final", final_path, "final checkpoint")->required();
  analyze->add_option("start", start_path, "run-start checkpoint")->required();

  auto* bench = app.add_subcommand("bench", "step runtime at several trainable ratios");

  // Global options may appear after the subcommand name.
  for (auto* sub : {train, clrun, metrics, merge, analyze, bench}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  if (opt.threads < 0) {
    std::cerr << "error: --threads must be nonnegative\n";
    return kExitConfig;
  }
  if (opt.threads > 0) kernels::set_threads(opt.threads);

  try {
    if (train->parsed()) return cmd_train(opt, task_name);
    if (clrun->parsed()) return cmd_clrun(opt, cl_strategy);
    if (metrics->parsed()) return cmd_metrics(opt, matrix_path);
    if (merge->parsed()) return cmd_merge(opt, tuned_path, base_path);
    if (analyze->parsed()) return cmd_analyze(opt, final_path, start_path);
    if (bench->parsed()) return cmd_bench(opt);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    const char* what = e.what();
    if (std::strstr(what, "non-finite") != nullptr) {
      std::cerr << "numeric error: " << what << "\n";
      return kExitNonFinite;
    }
    std::cerr << "configuration error: " << what << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
