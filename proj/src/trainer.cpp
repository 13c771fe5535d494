#include "hft/trainer.hpp"

#include <chrono>
#include <cmath>

#include "hft/rng.hpp"

namespace hft {

namespace {
constexpr std::uint64_t kShuffleSalt = 0x7ab1e5ull;

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}
}  // namespace

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw TrainerError("learning rate must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw TrainerError("warmup_fraction must lie in [0,1)");
  }
  if (epochs < 0 || batch_size <= 0) throw TrainerError("bad epochs/batch_size");
}

Trainer::Trainer(ParameterRegistry& registry, OptimizerConfig cfg, BatchLossFn loss_fn)
    : reg_(registry), cfg_(cfg), loss_fn_(std::move(loss_fn)) {
  cfg_.validate();
}

void Trainer::reset_optimizer_state() {
  m_.clear();
  v_.clear();
  adam_t_.clear();
}

const Tensor& Trainer::first_moment(const std::string& name) const {
  auto it = m_.find(name);
  if (it == m_.end()) throw TrainerError("no first moment for " + name);
  return it->second;
}

const Tensor& Trainer::second_moment(const std::string& name) const {
  auto it = v_.find(name);
  if (it == v_.end()) throw TrainerError("no second moment for " + name);
  return it->second;
}

double Trainer::lr_at(int step, int total_steps) const {
  const double base = cfg_.learning_rate;
  const int warmup = static_cast<int>(cfg_.warmup_fraction * total_steps);
  if (warmup > 0 && step < warmup) {
    return base * (step + 1) / warmup;
  }
  if (cfg_.schedule == LrSchedule::Constant || total_steps <= warmup) return base;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return base * (1.0 - progress);
}

double Trainer::step(const Dataset& batch, const SelectionPlan& plan) {
  return step_impl(batch, plan, cfg_.learning_rate, nullptr);
}

double Trainer::step_impl(const Dataset& batch, const SelectionPlan& plan,
                          double lr, const PenaltyRef* penalty) {
  if (batch.empty()) throw TrainerError("empty batch");

  std::vector<bool> trainable(reg_.count());
  for (std::size_t i = 0; i < reg_.count(); ++i) {
    trainable[i] = plan.is_trainable(reg_.entry(i).name);
  }

  Tape tape;
  std::vector<ValueId> param_ids;
  param_ids.reserve(reg_.count());
  for (std::size_t i = 0; i < reg_.count(); ++i) {
    param_ids.push_back(tape.leaf(reg_.entry(i).tensor, trainable[i]));
  }
  ValueId loss_id = loss_fn_(tape, param_ids, batch);
  const double loss = tape.scalar(loss_id);
  if (!std::isfinite(loss)) throw TrainerError("non-finite loss; step aborted");
  // A fully frozen plan (and no penalty) has nothing to update.
  if (!tape.requires_grad(loss_id) && !(penalty && penalty->lambda > 0.0)) return loss;
  if (tape.requires_grad(loss_id)) tape.backward(loss_id);

  // Gather trainable gradients in registry order.
  std::vector<Tensor> grads(reg_.count());
  for (std::size_t i = 0; i < reg_.count(); ++i) {
    if (!trainable[i]) continue;
    grads[i] = tape.grad(param_ids[i]);
    if (!grads[i].all_finite()) throw TrainerError("non-finite gradient; step aborted");
  }

  if (penalty && penalty->lambda > 0.0) {
    const double two_lambda = 2.0 * penalty->lambda;
    for (std::size_t i = 0; i < reg_.count(); ++i) {
      const auto& e = reg_.entry(i);
      if (penalty->mask_plan->is_trainable(e.name)) continue;  // (I-M) coords only
      const Tensor& ref = penalty->theta0->tensor(e.name);
      if (!ref.same_shape(e.tensor)) throw TrainerError("penalty reference shape mismatch");
      if (grads[i].empty()) grads[i] = Tensor::zeros(e.tensor.shape(), e.tensor.dtype());
      for (std::int64_t k = 0; k < ref.size(); ++k) {
        grads[i].data()[k] += two_lambda * (e.tensor.data()[k] - ref.data()[k]);
      }
    }
  }

  // Global-norm clip over trainable gradients only.
  if (cfg_.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < reg_.count(); ++i) {
      if (grads[i].empty()) continue;
      for (std::int64_t k = 0; k < grads[i].size(); ++k) {
        sq += grads[i].data()[k] * grads[i].data()[k];
      }
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip_norm) {
      const double s = cfg_.grad_clip_norm / norm;
      for (auto& g : grads) {
        if (g.empty()) continue;
        for (std::int64_t k = 0; k < g.size(); ++k) g.data()[k] *= s;
      }
    }
  }

  for (std::size_t i = 0; i < reg_.count(); ++i) {
    if (grads[i].empty()) continue;
    Tensor& p = reg_.entry(i).tensor;
    const Tensor& g = grads[i];
    if (cfg_.kind == OptKind::Sgd) {
      for (std::int64_t k = 0; k < p.size(); ++k) p.data()[k] -= lr * g.data()[k];
    } else {
      const std::string& name = reg_.entry(i).name;
      Tensor& m = m_.try_emplace(name, Tensor::zeros(p.shape(), DType::F64)).first->second;
      Tensor& v = v_.try_emplace(name, Tensor::zeros(p.shape(), DType::F64)).first->second;
      const int t = ++adam_t_[name];
      const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
      for (std::int64_t k = 0; k < p.size(); ++k) {
        m.data()[k] = cfg_.beta1 * m.data()[k] + (1.0 - cfg_.beta1) * g.data()[k];
        v.data()[k] = cfg_.beta2 * v.data()[k] + (1.0 - cfg_.beta2) * g.data()[k] * g.data()[k];
        const double mhat = m.data()[k] / bc1;
        const double vhat = v.data()[k] / bc2;
        p.data()[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             cfg_.weight_decay * p.data()[k]);
      }
    }
    p.quantize();
  }
  return loss;
}

TrainLog Trainer::run_epochs(const Dataset& data, const SelectionPlan& plan,
                             std::uint64_t shuffle_seed, const PenaltyRef* penalty) {
  if (data.empty()) throw TrainerError("empty dataset");
  const int batches_per_epoch =
      (static_cast<int>(data.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  const int total_steps = cfg_.epochs * batches_per_epoch;

  const MaskStats stats = [&] {
    MaskStats s;
    std::int64_t train = 0, total = 0;
    for (std::size_t i = 0; i < reg_.count(); ++i) {
      const auto& e = reg_.entry(i);
      total += e.tensor.size();
      if (plan.is_trainable(e.name)) train += e.tensor.size();
    }
    s.trainable_total_elements = train;
    s.total_elements = total;
    return s;
  }();

  TrainLog log;
  const double t0 = now_ms();
  int step = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) order[i] = static_cast<int>(i);
    Stream rng(shuffle_seed, static_cast<std::uint64_t>(epoch), kShuffleSalt);
    rng.shuffle(order);
    for (int b = 0; b < batches_per_epoch; ++b) {
      Dataset batch;
      for (int i = b * cfg_.batch_size;
           i < std::min<int>((b + 1) * cfg_.batch_size, static_cast<int>(data.size()));
           ++i) {
        batch.push_back(data[order[i]]);
      }
      const double s0 = now_ms();
      const double loss = step_impl(batch, plan, lr_at(step, total_steps), penalty);
      log.entries.push_back(TrainLogEntry{step, loss, now_ms() - s0,
                                          stats.total_fraction()});
      ++step;
    }
  }
  log.steps = step;
  log.total_wall_ms = now_ms() - t0;
  return log;
}

TrainLog Trainer::train_round(const Dataset& data, const SelectionPlan& plan,
                              std::uint64_t shuffle_seed) {
  return run_epochs(data, plan, shuffle_seed, nullptr);
}

TrainLog Trainer::train_penalty(const Dataset& data, const ParameterRegistry& theta0,
                                const SelectionPlan& mask_plan, double lambda,
                                std::uint64_t shuffle_seed) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw TrainerError("lambda must be finite and nonnegative");
  }
  SelectionPlan all;
  all.round_index = mask_plan.round_index;
  for (const auto& name : reg_.names()) all.trainable.insert(name);
  if (lambda == 0.0) {
    return run_epochs(data, all, shuffle_seed, nullptr);
  }
  PenaltyRef pref{&theta0, &mask_plan, lambda};
  return run_epochs(data, all, shuffle_seed, &pref);
}

BatchLossFn model_loss_fn(const Model& model, int pad_id) {
  return [&model, pad_id](Tape& tape, const std::vector<ValueId>& param_ids,
                          const Dataset& batch) {
    ValueId total = -1;
    for (const auto& ex : batch) {
      ValueId l = model.trace_loss(tape, param_ids, ex.tokens, ex.targets, pad_id);
      total = (total < 0) ? l : tape.add(total, l);
    }
    return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  };
}

TrainLog train_round(Model& model, const SelectionPlan& plan, const Dataset& data,
                     const OptimizerConfig& cfg, int pad_id,
                     std::uint64_t shuffle_seed) {
  Trainer trainer(model.registry(), cfg, model_loss_fn(model, pad_id));
  return trainer.train_round(data, plan, shuffle_seed);
}

namespace {

// Backward cost model, in FLOPs for one sequence of length T. Dense
// matmul backward is 2*T*numel for each of dX and dW; attention score
// and context products contribute activation terms only.
struct BackwardCost {
  double activation = 0.0;                    // plan-independent
  std::map<std::string, double> weight_grad;  // per parameter matrix
};

BackwardCost backward_cost(const Model& model, int T) {
  const auto& cfg = model.config();
  const double d = cfg.d_model;
  const double dh = d / cfg.n_heads;
  BackwardCost c;
  for (std::size_t i = 0; i < model.registry().count(); ++i) {
    const auto& e = model.registry().entry(i);
    switch (e.category) {
      case Category::SAN:
      case Category::FFN:
      case Category::HEAD:
        c.weight_grad[e.name] = 2.0 * T * static_cast<double>(e.tensor.size());
        c.activation += 2.0 * T * static_cast<double>(e.tensor.size());
        break;
      case Category::EMB:
        c.weight_grad[e.name] = 2.0 * T * d;  // token + position row adds
        break;
      case Category::LN:
        c.weight_grad[e.name] = 3.0 * T * d;
        c.activation += 6.0 * T * d;
        break;
    }
  }
  // Attention score/context backward and softmax, per layer.
  c.activation += cfg.n_layers * cfg.n_heads *
                  (8.0 * T * T * dh + 4.0 * T * T);
  return c;
}

}  // namespace

double transformer_weight_grad_share(const Model& model, int seq_len) {
  BackwardCost c = backward_cost(model, seq_len);
  double total = c.activation, transformer = 0.0;
  for (const auto& [name, cost] : c.weight_grad) {
    total += cost;
    if (model.registry().entry(name).layer >= 0) transformer += cost;
  }
  return transformer / total;
}

double grad_skip_fraction(const SelectionPlan& plan, const Model& model,
                          int seq_len) {
  BackwardCost c = backward_cost(model, seq_len);
  double total = c.activation, skipped = 0.0;
  for (const auto& [name, cost] : c.weight_grad) {
    total += cost;
    if (!plan.is_trainable(name)) skipped += cost;
  }
  return skipped / total;
}

}  // namespace hft
