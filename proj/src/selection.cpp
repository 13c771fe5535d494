#include "hft/selection.hpp"

#include <algorithm>

#include "hft/rng.hpp"

namespace hft {

namespace {

constexpr std::uint64_t kSelectionSalt = 0x5e1ec7ull;

struct Taxonomy {
  int n_layers = 0;
  // per layer, names sorted for platform-stable tie breaking
  std::vector<std::vector<std::string>> san, ffn, ln;
  std::vector<std::string> io;           // EMB + HEAD
  std::vector<std::string> transformer;  // all layer matrices
};

Taxonomy read_taxonomy(const ParameterRegistry& reg) {
  Taxonomy t;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    if (e.layer < 0) {
      t.io.push_back(e.name);
      continue;
    }
    t.n_layers = std::max(t.n_layers, e.layer + 1);
  }
  t.san.resize(t.n_layers);
  t.ffn.resize(t.n_layers);
  t.ln.resize(t.n_layers);
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    if (e.layer < 0) continue;
    t.transformer.push_back(e.name);
    switch (e.category) {
      case Category::SAN: t.san[e.layer].push_back(e.name); break;
      case Category::FFN: t.ffn[e.layer].push_back(e.name); break;
      case Category::LN: t.ln[e.layer].push_back(e.name); break;
      default:
        throw SelectionError("EMB/HEAD entry with a layer index: " + e.name);
    }
  }
  for (int l = 0; l < t.n_layers; ++l) {
    std::sort(t.san[l].begin(), t.san[l].end());
    std::sort(t.ffn[l].begin(), t.ffn[l].end());
    std::sort(t.ln[l].begin(), t.ln[l].end());
  }
  std::sort(t.transformer.begin(), t.transformer.end());
  std::sort(t.io.begin(), t.io.end());
  return t;
}

void require_taxonomy(const Taxonomy& t) {
  for (int l = 0; l < t.n_layers; ++l) {
    if (t.san[l].size() != 4 || t.ffn[l].size() != 3 || t.ln[l].size() != 2) {
      throw SelectionError("layer " + std::to_string(l) +
                           " does not follow the 4-SAN/3-FFN/2-LN taxonomy");
    }
  }
}

SelectionPlan finish(SelectionPlan plan, const Taxonomy& t,
                     const std::set<std::string>& frozen_transformer) {
  for (const auto& name : t.transformer) {
    if (frozen_transformer.count(name)) {
      plan.frozen.insert(name);
    } else {
      plan.trainable.insert(name);
    }
  }
  for (const auto& name : t.io) {
    if (plan.freeze_io) {
      plan.frozen.insert(name);
    } else {
      plan.trainable.insert(name);
    }
  }
  return plan;
}

Stream round_stream(std::uint64_t seed, int round) {
  return Stream(seed, static_cast<std::uint64_t>(round), kSelectionSalt);
}

}  // namespace

const char* sel_strategy_name(SelStrategy s) {
  switch (s) {
    case SelStrategy::Category: return "category";
    case SelStrategy::Layer: return "layer";
    case SelStrategy::Model: return "model";
    case SelStrategy::Ratio: return "ratio";
  }
  return "?";
}

SelStrategy sel_strategy_from_name(const std::string& s) {
  if (s == "category") return SelStrategy::Category;
  if (s == "layer") return SelStrategy::Layer;
  if (s == "model") return SelStrategy::Model;
  if (s == "ratio") return SelStrategy::Ratio;
  throw SelectionError("unknown selection strategy: " + s);
}

void SelectionHistory::push(SelectionPlan p) {
  const int expected = static_cast<int>(plans.size()) + 1;
  if (p.round_index != expected) {
    throw SelectionError("non-contiguous round index in selection history");
  }
  plans.push_back(std::move(p));
}

int SelectionHistory::times_selected(const std::string& name) const {
  int n = 0;
  for (const auto& p : plans) n += p.is_trainable(name) ? 1 : 0;
  return n;
}

SelectionPlan plan_category(const ParameterRegistry& reg, int round,
                            std::uint64_t seed, bool freeze_io) {
  Taxonomy t = read_taxonomy(reg);
  require_taxonomy(t);
  if (t.n_layers % 2 != 0) {
    throw SelectionError("category-level selection requires an even layer count");
  }
  Stream rng = round_stream(seed, round);
  SelectionPlan plan;
  plan.round_index = round;
  plan.strategy = SelStrategy::Category;
  plan.seed = seed;
  plan.freeze_io = freeze_io;

  // Half of the layers take the rounded-up FFN freeze count.
  std::set<int> ceil_layers;
  for (int idx : rng.sample_indices(t.n_layers, t.n_layers / 2)) ceil_layers.insert(idx);

  std::set<std::string> frozen;
  for (int l = 0; l < t.n_layers; ++l) {
    for (int idx : rng.sample_indices(4, 2)) frozen.insert(t.san[l][idx]);
    const int ffn_freeze = ceil_layers.count(l) ? 2 : 1;
    for (int idx : rng.sample_indices(3, ffn_freeze)) frozen.insert(t.ffn[l][idx]);
    for (int idx : rng.sample_indices(2, 1)) frozen.insert(t.ln[l][idx]);
  }
  return finish(std::move(plan), t, frozen);
}

SelectionPlan plan_layer(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, bool freeze_io) {
  Taxonomy t = read_taxonomy(reg);
  if (t.n_layers % 2 != 0) {
    throw SelectionError("layer-level selection requires an even layer count");
  }
  Stream rng = round_stream(seed, round);
  const int frozen_parity = rng.coin() ? 1 : 0;
  SelectionPlan plan;
  plan.round_index = round;
  plan.strategy = SelStrategy::Layer;
  plan.seed = seed;
  plan.freeze_io = freeze_io;
  std::set<std::string> frozen;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    if (e.layer >= 0 && e.layer % 2 == frozen_parity) frozen.insert(e.name);
  }
  return finish(std::move(plan), t, frozen);
}

SelectionPlan plan_model(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, bool freeze_io) {
  Taxonomy t = read_taxonomy(reg);
  Stream rng = round_stream(seed, round);
  SelectionPlan plan;
  plan.round_index = round;
  plan.strategy = SelStrategy::Model;
  plan.seed = seed;
  plan.freeze_io = freeze_io;
  const int n = static_cast<int>(t.transformer.size());
  std::set<std::string> frozen;
  for (int idx : rng.sample_indices(n, n / 2)) frozen.insert(t.transformer[idx]);
  return finish(std::move(plan), t, frozen);
}

SelectionPlan plan_ratio(const ParameterRegistry& reg, int round,
                         std::uint64_t seed, double p, bool freeze_io) {
  if (p < 0.0 || p > 1.0) throw SelectionError("ratio must lie in [0,1]");
  Taxonomy t = read_taxonomy(reg);
  Stream rng = round_stream(seed, round);
  SelectionPlan plan;
  plan.round_index = round;
  plan.strategy = SelStrategy::Ratio;
  plan.seed = seed;
  plan.ratio = p;
  plan.freeze_io = freeze_io;

  std::int64_t total = 0;
  for (const auto& name : t.transformer) total += reg.tensor(name).size();
  const double target = p * static_cast<double>(total);

  std::vector<std::string> order = t.transformer;
  rng.shuffle(order);
  std::set<std::string> frozen;
  std::int64_t taken = 0;
  for (const auto& name : order) {
    if (static_cast<double>(taken) < target) {
      taken += reg.tensor(name).size();
    } else {
      frozen.insert(name);
    }
  }
  return finish(std::move(plan), t, frozen);
}

SelectionPlan plan_for(SelStrategy strategy, const ParameterRegistry& reg,
                       int round, std::uint64_t seed, double ratio, bool freeze_io) {
  switch (strategy) {
    case SelStrategy::Category: return plan_category(reg, round, seed, freeze_io);
    case SelStrategy::Layer: return plan_layer(reg, round, seed, freeze_io);
    case SelStrategy::Model: return plan_model(reg, round, seed, freeze_io);
    case SelStrategy::Ratio: return plan_ratio(reg, round, seed, ratio, freeze_io);
  }
  throw SelectionError("unreachable strategy");
}

SelectionPlan complement(const SelectionPlan& plan, const ParameterRegistry& reg) {
  SelectionPlan out = plan;
  out.trainable.clear();
  out.frozen.clear();
  for (const auto& name : reg.names()) {
    if (plan.is_trainable(name)) {
      out.frozen.insert(name);
    } else {
      out.trainable.insert(name);
    }
  }
  return out;
}

MaskStats mask_stats(const SelectionPlan& plan, const ParameterRegistry& reg) {
  for (const auto& name : plan.trainable) {
    if (!reg.has(name)) throw SelectionError("plan names unknown parameter: " + name);
  }
  for (const auto& name : plan.frozen) {
    if (!reg.has(name)) throw SelectionError("plan names unknown parameter: " + name);
  }
  MaskStats s;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    const bool train = plan.is_trainable(e.name);
    s.total_elements += e.tensor.size();
    if (train) {
      s.trainable_total_elements += e.tensor.size();
      auto& row = s.trainable_by_category[e.category];
      ++row.matrices;
      row.elements += e.tensor.size();
    }
    if (e.layer >= 0) {
      s.total_layer_elements += e.tensor.size();
      if (train) s.trainable_layer_elements += e.tensor.size();
    }
  }
  return s;
}

}  // namespace hft
