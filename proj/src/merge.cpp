#include "hft/merge.hpp"

#include <cmath>

#include "hft/rng.hpp"

namespace hft {

namespace {
void require_structural_match(const ParameterRegistry& a, const ParameterRegistry& b) {
  if (!a.structurally_equal(b)) {
    throw MergeError("registries are not structurally identical");
  }
}
}  // namespace

double TaskVector::l2_norm() const {
  double sq = 0.0;
  for (const auto& [name, t] : entries) {
    for (std::int64_t i = 0; i < t.size(); ++i) sq += t.data()[i] * t.data()[i];
  }
  return std::sqrt(sq);
}

std::map<Category, double> TaskVector::l2_norm_by_category(
    const ParameterRegistry& reg) const {
  std::map<Category, double> sq;
  for (const auto& [name, t] : entries) {
    double s = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) s += t.data()[i] * t.data()[i];
    sq[reg.entry(name).category] += s;
  }
  for (auto& [cat, s] : sq) s = std::sqrt(s);
  return sq;
}

TaskVector task_vector(const ParameterRegistry& theta_ft,
                       const ParameterRegistry& theta_0) {
  require_structural_match(theta_ft, theta_0);
  TaskVector tv;
  for (std::size_t i = 0; i < theta_ft.count(); ++i) {
    const auto& e = theta_ft.entry(i);
    const Tensor& base = theta_0.entry(i).tensor;
    // The difference is kept at full precision whatever the model dtype,
    // so base + delta reproduces the fine-tuned weights bit for bit.
    Tensor d = Tensor::zeros(e.tensor.shape(), DType::F64);
    for (std::int64_t k = 0; k < d.size(); ++k) {
      d.data()[k] = e.tensor.data()[k] - base.data()[k];
    }
    tv.entries.emplace(e.name, std::move(d));
  }
  return tv;
}

ParameterRegistry apply_task_vector(const ParameterRegistry& theta_0,
                                    const TaskVector& tv) {
  ParameterRegistry out;
  for (std::size_t i = 0; i < theta_0.count(); ++i) {
    const auto& e = theta_0.entry(i);
    auto it = tv.entries.find(e.name);
    if (it == tv.entries.end()) throw MergeError("task vector missing " + e.name);
    if (it->second.shape() != e.tensor.shape()) {
      throw MergeError("task vector shape mismatch for " + e.name);
    }
    Tensor t = e.tensor;
    for (std::int64_t k = 0; k < t.size(); ++k) t.data()[k] += it->second.data()[k];
    t.quantize();
    out.add(e.name, e.category, e.layer, std::move(t));
  }
  return out;
}

ParameterRegistry half_reset(const ParameterRegistry& theta_ft,
                             const ParameterRegistry& theta_0,
                             const SelectionPlan& keep_plan) {
  require_structural_match(theta_ft, theta_0);
  ParameterRegistry out;
  for (std::size_t i = 0; i < theta_ft.count(); ++i) {
    const auto& e = theta_ft.entry(i);
    const bool keep_ft = keep_plan.is_trainable(e.name);
    if (!keep_ft && !keep_plan.frozen.count(e.name)) {
      throw MergeError("keep plan does not cover parameter " + e.name);
    }
    out.add(e.name, e.category, e.layer,
            keep_ft ? e.tensor : theta_0.entry(i).tensor);
  }
  return out;
}

TaskVector drop_ratio(const TaskVector& tv, double q, std::uint64_t seed) {
  if (q < 0.0 || q > 1.0) throw MergeError("drop ratio must lie in [0,1]");
  std::vector<std::string> names;
  for (const auto& [name, t] : tv.entries) names.push_back(name);
  const int k = static_cast<int>(std::lround(q * names.size()));
  Stream rng(seed, 0, 0xd20bull);
  std::set<std::string> dropped;
  for (int idx : rng.sample_indices(static_cast<int>(names.size()), k)) {
    dropped.insert(names[idx]);
  }
  TaskVector out;
  for (const auto& [name, t] : tv.entries) {
    if (dropped.count(name)) {
      out.entries.emplace(name, Tensor::zeros(t.shape(), t.dtype()));
    } else {
      out.entries.emplace(name, t);
    }
  }
  return out;
}

ParameterRegistry reset_strategy(const ParameterRegistry& theta_ft,
                                 const ParameterRegistry& theta_0,
                                 SelStrategy strategy, std::uint64_t seed,
                                 bool freeze_io) {
  SelectionPlan plan = plan_for(strategy, theta_ft, 1, seed, 0.5, freeze_io);
  return half_reset(theta_ft, theta_0, plan);
}

}  // namespace hft
