#include "hft/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hft {

namespace {

double matrix_variation(const Tensor& a, const Tensor& b, VariationNorm norm) {
  if (!a.same_shape(b)) throw AnalysisError("shape mismatch in variation");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += norm == VariationNorm::MeanAbs ? std::abs(d) : d * d;
  }
  const double mean = acc / static_cast<double>(a.size());
  return norm == VariationNorm::MeanAbs ? mean : std::sqrt(mean);
}

int layer_count(const ParameterRegistry& reg) {
  int n = 0;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    n = std::max(n, reg.entry(i).layer + 1);
  }
  return n;
}

}  // namespace

std::vector<BlockVariation> block_variation(const ParameterRegistry& theta_final,
                                            const ParameterRegistry& theta_0,
                                            VariationNorm norm) {
  if (!theta_final.structurally_equal(theta_0)) {
    throw AnalysisError("registries are not structurally identical");
  }
  const int n_layers = layer_count(theta_final);
  if (n_layers % 2 != 0) throw AnalysisError("layer-pair grouping requires even n_layers");

  std::map<std::pair<int, Category>, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < theta_final.count(); ++i) {
    const auto& e = theta_final.entry(i);
    if (e.layer < 0) continue;
    if (e.category != Category::SAN && e.category != Category::FFN) continue;
    const double v = matrix_variation(e.tensor, theta_0.entry(i).tensor, norm);
    auto& slot = acc[{e.layer / 2, e.category}];
    slot.first += v;
    slot.second += 1;
  }
  std::vector<BlockVariation> out;
  for (const auto& [key, sum_n] : acc) {
    out.push_back(BlockVariation{key.first, key.second, sum_n.first / sum_n.second});
  }
  return out;
}

std::vector<SelectedTimesBucket> variation_by_selected_times(
    const ParameterRegistry& theta_final, const ParameterRegistry& theta_0,
    const SelectionHistory& history, VariationNorm norm) {
  if (!theta_final.structurally_equal(theta_0)) {
    throw AnalysisError("registries are not structurally identical");
  }
  const int T = static_cast<int>(history.plans.size());
  std::vector<SelectedTimesBucket> buckets(T + 1);
  for (int t = 0; t <= T; ++t) buckets[t].times = t;
  for (std::size_t i = 0; i < theta_final.count(); ++i) {
    const auto& e = theta_final.entry(i);
    if (e.layer < 0) continue;
    for (const auto& plan : history.plans) {
      if (!plan.is_trainable(e.name) && !plan.frozen.count(e.name)) {
        throw AnalysisError("matrix missing from selection history: " + e.name);
      }
    }
    const int times = history.times_selected(e.name);
    const double v = matrix_variation(e.tensor, theta_0.entry(i).tensor, norm);
    buckets[times].mean_variation += v;
    buckets[times].matrices += 1;
  }
  for (auto& b : buckets) {
    if (b.matrices > 0) b.mean_variation /= b.matrices;
  }
  return buckets;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw AnalysisError("spearman needs >= 2 paired samples");
  }
  auto ranks = [](const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (i + j) / 2.0 + 1.0;
      for (int k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const int n = static_cast<int>(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (int i = 0; i < n; ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) throw AnalysisError("spearman undefined for constant ranks");
  return cov / std::sqrt(vx * vy);
}

std::vector<RuntimeRow> runtime_report(
    const std::vector<std::pair<double, TrainLog>>& ladder) {
  if (ladder.empty()) throw AnalysisError("empty ladder");
  const int steps = ladder.front().second.steps;
  double fft_ms = -1.0;
  for (const auto& [ratio, log] : ladder) {
    if (log.steps != steps) throw AnalysisError("mismatched step counts in ladder");
    if (ratio == 1.0) fft_ms = log.total_wall_ms;
  }
  if (fft_ms <= 0.0) throw AnalysisError("ladder must include the 100% (FFT) run");
  std::vector<RuntimeRow> out;
  for (const auto& [ratio, log] : ladder) {
    out.push_back(RuntimeRow{100.0 * ratio, log.total_wall_ms,
                             100.0 * log.total_wall_ms / fft_ms});
  }
  return out;
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
const char* norm_name(VariationNorm n) {
  return n == VariationNorm::MeanAbs ? "mean_abs" : "l2";
}
}  // namespace

std::string block_variation_csv(const std::vector<BlockVariation>& rows,
                                VariationNorm norm) {
  std::ostringstream os;
  os << "# norm=" << norm_name(norm) << "\n";
  os << "layer_pair,category,variation\n";
  for (const auto& r : rows) {
    os << r.layer_pair << ',' << category_name(r.category) << ',' << fmt(r.variation)
       << '\n';
  }
  return os.str();
}

std::string selected_times_csv(const std::vector<SelectedTimesBucket>& rows,
                               VariationNorm norm) {
  std::ostringstream os;
  os << "# norm=" << norm_name(norm) << "\n";
  os << "selected_times,matrices,mean_variation\n";
  for (const auto& r : rows) {
    os << r.times << ',' << r.matrices << ',' << fmt(r.mean_variation) << '\n';
  }
  return os.str();
}

std::string runtime_csv(const std::vector<RuntimeRow>& rows) {
  std::ostringstream os;
  os << "trainable_percent,wall_ms,percent_of_fft\n";
  for (const auto& r : rows) {
    os << fmt(r.trainable_percent) << ',' << fmt(r.wall_ms) << ','
       << fmt(r.percent_of_fft) << '\n';
  }
  return os.str();
}

}  // namespace hft
