#include "hft/model.hpp"

#include <algorithm>
#include <cmath>

namespace hft {

const char* category_name(Category c) {
  switch (c) {
    case Category::SAN: return "SAN";
    case Category::FFN: return "FFN";
    case Category::LN: return "LN";
    case Category::EMB: return "EMB";
    case Category::HEAD: return "HEAD";
  }
  return "?";
}

Category category_from_name(const std::string& s) {
  if (s == "SAN") return Category::SAN;
  if (s == "FFN") return Category::FFN;
  if (s == "LN") return Category::LN;
  if (s == "EMB") return Category::EMB;
  if (s == "HEAD") return Category::HEAD;
  throw ModelError("unknown category: " + s);
}

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 ||
      d_ff <= 0 || max_seq_len <= 0) {
    throw ModelError("model config extents must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ModelError("d_model must be divisible by n_heads");
  }
}

void ParameterRegistry::add(std::string name, Category cat, int layer, Tensor t) {
  if (index_.count(name)) throw ModelError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.push_back(ParamEntry{std::move(name), cat, layer, std::move(t)});
}

const Tensor& ParameterRegistry::tensor(const std::string& name) const {
  return entry(name).tensor;
}

Tensor& ParameterRegistry::tensor(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

const ParamEntry& ParameterRegistry::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter: " + name);
  return entries_[it->second];
}

std::size_t ParameterRegistry::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

bool ParameterRegistry::structurally_equal(const ParameterRegistry& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = o.entries_[i];
    if (a.name != b.name || a.category != b.category || a.layer != b.layer ||
        a.tensor.shape() != b.tensor.shape() || a.tensor.dtype() != b.tensor.dtype()) {
      return false;
    }
  }
  return true;
}

Census param_census(const ParameterRegistry& reg) {
  Census c;
  for (std::size_t i = 0; i < reg.count(); ++i) {
    const auto& e = reg.entry(i);
    auto& row = c.by_category[e.category];
    ++row.matrices;
    row.elements += e.tensor.size();
    c.total_elements += e.tensor.size();
    if (e.layer >= 0) {
      auto& lr = c.by_layer[e.layer];
      ++lr.matrices;
      lr.elements += e.tensor.size();
      c.transformer_elements += e.tensor.size();
    }
  }
  return c;
}

std::string layer_param_name(int layer, const char* leaf) {
  return "layer." + std::to_string(layer) + "." + leaf;
}

Model build_model(const ModelConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  ParameterRegistry reg;
  const double proj_std = 0.02 / std::sqrt(static_cast<double>(cfg.n_layers));
  int counter = 0;
  auto randn = [&](std::vector<int> shape, double std) {
    Stream s(init_seed, 0, static_cast<std::uint64_t>(counter++));
    return Tensor::randn(std::move(shape), std, s, cfg.dtype);
  };
  for (int l = 0; l < cfg.n_layers; ++l) {
    const int d = cfg.d_model;
    reg.add(layer_param_name(l, "san.wq"), Category::SAN, l, randn({d, d}, proj_std));
    reg.add(layer_param_name(l, "san.wk"), Category::SAN, l, randn({d, d}, proj_std));
    reg.add(layer_param_name(l, "san.wv"), Category::SAN, l, randn({d, d}, proj_std));
    reg.add(layer_param_name(l, "san.wo"), Category::SAN, l, randn({d, d}, proj_std));
    reg.add(layer_param_name(l, "ffn.w_gate"), Category::FFN, l, randn({d, cfg.d_ff}, proj_std));
    reg.add(layer_param_name(l, "ffn.w_up"), Category::FFN, l, randn({d, cfg.d_ff}, proj_std));
    reg.add(layer_param_name(l, "ffn.w_down"), Category::FFN, l, randn({cfg.d_ff, d}, proj_std));
    reg.add(layer_param_name(l, "ln.attn"), Category::LN, l,
            Tensor::full({1, d}, 1.0, cfg.dtype));
    reg.add(layer_param_name(l, "ln.ffn"), Category::LN, l,
            Tensor::full({1, d}, 1.0, cfg.dtype));
  }
  // Token rows [0, vocab) plus learned absolute position rows
  // [vocab, vocab + max_seq_len).
  reg.add("embed", Category::EMB, -1,
          randn({cfg.vocab_size + cfg.max_seq_len, cfg.d_model}, 0.02));
  reg.add("lm_head", Category::HEAD, -1, randn({cfg.d_model, cfg.vocab_size}, 0.02));
  return Model(cfg, std::move(reg));
}

void Model::check_tokens(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw ModelError("empty token sequence");
  if (static_cast<int>(tokens.size()) > config_.max_seq_len) {
    throw ModelError("sequence longer than max_seq_len");
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) throw ModelError("token id out of range");
  }
}

std::vector<ValueId> Model::make_leaves(Tape& tape,
                                        const std::vector<bool>& trainable) const {
  if (!trainable.empty() && trainable.size() != registry_.count()) {
    throw ModelError("trainable mask size mismatch");
  }
  std::vector<ValueId> ids;
  ids.reserve(registry_.count());
  for (std::size_t i = 0; i < registry_.count(); ++i) {
    const bool rg = trainable.empty() ? true : trainable[i];
    ids.push_back(tape.leaf(registry_.entry(i).tensor, rg));
  }
  return ids;
}

ValueId Model::trace_logits(Tape& tape, const std::vector<ValueId>& param_ids,
                            const std::vector<int>& tokens) const {
  check_tokens(tokens);
  const int T = static_cast<int>(tokens.size());
  const int d = config_.d_model;
  const int dh = d / config_.n_heads;
  auto pid = [&](const std::string& name) { return param_ids[registry_.index_of(name)]; };

  // Token + position embeddings share the EMB matrix.
  std::vector<int> pos_rows(tokens.size());
  for (int t = 0; t < T; ++t) pos_rows[t] = config_.vocab_size + t;
  ValueId emb = pid("embed");
  ValueId x = tape.add(tape.embed_lookup(emb, tokens), tape.embed_lookup(emb, pos_rows));

  // Additive causal mask, reused by every layer.
  Tensor mask = Tensor::zeros({T, T}, config_.dtype);
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j) mask.at(i, j) = -1e9;
  ValueId mask_id = tape.constant(std::move(mask));

  for (int l = 0; l < config_.n_layers; ++l) {
    ValueId xn = tape.rms_norm(x, pid(layer_param_name(l, "ln.attn")));
    ValueId q = tape.matmul(xn, pid(layer_param_name(l, "san.wq")));
    ValueId k = tape.matmul(xn, pid(layer_param_name(l, "san.wk")));
    ValueId v = tape.matmul(xn, pid(layer_param_name(l, "san.wv")));
    std::vector<ValueId> heads;
    for (int h = 0; h < config_.n_heads; ++h) {
      ValueId qh = tape.slice_cols(q, h * dh, dh);
      ValueId kh = tape.slice_cols(k, h * dh, dh);
      ValueId vh = tape.slice_cols(v, h * dh, dh);
      ValueId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                  1.0 / std::sqrt(static_cast<double>(dh)));
      ValueId probs = tape.row_softmax(tape.add(scores, mask_id));
      heads.push_back(tape.matmul(probs, vh));
    }
    ValueId attn = tape.matmul(tape.concat_cols(heads), pid(layer_param_name(l, "san.wo")));
    x = tape.add(x, attn);

    ValueId fn = tape.rms_norm(x, pid(layer_param_name(l, "ln.ffn")));
    ValueId gate = tape.silu(tape.matmul(fn, pid(layer_param_name(l, "ffn.w_gate"))));
    ValueId up = tape.matmul(fn, pid(layer_param_name(l, "ffn.w_up")));
    ValueId ff = tape.matmul(tape.mul(gate, up), pid(layer_param_name(l, "ffn.w_down")));
    x = tape.add(x, ff);
  }
  return tape.matmul(x, pid("lm_head"));
}

ValueId Model::trace_loss(Tape& tape, const std::vector<ValueId>& param_ids,
                          const std::vector<int>& tokens,
                          const std::vector<int>& targets, int pad_id) const {
  if (tokens.size() != targets.size()) {
    throw ModelError("tokens/targets length mismatch");
  }
  ValueId logits = trace_logits(tape, param_ids, tokens);
  return tape.cross_entropy(logits, targets, pad_id);
}

Tensor Model::forward_logits_one(const std::vector<int>& tokens) const {
  Tape tape;
  std::vector<bool> none(registry_.count(), false);
  auto ids = make_leaves(tape, none);
  ValueId logits = trace_logits(tape, ids, tokens);
  return tape.value(logits);
}

Tensor Model::forward_logits(const std::vector<std::vector<int>>& batch) const {
  if (batch.empty()) throw ModelError("empty batch");
  const std::size_t T = batch[0].size();
  for (const auto& s : batch) {
    if (s.size() != T) throw ModelError("ragged batch");
  }
  Tensor out({static_cast<int>(batch.size()), static_cast<int>(T), config_.vocab_size},
             config_.dtype);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tensor logits = forward_logits_one(batch[b]);
    std::copy(logits.data(), logits.data() + logits.size(),
              out.data() + static_cast<std::int64_t>(b) * logits.size());
  }
  return out;
}

double Model::loss_ce(const std::vector<int>& tokens, const std::vector<int>& targets,
                      int pad_id) const {
  Tape tape;
  std::vector<bool> none(registry_.count(), false);
  auto ids = make_leaves(tape, none);
  return tape.scalar(trace_loss(tape, ids, tokens, targets, pad_id));
}

}  // namespace hft
