#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hft/model.hpp"

using namespace hft;

namespace {
ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.vocab_size = 16;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 12;
  cfg.max_seq_len = 8;
  cfg.dtype = DType::F64;
  return cfg;
}
}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig cfg = toy_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  cfg = toy_config();
  cfg.n_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ModelError);
  cfg = toy_config();
  cfg.vocab_size = -1;
  CHECK_THROWS_AS(cfg.validate(), ModelError);
}

TEST_CASE("two-layer model has exactly 20 registry entries in fixed order") {
  Model model = build_model(toy_config(), 1);
  const auto& reg = model.registry();
  CHECK(reg.count() == 2 * 9 + 2);
  const char* expected[] = {
      "layer.0.san.wq", "layer.0.san.wk", "layer.0.san.wv", "layer.0.san.wo",
      "layer.0.ffn.w_gate", "layer.0.ffn.w_up", "layer.0.ffn.w_down",
      "layer.0.ln.attn", "layer.0.ln.ffn",
      "layer.1.san.wq", "layer.1.san.wk", "layer.1.san.wv", "layer.1.san.wo",
      "layer.1.ffn.w_gate", "layer.1.ffn.w_up", "layer.1.ffn.w_down",
      "layer.1.ln.attn", "layer.1.ln.ffn",
      "embed", "lm_head"};
  for (std::size_t i = 0; i < reg.count(); ++i) {
    CHECK(reg.entry(i).name == expected[i]);
  }
  CHECK(reg.entry("layer.1.san.wk").layer == 1);
  CHECK(reg.entry("embed").layer == -1);
  CHECK(reg.entry("embed").category == Category::EMB);
  CHECK(reg.entry("lm_head").category == Category::HEAD);
}

TEST_CASE("census counts matrices and elements per category") {
  Model model = build_model(toy_config(), 1);
  Census c = param_census(model.registry());
  CHECK(c.by_category[Category::SAN].matrices == 8);
  CHECK(c.by_category[Category::FFN].matrices == 6);
  CHECK(c.by_category[Category::LN].matrices == 4);
  CHECK(c.by_category[Category::EMB].matrices == 1);
  CHECK(c.by_category[Category::HEAD].matrices == 1);
  CHECK(c.by_category[Category::SAN].elements == 8 * 8 * 8);
  CHECK(c.by_category[Category::FFN].elements == 2 * (2 * 8 * 12 + 12 * 8));
  CHECK(c.by_category[Category::LN].elements == 4 * 8);
  // Token rows plus one position row per sequence slot.
  CHECK(c.by_category[Category::EMB].elements == (16 + 8) * 8);
  CHECK(c.transformer_elements ==
        c.by_category[Category::SAN].elements +
            c.by_category[Category::FFN].elements +
            c.by_category[Category::LN].elements);
  CHECK(c.by_layer.size() == 2);
  CHECK(c.by_layer[0].matrices == 9);
  CHECK(c.by_layer[0].elements == c.by_layer[1].elements);
}

TEST_CASE("initialization is a pure function of the seed") {
  Model a = build_model(toy_config(), 7);
  Model b = build_model(toy_config(), 7);
  Model c = build_model(toy_config(), 8);
  bool all_eq = true, any_diff = false;
  for (std::size_t i = 0; i < a.registry().count(); ++i) {
    all_eq = all_eq && a.registry().entry(i).tensor.bit_equal(b.registry().entry(i).tensor);
    any_diff = any_diff || !a.registry().entry(i).tensor.bit_equal(c.registry().entry(i).tensor);
  }
  CHECK(all_eq);
  CHECK(any_diff);
}

TEST_CASE("forward is causal: a future token cannot change earlier logits") {
  Model model = build_model(toy_config(), 3);
  const std::vector<int> s1 = {3, 5, 7, 2};
  const std::vector<int> s2 = {3, 5, 7, 9};  // differs only at the last position
  Tensor l1 = model.forward_logits_one(s1);
  Tensor l2 = model.forward_logits_one(s2);
  for (int t = 0; t < 3; ++t) {
    for (int v = 0; v < model.config().vocab_size; ++v) {
      CHECK(l1.at(t, v) == l2.at(t, v));
    }
  }
  bool last_differs = false;
  for (int v = 0; v < model.config().vocab_size; ++v) {
    last_differs = last_differs || l1.at(3, v) != l2.at(3, v);
  }
  CHECK(last_differs);
}

TEST_CASE("zeroed output head gives uniform logits and loss log(V)") {
  Model model = build_model(toy_config(), 3);
  Tensor& head = model.registry().tensor("lm_head");
  for (std::int64_t i = 0; i < head.size(); ++i) head.data()[i] = 0.0;
  const std::vector<int> tokens = {1, 2, 3};
  const std::vector<int> targets = {2, 3, 4};
  CHECK(model.loss_ce(tokens, targets, 0) ==
        doctest::Approx(std::log(16.0)).epsilon(1e-12));
}

TEST_CASE("token validation") {
  Model model = build_model(toy_config(), 3);
  CHECK_THROWS_AS(model.forward_logits_one({0, 99}), ModelError);
  CHECK_THROWS_AS(model.forward_logits_one({-1}), ModelError);
  CHECK_THROWS_AS(model.forward_logits_one(std::vector<int>(9, 1)), ModelError);  // > max_seq_len
  CHECK_THROWS_AS(model.forward_logits_one({}), ModelError);
}

TEST_CASE("batched forward matches per-sequence forward") {
  Model model = build_model(toy_config(), 4);
  std::vector<std::vector<int>> batch = {{1, 2, 3}, {4, 5, 6}};
  Tensor lb = model.forward_logits(batch);
  CHECK(lb.shape() == std::vector<int>({2, 3, 16}));
  for (int b = 0; b < 2; ++b) {
    Tensor one = model.forward_logits_one(batch[b]);
    for (int t = 0; t < 3; ++t) {
      for (int v = 0; v < 16; ++v) {
        CHECK(lb.data()[(b * 3 + t) * 16 + v] == one.at(t, v));
      }
    }
  }
}

TEST_CASE("traced loss equals untraced loss") {
  Model model = build_model(toy_config(), 5);
  const std::vector<int> tokens = {1, 2, 3, 4};
  const std::vector<int> targets = {2, 0, 4, 5};
  Tape tape;
  auto ids = model.make_leaves(tape);
  ValueId loss = model.trace_loss(tape, ids, tokens, targets, 0);
  CHECK(tape.scalar(loss) == model.loss_ce(tokens, targets, 0));
}

TEST_CASE("structurally_equal distinguishes registries") {
  Model a = build_model(toy_config(), 1);
  Model b = build_model(toy_config(), 2);  // same shapes, different values
  CHECK(a.registry().structurally_equal(b.registry()));
  ModelConfig other = toy_config();
  other.d_ff = 16;
  Model c = build_model(other, 1);
  CHECK_FALSE(a.registry().structurally_equal(c.registry()));
}
