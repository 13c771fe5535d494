#pragma once

#include <functional>
#include <vector>

#include "hft/tensor.hpp"

namespace hft {

using ValueId = int;

enum class OpKind {
  Leaf,
  MatMul,
  Add,          // same shape, or rhs a 1 x n row vector broadcast over rows
  Mul,          // elementwise, same shape
  RowSoftmax,
  RmsNorm,      // inputs: x [m x n], gain [1 x n]
  Silu,
  EmbedLookup,  // input: table; iattrs: row ids
  CrossEntropy, // input: logits [T x V]; iattrs: targets then pad_id
  Transpose,
  Scale,        // dattr: factor
  SliceCols,    // iattrs: {start, width}
  ConcatCols,
  Sum,          // scalar 1 x 1
};

struct AutogradError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reverse-mode tape. Built by a single thread per training step, consumed
// once by backward(). Leaves marked requires_grad=false never receive a
// gradient buffer and their weight-gradient work is skipped entirely;
// activation gradients still flow through ops that read them.
class Tape {
 public:
  ValueId leaf(Tensor value, bool requires_grad);
  ValueId constant(Tensor value) { return leaf(std::move(value), false); }

  ValueId matmul(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId row_softmax(ValueId a);
  ValueId rms_norm(ValueId x, ValueId gain);
  ValueId silu(ValueId a);
  ValueId embed_lookup(ValueId table, const std::vector<int>& row_ids);
  ValueId cross_entropy(ValueId logits, const std::vector<int>& targets, int pad_id);
  ValueId transpose(ValueId a);
  ValueId scale(ValueId a, double factor);
  ValueId slice_cols(ValueId a, int start, int width);
  ValueId concat_cols(const std::vector<ValueId>& parts);
  ValueId sum(ValueId a);

  const Tensor& value(ValueId id) const { return nodes_[check(id)].value; }
  bool requires_grad(ValueId id) const { return nodes_[check(id)].needs_grad; }
  double scalar(ValueId id) const;

  // Backpropagate from a scalar loss; gradients accumulate on every node
  // with needs_grad. Throws on non-scalar loss or non-finite gradients.
  void backward(ValueId loss);

  const Tensor& grad(ValueId id) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    std::vector<ValueId> inputs;
    Tensor value;
    bool needs_grad = false;
    std::vector<int> iattrs;
    double dattr = 0.0;
    Tensor saved;  // op-specific forward byproduct (softmax probs, rms, ...)
    Tensor grad;
  };

  ValueId push(Node n);
  int check(ValueId id) const;
  Node& node(ValueId id) { return nodes_[check(id)]; }
  void backprop_node(Node& n);

  std::vector<Node> nodes_;
};

// Max relative error between analytic gradients and central finite
// differences of `fn` over the sampled coordinates. `params` are the
// tensors `fn` reads; `analytic[i]` must match params[i]'s shape.
// Coordinates are sampled with `rng` (up to `max_coords` per tensor
// overall, spread across tensors).
double finite_diff_check(const std::function<double()>& fn,
                         const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic,
                         int max_coords, double h, Stream& rng);

}  // namespace hft
