#include "hft/autograd.hpp"

#include <cmath>
#include <cstring>

#include "hft/kernels.hpp"

namespace hft {

namespace {
constexpr double kRmsEps = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

int Tape::check(ValueId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw AutogradError("invalid value id");
  }
  return id;
}

ValueId Tape::push(Node n) {
  if (n.kind != OpKind::Leaf) {
    n.value.quantize();
    if (!n.value.all_finite()) throw AutogradError("non-finite op output");
  }
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

double Tape::scalar(ValueId id) const {
  const Tensor& v = value(id);
  if (v.size() != 1) throw AutogradError("not a scalar value");
  return v.data()[0];
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows()) {
    throw AutogradError("matmul shape mismatch " + shape_str(A.shape()) + " x " +
                        shape_str(B.shape()));
  }
  Node n;
  n.kind = OpKind::MatMul;
  n.inputs = {a, b};
  n.needs_grad = requires_grad(a) || requires_grad(b);
  n.value = Tensor::zeros({A.rows(), B.cols()}, A.dtype());
  kernels::matmul(A.data(), B.data(), n.value.data(), A.rows(), A.cols(), B.cols());
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  const bool rowvec = B.shape().size() == 2 && B.rows() == 1 &&
                      A.shape().size() == 2 && B.cols() == A.cols() && A.rows() != 1;
  if (!A.same_shape(B) && !rowvec) {
    throw AutogradError("add shape mismatch " + shape_str(A.shape()) + " vs " +
                        shape_str(B.shape()));
  }
  Node n;
  n.kind = OpKind::Add;
  n.inputs = {a, b};
  n.needs_grad = requires_grad(a) || requires_grad(b);
  n.value = A;
  if (rowvec) {
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) n.value.at(i, j) += B.at(0, j);
  } else {
    for (std::int64_t i = 0; i < A.size(); ++i) n.value.data()[i] += B.data()[i];
  }
  return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) {
    throw AutogradError("mul shape mismatch " + shape_str(A.shape()) + " vs " +
                        shape_str(B.shape()));
  }
  Node n;
  n.kind = OpKind::Mul;
  n.inputs = {a, b};
  n.needs_grad = requires_grad(a) || requires_grad(b);
  n.value = A;
  for (std::int64_t i = 0; i < A.size(); ++i) n.value.data()[i] *= B.data()[i];
  return push(std::move(n));
}

ValueId Tape::row_softmax(ValueId a) {
  const Tensor& A = value(a);
  Node n;
  n.kind = OpKind::RowSoftmax;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.value = A;
  for (int i = 0; i < A.rows(); ++i) {
    double mx = n.value.at(i, 0);
    for (int j = 1; j < A.cols(); ++j) mx = std::max(mx, n.value.at(i, j));
    double s = 0.0;
    for (int j = 0; j < A.cols(); ++j) {
      const double e = std::exp(n.value.at(i, j) - mx);
      n.value.at(i, j) = e;
      s += e;
    }
    for (int j = 0; j < A.cols(); ++j) n.value.at(i, j) /= s;
  }
  return push(std::move(n));
}

ValueId Tape::rms_norm(ValueId x, ValueId gain) {
  const Tensor& X = value(x);
  const Tensor& G = value(gain);
  if (G.rows() != 1 || G.cols() != X.cols()) {
    throw AutogradError("rms_norm gain must be [1 x cols]");
  }
  Node n;
  n.kind = OpKind::RmsNorm;
  n.inputs = {x, gain};
  n.needs_grad = requires_grad(x) || requires_grad(gain);
  n.value = Tensor::zeros(X.shape(), X.dtype());
  n.saved = Tensor::zeros({X.rows(), 1}, DType::F64);  // per-row rms
  for (int i = 0; i < X.rows(); ++i) {
    double ss = 0.0;
    for (int j = 0; j < X.cols(); ++j) ss += X.at(i, j) * X.at(i, j);
    const double r = std::sqrt(ss / X.cols() + kRmsEps);
    n.saved.at(i, 0) = r;
    for (int j = 0; j < X.cols(); ++j) n.value.at(i, j) = X.at(i, j) / r * G.at(0, j);
  }
  return push(std::move(n));
}

ValueId Tape::silu(ValueId a) {
  const Tensor& A = value(a);
  Node n;
  n.kind = OpKind::Silu;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.value = A;
  for (std::int64_t i = 0; i < A.size(); ++i) {
    const double v = A.data()[i];
    n.value.data()[i] = v * sigmoid(v);
  }
  return push(std::move(n));
}

ValueId Tape::embed_lookup(ValueId table, const std::vector<int>& row_ids) {
  const Tensor& T = value(table);
  Node n;
  n.kind = OpKind::EmbedLookup;
  n.inputs = {table};
  n.needs_grad = requires_grad(table);
  n.iattrs = row_ids;
  n.value = Tensor::zeros({static_cast<int>(row_ids.size()), T.cols()}, T.dtype());
  for (std::size_t t = 0; t < row_ids.size(); ++t) {
    const int r = row_ids[t];
    if (r < 0 || r >= T.rows()) throw AutogradError("embed_lookup row out of range");
    for (int j = 0; j < T.cols(); ++j) n.value.at(static_cast<int>(t), j) = T.at(r, j);
  }
  return push(std::move(n));
}

ValueId Tape::cross_entropy(ValueId logits, const std::vector<int>& targets, int pad_id) {
  const Tensor& L = value(logits);
  if (static_cast<int>(targets.size()) != L.rows()) {
    throw AutogradError("cross_entropy target length mismatch");
  }
  Node n;
  n.kind = OpKind::CrossEntropy;
  n.inputs = {logits};
  n.needs_grad = requires_grad(logits);
  n.iattrs = targets;
  n.iattrs.push_back(pad_id);
  n.saved = Tensor::zeros(L.shape(), DType::F64);  // softmax probabilities
  int live = 0;
  double loss = 0.0;
  for (int t = 0; t < L.rows(); ++t) {
    double mx = L.at(t, 0);
    for (int j = 1; j < L.cols(); ++j) mx = std::max(mx, L.at(t, j));
    double s = 0.0;
    for (int j = 0; j < L.cols(); ++j) {
      const double e = std::exp(L.at(t, j) - mx);
      n.saved.at(t, j) = e;
      s += e;
    }
    for (int j = 0; j < L.cols(); ++j) n.saved.at(t, j) /= s;
    const int y = targets[t];
    if (y == pad_id) continue;
    if (y < 0 || y >= L.cols()) throw AutogradError("cross_entropy target out of range");
    loss += -std::log(n.saved.at(t, y));
    ++live;
  }
  if (live == 0) throw AutogradError("cross_entropy: all positions padded");
  n.dattr = 1.0 / live;
  n.value = Tensor::from_data({1, 1}, {loss / live}, DType::F64);
  return push(std::move(n));
}

ValueId Tape::transpose(ValueId a) {
  const Tensor& A = value(a);
  Node n;
  n.kind = OpKind::Transpose;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.value = Tensor::zeros({A.cols(), A.rows()}, A.dtype());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) n.value.at(j, i) = A.at(i, j);
  return push(std::move(n));
}

ValueId Tape::scale(ValueId a, double factor) {
  const Tensor& A = value(a);
  Node n;
  n.kind = OpKind::Scale;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.dattr = factor;
  n.value = A;
  for (std::int64_t i = 0; i < A.size(); ++i) n.value.data()[i] *= factor;
  return push(std::move(n));
}

ValueId Tape::slice_cols(ValueId a, int start, int width) {
  const Tensor& A = value(a);
  if (start < 0 || width <= 0 || start + width > A.cols()) {
    throw AutogradError("slice_cols out of range");
  }
  Node n;
  n.kind = OpKind::SliceCols;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.iattrs = {start, width};
  n.value = Tensor::zeros({A.rows(), width}, A.dtype());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < width; ++j) n.value.at(i, j) = A.at(i, start + j);
  return push(std::move(n));
}

ValueId Tape::concat_cols(const std::vector<ValueId>& parts) {
  if (parts.empty()) throw AutogradError("concat_cols: empty");
  int rows = value(parts[0]).rows();
  int total = 0;
  for (ValueId p : parts) {
    if (value(p).rows() != rows) throw AutogradError("concat_cols row mismatch");
    total += value(p).cols();
  }
  Node n;
  n.kind = OpKind::ConcatCols;
  n.inputs = parts;
  for (ValueId p : parts) n.needs_grad = n.needs_grad || requires_grad(p);
  n.value = Tensor::zeros({rows, total}, value(parts[0]).dtype());
  int off = 0;
  for (ValueId p : parts) {
    const Tensor& P = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < P.cols(); ++j) n.value.at(i, off + j) = P.at(i, j);
    off += P.cols();
  }
  return push(std::move(n));
}

ValueId Tape::sum(ValueId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < A.size(); ++i) s += A.data()[i];
  Node n;
  n.kind = OpKind::Sum;
  n.inputs = {a};
  n.needs_grad = requires_grad(a);
  n.value = Tensor::from_data({1, 1}, {s}, DType::F64);
  return push(std::move(n));
}

const Tensor& Tape::grad(ValueId id) const {
  const Node& n = nodes_[check(id)];
  if (n.grad.empty()) throw AutogradError("no gradient recorded for value");
  return n.grad;
}

namespace {
// Accumulate g into the (lazily allocated) gradient buffer of node value v.
void accumulate(Tensor& grad, const Tensor& value_like, const double* g, std::int64_t n) {
  if (grad.empty()) grad = Tensor::zeros(value_like.shape(), value_like.dtype());
  for (std::int64_t i = 0; i < n; ++i) grad.data()[i] += g[i];
}
}  // namespace

void Tape::backward(ValueId loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1) throw AutogradError("backward requires a scalar loss");
  if (!ln.needs_grad) throw AutogradError("loss does not depend on any traced parameter");
  ln.grad = Tensor::from_data({1, 1}, {1.0}, ln.value.dtype());
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || n.kind == OpKind::Leaf) continue;
    backprop_node(n);
    n.grad = Tensor();  // release intermediate gradient storage
  }
}

void Tape::backprop_node(Node& n) {
  const Tensor& g = n.grad;
  auto want = [&](int slot) { return nodes_[n.inputs[slot]].needs_grad; };
  auto sink = [&](int slot) -> Node& { return nodes_[n.inputs[slot]]; };
  auto add_into = [&](Node& dst, const Tensor& contrib) {
    accumulate(dst.grad, dst.value, contrib.data(), contrib.size());
  };

  switch (n.kind) {
    case OpKind::MatMul: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const Tensor& B = nodes_[n.inputs[1]].value;
      if (want(0)) {  // dA = g * B^T
        Node& d = sink(0);
        if (d.grad.empty()) d.grad = Tensor::zeros(A.shape(), A.dtype());
        kernels::matmul(g.data(), B.data(), d.grad.data(), A.rows(), B.cols(),
                        B.rows(), false, true, true);
      }
      if (want(1)) {  // dB = A^T * g
        Node& d = sink(1);
        if (d.grad.empty()) d.grad = Tensor::zeros(B.shape(), B.dtype());
        kernels::matmul(A.data(), g.data(), d.grad.data(), A.cols(), A.rows(),
                        g.cols(), true, false, true);
      }
      break;
    }
    case OpKind::Add: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const Tensor& B = nodes_[n.inputs[1]].value;
      if (want(0)) add_into(sink(0), g);
      if (want(1)) {
        if (B.same_shape(A)) {
          add_into(sink(1), g);
        } else {  // row-vector broadcast: column sums
          Node& d = sink(1);
          if (d.grad.empty()) d.grad = Tensor::zeros(B.shape(), B.dtype());
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) d.grad.at(0, j) += g.at(i, j);
        }
      }
      break;
    }
    case OpKind::Mul: {
      const Tensor& A = nodes_[n.inputs[0]].value;
      const Tensor& B = nodes_[n.inputs[1]].value;
      if (want(0)) {
        Node& d = sink(0);
        if (d.grad.empty()) d.grad = Tensor::zeros(A.shape(), A.dtype());
        for (std::int64_t i = 0; i < A.size(); ++i)
          d.grad.data()[i] += g.data()[i] * B.data()[i];
      }
      if (want(1)) {
        Node& d = sink(1);
        if (d.grad.empty()) d.grad = Tensor::zeros(B.shape(), B.dtype());
        for (std::int64_t i = 0; i < B.size(); ++i)
          d.grad.data()[i] += g.data()[i] * A.data()[i];
      }
      break;
    }
    case OpKind::RowSoftmax: {
      if (!want(0)) break;
      const Tensor& y = n.value;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(y.shape(), y.dtype());
      for (int i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols(); ++j)
          d.grad.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
      break;
    }
    case OpKind::RmsNorm: {
      const Tensor& X = nodes_[n.inputs[0]].value;
      const Tensor& G = nodes_[n.inputs[1]].value;
      const int cols = X.cols();
      if (want(0)) {
        Node& d = sink(0);
        if (d.grad.empty()) d.grad = Tensor::zeros(X.shape(), X.dtype());
        for (int i = 0; i < X.rows(); ++i) {
          const double r = n.saved.at(i, 0);
          double mean_uy = 0.0;
          for (int j = 0; j < cols; ++j) {
            mean_uy += (g.at(i, j) * G.at(0, j)) * (X.at(i, j) / r);
          }
          mean_uy /= cols;
          for (int j = 0; j < cols; ++j) {
            const double u = g.at(i, j) * G.at(0, j);
            d.grad.at(i, j) += (u - (X.at(i, j) / r) * mean_uy) / r;
          }
        }
      }
      if (want(1)) {
        Node& d = sink(1);
        if (d.grad.empty()) d.grad = Tensor::zeros(G.shape(), G.dtype());
        for (int i = 0; i < X.rows(); ++i) {
          const double r = n.saved.at(i, 0);
          for (int j = 0; j < cols; ++j)
            d.grad.at(0, j) += g.at(i, j) * X.at(i, j) / r;
        }
      }
      break;
    }
    case OpKind::Silu: {
      if (!want(0)) break;
      const Tensor& X = nodes_[n.inputs[0]].value;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(X.shape(), X.dtype());
      for (std::int64_t i = 0; i < X.size(); ++i) {
        const double s = sigmoid(X.data()[i]);
        d.grad.data()[i] += g.data()[i] * s * (1.0 + X.data()[i] * (1.0 - s));
      }
      break;
    }
    case OpKind::EmbedLookup: {
      if (!want(0)) break;
      Node& d = sink(0);
      const Tensor& T = d.value;
      if (d.grad.empty()) d.grad = Tensor::zeros(T.shape(), T.dtype());
      for (std::size_t t = 0; t < n.iattrs.size(); ++t) {
        const int r = n.iattrs[t];
        for (int j = 0; j < T.cols(); ++j)
          d.grad.at(r, j) += g.at(static_cast<int>(t), j);
      }
      break;
    }
    case OpKind::CrossEntropy: {
      if (!want(0)) break;
      Node& d = sink(0);
      const Tensor& L = d.value;
      if (d.grad.empty()) d.grad = Tensor::zeros(L.shape(), L.dtype());
      const double gs = g.data()[0] * n.dattr;
      const int pad = n.iattrs.back();
      for (int t = 0; t < L.rows(); ++t) {
        const int y = n.iattrs[t];
        if (y == pad) continue;
        for (int j = 0; j < L.cols(); ++j)
          d.grad.at(t, j) += gs * (n.saved.at(t, j) - (j == y ? 1.0 : 0.0));
      }
      break;
    }
    case OpKind::Transpose: {
      if (!want(0)) break;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(d.value.shape(), d.value.dtype());
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) d.grad.at(j, i) += g.at(i, j);
      break;
    }
    case OpKind::Scale: {
      if (!want(0)) break;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(d.value.shape(), d.value.dtype());
      for (std::int64_t i = 0; i < g.size(); ++i)
        d.grad.data()[i] += g.data()[i] * n.dattr;
      break;
    }
    case OpKind::SliceCols: {
      if (!want(0)) break;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(d.value.shape(), d.value.dtype());
      const int start = n.iattrs[0];
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) d.grad.at(i, start + j) += g.at(i, j);
      break;
    }
    case OpKind::ConcatCols: {
      int off = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        Node& d = nodes_[n.inputs[s]];
        const int w = d.value.cols();
        if (d.needs_grad) {
          if (d.grad.empty()) d.grad = Tensor::zeros(d.value.shape(), d.value.dtype());
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < w; ++j) d.grad.at(i, j) += g.at(i, off + j);
        }
        off += w;
      }
      break;
    }
    case OpKind::Sum: {
      if (!want(0)) break;
      Node& d = sink(0);
      if (d.grad.empty()) d.grad = Tensor::zeros(d.value.shape(), d.value.dtype());
      const double gs = g.data()[0];
      for (std::int64_t i = 0; i < d.grad.size(); ++i) d.grad.data()[i] += gs;
      break;
    }
    case OpKind::Leaf:
      break;
  }
}

double finite_diff_check(const std::function<double()>& fn,
                         const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& analytic,
                         int max_coords, double h, Stream& rng) {
  if (params.size() != analytic.size()) {
    throw AutogradError("finite_diff_check: params/analytic mismatch");
  }
  std::int64_t total = 0;
  for (const Tensor* p : params) total += p->size();
  double max_rel = 0.0;
  const int coords = max_coords;
  for (int c = 0; c < coords; ++c) {
    std::int64_t flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
    std::size_t pi = 0;
    while (flat >= params[pi]->size()) {
      flat -= params[pi]->size();
      ++pi;
    }
    double& x = params[pi]->data()[flat];
    const double orig = x;
    x = orig + h;
    const double fp = fn();
    x = orig - h;
    const double fm = fn();
    x = orig;
    const double num = (fp - fm) / (2.0 * h);
    const double ana = analytic[pi]->data()[flat];
    // Floored relative error: near-zero components compare absolutely,
    // since the central difference itself carries ~|f|*eps/h noise.
    const double rel = std::abs(ana - num) / std::max(1e-6, std::abs(ana) + std::abs(num));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace hft
