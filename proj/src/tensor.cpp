#include "hft/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace hft {

DType dtype_from_name(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  throw TensorError("unknown dtype: " + s);
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, DType dt) : shape_(std::move(shape)), dtype_(dt) {
  std::int64_t n = 1;
  for (int e : shape_) {
    if (e <= 0) throw TensorError("non-positive extent in shape " + shape_str(shape_));
    n *= e;
  }
  data_.assign(static_cast<std::size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double v, DType dt) {
  Tensor t(std::move(shape), dt);
  for (double& x : t.data_) x = v;
  t.quantize();
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, DType dt) {
  Tensor t(std::move(shape), dt);
  if (t.data_.size() != data.size()) {
    throw TensorError("data length does not match shape " + shape_str(t.shape_));
  }
  t.data_ = std::move(data);
  t.quantize();
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, double stddev, Stream& rng, DType dt) {
  Tensor t(std::move(shape), dt);
  for (double& x : t.data_) x = stddev * rng.normal();
  t.quantize();
  return t;
}

int Tensor::rows() const {
  if (shape_.size() != 2) throw TensorError("rank-2 access on shape " + shape_str(shape_));
  return shape_[0];
}

int Tensor::cols() const {
  if (shape_.size() != 2) throw TensorError("rank-2 access on shape " + shape_str(shape_));
  return shape_[1];
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::quantize() {
  if (dtype_ != DType::F32) return;
  for (double& x : data_) x = static_cast<double>(static_cast<float>(x));
}

bool Tensor::bit_equal(const Tensor& o) const {
  if (shape_ != o.shape_ || dtype_ != o.dtype_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (std::memcmp(&data_[i], &o.data_[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace hft
