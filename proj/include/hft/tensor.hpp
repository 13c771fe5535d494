#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hft/rng.hpp"

namespace hft {

enum class DType { F32, F64 };

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }
inline std::size_t dtype_bytes(DType d) { return d == DType::F32 ? 4 : 8; }
DType dtype_from_name(const std::string& s);

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor. Values are held as doubles regardless of dtype;
// an f32 tensor is kept rounded to float precision after every write, so
// its values are always exactly representable in 4 bytes (checkpoints and
// bit-identity checks rely on that).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, DType dt);

  static Tensor zeros(std::vector<int> shape, DType dt) { return Tensor(std::move(shape), dt); }
  static Tensor full(std::vector<int> shape, double v, DType dt);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data, DType dt);
  static Tensor randn(std::vector<int> shape, double stddev, Stream& rng, DType dt);

  const std::vector<int>& shape() const { return shape_; }
  DType dtype() const { return dtype_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; throw unless rank is exactly 2.
  int rows() const;
  int cols() const;
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& buffer() { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  // Round every element to f32 precision when dtype is f32; no-op for f64.
  void quantize();

  // Exact bit equality (doubles compared as stored).
  bool bit_equal(const Tensor& o) const;

 private:
  std::vector<int> shape_;
  DType dtype_ = DType::F64;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& s);

}  // namespace hft
