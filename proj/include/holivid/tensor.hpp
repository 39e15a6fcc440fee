#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace holivid {

// Dense row-major double tensor.  Clips are laid out (B, C, T, H, W); the last
// index varies fastest.  Double precision keeps gradient checks and checkpoint
// round-trips exact.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double value);

  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& shape() const { return shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Generic multi-index access; rank must match.
  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;

  // Reinterprets the flat buffer with a new shape of equal element count.
  Tensor reshaped(std::vector<int64_t> shape) const;

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
  int64_t offset(std::initializer_list<int64_t> idx) const;
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

// y += x (shapes must match).
void add_inplace(Tensor& y, const Tensor& x);
// y += alpha * x
void axpy(Tensor& y, double alpha, const Tensor& x);
double max_abs(const Tensor& t);
bool all_finite(const Tensor& t);

}  // namespace holivid
