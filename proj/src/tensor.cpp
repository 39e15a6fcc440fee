#include "holivid/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace holivid {

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  int64_t n = 1;
  for (int64_t d : shape_) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
  if (idx.size() != shape_.size()) throw std::invalid_argument("tensor: rank mismatch in at()");
  int64_t off = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= shape_[i]) throw std::out_of_range("tensor: index out of range in at()");
    off = off * shape_[i] + v;
    ++i;
  }
  return off;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
double Tensor::at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  Tensor t;
  t.shape_ = std::move(shape);
  int64_t n = 1;
  for (int64_t d : t.shape_) n *= d;
  if (n != size()) throw std::invalid_argument("tensor: reshape changes element count");
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

void add_inplace(Tensor& y, const Tensor& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("add: shape mismatch");
  double* yd = y.data();
  const double* xd = x.data();
  for (int64_t i = 0; i < y.size(); ++i) yd[i] += xd[i];
}

void axpy(Tensor& y, double alpha, const Tensor& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("axpy: shape mismatch");
  double* yd = y.data();
  const double* xd = x.data();
  for (int64_t i = 0; i < y.size(); ++i) yd[i] += alpha * xd[i];
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  const double* d = t.data();
  for (int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::fabs(d[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  const double* d = t.data();
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(d[i])) return false;
  }
  return true;
}

}  // namespace holivid
