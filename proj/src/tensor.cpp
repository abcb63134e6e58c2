#include "adv/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace adv {

static std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape");
    n *= e;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::of(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size())
    throw std::invalid_argument("Tensor::of: shape does not match value count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_) {
    double a = std::fabs(x);
    if (a > m) m = a;
  }
  return m;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  if (shape_.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape_[i]);
  }
  return s;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace adv
