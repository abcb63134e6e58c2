#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace adv {

// Dense row-major tensor of 64-bit floats. Rank is 1..3 in practice (vectors,
// score matrices, C x H x W images).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor of(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t dim) const { return shape_[dim]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  void fill(double v);
  double max_abs() const;
  bool all_finite() const;
  std::string shape_str() const;  // e.g. "3x64x64", for diagnostics

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace adv
