#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace protonlu {

// Dense row-major array of 64-bit floats, rank 1 or 2. Rank-1 tensors act
// as a single row where an op needs row semantics. A scalar is shape {1}.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Row/column view: rank-1 of length n is treated as 1 x n.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  // Throws Error if any entry is NaN or infinite.
  void check_finite(const std::string& context) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace protonlu
