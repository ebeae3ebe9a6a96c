#include "protonlu/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "protonlu/error.hpp"

namespace protonlu {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw Error("Tensor: rank must be 1 or 2, got rank " +
                std::to_string(shape_.size()));
  }
  std::size_t expected = 1;
  for (std::size_t d : shape_) expected *= d;
  if (expected != data_.size()) {
    throw Error("Tensor: shape " + shape_str() + " wants " +
                std::to_string(expected) + " entries, got " +
                std::to_string(data_.size()));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::row(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({1, n}, std::move(data));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

void Tensor::check_finite(const std::string& context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw Error(context + ": non-finite value in tensor " + shape_str());
    }
  }
}

}  // namespace protonlu
