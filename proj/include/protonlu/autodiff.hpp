#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "protonlu/tensor.hpp"

namespace protonlu::autodiff {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns the data.
struct Value {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& tensor() const;
  const std::vector<std::size_t>& shape() const { return tensor().shape(); }
  std::size_t rows() const { return tensor().rows(); }
  std::size_t cols() const { return tensor().cols(); }
};

// Gradients of one backward pass, keyed by node id. Nodes the loss does not
// depend on read back as zeros.
class GradientMap {
 public:
  explicit GradientMap(std::size_t n_nodes) : grads_(n_nodes) {}

  // Accumulation slot; allocates zeros of `shape` on first touch.
  Tensor& slot(std::size_t id, const std::vector<std::size_t>& shape);
  bool touched(std::size_t id) const { return !grads_[id].empty(); }
  const Tensor& raw(std::size_t id) const { return grads_[id]; }

  // Gradient for `v`, zeros if the loss does not reach it.
  Tensor dense(const Value& v) const;

 private:
  std::vector<Tensor> grads_;
};

// Define-by-run reverse-mode tape. Rebuilt per forward pass; node ids are
// topologically ordered by construction (parents always precede children).
class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }

  // Leaf input (parameter or constant). Rejects NaN/Inf.
  Value leaf(Tensor t);

  Value matmul(Value a, Value b);
  Value transpose(Value a);
  // Same shape, or b a single row broadcast over a's rows.
  Value add(Value a, Value b);
  Value mul(Value a, Value b);  // elementwise, same shape
  Value tanh(Value a);
  Value relu(Value a);
  Value scale(Value a, double s);
  Value row_softmax(Value a);
  Value row_log_softmax(Value a);
  Value mean_rows(Value a);  // (m x n) -> (1 x n)
  Value gather_rows(Value table, std::vector<std::size_t> indices);
  Value slice_rows(Value a, std::size_t start, std::size_t count);
  Value concat_rows(const std::vector<Value>& parts);
  // Pairwise squared Euclidean distances: (p x d),(q x d) -> (p x q).
  Value squared_euclidean(Value a, Value b);
  // Pairwise 1 - cosine similarity; errors on zero rows.
  Value cosine_distance(Value a, Value b);
  // out[i] = a[i, cols[i]], shape (m).
  Value pick(Value a, std::vector<std::size_t> cols);
  Value sum_all(Value a);   // -> scalar
  Value mean_all(Value a);  // -> scalar

  // Reverse pass from a scalar loss node. Deterministic: iterates nodes in
  // strictly decreasing id order, so identical tapes give identical bits.
  GradientMap backward(Value loss) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    // Distributes the upstream gradient to the parents' slots.
    std::function<void(const Tape&, const Tensor& g, GradientMap&)> vjp;
  };

  Value push(Tensor value, std::vector<std::size_t> parents,
             std::function<void(const Tape&, const Tensor&, GradientMap&)> vjp);
  void require_same_tape(const Value& v) const;

  std::vector<Node> nodes_;
};

// Central finite differences against backward() for a loss built by `build`.
// `build` must create one leaf per parameter tensor, in order, and return
// the scalar loss; it is re-invoked for every perturbed coordinate.
struct BuiltLoss {
  Value loss;
  std::vector<Value> params;
};
using LossBuilder =
    std::function<BuiltLoss(Tape&, const std::vector<Tensor>&)>;

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_difference_check(const LossBuilder& build,
                               const std::vector<Tensor>& params,
                               double epsilon);

}  // namespace protonlu::autodiff
