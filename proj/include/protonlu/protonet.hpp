#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protonlu/autodiff.hpp"
#include "protonlu/tensor.hpp"

namespace protonlu::protonet {

enum class DistanceKind { squared_euclidean, cosine_distance };

DistanceKind distance_kind_from_string(const std::string& name);
std::string to_string(DistanceKind kind);

// Class label -> centroid, with a fixed class order (sorted labels) so
// probability vectors are reproducible.
class PrototypeMap {
 public:
  // Labels must arrive sorted and unique; centroids aligned.
  PrototypeMap(std::vector<std::string> labels, std::vector<Tensor> centroids);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const Tensor& centroid(std::size_t i) const { return centroids_[i]; }
  // npos when absent.
  std::size_t index_of(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::vector<Tensor> centroids_;
};

// Probabilities aligned with PrototypeMap class order.
using ClassDistribution = std::vector<double>;

// Centroid per class: the arithmetic mean of that class's support vectors.
// Summation runs in a content-canonical order per class, so permuting the
// support list leaves every centroid bit-identical.
PrototypeMap compute_prototypes(
    const std::vector<std::pair<std::string, Tensor>>& embeddings);

double distance(const Tensor& a, const Tensor& b, DistanceKind kind);

// Softmax over negated distances, max-subtracted.
ClassDistribution class_distribution(const Tensor& query,
                                     const PrototypeMap& prototypes,
                                     DistanceKind kind);

// Argmax of class_distribution; ties go to the first label in map order.
std::string predict(const Tensor& query, const PrototypeMap& prototypes,
                    DistanceKind kind);

// --- Tape path (training) ---------------------------------------------------

// Prototype matrix (N x M) with rows in sorted-label order, differentiable
// through the support embeddings. Each embedding must be a single row.
struct PrototypeNodes {
  std::vector<std::string> labels;
  autodiff::Value matrix;
};

PrototypeNodes compute_prototypes(
    autodiff::Tape& tape,
    const std::vector<std::pair<std::string, autodiff::Value>>& embeddings);

// Mean over queries of -log p(gold | query), end-to-end differentiable.
// Errors when a query's gold class has no prototype.
autodiff::Value prototypical_loss(
    autodiff::Tape& tape,
    const std::vector<std::pair<std::string, autodiff::Value>>& support,
    const std::vector<std::pair<autodiff::Value, std::string>>& queries,
    DistanceKind kind);

}  // namespace protonlu::protonet
