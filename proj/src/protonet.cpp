#include "protonlu/protonet.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "protonlu/error.hpp"

namespace protonlu::protonet {

DistanceKind distance_kind_from_string(const std::string& name) {
  if (name == "squared_euclidean") return DistanceKind::squared_euclidean;
  if (name == "cosine_distance" || name == "cosine") {
    return DistanceKind::cosine_distance;
  }
  throw Error("unknown distance kind \"" + name + "\"");
}

std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::squared_euclidean ? "squared_euclidean"
                                                 : "cosine_distance";
}

PrototypeMap::PrototypeMap(std::vector<std::string> labels,
                           std::vector<Tensor> centroids)
    : labels_(std::move(labels)), centroids_(std::move(centroids)) {
  if (labels_.size() != centroids_.size()) {
    throw Error("PrototypeMap: label/centroid count mismatch");
  }
  if (!std::is_sorted(labels_.begin(), labels_.end()) ||
      std::adjacent_find(labels_.begin(), labels_.end()) != labels_.end()) {
    throw Error("PrototypeMap: labels must be sorted and unique");
  }
  for (const Tensor& c : centroids_) c.check_finite("PrototypeMap centroid");
}

std::size_t PrototypeMap::index_of(const std::string& label) const {
  const auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - labels_.begin());
}

namespace {

// Indices of class members ordered by vector content (ties by position).
// Summing in this order makes the centroid invariant to permutations of the
// support list, bit for bit.
template <typename GetData>
std::vector<std::size_t> canonical_order(std::size_t n, GetData get) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = get(a);
    const auto& db = get(b);
    if (da != db) return da < db;
    return a < b;
  });
  return order;
}

}  // namespace

PrototypeMap compute_prototypes(
    const std::vector<std::pair<std::string, Tensor>>& embeddings) {
  if (embeddings.empty()) throw Error("compute_prototypes: no support vectors");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].second.rows() != 1) {
      throw Error("compute_prototypes: each embedding must be a single row");
    }
    by_class[embeddings[i].first].push_back(i);
  }
  std::vector<std::string> labels;
  std::vector<Tensor> centroids;
  for (const auto& [label, members] : by_class) {
    const std::size_t dim = embeddings[members.front()].second.numel();
    const std::vector<std::size_t> order = canonical_order(
        members.size(),
        [&](std::size_t k) -> const std::vector<double>& {
          return embeddings[members[k]].second.data();
        });
    Tensor centroid = Tensor::zeros({1, dim});
    for (std::size_t k : order) {
      const Tensor& v = embeddings[members[k]].second;
      if (v.numel() != dim) {
        throw Error("compute_prototypes: dimension mismatch in class \"" +
                    label + "\"");
      }
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += v[j];
    }
    for (std::size_t j = 0; j < dim; ++j) {
      centroid[j] /= static_cast<double>(members.size());
    }
    labels.push_back(label);
    centroids.push_back(std::move(centroid));
  }
  return PrototypeMap(std::move(labels), std::move(centroids));
}

double distance(const Tensor& a, const Tensor& b, DistanceKind kind) {
  if (a.numel() != b.numel()) {
    throw Error("distance: dimension mismatch " + a.shape_str() + " vs " +
                b.shape_str());
  }
  if (kind == DistanceKind::squared_euclidean) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return acc;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error("distance: cosine distance undefined for zero vector");
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

ClassDistribution class_distribution(const Tensor& query,
                                     const PrototypeMap& prototypes,
                                     DistanceKind kind) {
  if (prototypes.size() < 2) {
    throw Error("class_distribution: need at least 2 prototypes");
  }
  std::vector<double> logits(prototypes.size());
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    logits[i] = -distance(query, prototypes.centroid(i), kind);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  ClassDistribution probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

std::string predict(const Tensor& query, const PrototypeMap& prototypes,
                    DistanceKind kind) {
  if (prototypes.size() == 0) throw Error("predict: no prototypes");
  if (prototypes.size() == 1) return prototypes.labels()[0];
  const ClassDistribution probs = class_distribution(query, prototypes, kind);
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return prototypes.labels()[best];
}

PrototypeNodes compute_prototypes(
    autodiff::Tape& tape,
    const std::vector<std::pair<std::string, autodiff::Value>>& embeddings) {
  if (embeddings.empty()) throw Error("compute_prototypes: no support vectors");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].second.rows() != 1) {
      throw Error("compute_prototypes: each embedding must be a single row");
    }
    by_class[embeddings[i].first].push_back(i);
  }
  PrototypeNodes out;
  std::vector<autodiff::Value> rows;
  for (const auto& [label, members] : by_class) {
    const std::vector<std::size_t> order = canonical_order(
        members.size(),
        [&](std::size_t k) -> const std::vector<double>& {
          return embeddings[members[k]].second.tensor().data();
        });
    std::vector<autodiff::Value> class_rows;
    for (std::size_t k : order) class_rows.push_back(embeddings[members[k]].second);
    rows.push_back(tape.mean_rows(tape.concat_rows(class_rows)));
    out.labels.push_back(label);
  }
  out.matrix = tape.concat_rows(rows);
  return out;
}

autodiff::Value prototypical_loss(
    autodiff::Tape& tape,
    const std::vector<std::pair<std::string, autodiff::Value>>& support,
    const std::vector<std::pair<autodiff::Value, std::string>>& queries,
    DistanceKind kind) {
  if (queries.empty()) throw Error("prototypical_loss: no queries");
  PrototypeNodes protos = compute_prototypes(tape, support);
  std::vector<autodiff::Value> query_rows;
  std::vector<std::size_t> gold;
  for (const auto& [value, label] : queries) {
    const auto it =
        std::lower_bound(protos.labels.begin(), protos.labels.end(), label);
    if (it == protos.labels.end() || *it != label) {
      throw Error("prototypical_loss: gold class \"" + label +
                  "\" is not among the episode classes");
    }
    query_rows.push_back(value);
    gold.push_back(static_cast<std::size_t>(it - protos.labels.begin()));
  }
  autodiff::Value q = tape.concat_rows(query_rows);
  autodiff::Value dist = kind == DistanceKind::squared_euclidean
                             ? tape.squared_euclidean(q, protos.matrix)
                             : tape.cosine_distance(q, protos.matrix);
  autodiff::Value log_probs = tape.row_log_softmax(tape.scale(dist, -1.0));
  return tape.scale(tape.mean_all(tape.pick(log_probs, gold)), -1.0);
}

}  // namespace protonlu::protonet
