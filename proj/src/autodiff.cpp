#include "protonlu/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protonlu/error.hpp"

namespace protonlu::autodiff {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Tensor& a,
                              const Tensor& b) {
  throw Error(op + ": incompatible shapes " + a.shape_str() + " and " +
              b.shape_str());
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

}  // namespace

const Tensor& Value::tensor() const { return tape->value_of(id); }

Tensor& GradientMap::slot(std::size_t id, const std::vector<std::size_t>& shape) {
  if (grads_[id].empty()) grads_[id] = Tensor::zeros(shape);
  return grads_[id];
}

Tensor GradientMap::dense(const Value& v) const {
  if (!grads_[v.id].empty()) return grads_[v.id];
  return Tensor::zeros(v.tensor().shape());
}

Value Tape::push(Tensor value, std::vector<std::size_t> parents,
                 std::function<void(const Tape&, const Tensor&, GradientMap&)> vjp) {
  value.check_finite("tape op result");
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(vjp)});
  return Value{this, nodes_.size() - 1};
}

void Tape::require_same_tape(const Value& v) const {
  if (v.tape != this) throw Error("tape op: value belongs to a different tape");
}

Value Tape::leaf(Tensor t) {
  t.check_finite("leaf");
  nodes_.push_back(Node{std::move(t), {}, nullptr});
  return Value{this, nodes_.size() - 1};
}

Value Tape::matmul(Value a, Value b) {
  require_same_tape(a);
  require_same_tape(b);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  if (A.shape().size() != 2 || B.shape().size() != 2 || A.cols() != B.rows()) {
    shape_error("matmul", A, B);
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
    }
  }
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid, m, k, n](const Tape& t, const Tensor& g, GradientMap& gm) {
                const Tensor& A = t.value_of(aid);
                const Tensor& B = t.value_of(bid);
                Tensor& da = gm.slot(aid, A.shape());
                Tensor& db = gm.slot(bid, B.shape());
                // dA = g . B^T, dB = A^T . g
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                      da.at(i, p) += gv * B.at(p, j);
                      db.at(p, j) += gv * A.at(i, p);
                    }
                  }
                }
              });
}

Value Tape::transpose(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  if (A.shape().size() != 2) {
    throw Error("transpose: expected rank-2 tensor, got " + A.shape_str());
  }
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = A.at(i, j);
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, m, n](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) da.at(i, j) += g.at(j, i);
              });
}

Value Tape::add(Value a, Value b) {
  require_same_tape(a);
  require_same_tape(b);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  const bool broadcast = !A.same_shape(B);
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols())) {
    shape_error("add", A, B);
  }
  Tensor out = A;
  const std::size_t rows = A.rows(), cols = A.cols();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.at(i, j) += broadcast ? B[j] : B.at(i, j);
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid, broadcast, rows, cols](const Tape& t, const Tensor& g,
                                                GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                Tensor& db = gm.slot(bid, t.value_of(bid).shape());
                for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                if (broadcast) {
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) db[j] += g.at(i, j);
                } else {
                  for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i];
                }
              });
}

Value Tape::mul(Value a, Value b) {
  require_same_tape(a);
  require_same_tape(b);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  if (!A.same_shape(B)) shape_error("mul", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid](const Tape& t, const Tensor& g, GradientMap& gm) {
                const Tensor& A = t.value_of(aid);
                const Tensor& B = t.value_of(bid);
                Tensor& da = gm.slot(aid, A.shape());
                Tensor& db = gm.slot(bid, B.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) {
                  da[i] += g[i] * B[i];
                  db[i] += g[i] * A[i];
                }
              });
}

Value Tape::tanh(Value a) {
  require_same_tape(a);
  Tensor out = a.tensor();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                const Tensor& A = t.value_of(aid);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                  const double y = std::tanh(A[i]);
                  da[i] += g[i] * (1.0 - y * y);
                }
              });
}

Value Tape::relu(Value a) {
  require_same_tape(a);
  Tensor out = a.tensor();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid](const Tape& t, const Tensor& g, GradientMap& gm) {
                const Tensor& A = t.value_of(aid);
                Tensor& da = gm.slot(aid, A.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) {
                  if (A[i] > 0.0) da[i] += g[i];
                }
              });
}

Value Tape::scale(Value a, double s) {
  require_same_tape(a);
  Tensor out = a.tensor();
  for (double& v : out.data()) v *= s;
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, s](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < g.numel(); ++i) da[i] += s * g[i];
              });
}

namespace {

// Stable row softmax into `out`; returns nothing. Max-subtracted because
// distances can be large.
void softmax_row(const Tensor& in, std::size_t row, Tensor& out) {
  const std::size_t n = in.cols();
  double mx = in.at(row, 0);
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in.at(row, j));
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double e = std::exp(in.at(row, j) - mx);
    out.at(row, j) = e;
    sum += e;
  }
  for (std::size_t j = 0; j < n; ++j) out.at(row, j) /= sum;
}

}  // namespace

Value Tape::row_softmax(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = Tensor::zeros(A.shape());
  for (std::size_t i = 0; i < m; ++i) softmax_row(A, i, out);
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, m, n](const Tape& t, const Tensor& g, GradientMap& gm) {
                // Re-derive y from the parent; dA_row = y * (g - <g, y>).
                const Tensor& A = t.value_of(aid);
                Tensor y = Tensor::zeros(A.shape());
                Tensor& da = gm.slot(aid, A.shape());
                for (std::size_t i = 0; i < m; ++i) {
                  softmax_row(A, i, y);
                  double dot = 0.0;
                  for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
                  for (std::size_t j = 0; j < n; ++j)
                    da.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                }
              });
}

Value Tape::row_log_softmax(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = A.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, A.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(A.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) - lse;
  }
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, m, n](const Tape& t, const Tensor& g, GradientMap& gm) {
                // dA = g - softmax(A) * rowsum(g)
                const Tensor& A = t.value_of(aid);
                Tensor y = Tensor::zeros(A.shape());
                Tensor& da = gm.slot(aid, A.shape());
                for (std::size_t i = 0; i < m; ++i) {
                  softmax_row(A, i, y);
                  double rowsum = 0.0;
                  for (std::size_t j = 0; j < n; ++j) rowsum += g.at(i, j);
                  for (std::size_t j = 0; j < n; ++j)
                    da.at(i, j) += g.at(i, j) - y.at(i, j) * rowsum;
                }
              });
}

Value Tape::mean_rows(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  const std::size_t m = A.rows(), n = A.cols();
  if (m == 0) throw Error("mean_rows: empty input");
  Tensor out = Tensor::zeros({1, n});
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += A.at(i, j);
    out[j] = sum / static_cast<double>(m);
  }
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, m, n](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                const double inv = 1.0 / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) da.at(i, j) += g[j] * inv;
              });
}

Value Tape::gather_rows(Value table, std::vector<std::size_t> indices) {
  require_same_tape(table);
  const Tensor& T = table.tensor();
  if (T.shape().size() != 2) {
    throw Error("gather_rows: table must be rank-2, got " + T.shape_str());
  }
  const std::size_t n = T.cols();
  Tensor out = Tensor::zeros({indices.size(), n});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= T.rows()) {
      throw Error("gather_rows: index " + std::to_string(indices[i]) +
                  " out of range for table " + T.shape_str());
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = T.at(indices[i], j);
  }
  const std::size_t tid = table.id;
  return push(std::move(out), {tid},
              [tid, idx = std::move(indices), n](const Tape& t, const Tensor& g,
                                                 GradientMap& gm) {
                // Scatter-add; rows never gathered stay exactly zero.
                Tensor& dt = gm.slot(tid, t.value_of(tid).shape());
                for (std::size_t i = 0; i < idx.size(); ++i)
                  for (std::size_t j = 0; j < n; ++j)
                    dt.at(idx[i], j) += g.at(i, j);
              });
}

Value Tape::slice_rows(Value a, std::size_t start, std::size_t count) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  if (start + count > A.rows()) {
    throw Error("slice_rows: range [" + std::to_string(start) + ", " +
                std::to_string(start + count) + ") exceeds " + A.shape_str());
  }
  const std::size_t n = A.cols();
  Tensor out = Tensor::zeros({count, n});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = A.at(start + i, j);
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, start, count, n](const Tape& t, const Tensor& g,
                                     GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < count; ++i)
                  for (std::size_t j = 0; j < n; ++j)
                    da.at(start + i, j) += g.at(i, j);
              });
}

Value Tape::concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  std::size_t total = 0;
  const std::size_t n = parts.front().cols();
  for (const Value& p : parts) {
    require_same_tape(p);
    if (p.cols() != n) shape_error("concat_rows", parts.front().tensor(), p.tensor());
    total += p.rows();
  }
  Tensor out = Tensor::zeros({total, n});
  std::vector<std::size_t> parents;
  std::vector<std::size_t> offsets;
  std::size_t row = 0;
  for (const Value& p : parts) {
    offsets.push_back(row);
    parents.push_back(p.id);
    const Tensor& P = p.tensor();
    for (std::size_t i = 0; i < P.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) out.at(row + i, j) = P.at(i, j);
    row += P.rows();
  }
  return push(std::move(out), parents,
              [parents, offsets, n](const Tape& t, const Tensor& g,
                                    GradientMap& gm) {
                for (std::size_t k = 0; k < parents.size(); ++k) {
                  const Tensor& P = t.value_of(parents[k]);
                  Tensor& dp = gm.slot(parents[k], P.shape());
                  for (std::size_t i = 0; i < P.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      dp.at(i, j) += g.at(offsets[k] + i, j);
                }
              });
}

Value Tape::squared_euclidean(Value a, Value b) {
  require_same_tape(a);
  require_same_tape(b);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  if (A.cols() != B.cols()) shape_error("squared_euclidean", A, B);
  const std::size_t p = A.rows(), q = B.rows(), d = A.cols();
  Tensor out = Tensor::zeros({p, q});
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = A.at(i, k) - B.at(j, k);
        acc += diff * diff;
      }
      out.at(i, j) = acc;
    }
  }
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid, p, q, d](const Tape& t, const Tensor& g, GradientMap& gm) {
                const Tensor& A = t.value_of(aid);
                const Tensor& B = t.value_of(bid);
                Tensor& da = gm.slot(aid, A.shape());
                Tensor& db = gm.slot(bid, B.shape());
                for (std::size_t i = 0; i < p; ++i) {
                  for (std::size_t j = 0; j < q; ++j) {
                    const double gv = 2.0 * g.at(i, j);
                    if (gv == 0.0) continue;
                    for (std::size_t k = 0; k < d; ++k) {
                      const double diff = A.at(i, k) - B.at(j, k);
                      da.at(i, k) += gv * diff;
                      db.at(j, k) -= gv * diff;
                    }
                  }
                }
              });
}

namespace {

double row_norm(const Tensor& t, std::size_t row) {
  double acc = 0.0;
  for (std::size_t k = 0; k < t.cols(); ++k) acc += t.at(row, k) * t.at(row, k);
  return std::sqrt(acc);
}

}  // namespace

Value Tape::cosine_distance(Value a, Value b) {
  require_same_tape(a);
  require_same_tape(b);
  const Tensor& A = a.tensor();
  const Tensor& B = b.tensor();
  if (A.cols() != B.cols()) shape_error("cosine_distance", A, B);
  const std::size_t p = A.rows(), q = B.rows(), d = A.cols();
  for (std::size_t i = 0; i < p; ++i) {
    if (row_norm(A, i) == 0.0) throw Error("cosine_distance: zero vector");
  }
  for (std::size_t j = 0; j < q; ++j) {
    if (row_norm(B, j) == 0.0) throw Error("cosine_distance: zero vector");
  }
  Tensor out = Tensor::zeros({p, q});
  for (std::size_t i = 0; i < p; ++i) {
    const double na = row_norm(A, i);
    for (std::size_t j = 0; j < q; ++j) {
      const double nb = row_norm(B, j);
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += A.at(i, k) * B.at(j, k);
      out.at(i, j) = 1.0 - dot / (na * nb);
    }
  }
  const std::size_t aid = a.id, bid = b.id;
  return push(std::move(out), {aid, bid},
              [aid, bid, p, q, d](const Tape& t, const Tensor& g, GradientMap& gm) {
                const Tensor& A = t.value_of(aid);
                const Tensor& B = t.value_of(bid);
                Tensor& da = gm.slot(aid, A.shape());
                Tensor& db = gm.slot(bid, B.shape());
                for (std::size_t i = 0; i < p; ++i) {
                  const double na = row_norm(A, i);
                  for (std::size_t j = 0; j < q; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    const double nb = row_norm(B, j);
                    double dot = 0.0;
                    for (std::size_t k = 0; k < d; ++k)
                      dot += A.at(i, k) * B.at(j, k);
                    const double s = dot / (na * nb);
                    // d(1 - s)/dA_i = s * a_i / |a_i|^2 - b_j / (|a_i||b_j|)
                    for (std::size_t k = 0; k < d; ++k) {
                      da.at(i, k) += gv * (s * A.at(i, k) / (na * na) -
                                           B.at(j, k) / (na * nb));
                      db.at(j, k) += gv * (s * B.at(j, k) / (nb * nb) -
                                           A.at(i, k) / (na * nb));
                    }
                  }
                }
              });
}

Value Tape::pick(Value a, std::vector<std::size_t> cols) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  if (cols.size() != A.rows()) {
    throw Error("pick: need one column index per row of " + A.shape_str());
  }
  Tensor out = Tensor::zeros({cols.size()});
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= A.cols()) {
      throw Error("pick: column " + std::to_string(cols[i]) +
                  " out of range for " + A.shape_str());
    }
    out[i] = A.at(i, cols[i]);
  }
  const std::size_t aid = a.id;
  return push(std::move(out), {aid},
              [aid, cols = std::move(cols)](const Tape& t, const Tensor& g,
                                            GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < cols.size(); ++i)
                  da.at(i, cols[i]) += g[i];
              });
}

Value Tape::sum_all(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  double acc = 0.0;
  for (double v : A.data()) acc += v;
  const std::size_t aid = a.id;
  return push(Tensor::scalar(acc), {aid},
              [aid](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g[0];
              });
}

Value Tape::mean_all(Value a) {
  require_same_tape(a);
  const Tensor& A = a.tensor();
  if (A.numel() == 0) throw Error("mean_all: empty input");
  double acc = 0.0;
  for (double v : A.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(A.numel());
  const std::size_t aid = a.id;
  return push(Tensor::scalar(acc * inv), {aid},
              [aid, inv](const Tape& t, const Tensor& g, GradientMap& gm) {
                Tensor& da = gm.slot(aid, t.value_of(aid).shape());
                for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g[0] * inv;
              });
}

GradientMap Tape::backward(Value loss) const {
  require_same_tape(loss);
  if (!is_scalar(loss.tensor())) {
    throw Error("backward: loss must be scalar, got " +
                loss.tensor().shape_str());
  }
  GradientMap gm(nodes_.size());
  gm.slot(loss.id, loss.tensor().shape())[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.vjp || !gm.touched(id)) continue;
    node.vjp(*this, gm.raw(id), gm);
  }
  return gm;
}

double finite_difference_check(const LossBuilder& build,
                               const std::vector<Tensor>& params,
                               double epsilon) {
  if (epsilon <= 0.0) throw Error("finite_difference_check: epsilon must be > 0");
  Tape tape;
  BuiltLoss built = build(tape, params);
  const GradientMap grads = tape.backward(built.loss);

  const auto loss_at = [&](const std::vector<Tensor>& p) {
    Tape t;
    return build(t, p).loss.tensor()[0];
  };

  double max_rel = 0.0;
  std::vector<Tensor> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor analytic = grads.dense(built.params[pi]);
    for (std::size_t i = 0; i < params[pi].numel(); ++i) {
      const double orig = work[pi][i];
      work[pi][i] = orig + epsilon;
      const double up = loss_at(work);
      work[pi][i] = orig - epsilon;
      const double down = loss_at(work);
      work[pi][i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace protonlu::autodiff
