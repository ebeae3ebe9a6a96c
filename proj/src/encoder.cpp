#include "protonlu/encoder.hpp"

#include <cmath>
#include <fstream>

#include "protonlu/error.hpp"
#include "protonlu/rng.hpp"

namespace protonlu::encoder {

void validate_config(const EncoderConfig& config) {
  if (config.vocab_size < 2) {
    throw Error("EncoderConfig: vocab_size must be >= 2 (PAD, UNK)");
  }
  if (config.embed_dim < 1 || config.model_dim < 1 || config.max_len < 1) {
    throw Error("EncoderConfig: embed_dim, model_dim, max_len must be >= 1");
  }
}

namespace {

Tensor uniform_tensor(rng::Engine& rand, std::size_t rows, std::size_t cols,
                      double bound) {
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data()) v = rng::uniform_real(rand, -bound, bound);
  return t;
}

}  // namespace

EncoderParams init_params(const EncoderConfig& config) {
  validate_config(config);
  rng::Engine rand(config.seed);
  EncoderParams p;
  const std::size_t V = config.vocab_size, E = config.embed_dim;
  p.token_embedding = uniform_tensor(rand, V, E, 0.1);
  p.position_embedding = uniform_tensor(rand, config.max_len, E, 0.1);
  const double proj_in = 1.0 / std::sqrt(static_cast<double>(E));
  if (config.attention) {
    p.attn_query = uniform_tensor(rand, E, E, proj_in);
    p.attn_key = uniform_tensor(rand, E, E, proj_in);
    p.attn_value = uniform_tensor(rand, E, E, proj_in);
    p.attn_output = uniform_tensor(rand, E, E, proj_in);
  }
  p.ffn = uniform_tensor(rand, E, E, proj_in);
  p.projection = uniform_tensor(rand, E, config.model_dim, proj_in);
  for (std::size_t j = 0; j < E; ++j) p.token_embedding.at(0, j) = 0.0;  // PAD
  return p;
}

namespace {

template <typename Params, typename T>
std::vector<std::pair<std::string, T*>> list_impl(Params& p,
                                                  const EncoderConfig& config,
                                                  bool trainable_only) {
  std::vector<std::pair<std::string, T*>> out;
  if (!(trainable_only && config.frozen_embeddings)) {
    out.emplace_back("token_embedding", &p.token_embedding);
  }
  out.emplace_back("position_embedding", &p.position_embedding);
  if (config.attention) {
    out.emplace_back("attn_query", &p.attn_query);
    out.emplace_back("attn_key", &p.attn_key);
    out.emplace_back("attn_value", &p.attn_value);
    out.emplace_back("attn_output", &p.attn_output);
  }
  out.emplace_back("ffn", &p.ffn);
  out.emplace_back("projection", &p.projection);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> parameter_list(
    EncoderParams& params, const EncoderConfig& config, bool trainable_only) {
  return list_impl<EncoderParams, Tensor>(params, config, trainable_only);
}

std::vector<std::pair<std::string, const Tensor*>> parameter_list(
    const EncoderParams& params, const EncoderConfig& config,
    bool trainable_only) {
  return list_impl<const EncoderParams, const Tensor>(params, config,
                                                      trainable_only);
}

EncoderNodes bind(autodiff::Tape& tape, const EncoderParams& params,
                  const EncoderConfig& config) {
  EncoderNodes n;
  n.token_embedding = tape.leaf(params.token_embedding);
  n.position_embedding = tape.leaf(params.position_embedding);
  if (config.attention) {
    n.attn_query = tape.leaf(params.attn_query);
    n.attn_key = tape.leaf(params.attn_key);
    n.attn_value = tape.leaf(params.attn_value);
    n.attn_output = tape.leaf(params.attn_output);
  }
  n.ffn = tape.leaf(params.ffn);
  n.projection = tape.leaf(params.projection);
  return n;
}

std::vector<autodiff::Value> leaf_list(const EncoderNodes& nodes,
                                       const EncoderConfig& config,
                                       bool trainable_only) {
  std::vector<autodiff::Value> out;
  if (!(trainable_only && config.frozen_embeddings)) {
    out.push_back(nodes.token_embedding);
  }
  out.push_back(nodes.position_embedding);
  if (config.attention) {
    out.push_back(nodes.attn_query);
    out.push_back(nodes.attn_key);
    out.push_back(nodes.attn_value);
    out.push_back(nodes.attn_output);
  }
  out.push_back(nodes.ffn);
  out.push_back(nodes.projection);
  return out;
}

EncodedUtterance encode(autodiff::Tape& tape, const EncoderNodes& nodes,
                        const EncoderConfig& config,
                        const std::vector<std::size_t>& token_ids) {
  if (token_ids.empty()) throw Error("encode: empty token sequence");
  if (token_ids.size() > config.max_len) {
    throw Error("encode: sequence length " + std::to_string(token_ids.size()) +
                " exceeds max_len " + std::to_string(config.max_len));
  }
  for (std::size_t id : token_ids) {
    if (id >= config.vocab_size) {
      throw Error("encode: token id " + std::to_string(id) +
                  " out of vocabulary range " +
                  std::to_string(config.vocab_size));
    }
  }
  std::vector<std::size_t> positions(token_ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;

  using autodiff::Value;
  Value x = tape.add(tape.gather_rows(nodes.token_embedding, token_ids),
                     tape.gather_rows(nodes.position_embedding, positions));
  if (config.attention) {
    // Single-head self-attention with a residual identity path.
    const double inv_sqrt_e =
        1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    Value q = tape.matmul(x, nodes.attn_query);
    Value k = tape.matmul(x, nodes.attn_key);
    Value v = tape.matmul(x, nodes.attn_value);
    Value weights =
        tape.row_softmax(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_e));
    x = tape.add(x, tape.matmul(tape.matmul(weights, v), nodes.attn_output));
  }
  Value hidden = tape.tanh(tape.matmul(x, nodes.ffn));
  Value token_vectors = tape.matmul(hidden, nodes.projection);
  return EncodedUtterance{tape.mean_rows(token_vectors), token_vectors};
}

Tensor load_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_embedding_file: cannot open " + path);
  std::size_t v = 0, e = 0;
  if (!(in >> v >> e) || v < 2 || e < 1) {
    throw Error("load_embedding_file: bad header in " + path +
                " (expected \"V E\" with V >= 2, E >= 1)");
  }
  Tensor table = Tensor::zeros({v, e});
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < e; ++j) {
      if (!(in >> table.at(i, j))) {
        throw Error("load_embedding_file: " + path + ": row " +
                    std::to_string(i) + " is short");
      }
    }
  }
  table.check_finite("load_embedding_file");
  return table;
}

}  // namespace protonlu::encoder
