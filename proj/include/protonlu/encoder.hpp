#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protonlu/autodiff.hpp"
#include "protonlu/tensor.hpp"

namespace protonlu::encoder {

struct EncoderConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 32;
  std::size_t model_dim = 16;
  std::size_t max_len = 32;
  bool attention = false;
  // When set, the token table comes from an external file and the optimizer
  // leaves it untouched.
  bool frozen_embeddings = false;
  std::uint64_t seed = 0;

  bool operator==(const EncoderConfig&) const = default;
};

// All trainable weights. Attention tensors are empty when the config has
// attention off. No biases and no layer norm; one block is enough at this
// scale.
struct EncoderParams {
  Tensor token_embedding;     // V x E
  Tensor position_embedding;  // L x E
  Tensor attn_query, attn_key, attn_value, attn_output;  // E x E
  Tensor ffn;                 // E x E, tanh nonlinearity
  Tensor projection;          // E x M, defines the prototype space

  bool operator==(const EncoderParams&) const = default;
};

// Named views over the parameter tensors, in a fixed order. `trainable_only`
// skips the token table when embeddings are frozen.
std::vector<std::pair<std::string, Tensor*>> parameter_list(
    EncoderParams& params, const EncoderConfig& config,
    bool trainable_only = false);
std::vector<std::pair<std::string, const Tensor*>> parameter_list(
    const EncoderParams& params, const EncoderConfig& config,
    bool trainable_only = false);

void validate_config(const EncoderConfig& config);

// Deterministic given config.seed. Embedding tables uniform in [-0.1, 0.1];
// projections uniform with scale 1/sqrt(fan_in); PAD row zeroed.
EncoderParams init_params(const EncoderConfig& config);

// Parameter leaves on a tape, created in parameter_list order.
struct EncoderNodes {
  autodiff::Value token_embedding;
  autodiff::Value position_embedding;
  autodiff::Value attn_query, attn_key, attn_value, attn_output;
  autodiff::Value ffn;
  autodiff::Value projection;
};

EncoderNodes bind(autodiff::Tape& tape, const EncoderParams& params,
                  const EncoderConfig& config);

// Leaves of `nodes` in the same order as parameter_list.
std::vector<autodiff::Value> leaf_list(const EncoderNodes& nodes,
                                       const EncoderConfig& config,
                                       bool trainable_only = false);

struct EncodedUtterance {
  autodiff::Value sequence_vector;  // 1 x M, mean of the token vectors
  autodiff::Value token_vectors;    // T x M
};

// f_theta: embeds token ids, mixes them with one optional self-attention
// block, applies the tanh feed-forward, and projects into the prototype
// space. Fully differentiable through the tape.
EncodedUtterance encode(autodiff::Tape& tape, const EncoderNodes& nodes,
                        const EncoderConfig& config,
                        const std::vector<std::size_t>& token_ids);

// Text format: header "V E", then V lines of E space-separated doubles.
Tensor load_embedding_file(const std::string& path);

}  // namespace protonlu::encoder
