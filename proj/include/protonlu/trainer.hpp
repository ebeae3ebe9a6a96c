#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protonlu/model.hpp"

namespace protonlu::trainer {

struct Hyperparams {
  // 5e-5 is the paper's fine-tuning rate; a from-scratch encoder of this
  // size wants a larger step. 5e-5 stays selectable via the CLI.
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t episode_count = 1000;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  std::uint64_t seed = 0;
};

void validate_hyperparams(const Hyperparams& hyper);

// First/second moment estimates per parameter tensor, plus the step counter.
struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

OptimizerState init_optimizer_state(const std::vector<Tensor*>& params);

// Decoupled weight decay with bias correction:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// Throws on non-finite gradients.
void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads, OptimizerState& state,
                const Hyperparams& hyper);

struct TrainHistory {
  std::vector<double> episode_loss;
  std::vector<double> episode_accuracy;  // query accuracy (token-level for slots)
  double wall_seconds = 0.0;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Episodic training: sample episode, encode, build prototypes, take the
// negative log-probability loss over the queries, backprop, AdamW step.
// Deterministic given the seeds; runs plan.episode_count episodes. A
// provided token table replaces the random one (and is frozen when the
// config says so).
TrainResult train(const corpus::Corpus& corpus,
                  const episodes::SamplingPlan& plan,
                  encoder::EncoderConfig encoder_config,
                  const Hyperparams& hyper,
                  const std::optional<Tensor>& token_table = std::nullopt);

// n_runs independent trainings with seeds seed+0 .. seed+n_runs-1, up to
// `threads` of them at a time. Results are ordered by run index and
// identical to a serial execution.
std::vector<TrainResult> run_batch(
    const corpus::Corpus& corpus, const episodes::SamplingPlan& plan,
    const encoder::EncoderConfig& encoder_config, const Hyperparams& hyper,
    std::size_t n_runs, std::size_t threads = 1,
    const std::optional<Tensor>& token_table = std::nullopt);

// --- Supervised baseline ----------------------------------------------------
//
// The comparison model: the same encoder under an ordinary softmax
// classifier head over all intents, trained with cross-entropy on the full
// training data (20 epochs by default).

struct BaselineHead {
  std::vector<std::string> classes;  // sorted intent labels
  Tensor weights;                    // M x C

  bool operator==(const BaselineHead&) const = default;
};

struct BaselineResult {
  Model model;
  BaselineHead head;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

BaselineResult train_supervised_baseline(const corpus::Corpus& corpus,
                                         const std::set<std::string>& languages,
                                         encoder::EncoderConfig encoder_config,
                                         const Hyperparams& hyper,
                                         std::size_t epochs = 20,
                                         std::size_t batch_size = 32);

std::string predict_baseline(const Model& model, const BaselineHead& head,
                             const std::vector<std::string>& tokens);

// --- Checkpoints -------------------------------------------------------------
//
// Versioned JSON container: encoder config, weights, vocabulary, free-form
// metadata, and the baseline head when present. load(save(x)) == x.

struct Checkpoint {
  Model model;
  std::optional<BaselineHead> baseline;
  nlohmann::ordered_json metadata;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace protonlu::trainer
