#include "protonlu/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "protonlu/error.hpp"
#include "protonlu/rng.hpp"

namespace protonlu::trainer {

void validate_hyperparams(const Hyperparams& hyper) {
  if (hyper.learning_rate <= 0.0) {
    throw Error("Hyperparams: learning_rate must be > 0");
  }
  if (hyper.beta1 <= 0.0 || hyper.beta1 >= 1.0 || hyper.beta2 <= 0.0 ||
      hyper.beta2 >= 1.0) {
    throw Error("Hyperparams: betas must be in (0, 1)");
  }
  if (hyper.epsilon <= 0.0) throw Error("Hyperparams: epsilon must be > 0");
  if (hyper.weight_decay < 0.0 || hyper.grad_clip_norm < 0.0) {
    throw Error("Hyperparams: weight_decay and grad_clip_norm must be >= 0");
  }
}

OptimizerState init_optimizer_state(const std::vector<Tensor*>& params) {
  OptimizerState state;
  for (const Tensor* p : params) {
    state.first_moment.push_back(Tensor::zeros(p->shape()));
    state.second_moment.push_back(Tensor::zeros(p->shape()));
  }
  return state;
}

void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads, OptimizerState& state,
                const Hyperparams& hyper) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw Error("adamw_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) ||
        !params[i]->same_shape(state.first_moment[i])) {
      throw Error("adamw_step: shape mismatch at parameter " +
                  std::to_string(i));
    }
    for (double g : grads[i]->data()) {
      if (!std::isfinite(g)) {
        throw Error("adamw_step: non-finite gradient at parameter " +
                    std::to_string(i));
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= hyper.learning_rate *
              (m_hat / (std::sqrt(v_hat) + hyper.epsilon) +
               hyper.weight_decay * p[j]);
    }
  }
}

namespace {

// Scales gradients in place so their global norm is at most `clip`.
void clip_gradients(std::vector<Tensor>& grads, double clip) {
  if (clip <= 0.0) return;
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip) return;
  const double factor = clip / norm;
  for (Tensor& g : grads) {
    for (double& v : g.data()) v *= factor;
  }
}

// Query accuracy of one already-embedded episode, via the plain protonet
// path over the tape's forward values.
double episode_accuracy(const EpisodeForward& fwd,
                        protonet::DistanceKind kind) {
  std::vector<std::pair<std::string, Tensor>> support;
  for (const auto& [label, value] : fwd.support) {
    support.emplace_back(label, value.tensor());
  }
  const protonet::PrototypeMap protos = protonet::compute_prototypes(support);
  std::size_t correct = 0;
  for (const auto& [value, gold] : fwd.queries) {
    if (protonet::predict(value.tensor(), protos, kind) == gold) ++correct;
  }
  return fwd.queries.empty()
             ? 0.0
             : static_cast<double>(correct) / static_cast<double>(fwd.queries.size());
}

}  // namespace

TrainResult train(const corpus::Corpus& corpus,
                  const episodes::SamplingPlan& plan,
                  encoder::EncoderConfig encoder_config,
                  const Hyperparams& hyper,
                  const std::optional<Tensor>& token_table) {
  validate_hyperparams(hyper);
  episodes::validate_config(plan.template_config);
  encoder::validate_config(encoder_config);
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  result.model.config = encoder_config;
  result.model.params = encoder::init_params(encoder_config);
  result.model.vocab = corpus::build_vocab(corpus, 1);
  if (result.model.vocab.size() != encoder_config.vocab_size) {
    throw Error("train: encoder vocab_size " +
                std::to_string(encoder_config.vocab_size) +
                " does not match corpus vocabulary " +
                std::to_string(result.model.vocab.size()));
  }
  if (token_table.has_value()) {
    if (!token_table->same_shape(result.model.params.token_embedding)) {
      throw Error("train: token table shape " + token_table->shape_str() +
                  " does not match the encoder");
    }
    result.model.params.token_embedding = *token_table;
  } else if (encoder_config.frozen_embeddings) {
    throw Error("train: frozen_embeddings set but no token table provided");
  }

  auto param_ptrs =
      encoder::parameter_list(result.model.params, encoder_config, true);
  std::vector<Tensor*> params;
  for (auto& [name, ptr] : param_ptrs) params.push_back(ptr);
  OptimizerState state = init_optimizer_state(params);

  rng::Engine episode_rng(hyper.seed);
  for (std::size_t ep = 0; ep < plan.episode_count; ++ep) {
    try {
      const episodes::Episode episode =
          episodes::sample_episode(corpus, plan.template_config, episode_rng);

      autodiff::Tape tape;
      const encoder::EncoderNodes nodes =
          encoder::bind(tape, result.model.params, encoder_config);
      const EpisodeForward fwd =
          episode_forward(tape, result.model, nodes, corpus, episode);
      const autodiff::Value loss = protonet::prototypical_loss(
          tape, fwd.support, fwd.queries, plan.template_config.distance);
      const double loss_value = loss.tensor()[0];
      if (!std::isfinite(loss_value)) throw Error("non-finite loss");

      const autodiff::GradientMap grad_map = tape.backward(loss);
      std::vector<Tensor> grads;
      for (const autodiff::Value& leaf :
           encoder::leaf_list(nodes, encoder_config, true)) {
        grads.push_back(grad_map.dense(leaf));
      }
      clip_gradients(grads, hyper.grad_clip_norm);
      std::vector<const Tensor*> grad_ptrs;
      for (const Tensor& g : grads) grad_ptrs.push_back(&g);
      adamw_step(params, grad_ptrs, state, hyper);

      result.history.episode_loss.push_back(loss_value);
      result.history.episode_accuracy.push_back(
          episode_accuracy(fwd, plan.template_config.distance));
    } catch (const Error& e) {
      throw Error("train: episode " + std::to_string(ep) + ": " + e.what());
    }
  }
  result.history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

std::vector<TrainResult> run_batch(
    const corpus::Corpus& corpus, const episodes::SamplingPlan& plan,
    const encoder::EncoderConfig& encoder_config, const Hyperparams& hyper,
    std::size_t n_runs, std::size_t threads,
    const std::optional<Tensor>& token_table) {
  if (n_runs < 1) throw Error("run_batch: n_runs must be >= 1");
  threads = std::max<std::size_t>(1, std::min(threads, n_runs));
  std::vector<TrainResult> results(n_runs);
  std::vector<std::string> failures(n_runs);
  std::atomic<std::size_t> next{0};

  const auto worker = [&]() {
    for (std::size_t run = next.fetch_add(1); run < n_runs;
         run = next.fetch_add(1)) {
      Hyperparams run_hyper = hyper;
      run_hyper.seed = hyper.seed + run;
      encoder::EncoderConfig run_config = encoder_config;
      run_config.seed = encoder_config.seed + run;
      try {
        results[run] = train(corpus, plan, run_config, run_hyper, token_table);
      } catch (const std::exception& e) {
        failures[run] = e.what();
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (std::size_t run = 0; run < n_runs; ++run) {
    if (!failures[run].empty()) {
      throw Error("run " + std::to_string(run) + ": " + failures[run]);
    }
  }
  return results;
}

// --- Supervised baseline ----------------------------------------------------

BaselineResult train_supervised_baseline(const corpus::Corpus& corpus,
                                         const std::set<std::string>& languages,
                                         encoder::EncoderConfig encoder_config,
                                         const Hyperparams& hyper,
                                         std::size_t epochs,
                                         std::size_t batch_size) {
  validate_hyperparams(hyper);
  if (batch_size < 1) throw Error("train_supervised_baseline: batch_size >= 1");

  BaselineResult result;
  result.model.config = encoder_config;
  result.model.params = encoder::init_params(encoder_config);
  result.model.vocab = corpus::build_vocab(corpus, 1);
  if (result.model.vocab.size() != encoder_config.vocab_size) {
    throw Error("train_supervised_baseline: vocab_size mismatch");
  }

  std::vector<std::size_t> training;
  std::set<std::string> label_set;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    if (languages.count(corpus.utterances[i].language)) {
      training.push_back(i);
      label_set.insert(corpus.utterances[i].intent);
    }
  }
  if (training.empty()) {
    throw Error("train_supervised_baseline: no utterances in the given "
                "languages");
  }
  result.head.classes.assign(label_set.begin(), label_set.end());
  const std::size_t n_classes = result.head.classes.size();
  if (n_classes < 2) {
    throw Error("train_supervised_baseline: need >= 2 intent classes");
  }
  {
    rng::Engine head_rng(encoder_config.seed + 0x9e3779b97f4a7c15ULL);
    const double bound =
        1.0 / std::sqrt(static_cast<double>(encoder_config.model_dim));
    result.head.weights =
        Tensor::zeros({encoder_config.model_dim, n_classes});
    for (double& w : result.head.weights.data()) {
      w = rng::uniform_real(head_rng, -bound, bound);
    }
  }

  auto class_index = [&](const std::string& intent) {
    const auto it = std::lower_bound(result.head.classes.begin(),
                                     result.head.classes.end(), intent);
    return static_cast<std::size_t>(it - result.head.classes.begin());
  };

  auto param_ptrs =
      encoder::parameter_list(result.model.params, encoder_config, true);
  std::vector<Tensor*> params;
  for (auto& [name, ptr] : param_ptrs) params.push_back(ptr);
  params.push_back(&result.head.weights);
  OptimizerState state = init_optimizer_state(params);

  rng::Engine shuffle_rng(hyper.seed);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng::shuffle(training, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < training.size(); begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, training.size());
      autodiff::Tape tape;
      const encoder::EncoderNodes nodes =
          encoder::bind(tape, result.model.params, encoder_config);
      const autodiff::Value head = tape.leaf(result.head.weights);
      std::vector<autodiff::Value> rows;
      std::vector<std::size_t> gold;
      for (std::size_t b = begin; b < end; ++b) {
        const corpus::Utterance& utt = corpus.utterances[training[b]];
        rows.push_back(encoder::encode(tape, nodes, encoder_config,
                                       result.model.vocab.encode(utt.tokens))
                           .sequence_vector);
        gold.push_back(class_index(utt.intent));
      }
      const autodiff::Value logits =
          tape.matmul(tape.concat_rows(rows), head);
      const autodiff::Value log_probs = tape.row_log_softmax(logits);
      const autodiff::Value loss =
          tape.scale(tape.mean_all(tape.pick(log_probs, gold)), -1.0);
      loss_sum += loss.tensor()[0] * static_cast<double>(end - begin);
      const Tensor& logit_values = logits.tensor();
      for (std::size_t r = 0; r < gold.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < n_classes; ++c) {
          if (logit_values.at(r, c) > logit_values.at(r, best)) best = c;
        }
        if (best == gold[r]) ++correct;
      }

      const autodiff::GradientMap grad_map = tape.backward(loss);
      std::vector<Tensor> grads;
      for (const autodiff::Value& leaf :
           encoder::leaf_list(nodes, encoder_config, true)) {
        grads.push_back(grad_map.dense(leaf));
      }
      grads.push_back(grad_map.dense(head));
      clip_gradients(grads, hyper.grad_clip_norm);
      std::vector<const Tensor*> grad_ptrs;
      for (const Tensor& g : grads) grad_ptrs.push_back(&g);
      adamw_step(params, grad_ptrs, state, hyper);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(training.size()));
    result.epoch_accuracy.push_back(static_cast<double>(correct) /
                                    static_cast<double>(training.size()));
  }
  return result;
}

std::string predict_baseline(const Model& model, const BaselineHead& head,
                             const std::vector<std::string>& tokens) {
  autodiff::Tape tape;
  const encoder::EncoderNodes nodes =
      encoder::bind(tape, model.params, model.config);
  const autodiff::Value seq =
      encoder::encode(tape, nodes, model.config, model.vocab.encode(tokens))
          .sequence_vector;
  const autodiff::Value logits = tape.matmul(seq, tape.leaf(head.weights));
  const Tensor& row = logits.tensor();
  std::size_t best = 0;
  for (std::size_t c = 1; c < head.classes.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return head.classes[best];
}

// --- Checkpoints --------------------------------------------------------------

namespace {

nlohmann::ordered_json tensor_to_json(const Tensor& t) {
  nlohmann::ordered_json j;
  j["shape"] = t.shape();
  j["data"] = t.data();
  return j;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const Model& model = checkpoint.model;
  nlohmann::ordered_json root;
  root["format_version"] = 1;
  root["kind"] = checkpoint.baseline.has_value() ? "baseline" : "protonet";
  root["encoder_config"] = {{"vocab_size", model.config.vocab_size},
                            {"embed_dim", model.config.embed_dim},
                            {"model_dim", model.config.model_dim},
                            {"max_len", model.config.max_len},
                            {"attention", model.config.attention},
                            {"frozen_embeddings", model.config.frozen_embeddings},
                            {"seed", model.config.seed}};
  root["vocabulary"] = model.vocab.payload_tokens();
  nlohmann::ordered_json params;
  for (const auto& [name, tensor] :
       encoder::parameter_list(model.params, model.config)) {
    params[name] = tensor_to_json(*tensor);
  }
  root["params"] = std::move(params);
  if (checkpoint.baseline.has_value()) {
    root["baseline"] = {{"classes", checkpoint.baseline->classes},
                        {"head", tensor_to_json(checkpoint.baseline->weights)}};
  }
  root["metadata"] = checkpoint.metadata;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_checkpoint: cannot write " + path);
  out << root.dump(2) << '\n';
  if (!out) throw Error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_checkpoint: " + path + ": " + e.what());
  }
  if (root.value("format_version", 0) != 1) {
    throw Error("load_checkpoint: unsupported format_version in " + path);
  }
  Checkpoint cp;
  const auto& cfg = root.at("encoder_config");
  cp.model.config.vocab_size = cfg.at("vocab_size").get<std::size_t>();
  cp.model.config.embed_dim = cfg.at("embed_dim").get<std::size_t>();
  cp.model.config.model_dim = cfg.at("model_dim").get<std::size_t>();
  cp.model.config.max_len = cfg.at("max_len").get<std::size_t>();
  cp.model.config.attention = cfg.at("attention").get<bool>();
  cp.model.config.frozen_embeddings = cfg.at("frozen_embeddings").get<bool>();
  cp.model.config.seed = cfg.at("seed").get<std::uint64_t>();
  cp.model.vocab = corpus::Vocabulary(
      root.at("vocabulary").get<std::vector<std::string>>());
  const auto& params = root.at("params");
  for (auto& [name, tensor] :
       encoder::parameter_list(cp.model.params, cp.model.config)) {
    if (!params.contains(name)) {
      throw Error("load_checkpoint: missing parameter \"" + name + "\"");
    }
    *tensor = tensor_from_json(params.at(name));
  }
  if (root.contains("baseline")) {
    BaselineHead head;
    head.classes =
        root["baseline"].at("classes").get<std::vector<std::string>>();
    head.weights = tensor_from_json(root["baseline"].at("head"));
    cp.baseline = std::move(head);
  }
  cp.metadata = root.value("metadata", nlohmann::ordered_json::object());
  return cp;
}

}  // namespace protonlu::trainer
