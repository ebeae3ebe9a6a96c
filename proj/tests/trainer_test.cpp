#include "protonlu/trainer.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "protonlu/error.hpp"

using namespace protonlu;
using episodes::Configuration;
using episodes::TaskKind;
using trainer::Hyperparams;
using trainer::OptimizerState;

namespace {

corpus::Corpus separable_corpus(std::size_t langs, std::size_t intents,
                                std::size_t per, std::uint64_t seed,
                                double anchor = 0.3) {
  corpus::SyntheticSpec spec;
  spec.n_languages = langs;
  spec.n_intents = intents;
  spec.n_slot_types = 5;
  spec.utterances_per_intent_per_language = per;
  spec.shared_anchor_fraction = anchor;
  spec.seed = seed;
  return corpus::generate_synthetic(spec);
}

episodes::SamplingPlan plan_for(const corpus::Corpus& corpus, TaskKind task,
                                Configuration configuration,
                                const std::string& target, std::size_t n,
                                std::size_t k, std::size_t q,
                                std::size_t episode_count) {
  episodes::EpisodeConfig config;
  config.n_way = n;
  config.k_shot = k;
  config.query_per_class = q;
  config.task = task;
  config.support_languages = {"x"};
  config.query_languages = {"x"};
  std::vector<std::string> languages(corpus.languages.begin(),
                                     corpus.languages.end());
  return episodes::make_plan(configuration, target, languages, config,
                             episode_count);
}

encoder::EncoderConfig config_for(const corpus::Corpus& corpus, std::size_t e,
                                  std::size_t m, bool attention,
                                  std::uint64_t seed) {
  encoder::EncoderConfig config;
  config.vocab_size = corpus::build_vocab(corpus, 1).size();
  config.embed_dim = e;
  config.model_dim = m;
  config.max_len = 16;
  config.attention = attention;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("adamw zero-gradient step is pure decay by exactly 1 - lr*wd") {
  Tensor p = Tensor::row({0.5, -1.25, 3.0});
  Tensor g = Tensor::zeros({1, 3});
  std::vector<Tensor*> params = {&p};
  OptimizerState state = trainer::init_optimizer_state(params);
  Hyperparams hyper;
  hyper.learning_rate = 0.1;
  hyper.weight_decay = 0.01;
  trainer::adamw_step(params, {&g}, state, hyper);
  CHECK(p[0] == 0.5 * (1.0 - 0.001));
  CHECK(p[1] == -1.25 * (1.0 - 0.001));
  CHECK(p[2] == 3.0 * (1.0 - 0.001));
  CHECK(state.step == 1);
}

TEST_CASE("first bias-corrected step has magnitude ~ lr") {
  Tensor p = Tensor::scalar(2.0);
  Tensor g = Tensor::scalar(0.37);
  std::vector<Tensor*> params = {&p};
  OptimizerState state = trainer::init_optimizer_state(params);
  Hyperparams hyper;
  hyper.learning_rate = 0.05;
  hyper.weight_decay = 0.0;
  trainer::adamw_step(params, {&g}, state, hyper);
  CHECK(std::abs(2.0 - p[0]) ==
        doctest::Approx(hyper.learning_rate).epsilon(1e-6));
  CHECK(p[0] < 2.0);  // moved against the gradient sign
}

TEST_CASE("adamw with lr=0 leaves parameters unchanged exactly") {
  rng::Engine rand(8);
  Tensor p = Tensor::zeros({4, 3});
  for (double& v : p.data()) v = rng::uniform_real(rand, -1.0, 1.0);
  const Tensor before = p;
  Tensor g = Tensor::zeros({4, 3});
  for (double& v : g.data()) v = rng::uniform_real(rand, -1.0, 1.0);
  std::vector<Tensor*> params = {&p};
  OptimizerState state = trainer::init_optimizer_state(params);
  Hyperparams hyper;
  hyper.learning_rate = 0.0;
  trainer::adamw_step(params, {&g}, state, hyper);
  CHECK(p == before);
}

TEST_CASE("adamw matches an independent reference over 100 random steps") {
  rng::Engine rand(123);
  const std::size_t n = 17;
  Tensor p = Tensor::zeros({n});
  std::vector<double> p_ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = rng::uniform_real(rand, -2.0, 2.0);
    p_ref[i] = p[i];
  }
  std::vector<Tensor*> params = {&p};
  OptimizerState state = trainer::init_optimizer_state(params);
  oracles::AdamWRef ref(n);
  Hyperparams hyper;
  hyper.learning_rate = 3e-3;
  hyper.weight_decay = 0.02;
  for (int step = 0; step < 100; ++step) {
    Tensor g = Tensor::zeros({n});
    std::vector<double> g_ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng::uniform_real(rand, -1.0, 1.0);
      g_ref[i] = g[i];
    }
    trainer::adamw_step(params, {&g}, state, hyper);
    ref.step(p_ref, g_ref, hyper.learning_rate, hyper.weight_decay,
             hyper.beta1, hyper.beta2, hyper.epsilon);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(p[i] - p_ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("adamw rejects non-finite gradients") {
  Tensor p = Tensor::scalar(1.0);
  Tensor g = Tensor::scalar(NAN);
  std::vector<Tensor*> params = {&p};
  OptimizerState state = trainer::init_optimizer_state(params);
  CHECK_THROWS_WITH_AS(trainer::adamw_step(params, {&g}, state, Hyperparams{}),
                       doctest::Contains("non-finite"), Error);
}

TEST_CASE("zero episodes returns the initial parameters and empty history") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 8, 2);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 3, 2, 2, 0);
  const auto config = config_for(corpus, 8, 4, false, 5);
  const auto result = trainer::train(corpus, plan, config, Hyperparams{});
  CHECK(result.model.params == encoder::init_params(config));
  CHECK(result.history.episode_loss.empty());
  CHECK(result.history.episode_accuracy.empty());
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 10, 7);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 3, 2, 2, 15);
  const auto config = config_for(corpus, 8, 4, false, 5);
  Hyperparams hyper;
  hyper.seed = 33;
  const auto a = trainer::train(corpus, plan, config, hyper);
  const auto b = trainer::train(corpus, plan, config, hyper);
  CHECK(a.model.params == b.model.params);
  CHECK(a.history.episode_loss == b.history.episode_loss);
  CHECK(a.history.episode_accuracy == b.history.episode_accuracy);
}

TEST_CASE("loss drops strictly below ln N on a separable corpus") {
  const corpus::Corpus corpus = separable_corpus(1, 5, 20, 13, 0.0);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 5, 5, 3, 120);
  const auto config = config_for(corpus, 16, 8, false, 1);
  Hyperparams hyper;
  hyper.seed = 3;
  const auto result = trainer::train(corpus, plan, config, hyper);
  REQUIRE(result.history.episode_loss.size() == 120);
  const double ln_n = std::log(5.0);
  // 5-episode moving average must cross below ln N within the run.
  bool crossed = false;
  double best = 1e9;
  for (std::size_t i = 4; i < result.history.episode_loss.size(); ++i) {
    double avg = 0.0;
    for (std::size_t j = i - 4; j <= i; ++j) {
      avg += result.history.episode_loss[j];
    }
    avg /= 5.0;
    best = std::min(best, avg);
    if (avg < ln_n) crossed = true;
  }
  INFO("best moving average ", best);
  CHECK(crossed);
  // And the trained model is visibly better than chance at the end.
  double tail = 0.0;
  for (std::size_t i = 100; i < 120; ++i) {
    tail += result.history.episode_accuracy[i];
  }
  CHECK(tail / 20.0 > 0.5);
}

TEST_CASE("slot-task training runs and its loss moves") {
  const corpus::Corpus corpus = separable_corpus(1, 4, 20, 19, 0.0);
  const auto plan = plan_for(corpus, TaskKind::slot,
                             Configuration::target_only, "l0", 3, 4, 2, 25);
  const auto config = config_for(corpus, 12, 6, true, 2);
  Hyperparams hyper;
  hyper.seed = 5;
  const auto result = trainer::train(corpus, plan, config, hyper);
  REQUIRE(result.history.episode_loss.size() == 25);
  for (double loss : result.history.episode_loss) {
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
  }
  CHECK(result.history.episode_loss.back() !=
        result.history.episode_loss.front());
}

TEST_CASE("run_batch returns one result per run and matches serial execution") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 10, 23);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 3, 2, 2, 10);
  const auto config = config_for(corpus, 8, 4, false, 11);
  Hyperparams hyper;
  hyper.seed = 100;
  const auto serial = trainer::run_batch(corpus, plan, config, hyper, 3, 1);
  const auto parallel = trainer::run_batch(corpus, plan, config, hyper, 3, 3);
  REQUIRE(serial.size() == 3);
  REQUIRE(parallel.size() == 3);
  for (std::size_t run = 0; run < 3; ++run) {
    CHECK(serial[run].model.params == parallel[run].model.params);
    CHECK(serial[run].history.episode_loss ==
          parallel[run].history.episode_loss);
  }
  // Distinct seeds per run give distinct models.
  CHECK_FALSE(serial[0].model.params == serial[1].model.params);
}

TEST_CASE("run_batch with one run equals train, and run counts are honored") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 8, 57);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 3, 2, 1, 2);
  const auto config = config_for(corpus, 8, 4, false, 6);
  Hyperparams hyper;
  hyper.seed = 15;
  const auto single = trainer::run_batch(corpus, plan, config, hyper, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].model.params ==
        trainer::train(corpus, plan, config, hyper).model.params);
  // 30 runs for intent, 5 for slots: one history per run.
  CHECK(trainer::run_batch(corpus, plan, config, hyper, 30, 2).size() == 30);
  const auto slot_plan = plan_for(corpus, TaskKind::slot,
                                  Configuration::target_only, "l0", 2, 2, 1, 2);
  CHECK(trainer::run_batch(corpus, slot_plan, config, hyper, 5, 2).size() == 5);
}

TEST_CASE("unsatisfiable plans fail before any step") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 10, 29);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 10, 2, 2, 50);
  const auto config = config_for(corpus, 8, 4, false, 0);
  CHECK_THROWS_WITH_AS(
      (void)trainer::train(corpus, plan, config, Hyperparams{}),
      doctest::Contains("episode 0"), Error);
}

TEST_CASE("checkpoints round-trip exactly") {
  const corpus::Corpus corpus = separable_corpus(2, 3, 8, 31);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::multilingual, "l1", 3, 2, 2, 8);
  const auto config = config_for(corpus, 8, 4, true, 9);
  Hyperparams hyper;
  hyper.seed = 77;
  const auto result = trainer::train(corpus, plan, config, hyper);

  trainer::Checkpoint cp;
  cp.model = result.model;
  cp.metadata = {{"task", "intent"}, {"episodes", 8}};
  const auto dir = std::filesystem::temp_directory_path() / "protonlu_tests";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "checkpoint.json").string();
  trainer::save_checkpoint(cp, path);
  const trainer::Checkpoint loaded = trainer::load_checkpoint(path);
  CHECK(loaded.model == cp.model);
  CHECK_FALSE(loaded.baseline.has_value());
  CHECK(loaded.metadata["episodes"] == 8);

  // With a baseline head attached.
  trainer::BaselineHead head;
  head.classes = {"a", "b"};
  head.weights = Tensor::zeros({4, 2});
  head.weights.at(2, 1) = -0.125;
  cp.baseline = head;
  trainer::save_checkpoint(cp, path);
  const trainer::Checkpoint loaded2 = trainer::load_checkpoint(path);
  REQUIRE(loaded2.baseline.has_value());
  CHECK(loaded2.baseline->classes == head.classes);
  CHECK(loaded2.baseline->weights == head.weights);
}

TEST_CASE("frozen token embeddings stay fixed during training") {
  const corpus::Corpus corpus = separable_corpus(1, 3, 10, 37);
  const auto plan = plan_for(corpus, TaskKind::intent,
                             Configuration::target_only, "l0", 3, 2, 2, 10);
  auto config = config_for(corpus, 8, 4, false, 21);
  config.frozen_embeddings = true;
  Tensor table = Tensor::zeros({config.vocab_size, config.embed_dim});
  rng::Engine rand(1);
  for (double& v : table.data()) v = rng::uniform_real(rand, -0.1, 0.1);
  const auto result =
      trainer::train(corpus, plan, config, Hyperparams{}, table);
  CHECK(result.model.params.token_embedding == table);
  CHECK_FALSE(result.model.params.ffn == encoder::init_params(config).ffn);
  // Frozen mode without a table is rejected.
  CHECK_THROWS_AS((void)trainer::train(corpus, plan, config, Hyperparams{}),
                  Error);
}

TEST_CASE("the supervised baseline fits a separable corpus") {
  const corpus::Corpus corpus = separable_corpus(1, 4, 15, 43, 0.0);
  const auto config = config_for(corpus, 12, 8, false, 3);
  Hyperparams hyper;
  hyper.seed = 9;
  hyper.learning_rate = 1e-2;
  const auto result = trainer::train_supervised_baseline(
      corpus, {"l0"}, config, hyper, 12, 16);
  REQUIRE(result.epoch_accuracy.size() == 12);
  CHECK(result.epoch_accuracy.back() > 0.9);
  CHECK(result.epoch_loss.back() < result.epoch_loss.front());
  REQUIRE(result.head.classes.size() == 4);

  // predict_baseline agrees with the recorded training accuracy trend.
  std::size_t correct = 0;
  for (const corpus::Utterance& utt : corpus.utterances) {
    if (trainer::predict_baseline(result.model, result.head, utt.tokens) ==
        utt.intent) {
      ++correct;
    }
  }
  CHECK(static_cast<double>(correct) / corpus.utterances.size() > 0.9);
}
