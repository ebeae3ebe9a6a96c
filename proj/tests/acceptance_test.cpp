// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its runtime. Thresholds are fixed here, not tuned at run time;
// the desk-scale learning floors were frozen from calibration runs recorded
// in the comments below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "protonlu/error.hpp"
#include "protonlu/eval.hpp"
#include "protonlu/trainer.hpp"

using namespace protonlu;
using autodiff::Tape;
using autodiff::Value;
using episodes::Configuration;
using episodes::TaskKind;
using protonet::DistanceKind;

namespace {

class CriterionReport {
 public:
  CriterionReport(int number, std::string name)
      : number_(number), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}

  void expect(bool condition) { pass_ = pass_ && condition; }
  bool passing() const { return pass_; }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  ~CriterionReport() {
    std::printf("[acceptance] criterion %d (%s): %s (%.1fs)\n", number_,
                name_.c_str(), pass_ ? "PASS" : "FAIL", elapsed());
    std::fflush(stdout);
  }

 private:
  int number_;
  std::string name_;
  bool pass_ = true;
  std::chrono::steady_clock::time_point start_;
};

Tensor random_row(rng::Engine& rand, std::size_t dim, double lo = -2.0,
                  double hi = 2.0) {
  Tensor t = Tensor::zeros({1, dim});
  for (double& v : t.data()) v = rng::uniform_real(rand, lo, hi);
  return t;
}

corpus::Corpus synthetic(std::size_t langs, std::size_t intents,
                         std::size_t slot_types, std::size_t per,
                         double anchor, std::uint64_t seed,
                         corpus::LengthRange len = {5, 9}) {
  corpus::SyntheticSpec spec;
  spec.n_languages = langs;
  spec.n_intents = intents;
  spec.n_slot_types = slot_types;
  spec.utterances_per_intent_per_language = per;
  spec.shared_anchor_fraction = anchor;
  spec.utterance_length = len;
  spec.seed = seed;
  return corpus::generate_synthetic(spec);
}

episodes::EpisodeConfig episode_config(TaskKind task, std::size_t n,
                                       std::size_t k, std::size_t q) {
  episodes::EpisodeConfig config;
  config.n_way = n;
  config.k_shot = k;
  config.query_per_class = q;
  config.task = task;
  config.support_languages = {"x"};
  config.query_languages = {"x"};
  return config;
}

std::vector<std::string> corpus_languages(const corpus::Corpus& c) {
  return {c.languages.begin(), c.languages.end()};
}

encoder::EncoderConfig encoder_config_for(const corpus::Corpus& c,
                                          std::size_t e, std::size_t m,
                                          bool attention, std::uint64_t seed) {
  encoder::EncoderConfig config;
  config.vocab_size = corpus::build_vocab(c, 1).size();
  config.embed_dim = e;
  config.model_dim = m;
  config.max_len = 16;
  config.attention = attention;
  config.seed = seed;
  return config;
}

std::vector<std::string> random_tags(rng::Engine& rand, std::size_t len,
                                     std::size_t n_types) {
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t roll = rng::uniform_index(rand, 3);
    if (roll == 0) {
      tags.push_back("O");
    } else {
      tags.push_back((roll == 1 ? "B-t" : "I-t") +
                     std::to_string(rng::uniform_index(rand, n_types)));
    }
  }
  return tags;
}

}  // namespace

TEST_CASE("criterion 1: math-core oracles") {
  CriterionReport report(1, "math-core oracles");
  rng::Engine rand(10001);

  // compute_prototypes vs brute-force class means, 1e-12.
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng::uniform_index(rand, 8);
    const std::size_t items = 2 + rng::uniform_index(rand, 10);
    std::vector<std::pair<std::string, Tensor>> support;
    std::vector<std::pair<std::string, std::vector<double>>> plain;
    for (std::size_t i = 0; i < items; ++i) {
      const std::string label = "c" + std::to_string(rng::uniform_index(rand, 4));
      const Tensor v = random_row(rand, dim);
      support.emplace_back(label, v);
      plain.emplace_back(label, v.data());
    }
    const auto protos = protonet::compute_prototypes(support);
    const auto means = oracles::class_means(plain);
    for (std::size_t c = 0; c < protos.size(); ++c) {
      const auto& want = means.at(protos.labels()[c]);
      for (std::size_t j = 0; j < dim; ++j) {
        report.expect(std::abs(protos.centroid(c)[j] - want[j]) <= 1e-12);
      }
    }
  }

  // distance vs independent formulas, 1e-12, both kinds.
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng::uniform_index(rand, 8);
    const Tensor a = random_row(rand, dim, 0.1, 2.0);
    const Tensor b = random_row(rand, dim, 0.1, 2.0);
    report.expect(
        std::abs(protonet::distance(a, b, DistanceKind::squared_euclidean) -
                 oracles::squared_euclidean(a.data(), b.data())) <= 1e-12);
    report.expect(
        std::abs(protonet::distance(a, b, DistanceKind::cosine_distance) -
                 oracles::cosine_distance(a.data(), b.data())) <= 1e-12);
  }

  // class_distribution vs scalar softmax over negated distances, 1e-10.
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng::uniform_index(rand, 6);
    const std::size_t n = 2 + rng::uniform_index(rand, 6);
    std::vector<std::pair<std::string, Tensor>> support;
    for (std::size_t c = 0; c < n; ++c) {
      support.emplace_back("c" + std::to_string(c), random_row(rand, dim));
    }
    const auto protos = protonet::compute_prototypes(support);
    const Tensor q = random_row(rand, dim);
    const auto dist =
        protonet::class_distribution(q, protos, DistanceKind::squared_euclidean);
    std::vector<double> logits;
    for (std::size_t c = 0; c < protos.size(); ++c) {
      logits.push_back(-oracles::squared_euclidean(
          q.data(), protos.centroid(c).data()));
    }
    const auto want = oracles::softmax(logits);
    for (std::size_t c = 0; c < n; ++c) {
      report.expect(std::abs(dist[c] - want[c]) <= 1e-10);
    }
  }

  // prototypical_loss vs scalar recomputation, 1e-10.
  for (int trial = 0; trial < 1000; ++trial) {
    Tape tape;
    const std::size_t dim = 2 + rng::uniform_index(rand, 5);
    std::vector<std::pair<std::string, Value>> support;
    std::vector<std::pair<std::string, std::vector<double>>> support_plain;
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 2; ++k) {
        const Tensor v = random_row(rand, dim);
        support.emplace_back("c" + std::to_string(c), tape.leaf(v));
        support_plain.emplace_back("c" + std::to_string(c), v.data());
      }
    }
    std::vector<std::pair<Value, std::string>> queries;
    std::vector<std::pair<std::vector<double>, std::string>> queries_plain;
    for (int q = 0; q < 3; ++q) {
      const Tensor v = random_row(rand, dim);
      const std::string gold = "c" + std::to_string(rng::uniform_index(rand, 3));
      queries.emplace_back(tape.leaf(v), gold);
      queries_plain.emplace_back(v.data(), gold);
    }
    const Value loss = protonet::prototypical_loss(
        tape, support, queries, DistanceKind::squared_euclidean);
    report.expect(std::abs(loss.tensor()[0] -
                           oracles::prototypical_loss(support_plain,
                                                      queries_plain, false)) <=
                  1e-10);
  }

  // predict vs argmin-distance brute force, exact.
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng::uniform_index(rand, 5);
    const std::size_t n = 2 + rng::uniform_index(rand, 6);
    std::vector<std::pair<std::string, Tensor>> support;
    std::map<std::string, std::vector<double>> plain;
    for (std::size_t c = 0; c < n; ++c) {
      const std::string label = "c" + std::to_string(c);
      const Tensor v = random_row(rand, dim);
      support.emplace_back(label, v);
      plain[label] = v.data();
    }
    const auto protos = protonet::compute_prototypes(support);
    const Tensor q = random_row(rand, dim);
    report.expect(
        protonet::predict(q, protos, DistanceKind::squared_euclidean) ==
        oracles::nearest_label(q.data(), plain, false));
  }

  report.expect(report.elapsed() < 30.0);
  CHECK(report.passing());
}

TEST_CASE("criterion 2: gradient correctness of the full composite") {
  CriterionReport report(2, "gradient correctness");
  // Full pipeline: embed -> attention -> ffn -> projection -> prototypes ->
  // distance softmax -> mean negative log-probability, through real sampled
  // episodes of both task shapes. Central differences at eps=1e-5 on an
  // O(1) loss resolve gradients down to ~1e-11 absolute, so a per-coordinate
  // relative comparison is only meaningful when no true gradient coordinate
  // sits in the dead zone between 1e-12 and ~1e-5. The probe below (narrow
  // embedding width, generic parameter point of unit scale) keeps every
  // nonzero coordinate above that zone; the conditioning is asserted
  // alongside the check itself.
  for (TaskKind task : {TaskKind::intent, TaskKind::slot}) {
    const corpus::Corpus corpus =
        synthetic(1, 3, 3, 6, 0.0, 424242, {4, 6});
    const auto plan = episodes::make_plan(
        Configuration::target_only, "l0", corpus_languages(corpus),
        episode_config(task, task == TaskKind::intent ? 3 : 2, 2, 2), 1);
    encoder::EncoderConfig config =
        encoder_config_for(corpus, 3, 4, true, 0);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Model model;
      model.config = config;
      model.vocab = corpus::build_vocab(corpus, 1);
      model.params = encoder::init_params(config);

      rng::Engine rand(7000 + seed);
      std::vector<Tensor> tensors;
      for (const auto& [name, t] :
           encoder::parameter_list(model.params, config)) {
        Tensor r = Tensor::zeros(t->shape());
        for (double& v : r.data()) v = rng::uniform_real(rand, -1.0, 1.0);
        tensors.push_back(r);
      }
      rng::Engine episode_rng(8000 + seed);
      const episodes::Episode episode = episodes::sample_episode(
          corpus, plan.template_config, episode_rng);

      const autodiff::LossBuilder build =
          [&](Tape& tape, const std::vector<Tensor>& params) {
            Model scratch = model;
            std::size_t i = 0;
            for (auto& [name, t] :
                 encoder::parameter_list(scratch.params, config)) {
              *t = params[i++];
            }
            const auto nodes = encoder::bind(tape, scratch.params, config);
            const EpisodeForward fwd =
                episode_forward(tape, scratch, nodes, corpus, episode);
            autodiff::BuiltLoss built;
            built.params = encoder::leaf_list(nodes, config);
            built.loss = protonet::prototypical_loss(
                tape, fwd.support, fwd.queries,
                plan.template_config.distance);
            return built;
          };

      // Conditioning: the smallest nonzero analytic gradient stays above
      // the finite-difference dead zone.
      {
        Tape tape;
        const autodiff::BuiltLoss built = build(tape, tensors);
        const autodiff::GradientMap grads = tape.backward(built.loss);
        double min_nonzero = 1e9;
        for (const Value& leaf : built.params) {
          const Tensor g = grads.dense(leaf);
          for (std::size_t i = 0; i < g.numel(); ++i) {
            if (g[i] != 0.0) min_nonzero = std::min(min_nonzero, std::abs(g[i]));
          }
        }
        report.expect(min_nonzero > 1e-6);
      }

      const double max_rel =
          autodiff::finite_difference_check(build, tensors, 1e-5);
      report.expect(max_rel < 1e-6);
    }
  }
  report.expect(report.elapsed() < 120.0);
  CHECK(report.passing());
}

TEST_CASE("criterion 3: symmetric-loss exactness and shift invariance") {
  CriterionReport report(3, "symmetric-loss exactness");
  // Five identical prototypes: every query is equidistant from all classes.
  Tape tape;
  std::vector<std::pair<std::string, Value>> support;
  for (int c = 0; c < 5; ++c) {
    support.emplace_back("c" + std::to_string(c),
                         tape.leaf(Tensor::row({0.4, -1.2, 0.9})));
  }
  std::vector<std::pair<Value, std::string>> queries;
  rng::Engine rand(33);
  for (int q = 0; q < 4; ++q) {
    queries.emplace_back(tape.leaf(random_row(rand, 3)),
                         "c" + std::to_string(q % 5));
  }
  const Value loss = protonet::prototypical_loss(
      tape, support, queries, DistanceKind::squared_euclidean);
  report.expect(std::abs(loss.tensor()[0] - std::log(5.0)) <= 1e-9);

  // Shift invariance of the distance softmax within 1e-12.
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng::uniform_index(rand, 6);
    std::vector<double> shifted_logits, logits;
    const double shift = rng::uniform_real(rand, 0.0, 500.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = rng::uniform_real(rand, 0.0, 50.0);
      logits.push_back(-d);
      shifted_logits.push_back(-(d + shift));
    }
    const auto a = oracles::softmax(logits);
    const auto b = oracles::softmax(shifted_logits);
    for (std::size_t i = 0; i < n; ++i) {
      report.expect(std::abs(a[i] - b[i]) <= 1e-12);
    }
  }
  CHECK(report.passing());
}

TEST_CASE("criterion 4: learning at desk scale") {
  CriterionReport report(4, "learning at desk scale");
  // Calibration (5 seeds, this exact setup) measured final-50 accuracies
  // 0.982..1.000, mean 0.995; the 0.95 floor has clear headroom.
  const corpus::Corpus corpus = synthetic(1, 5, 5, 40, 0.3, 77);
  const auto plan = episodes::make_plan(
      Configuration::target_only, "l0", {"l0"},
      episode_config(TaskKind::intent, 5, 10, 5), 200);
  const encoder::EncoderConfig config =
      encoder_config_for(corpus, 32, 16, false, 0);

  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    trainer::Hyperparams hyper;
    hyper.seed = seed;
    encoder::EncoderConfig run_config = config;
    run_config.seed = seed;
    const auto result = trainer::train(corpus, plan, run_config, hyper);
    double tail = 0.0;
    for (std::size_t i = 150; i < 200; ++i) {
      tail += result.history.episode_accuracy[i];
    }
    total += tail / 50.0;
    // The loss itself must also drop below the symmetric ln N start.
    double best_ma = 1e9;
    for (std::size_t i = 4; i < 200; ++i) {
      double avg = 0.0;
      for (std::size_t j = i - 4; j <= i; ++j) {
        avg += result.history.episode_loss[j];
      }
      best_ma = std::min(best_ma, avg / 5.0);
    }
    report.expect(best_ma < std::log(5.0));
  }
  const double mean_acc = total / 5.0;
  std::printf("  final-50 query accuracy over 5 seeds: %.4f (floor 0.95)\n",
              mean_acc);
  report.expect(mean_acc >= 0.95);
  report.expect(report.elapsed() < 120.0);
  CHECK(report.passing());
}

TEST_CASE("criterion 5: cross-lingual transfer ordering") {
  CriterionReport report(5, "cross-lingual transfer ordering");
  // Scarce target: l2 keeps only 10 utterances per intent (one 10-shot
  // support set). Evaluation runs on a fresh corpus from the same generator
  // (different seed) as a held-out test split. Calibration at this setup:
  // multilingual 0.59, zero-shot 0.54, per-seed margins -0.00..+0.13,
  // panel mean margin +0.05.
  const auto scarce = [](std::uint64_t seed) {
    const corpus::Corpus full = synthetic(3, 8, 5, 40, 0.3, seed, {6, 10});
    std::vector<corpus::Utterance> kept;
    std::map<std::string, std::size_t> count;
    for (const auto& utt : full.utterances) {
      if (utt.language == "l2") {
        if (count[utt.intent] >= 10) continue;
        ++count[utt.intent];
      }
      kept.push_back(utt);
    }
    return corpus::make_corpus(kept);
  };

  double multi_total = 0.0, zero_total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const corpus::Corpus train_corpus = scarce(2000 + seed);
    const corpus::Corpus eval_corpus =
        synthetic(3, 8, 5, 40, 0.3, 5000 + seed, {6, 10});
    const encoder::EncoderConfig config =
        encoder_config_for(train_corpus, 32, 16, false, seed);
    double acc[2];
    int idx = 0;
    for (Configuration conf : {Configuration::multilingual,
                               Configuration::multilingual_zero_shot}) {
      const auto plan = episodes::make_plan(
          conf, "l2", {"l0", "l1", "l2"},
          episode_config(TaskKind::intent, 5, 10, 5), 150);
      trainer::Hyperparams hyper;
      hyper.seed = seed;
      const auto result = trainer::train(train_corpus, plan, config, hyper);
      acc[idx++] =
          eval::evaluate(result.model, eval_corpus, plan, 300, 9000 + seed)
              .mean;
    }
    std::printf("  seed %llu: multilingual %.4f, zero-shot %.4f\n",
                static_cast<unsigned long long>(seed), acc[0], acc[1]);
    multi_total += acc[0];
    zero_total += acc[1];
  }
  const double multi = multi_total / 5.0;
  const double zero = zero_total / 5.0;
  const double chance = 1.0 / 5.0;
  std::printf("  means: multilingual %.4f >= zero-shot %.4f >= chance %.2f, "
              "margin %+.4f\n",
              multi, zero, chance, multi - zero);
  report.expect(multi >= zero);
  report.expect(zero >= chance);
  report.expect(multi - zero >= 0.0);
  report.expect(report.elapsed() < 600.0);
  CHECK(report.passing());
}

TEST_CASE("criterion 6: slot metric fidelity") {
  CriterionReport report(6, "slot metric fidelity");
  rng::Engine rand(60001);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t len = 1 + rng::uniform_index(rand, 12);
    const auto pred = random_tags(rand, len, 3);
    const auto gold = random_tags(rand, len, 3);

    const auto spans = eval::extract_spans(pred);
    const auto want = oracles::segment(pred);
    report.expect(spans.size() == want.size());
    for (std::size_t i = 0; i < std::min(spans.size(), want.size()); ++i) {
      report.expect(spans[i].start == want[i].start &&
                    spans[i].end == want[i].end &&
                    spans[i].type == want[i].type);
    }

    const eval::Prf got = eval::slot_prf({pred}, {gold});
    const oracles::PrfRef ref = oracles::span_prf({pred}, {gold});
    report.expect(got.precision == ref.p);
    report.expect(got.recall == ref.r);
    report.expect(got.f1 == ref.f1);
  }
  report.expect(report.elapsed() < 30.0);
  CHECK(report.passing());
}

TEST_CASE("criterion 7: protocol fidelity") {
  CriterionReport report(7, "protocol fidelity");
  const corpus::Corpus corpus = synthetic(3, 6, 6, 15, 0.3, 70007);
  const auto langs = corpus_languages(corpus);

  // 10 000 episodes across tasks and configurations, all invariants.
  struct Setup {
    Configuration conf;
    TaskKind task;
    std::size_t count;
  };
  const std::vector<Setup> setups = {
      {Configuration::target_only, TaskKind::intent, 3000},
      {Configuration::multilingual, TaskKind::intent, 2000},
      {Configuration::multilingual_zero_shot, TaskKind::intent, 3000},
      {Configuration::multilingual_zero_shot, TaskKind::slot, 2000},
  };
  for (const Setup& setup : setups) {
    const auto plan = episodes::make_plan(
        setup.conf, "l1", langs,
        episode_config(setup.task, 4, 3, 2), setup.count);
    rng::Engine rand(1234);
    for (std::size_t i = 0; i < setup.count; ++i) {
      const episodes::Episode ep =
          episodes::sample_episode(corpus, plan.template_config, rand);
      const std::size_t want_classes =
          setup.task == TaskKind::intent ? 4 : 5;
      report.expect(ep.classes.size() == want_classes);
      std::set<std::size_t> support_utts;
      for (const auto& cls : ep.support) {
        report.expect(cls.size() == 3);
        for (const auto& ref : cls) {
          support_utts.insert(ref.utterance);
          const auto& lang = corpus.utterances[ref.utterance].language;
          report.expect(
              plan.template_config.support_languages.count(lang) == 1);
          if (setup.conf == Configuration::multilingual_zero_shot) {
            report.expect(lang != "l1");
          }
        }
      }
      for (const auto& ref : ep.queries) {
        report.expect(support_utts.count(ref.utterance) == 0);
        report.expect(corpus.utterances[ref.utterance].language == "l1");
      }
    }
  }

  // Bit-reproducible sampling.
  {
    const auto plan = episodes::make_plan(
        Configuration::multilingual, "l0", langs,
        episode_config(TaskKind::intent, 4, 3, 2), 200);
    const auto draw = [&]() {
      rng::Engine rand(5150);
      std::vector<episodes::Episode> out;
      for (int i = 0; i < 200; ++i) {
        out.push_back(
            episodes::sample_episode(corpus, plan.template_config, rand));
      }
      return out;
    };
    const auto a = draw();
    const auto b = draw();
    for (std::size_t i = 0; i < a.size(); ++i) {
      report.expect(a[i].classes == b[i].classes &&
                    a[i].support == b[i].support &&
                    a[i].queries == b[i].queries);
    }
  }

  // Bit-reproducible training.
  {
    const auto plan = episodes::make_plan(
        Configuration::target_only, "l0", langs,
        episode_config(TaskKind::intent, 3, 2, 2), 12);
    const auto config = encoder_config_for(corpus, 8, 4, false, 3);
    trainer::Hyperparams hyper;
    hyper.seed = 44;
    const auto a = trainer::train(corpus, plan, config, hyper);
    const auto b = trainer::train(corpus, plan, config, hyper);
    report.expect(a.model.params == b.model.params);
    report.expect(a.history.episode_loss == b.history.episode_loss);
  }
  CHECK(report.passing());
}

TEST_CASE("criterion 8: corpus round-trip and real-data statistics") {
  CriterionReport report(8, "corpus round-trip");
  namespace fs = std::filesystem;
  const fs::path tmp = fs::temp_directory_path() / "protonlu_acceptance";
  fs::create_directories(tmp);
  const std::string path = (tmp / "roundtrip.tsv").string();

  rng::Engine rand(80008);
  for (int trial = 0; trial < 100; ++trial) {
    corpus::SyntheticSpec spec;
    spec.n_languages = 1 + rng::uniform_index(rand, 3);
    spec.n_intents = 1 + rng::uniform_index(rand, 5);
    spec.n_slot_types = 1 + rng::uniform_index(rand, 4);
    spec.utterances_per_intent_per_language = 1 + rng::uniform_index(rand, 6);
    spec.shared_anchor_fraction = rng::uniform_real(rand);
    spec.seed = rand();
    const corpus::Corpus original = corpus::generate_synthetic(spec);
    corpus::save_corpus(original, path);
    report.expect(corpus::load_corpus(path) == original);
  }

  // Real MultiATIS++ statistics, when the data is available locally.
  const char* dir = std::getenv("PROTO_NLU_MULTIATIS_DIR");
  if (dir == nullptr) {
    std::printf("  PROTO_NLU_MULTIATIS_DIR not set; real-data check "
                "skipped\n");
  } else {
    struct Expected {
      const char* file;
      std::size_t utterances, intents, slot_types;
    };
    const std::vector<Expected> table = {
        {"train_en.tsv", 4488, 18, 84},
        {"train_hi.tsv", 1440, 17, 75},
        {"train_tr.tsv", 578, 17, 71},
    };
    for (const Expected& want : table) {
      const fs::path file = fs::path(dir) / want.file;
      if (!fs::exists(file)) {
        std::printf("  %s missing; skipped\n", want.file);
        continue;
      }
      const corpus::Corpus c = corpus::load_corpus(file.string());
      const auto stats = corpus::corpus_stats(c);
      std::size_t tokens = 0;
      for (const auto& [lang, ls] : stats.per_language) tokens += ls.tokens;
      std::printf("  %s: %zu utterances, %zu intents, %zu slot types, "
                  "%zu tokens (token count advisory)\n",
                  want.file, c.utterances.size(), stats.intent_count,
                  stats.slot_type_count, tokens);
      report.expect(c.utterances.size() == want.utterances);
      report.expect(stats.intent_count == want.intents);
      report.expect(stats.slot_type_count == want.slot_types);
    }
  }
  CHECK(report.passing());
}

TEST_CASE("criterion 9: optimizer fidelity") {
  CriterionReport report(9, "optimizer fidelity");
  rng::Engine rand(90009);

  // 100 random steps against the independent reference.
  const std::size_t n = 23;
  Tensor p = Tensor::zeros({n});
  std::vector<double> p_ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = rng::uniform_real(rand, -2.0, 2.0);
    p_ref[i] = p[i];
  }
  std::vector<Tensor*> params = {&p};
  trainer::OptimizerState state = trainer::init_optimizer_state(params);
  oracles::AdamWRef ref(n);
  trainer::Hyperparams hyper;
  hyper.learning_rate = 2e-3;
  hyper.weight_decay = 0.015;
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
      report.expect(std::abs(p[i] - p_ref[i]) < 1e-12);
    }
  }

  // Zero-gradient step: pure decay by exactly 1 - lr * wd.
  Tensor q = Tensor::row({1.0, -0.5, 2.0});
  Tensor zero = Tensor::zeros({1, 3});
  std::vector<Tensor*> q_params = {&q};
  trainer::OptimizerState q_state = trainer::init_optimizer_state(q_params);
  trainer::Hyperparams decay;
  decay.learning_rate = 0.1;
  decay.weight_decay = 0.01;
  trainer::adamw_step(q_params, {&zero}, q_state, decay);
  report.expect(q[0] == 1.0 * (1.0 - 0.001));
  report.expect(q[1] == -0.5 * (1.0 - 0.001));
  report.expect(q[2] == 2.0 * (1.0 - 0.001));
  CHECK(report.passing());
}
