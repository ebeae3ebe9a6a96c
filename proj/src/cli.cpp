#include "protonlu/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "protonlu/error.hpp"
#include "protonlu/eval.hpp"
#include "protonlu/trainer.hpp"

namespace protonlu::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out = "out";
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--seed", common.seed, "Random seed; fixes all outputs")
      ->capture_default_str();
  cmd->add_option("--out", common.out, "Output directory")
      ->capture_default_str();
  cmd->add_flag("--quiet", common.quiet, "Suppress progress output");
}

struct ExperimentArgs {
  std::vector<std::string> corpus_paths;
  std::string task = "intent";
  std::string configuration = "target_only";
  std::string target;
  std::size_t n_way = 5;
  std::size_t k_shot = 10;
  std::size_t query_per_class = 5;
  std::string distance = "squared_euclidean";
  std::size_t episodes = 1000;
};

void add_experiment(CLI::App* cmd, ExperimentArgs& args, bool need_corpus) {
  auto* corpus_opt =
      cmd->add_option("--corpus", args.corpus_paths,
                      "Corpus file (repeat once per language file)");
  if (need_corpus) corpus_opt->required();
  cmd->add_option("--task", args.task, "Task: intent | slot")
      ->capture_default_str();
  cmd->add_option("--config", args.configuration,
                  "Configuration: target_only | multilingual | "
                  "multilingual_zero_shot")
      ->capture_default_str();
  cmd->add_option("--target", args.target, "Target language code");
  cmd->add_option("--n-way", args.n_way, "Classes per episode")
      ->capture_default_str();
  cmd->add_option("--k-shot", args.k_shot, "Support examples per class")
      ->capture_default_str();
  cmd->add_option("--query", args.query_per_class,
                  "Query examples per class (intent) or query utterances "
                  "(slot)")
      ->capture_default_str();
  cmd->add_option("--distance", args.distance,
                  "Distance: squared_euclidean | cosine_distance")
      ->capture_default_str();
  cmd->add_option("--episodes", args.episodes, "Episode count")
      ->capture_default_str();
}

corpus::Corpus load_corpora(const std::vector<std::string>& paths) {
  std::vector<corpus::Corpus> parts;
  for (const std::string& path : paths) {
    parts.push_back(corpus::load_corpus(path));
  }
  return corpus::merge_corpora(parts);
}

std::vector<std::string> corpus_languages(const corpus::Corpus& corpus) {
  return {corpus.languages.begin(), corpus.languages.end()};
}

episodes::SamplingPlan build_plan(const ExperimentArgs& args,
                                  const corpus::Corpus& corpus) {
  episodes::EpisodeConfig config;
  config.n_way = args.n_way;
  config.k_shot = args.k_shot;
  config.query_per_class = args.query_per_class;
  config.task = episodes::task_from_string(args.task);
  config.distance = protonet::distance_kind_from_string(args.distance);
  std::string target = args.target;
  if (target.empty()) {
    if (corpus.languages.empty()) throw Error("corpus has no languages");
    target = *corpus.languages.begin();
  }
  return episodes::make_plan(
      episodes::configuration_from_string(args.configuration), target,
      corpus_languages(corpus), config, args.episodes);
}

std::size_t worker_threads(std::size_t n_runs) {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PROTO_NLU_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) threads = std::min<std::size_t>(threads, cap);
  }
  return std::min(threads, n_runs);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

bool is_subcommand(const std::string& token) {
  return token == "generate" || token == "stats" ||
         token == "sample-episodes" || token == "train" || token == "evaluate";
}

// Replaces "--config-file <x.json>" with the file's key/value pairs, placed
// right after the subcommand so explicit flags still win (take-last).
std::vector<std::string> expand_config_file(std::vector<std::string> args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    std::size_t erase_count = 0;
    if (args[i] == "--config-file" && i + 1 < args.size()) {
      path = args[i + 1];
      erase_count = 2;
    } else if (args[i].rfind("--config-file=", 0) == 0) {
      path = args[i].substr(std::string("--config-file=").size());
      erase_count = 1;
    }
    if (erase_count == 0) continue;
    std::ifstream in(path);
    if (!in) throw Error("--config-file: cannot open " + path);
    nlohmann::json config;
    try {
      in >> config;
    } catch (const nlohmann::json::exception& e) {
      throw Error("--config-file: " + path + ": " + e.what());
    }
    if (!config.is_object()) {
      throw Error("--config-file: " + path + ": expected a JSON object");
    }
    std::vector<std::string> tokens;
    for (const auto& [key, value] : config.items()) {
      tokens.push_back("--" + key);
      if (value.is_string()) {
        tokens.push_back(value.get<std::string>());
      } else {
        tokens.push_back(value.dump());
      }
    }
    args.erase(args.begin() + i, args.begin() + i + erase_count);
    std::size_t insert_at = 1;
    for (std::size_t s = 0; s < args.size(); ++s) {
      if (is_subcommand(args[s])) {
        insert_at = s + 1;
        break;
      }
    }
    args.insert(args.begin() + insert_at, tokens.begin(), tokens.end());
    break;
  }
  return args;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const CommonArgs& common, const corpus::SyntheticSpec& spec) {
  corpus::Corpus full = corpus::generate_synthetic(spec);
  fs::create_directories(common.out);
  ordered_json manifest;
  manifest["seed"] = spec.seed;
  manifest["spec"] = {
      {"languages", spec.n_languages},
      {"intents", spec.n_intents},
      {"slot_types", spec.n_slot_types},
      {"utterances_per_intent_per_language",
       spec.utterances_per_intent_per_language},
      {"shared_anchor_fraction", spec.shared_anchor_fraction},
      {"min_len", spec.utterance_length.min},
      {"max_len", spec.utterance_length.max}};
  manifest["languages"] = ordered_json::array();
  manifest["files"] = ordered_json::object();
  for (const std::string& lang : full.languages) {
    std::vector<corpus::Utterance> part;
    for (const corpus::Utterance& utt : full.utterances) {
      if (utt.language == lang) part.push_back(utt);
    }
    const std::string filename = lang + ".tsv";
    corpus::save_corpus(corpus::make_corpus(std::move(part)),
                        (fs::path(common.out) / filename).string());
    manifest["languages"].push_back(lang);
    manifest["files"][lang] = filename;
  }
  write_text(fs::path(common.out) / "manifest.json", manifest.dump(2) + "\n");
  if (!common.quiet) {
    std::cout << "wrote " << full.utterances.size() << " utterances across "
              << full.languages.size() << " language files under "
              << common.out << "\n";
  }
  return 0;
}

// --- stats ------------------------------------------------------------------

int cmd_stats(const CommonArgs& common,
              const std::vector<std::string>& corpus_paths) {
  const corpus::Corpus merged = load_corpora(corpus_paths);
  const corpus::StatsReport stats = corpus::corpus_stats(merged);
  ordered_json j;
  j["per_language"] = ordered_json::object();
  for (const auto& [lang, ls] : stats.per_language) {
    j["per_language"][lang] = {{"utterances", ls.utterances},
                               {"tokens", ls.tokens}};
  }
  j["intents"] = stats.intent_count;
  j["slot_types"] = stats.slot_type_count;
  const std::string text = j.dump(2) + "\n";
  write_text(fs::path(common.out) / "stats.json", text);
  std::cout << text;
  return 0;
}

// --- sample-episodes ---------------------------------------------------------

int cmd_sample_episodes(const CommonArgs& common, const ExperimentArgs& args,
                        std::size_t count) {
  const corpus::Corpus corpus = load_corpora(args.corpus_paths);
  episodes::SamplingPlan plan = build_plan(args, corpus);
  rng::Engine rand(common.seed);
  std::vector<episodes::Episode> sampled;
  for (std::size_t i = 0; i < count; ++i) {
    sampled.push_back(
        episodes::sample_episode(corpus, plan.template_config, rand));
  }
  const std::string text = episodes::episodes_to_json(
      sampled, plan.template_config.task, common.seed);
  write_text(fs::path(common.out) / "episodes.json", text);
  if (!common.quiet) std::cout << text;
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  ExperimentArgs experiment;
  std::size_t runs = 1;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double grad_clip = 0.0;
  std::size_t embed_dim = 32;
  std::size_t model_dim = 16;
  std::size_t max_len = 0;  // 0: longest corpus utterance
  bool attention = false;
  std::string frozen_embeddings;  // embedding file; frozen when set
  bool baseline = false;
  std::size_t baseline_epochs = 20;
};

ordered_json history_to_json(const episodes::SamplingPlan& plan,
                             const trainer::TrainHistory& history,
                             std::uint64_t seed) {
  ordered_json j;
  j["task"] = episodes::to_string(plan.template_config.task);
  j["configuration"] = episodes::to_string(plan.configuration);
  j["target_language"] = plan.target_language;
  j["seed"] = seed;
  j["episodes"] = history.episode_loss.size();
  j["loss"] = history.episode_loss;
  j["accuracy"] = history.episode_accuracy;
  return j;
}

int cmd_train(const CommonArgs& common, const TrainArgs& args) {
  const corpus::Corpus corpus = load_corpora(args.experiment.corpus_paths);
  episodes::SamplingPlan plan = build_plan(args.experiment, corpus);

  encoder::EncoderConfig config;
  config.vocab_size = corpus::build_vocab(corpus, 1).size();
  config.embed_dim = args.embed_dim;
  config.model_dim = args.model_dim;
  config.attention = args.attention;
  config.seed = common.seed;
  std::size_t longest = 1;
  for (const corpus::Utterance& utt : corpus.utterances) {
    longest = std::max(longest, utt.tokens.size());
  }
  config.max_len = args.max_len == 0 ? longest : args.max_len;

  std::optional<Tensor> token_table;
  if (!args.frozen_embeddings.empty()) {
    token_table = encoder::load_embedding_file(args.frozen_embeddings);
    config.frozen_embeddings = true;
    if (token_table->rows() != config.vocab_size ||
        token_table->cols() != config.embed_dim) {
      throw Error("frozen embeddings are " + token_table->shape_str() +
                  " but the model wants " + std::to_string(config.vocab_size) +
                  "x" + std::to_string(config.embed_dim));
    }
  }

  trainer::Hyperparams hyper;
  hyper.learning_rate = args.learning_rate;
  hyper.weight_decay = args.weight_decay;
  hyper.grad_clip_norm = args.grad_clip;
  hyper.episode_count = args.experiment.episodes;
  hyper.seed = common.seed;

  const fs::path base = fs::path(common.out) /
                        episodes::to_string(plan.template_config.task) /
                        (episodes::to_string(plan.configuration) +
                         (args.baseline ? "_baseline" : "")) /
                        plan.target_language;

  if (args.baseline) {
    trainer::BaselineResult result = trainer::train_supervised_baseline(
        corpus, plan.template_config.support_languages, config, hyper,
        args.baseline_epochs);
    trainer::Checkpoint cp;
    cp.model = std::move(result.model);
    cp.baseline = std::move(result.head);
    cp.metadata = {{"task", args.experiment.task},
                   {"configuration", args.experiment.configuration},
                   {"target_language", plan.target_language},
                   {"seed", common.seed},
                   {"epochs", args.baseline_epochs}};
    const fs::path dir = base / "run_0";
    fs::create_directories(dir);
    trainer::save_checkpoint(cp, (dir / "checkpoint.json").string());
    ordered_json hist;
    hist["epochs"] = result.epoch_loss.size();
    hist["loss"] = result.epoch_loss;
    hist["accuracy"] = result.epoch_accuracy;
    write_text(dir / "history.json", hist.dump(2) + "\n");
    if (!common.quiet) {
      std::cout << "baseline checkpoint: " << (dir / "checkpoint.json").string()
                << "\n";
    }
    return 0;
  }

  const std::vector<trainer::TrainResult> results =
      args.runs == 1
          ? std::vector<trainer::TrainResult>{trainer::train(
                corpus, plan, config, hyper, token_table)}
          : trainer::run_batch(corpus, plan, config, hyper, args.runs,
                               worker_threads(args.runs), token_table);

  for (std::size_t run = 0; run < results.size(); ++run) {
    const fs::path dir = base / ("run_" + std::to_string(run));
    fs::create_directories(dir);
    trainer::Checkpoint cp;
    cp.model = results[run].model;
    cp.metadata = {{"task", args.experiment.task},
                   {"configuration", args.experiment.configuration},
                   {"target_language", plan.target_language},
                   {"n_way", plan.template_config.n_way},
                   {"k_shot", plan.template_config.k_shot},
                   {"query_per_class", plan.template_config.query_per_class},
                   {"distance", protonet::to_string(plan.template_config.distance)},
                   {"episodes", plan.episode_count},
                   {"learning_rate", hyper.learning_rate},
                   {"weight_decay", hyper.weight_decay},
                   {"seed", common.seed + run},
                   {"run_index", run}};
    trainer::save_checkpoint(cp, (dir / "checkpoint.json").string());
    write_text(dir / "history.json",
               history_to_json(plan, results[run].history, common.seed + run)
                       .dump(2) +
                   "\n");
    if (!common.quiet) {
      std::cerr << "run " << run << ": "
                << results[run].history.wall_seconds << "s, final loss "
                << (results[run].history.episode_loss.empty()
                        ? 0.0
                        : results[run].history.episode_loss.back())
                << "\n";
    }
  }
  if (!common.quiet) {
    std::cout << "wrote " << results.size() << " run(s) under "
              << base.string() << "\n";
  }
  return 0;
}

// --- evaluate ---------------------------------------------------------------

int cmd_evaluate(const CommonArgs& common, const CLI::App* cmd,
                 const std::string& checkpoint_path, ExperimentArgs args) {
  const trainer::Checkpoint cp = trainer::load_checkpoint(checkpoint_path);
  // Checkpoint metadata supplies defaults for flags the user did not pass.
  const auto& meta = cp.metadata;
  const auto fill = [&](const char* flag, const char* key, auto& slot) {
    using SlotType = std::remove_reference_t<decltype(slot)>;
    if (cmd->count(flag) == 0 && meta.contains(key)) {
      slot = meta[key].get<SlotType>();
    }
  };
  fill("--task", "task", args.task);
  fill("--config", "configuration", args.configuration);
  fill("--target", "target_language", args.target);
  fill("--n-way", "n_way", args.n_way);
  fill("--k-shot", "k_shot", args.k_shot);
  fill("--query", "query_per_class", args.query_per_class);
  fill("--distance", "distance", args.distance);

  const corpus::Corpus corpus = load_corpora(args.corpus_paths);
  const episodes::SamplingPlan plan = build_plan(args, corpus);

  // The checkpoint vocabulary must cover at least part of the evaluation
  // corpus; an entirely-UNK target side means the wrong model/corpus pair.
  std::size_t known = 0, total = 0;
  for (const corpus::Utterance& utt : corpus.utterances) {
    if (utt.language != plan.target_language) continue;
    for (const std::string& tok : utt.tokens) {
      ++total;
      if (cp.model.vocab.id_of(tok) != corpus::Vocabulary::kUnk) ++known;
    }
  }
  if (total > 0 && known == 0) {
    throw Error("checkpoint vocabulary shares no tokens with the corpus "
                "target language \"" + plan.target_language + "\"");
  }

  std::string text;
  if (cp.baseline.has_value()) {
    std::vector<std::string> predictions, golds;
    for (const corpus::Utterance& utt : corpus.utterances) {
      if (utt.language != plan.target_language) continue;
      predictions.push_back(
          trainer::predict_baseline(cp.model, *cp.baseline, utt.tokens));
      golds.push_back(utt.intent);
    }
    if (predictions.empty()) {
      throw Error("no target-language utterances to evaluate");
    }
    const double acc = eval::intent_accuracy(predictions, golds);
    const eval::MetricsReport report = eval::make_report(
        episodes::TaskKind::intent, {acc}, 1, predictions.size());
    text = eval::metrics_to_json(report, plan);
  } else {
    const eval::MetricsReport report = eval::evaluate(
        cp.model, corpus, plan, args.episodes, common.seed);
    text = eval::metrics_to_json(report, plan);
  }
  write_text(fs::path(common.out) / "metrics.json", text);
  std::cout << text;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Few-shot cross-lingual NLU: prototypical networks with "
               "episodic training"};
  app.require_subcommand(1);

  CommonArgs common;
  // Accepted before the subcommand too; the subcommand's own copy wins when
  // both are given.
  add_common(&app, common);

  // generate
  corpus::SyntheticSpec spec;
  auto* generate = app.add_subcommand(
      "generate", "Generate a synthetic multilingual corpus");
  add_common(generate, common);
  generate->add_option("--languages", spec.n_languages, "Language count")
      ->capture_default_str();
  generate->add_option("--intents", spec.n_intents, "Intent count")
      ->capture_default_str();
  generate->add_option("--slot-types", spec.n_slot_types, "Slot type count")
      ->capture_default_str();
  generate
      ->add_option("--per", spec.utterances_per_intent_per_language,
                   "Utterances per intent per language")
      ->capture_default_str();
  generate
      ->add_option("--anchor", spec.shared_anchor_fraction,
                   "Fraction of tokens shared verbatim across languages")
      ->capture_default_str();
  generate->add_option("--min-len", spec.utterance_length.min, "Min tokens")
      ->capture_default_str();
  generate->add_option("--max-len", spec.utterance_length.max, "Max tokens")
      ->capture_default_str();

  // stats
  std::vector<std::string> stats_paths;
  auto* stats = app.add_subcommand("stats", "Corpus statistics as JSON");
  add_common(stats, common);
  stats->add_option("--corpus", stats_paths, "Corpus file")->required();

  // sample-episodes
  ExperimentArgs sample_args;
  std::size_t sample_count = 10;
  auto* sample = app.add_subcommand("sample-episodes",
                                    "Dump sampled episodes as audit JSON");
  add_common(sample, common);
  add_experiment(sample, sample_args, true);
  sample->add_option("--count", sample_count, "Episodes to dump")
      ->capture_default_str();

  // train
  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Episodic prototypical training");
  add_common(train, common);
  add_experiment(train, train_args.experiment, true);
  train->add_option("--runs", train_args.runs, "Independent runs")
      ->capture_default_str();
  train->add_option("--lr", train_args.learning_rate, "AdamW learning rate")
      ->capture_default_str();
  train
      ->add_option("--weight-decay", train_args.weight_decay,
                   "Decoupled weight decay")
      ->capture_default_str();
  train->add_option("--grad-clip", train_args.grad_clip,
                    "Gradient norm clip (0 disables)")
      ->capture_default_str();
  train->add_option("--embed-dim", train_args.embed_dim, "Hidden width E")
      ->capture_default_str();
  train->add_option("--model-dim", train_args.model_dim,
                    "Prototype space dimension M")
      ->capture_default_str();
  train->add_option("--max-len", train_args.max_len,
                    "Max sequence length (0: longest corpus utterance)")
      ->capture_default_str();
  train->add_option("--attention", train_args.attention,
                    "Enable the self-attention block")
      ->capture_default_str();
  train->add_option("--frozen-embeddings", train_args.frozen_embeddings,
                    "Embedding file; loads and freezes the token table");
  train->add_option("--baseline", train_args.baseline,
                    "Train the supervised softmax baseline instead")
      ->capture_default_str();
  train->add_option("--baseline-epochs", train_args.baseline_epochs,
                    "Baseline epoch count")
      ->capture_default_str();

  // evaluate
  ExperimentArgs eval_args;
  eval_args.episodes = 100;
  std::string checkpoint_path;
  auto* evaluate = app.add_subcommand("evaluate",
                                      "Episode-averaged metrics for a "
                                      "checkpoint");
  add_common(evaluate, common);
  add_experiment(evaluate, eval_args, true);
  evaluate->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->required();

  for (CLI::App* sub : {&app, generate, stats, sample, train, evaluate}) {
    for (CLI::Option* opt : sub->get_options()) {
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    // --corpus genuinely repeats.
    if (CLI::Option* opt = sub->get_option_no_throw("--corpus")) {
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    }
  }

  std::vector<std::string> expanded;
  try {
    expanded = expand_config_file(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    // CLI11 wants reversed argv without the program name.
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (generate->parsed()) {
      spec.seed = common.seed;
      return cmd_generate(common, spec);
    }
    if (stats->parsed()) return cmd_stats(common, stats_paths);
    if (sample->parsed()) {
      return cmd_sample_episodes(common, sample_args, sample_count);
    }
    if (train->parsed()) return cmd_train(common, train_args);
    if (evaluate->parsed()) {
      return cmd_evaluate(common, evaluate, checkpoint_path, eval_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace protonlu::cli
