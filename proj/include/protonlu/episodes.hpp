#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "protonlu/corpus.hpp"
#include "protonlu/protonet.hpp"
#include "protonlu/rng.hpp"

namespace protonlu::episodes {

enum class TaskKind { intent, slot };
enum class Configuration { target_only, multilingual, multilingual_zero_shot };

TaskKind task_from_string(const std::string& name);
std::string to_string(TaskKind task);
Configuration configuration_from_string(const std::string& name);
std::string to_string(Configuration configuration);

struct EpisodeConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 10;
  std::size_t query_per_class = 5;
  TaskKind task = TaskKind::intent;
  protonet::DistanceKind distance = protonet::DistanceKind::squared_euclidean;
  std::set<std::string> support_languages;
  std::set<std::string> query_languages;
};

void validate_config(const EpisodeConfig& config);

// Reference into a corpus: an utterance for intent examples, an (utterance,
// token) pair for slot examples.
struct ExampleRef {
  std::size_t utterance = 0;
  std::optional<std::size_t> token;

  bool operator==(const ExampleRef&) const = default;
};

// One N-way k-shot task. For slot episodes `classes` holds the N slot types
// followed by "O", and support entries are token references; gold tags come
// from the corpus. For intent episodes `query_gold` is aligned with
// `queries`.
struct Episode {
  TaskKind task = TaskKind::intent;
  std::vector<std::string> classes;
  std::vector<std::vector<ExampleRef>> support;  // aligned with classes
  std::vector<ExampleRef> queries;
  std::vector<std::string> query_gold;
  std::vector<std::string> warnings;
};

struct SamplingPlan {
  Configuration configuration = Configuration::target_only;
  std::string target_language;
  std::vector<std::string> languages;
  EpisodeConfig template_config;
  std::size_t episode_count = 1000;
};

// target_only: support = query = {target}. multilingual: support = all
// languages, query = {target}. multilingual_zero_shot: support = all minus
// target, query = {target}.
SamplingPlan make_plan(Configuration configuration,
                       const std::string& target_language,
                       const std::vector<std::string>& languages,
                       EpisodeConfig template_config,
                       std::size_t episode_count);

Episode sample_intent_episode(const corpus::Corpus& corpus,
                              const EpisodeConfig& config, rng::Engine& rand);

Episode sample_slot_episode(const corpus::Corpus& corpus,
                            const EpisodeConfig& config, rng::Engine& rand);

// Dispatches on config.task.
Episode sample_episode(const corpus::Corpus& corpus,
                       const EpisodeConfig& config, rng::Engine& rand);

// Support entries resolved to tag-level labels for prototype construction:
// ("B-t" | "I-t" | "O", token ref). A slot type whose support lacks B- or I-
// tokens contributes no prototype for that tag; the omission is recorded in
// `warnings`.
std::vector<std::pair<std::string, ExampleRef>> slot_tag_support(
    const corpus::Corpus& corpus, const Episode& episode,
    std::vector<std::string>* warnings = nullptr);

// Audit record: classes, support indices, query indices.
std::string episodes_to_json(const std::vector<Episode>& episodes,
                             TaskKind task, std::uint64_t seed);

}  // namespace protonlu::episodes
