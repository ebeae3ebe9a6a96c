#include "protonlu/episodes.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "protonlu/error.hpp"

namespace protonlu::episodes {

TaskKind task_from_string(const std::string& name) {
  if (name == "intent") return TaskKind::intent;
  if (name == "slot") return TaskKind::slot;
  throw Error("unknown task \"" + name + "\" (expected intent | slot)");
}

std::string to_string(TaskKind task) {
  return task == TaskKind::intent ? "intent" : "slot";
}

Configuration configuration_from_string(const std::string& name) {
  if (name == "target_only") return Configuration::target_only;
  if (name == "multilingual") return Configuration::multilingual;
  if (name == "multilingual_zero_shot") {
    return Configuration::multilingual_zero_shot;
  }
  throw Error("unknown configuration \"" + name +
              "\" (expected target_only | multilingual | "
              "multilingual_zero_shot)");
}

std::string to_string(Configuration configuration) {
  switch (configuration) {
    case Configuration::target_only: return "target_only";
    case Configuration::multilingual: return "multilingual";
    case Configuration::multilingual_zero_shot: return "multilingual_zero_shot";
  }
  throw Error("bad configuration value");
}

void validate_config(const EpisodeConfig& config) {
  if (config.n_way < 2) throw Error("EpisodeConfig: n_way must be >= 2");
  if (config.k_shot < 1) throw Error("EpisodeConfig: k_shot must be >= 1");
  if (config.query_per_class < 1) {
    throw Error("EpisodeConfig: query_per_class must be >= 1");
  }
  if (config.support_languages.empty() || config.query_languages.empty()) {
    throw Error("EpisodeConfig: language sets must be nonempty");
  }
}

SamplingPlan make_plan(Configuration configuration,
                       const std::string& target_language,
                       const std::vector<std::string>& languages,
                       EpisodeConfig template_config,
                       std::size_t episode_count) {
  if (std::find(languages.begin(), languages.end(), target_language) ==
      languages.end()) {
    throw Error("make_plan: target language \"" + target_language +
                "\" not in language list");
  }
  SamplingPlan plan;
  plan.configuration = configuration;
  plan.target_language = target_language;
  plan.languages = languages;
  plan.episode_count = episode_count;
  template_config.query_languages = {target_language};
  switch (configuration) {
    case Configuration::target_only:
      template_config.support_languages = {target_language};
      break;
    case Configuration::multilingual:
      template_config.support_languages.clear();
      template_config.support_languages.insert(languages.begin(),
                                               languages.end());
      break;
    case Configuration::multilingual_zero_shot:
      template_config.support_languages.clear();
      for (const std::string& lang : languages) {
        if (lang != target_language) {
          template_config.support_languages.insert(lang);
        }
      }
      if (template_config.support_languages.empty()) {
        throw Error("make_plan: zero-shot plan needs at least one non-target "
                    "language");
      }
      break;
  }
  plan.template_config = template_config;
  validate_config(plan.template_config);
  return plan;
}

namespace {

// Draws `count` entries from `pool`. Falls back to sampling with replacement
// when the pool is short, recording a warning; MultiATIS-like corpora are
// too unbalanced for a hard failure here.
std::vector<ExampleRef> draw(const std::vector<ExampleRef>& pool,
                             std::size_t count, const std::string& what,
                             rng::Engine& rand,
                             std::vector<std::string>& warnings) {
  std::vector<ExampleRef> out;
  out.reserve(count);
  if (pool.size() >= count) {
    for (std::size_t i : rng::sample_without_replacement(rand, pool.size(), count)) {
      out.push_back(pool[i]);
    }
  } else {
    warnings.push_back(what + ": only " + std::to_string(pool.size()) +
                       " candidates for " + std::to_string(count) +
                       "; sampled with replacement");
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(pool[rng::uniform_index(rand, pool.size())]);
    }
  }
  return out;
}

std::vector<std::string> choose_classes(
    const std::vector<std::string>& eligible, std::size_t n_way,
    const std::string& what, rng::Engine& rand) {
  if (eligible.size() < n_way) {
    throw Error("sample episode: only " + std::to_string(eligible.size()) +
                " eligible " + what + " for " + std::to_string(n_way) + "-way");
  }
  std::vector<std::string> classes;
  for (std::size_t i :
       rng::sample_without_replacement(rand, eligible.size(), n_way)) {
    classes.push_back(eligible[i]);
  }
  std::sort(classes.begin(), classes.end());
  return classes;
}

bool in(const std::set<std::string>& set, const std::string& key) {
  return set.count(key) > 0;
}

}  // namespace

Episode sample_intent_episode(const corpus::Corpus& corpus,
                              const EpisodeConfig& config, rng::Engine& rand) {
  validate_config(config);
  if (config.task != TaskKind::intent) {
    throw Error("sample_intent_episode: config.task is not intent");
  }
  // Candidate pools per intent, in deterministic (sorted) intent order.
  std::map<std::string, std::vector<ExampleRef>> support_pool, query_pool;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const corpus::Utterance& utt = corpus.utterances[i];
    if (in(config.support_languages, utt.language)) {
      support_pool[utt.intent].push_back(ExampleRef{i, std::nullopt});
    }
    if (in(config.query_languages, utt.language)) {
      query_pool[utt.intent].push_back(ExampleRef{i, std::nullopt});
    }
  }
  std::vector<std::string> eligible;
  for (const auto& [intent, pool] : support_pool) {
    if (!pool.empty() && query_pool.count(intent) &&
        !query_pool[intent].empty()) {
      eligible.push_back(intent);
    }
  }

  Episode ep;
  ep.task = TaskKind::intent;
  ep.classes = choose_classes(eligible, config.n_way, "intents", rand);
  std::set<std::size_t> support_utterances;
  for (const std::string& cls : ep.classes) {
    ep.support.push_back(draw(support_pool[cls], config.k_shot,
                              "intent \"" + cls + "\"", rand, ep.warnings));
    for (const ExampleRef& ref : ep.support.back()) {
      support_utterances.insert(ref.utterance);
    }
  }
  for (const std::string& cls : ep.classes) {
    std::vector<ExampleRef> candidates;
    for (const ExampleRef& ref : query_pool[cls]) {
      if (!support_utterances.count(ref.utterance)) candidates.push_back(ref);
    }
    if (candidates.empty()) {
      throw Error("sample episode: intent \"" + cls +
                  "\" has no query candidates disjoint from the support set");
    }
    for (const ExampleRef& ref :
         draw(candidates, config.query_per_class, "intent \"" + cls + "\" queries",
              rand, ep.warnings)) {
      ep.queries.push_back(ref);
      ep.query_gold.push_back(cls);
    }
  }
  return ep;
}

Episode sample_slot_episode(const corpus::Corpus& corpus,
                            const EpisodeConfig& config, rng::Engine& rand) {
  validate_config(config);
  if (config.task != TaskKind::slot) {
    throw Error("sample_slot_episode: config.task is not slot");
  }
  // Tagged-token pools per slot type on the support side; presence on the
  // query side. O tokens are pooled separately for the appended O class.
  std::map<std::string, std::vector<ExampleRef>> support_tokens;
  std::set<std::string> query_types;
  std::vector<ExampleRef> o_pool;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const corpus::Utterance& utt = corpus.utterances[i];
    const bool is_support = in(config.support_languages, utt.language);
    const bool is_query = in(config.query_languages, utt.language);
    for (std::size_t t = 0; t < utt.slot_tags.size(); ++t) {
      const std::string type = corpus::slot_type_of(utt.slot_tags[t]);
      if (type.empty()) {
        if (is_support) o_pool.push_back(ExampleRef{i, t});
        continue;
      }
      if (is_support) support_tokens[type].push_back(ExampleRef{i, t});
      if (is_query) query_types.insert(type);
    }
  }
  std::vector<std::string> eligible;
  for (const auto& [type, pool] : support_tokens) {
    if (!pool.empty() && query_types.count(type)) eligible.push_back(type);
  }

  Episode ep;
  ep.task = TaskKind::slot;
  ep.classes = choose_classes(eligible, config.n_way, "slot types", rand);
  std::set<std::size_t> support_utterances;
  for (const std::string& type : ep.classes) {
    ep.support.push_back(draw(support_tokens[type], config.k_shot,
                              "slot type \"" + type + "\"", rand, ep.warnings));
    for (const ExampleRef& ref : ep.support.back()) {
      support_utterances.insert(ref.utterance);
    }
  }
  if (o_pool.empty()) {
    throw Error("sample episode: no O tokens available in support languages");
  }
  ep.support.push_back(
      draw(o_pool, config.k_shot, "O tokens", rand, ep.warnings));
  for (const ExampleRef& ref : ep.support.back()) {
    support_utterances.insert(ref.utterance);
  }
  ep.classes.push_back("O");

  // Query utterances: target-language utterances whose every slot belongs to
  // the sampled types, disjoint from support at the utterance level.
  const std::set<std::string> sampled_types(ep.classes.begin(),
                                            ep.classes.end() - 1);
  std::vector<ExampleRef> query_candidates;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const corpus::Utterance& utt = corpus.utterances[i];
    if (!in(config.query_languages, utt.language)) continue;
    if (support_utterances.count(i)) continue;
    bool compatible = true;
    for (const std::string& tag : utt.slot_tags) {
      const std::string type = corpus::slot_type_of(tag);
      if (!type.empty() && !sampled_types.count(type)) {
        compatible = false;
        break;
      }
    }
    if (compatible) query_candidates.push_back(ExampleRef{i, std::nullopt});
  }
  if (query_candidates.empty()) {
    throw Error("sample episode: no query utterances compatible with the "
                "sampled slot types");
  }
  ep.queries = draw(query_candidates, config.query_per_class,
                    "slot query utterances", rand, ep.warnings);
  return ep;
}

Episode sample_episode(const corpus::Corpus& corpus,
                       const EpisodeConfig& config, rng::Engine& rand) {
  return config.task == TaskKind::intent
             ? sample_intent_episode(corpus, config, rand)
             : sample_slot_episode(corpus, config, rand);
}

std::vector<std::pair<std::string, ExampleRef>> slot_tag_support(
    const corpus::Corpus& corpus, const Episode& episode,
    std::vector<std::string>* warnings) {
  if (episode.task != TaskKind::slot) {
    throw Error("slot_tag_support: not a slot episode");
  }
  std::vector<std::pair<std::string, ExampleRef>> out;
  for (std::size_t c = 0; c < episode.classes.size(); ++c) {
    const std::string& cls = episode.classes[c];
    bool has_b = false, has_i = false;
    for (const ExampleRef& ref : episode.support[c]) {
      if (!ref.token.has_value()) {
        throw Error("slot_tag_support: support entry without token index");
      }
      const std::string& tag =
          corpus.utterances[ref.utterance].slot_tags[*ref.token];
      out.emplace_back(tag, ref);
      if (tag[0] == 'B') has_b = true;
      if (tag[0] == 'I') has_i = true;
    }
    if (cls != "O" && warnings) {
      if (!has_i) {
        warnings->push_back("slot type \"" + cls +
                            "\": no I- support tokens; I-" + cls +
                            " prototype omitted");
      }
      if (!has_b) {
        warnings->push_back("slot type \"" + cls +
                            "\": no B- support tokens; B-" + cls +
                            " prototype omitted");
      }
    }
  }
  return out;
}

std::string episodes_to_json(const std::vector<Episode>& episodes,
                             TaskKind task, std::uint64_t seed) {
  nlohmann::ordered_json root;
  root["seed"] = seed;
  root["task"] = to_string(task);
  root["count"] = episodes.size();
  root["episodes"] = nlohmann::ordered_json::array();
  for (const Episode& ep : episodes) {
    nlohmann::ordered_json rec;
    rec["classes"] = ep.classes;
    rec["support"] = nlohmann::ordered_json::array();
    for (const auto& class_support : ep.support) {
      nlohmann::ordered_json members = nlohmann::ordered_json::array();
      for (const ExampleRef& ref : class_support) {
        nlohmann::ordered_json m;
        m["utterance"] = ref.utterance;
        if (ref.token.has_value()) m["token"] = *ref.token;
        members.push_back(std::move(m));
      }
      rec["support"].push_back(std::move(members));
    }
    rec["queries"] = nlohmann::ordered_json::array();
    for (const ExampleRef& ref : ep.queries) {
      rec["queries"].push_back(ref.utterance);
    }
    rec["warnings"] = ep.warnings;
    root["episodes"].push_back(std::move(rec));
  }
  return root.dump(2) + "\n";
}

}  // namespace protonlu::episodes
