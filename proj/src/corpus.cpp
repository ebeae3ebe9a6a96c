#include "protonlu/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "protonlu/error.hpp"
#include "protonlu/rng.hpp"

namespace protonlu::corpus {

namespace {

std::string utterance_name(const Utterance& utt, const std::string& fallback) {
  if (!fallback.empty()) return fallback;
  std::string joined;
  for (std::size_t i = 0; i < utt.tokens.size() && i < 4; ++i) {
    if (i) joined += ' ';
    joined += utt.tokens[i];
  }
  return "\"" + joined + "\"";
}

}  // namespace

std::string slot_type_of(const std::string& tag) {
  if (tag.size() >= 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return tag.substr(2);
  }
  return "";
}

void validate_utterance(const Utterance& utt, const std::string& name) {
  const std::string who = utterance_name(utt, name);
  if (utt.tokens.empty()) {
    throw Error("utterance " + who + ": no tokens");
  }
  if (utt.slot_tags.size() != utt.tokens.size()) {
    throw Error("utterance " + who + ": " + std::to_string(utt.tokens.size()) +
                " tokens but " + std::to_string(utt.slot_tags.size()) +
                " slot tags");
  }
  std::string prev_type;  // empty means previous tag was O or start
  for (std::size_t i = 0; i < utt.slot_tags.size(); ++i) {
    const std::string& tag = utt.slot_tags[i];
    if (tag == "O") {
      prev_type.clear();
      continue;
    }
    const std::string type = slot_type_of(tag);
    if (type.empty()) {
      throw Error("utterance " + who + ": tag \"" + tag +
                  "\" does not match O | B-<type> | I-<type>");
    }
    if (tag[0] == 'I' && type != prev_type) {
      throw Error("utterance " + who + ": I-" + type + " at token " +
                  std::to_string(i) + " does not continue a B-" + type +
                  " span (invalid BIO)");
    }
    prev_type = type;
  }
}

Corpus make_corpus(std::vector<Utterance> utterances) {
  Corpus corpus;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    validate_utterance(utterances[i], "#" + std::to_string(i));
    const Utterance& utt = utterances[i];
    corpus.languages.insert(utt.language);
    corpus.intent_inventory.insert(utt.intent);
    for (const std::string& tag : utt.slot_tags) {
      const std::string type = slot_type_of(tag);
      if (!type.empty()) corpus.slot_inventory.insert(type);
    }
  }
  corpus.utterances = std::move(utterances);
  return corpus;
}

// --- CoNLL-style TSV -------------------------------------------------------
//
// Per utterance block:
//   # lang: <code>
//   # intent: <label>
//   token<TAB>tag        (one line per token)
//   <blank line>

namespace {

constexpr const char* kLangPrefix = "# lang: ";
constexpr const char* kIntentPrefix = "# intent: ";

[[noreturn]] void parse_error(const std::string& path, std::size_t line_no,
                              const std::string& what) {
  throw Error(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

Corpus load_corpus(const std::string& path, Format format) {
  if (format != Format::conll_tsv) throw Error("load_corpus: unknown format");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_corpus: cannot open " + path);

  std::vector<Utterance> utterances;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;  // separator between blocks
    if (line.rfind(kLangPrefix, 0) != 0) {
      parse_error(path, line_no, "expected \"" + std::string(kLangPrefix) +
                                     "<code>\" header, got \"" + line + "\"");
    }
    Utterance utt;
    utt.language = line.substr(std::string(kLangPrefix).size());
    if (!std::getline(in, line)) {
      parse_error(path, line_no + 1, "missing intent header");
    }
    ++line_no;
    if (line.rfind(kIntentPrefix, 0) != 0) {
      parse_error(path, line_no, "expected \"" + std::string(kIntentPrefix) +
                                     "<label>\" header, got \"" + line + "\"");
    }
    utt.intent = line.substr(std::string(kIntentPrefix).size());
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) break;  // end of block
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 ||
          line.find('\t', tab + 1) != std::string::npos) {
        parse_error(path, line_no,
                    "expected exactly 2 tab-separated fields, got \"" + line +
                        "\"");
      }
      utt.tokens.push_back(line.substr(0, tab));
      utt.slot_tags.push_back(line.substr(tab + 1));
    }
    validate_utterance(utt, path + " utterance #" +
                                std::to_string(utterances.size()));
    utterances.push_back(std::move(utt));
  }
  return make_corpus(std::move(utterances));
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_corpus: cannot write " + path);
  for (const Utterance& utt : corpus.utterances) {
    out << kLangPrefix << utt.language << '\n';
    out << kIntentPrefix << utt.intent << '\n';
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      out << utt.tokens[i] << '\t' << utt.slot_tags[i] << '\n';
    }
    out << '\n';
  }
  if (!out) throw Error("save_corpus: write failed for " + path);
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens_in_id_order) {
  id_to_token_.reserve(tokens_in_id_order.size() + 2);
  id_to_token_.push_back("<pad>");
  id_to_token_.push_back("<unk>");
  for (std::string& tok : tokens_in_id_order) {
    id_to_token_.push_back(std::move(tok));
  }
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], i).second) {
      throw Error("Vocabulary: duplicate token \"" + id_to_token_[i] + "\"");
    }
  }
}

std::size_t Vocabulary::id_of(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(std::size_t id) const {
  if (id >= id_to_token_.size()) {
    throw Error("Vocabulary: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[id];
}

std::vector<std::size_t> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(id_of(tok));
  return ids;
}

std::vector<std::string> Vocabulary::payload_tokens() const {
  return {id_to_token_.begin() + 2, id_to_token_.end()};
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count) {
  if (min_count < 1) throw Error("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const Utterance& utt : corpus.utterances) {
    for (const std::string& tok : utt.tokens) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, count] : counts) {
    if (count >= min_count) kept.emplace_back(tok, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ordered;
  ordered.reserve(kept.size());
  for (auto& [tok, count] : kept) ordered.push_back(std::move(tok));
  return Vocabulary(std::move(ordered));
}

// --- Synthetic generation ---------------------------------------------------
//
// Each language owns a private surface vocabulary; a shared_anchor_fraction
// of token draws instead come from anchor pools reused verbatim across
// languages. Anchors play the role of shared subwords: they are the only
// signal that transfers between languages. Every intent owns characteristic
// words (anchor and per-language variants) that appear in no other intent,
// which makes classes separable by construction. Slot values are drawn from
// per-type pools split into span-initial and span-continuation words.

namespace {

struct WordPools {
  // [intent] -> words; anchor and per-language variants.
  std::vector<std::vector<std::string>> intent_anchor;
  // [language][intent] -> words.
  std::vector<std::vector<std::vector<std::string>>> intent_local;
  std::vector<std::vector<std::string>> slot_head_anchor, slot_tail_anchor;
  std::vector<std::vector<std::vector<std::string>>> slot_head_local,
      slot_tail_local;
  std::vector<std::string> filler_anchor;
  std::vector<std::vector<std::string>> filler_local;
};

WordPools make_pools(const SyntheticSpec& spec,
                     const std::vector<std::string>& langs) {
  constexpr std::size_t kIntentWords = 3;
  constexpr std::size_t kSlotWords = 2;
  constexpr std::size_t kFillerWords = 6;
  WordPools p;
  p.intent_anchor.resize(spec.n_intents);
  p.slot_head_anchor.resize(spec.n_slot_types);
  p.slot_tail_anchor.resize(spec.n_slot_types);
  for (std::size_t i = 0; i < spec.n_intents; ++i) {
    for (std::size_t w = 0; w < kIntentWords; ++w) {
      p.intent_anchor[i].push_back("w" + std::to_string(i) + "a" +
                                   std::to_string(w));
    }
  }
  for (std::size_t s = 0; s < spec.n_slot_types; ++s) {
    for (std::size_t w = 0; w < kSlotWords; ++w) {
      p.slot_head_anchor[s].push_back("vh" + std::to_string(s) + "a" +
                                      std::to_string(w));
      p.slot_tail_anchor[s].push_back("vt" + std::to_string(s) + "a" +
                                      std::to_string(w));
    }
  }
  for (std::size_t w = 0; w < kFillerWords; ++w) {
    p.filler_anchor.push_back("fa" + std::to_string(w));
  }
  p.intent_local.resize(langs.size());
  p.slot_head_local.resize(langs.size());
  p.slot_tail_local.resize(langs.size());
  p.filler_local.resize(langs.size());
  for (std::size_t l = 0; l < langs.size(); ++l) {
    p.intent_local[l].resize(spec.n_intents);
    p.slot_head_local[l].resize(spec.n_slot_types);
    p.slot_tail_local[l].resize(spec.n_slot_types);
    for (std::size_t i = 0; i < spec.n_intents; ++i) {
      for (std::size_t w = 0; w < kIntentWords; ++w) {
        p.intent_local[l][i].push_back("w" + std::to_string(i) + "_" +
                                       langs[l] + "_" + std::to_string(w));
      }
    }
    for (std::size_t s = 0; s < spec.n_slot_types; ++s) {
      for (std::size_t w = 0; w < kSlotWords; ++w) {
        p.slot_head_local[l][s].push_back("vh" + std::to_string(s) + "_" +
                                          langs[l] + "_" + std::to_string(w));
        p.slot_tail_local[l][s].push_back("vt" + std::to_string(s) + "_" +
                                          langs[l] + "_" + std::to_string(w));
      }
    }
    for (std::size_t w = 0; w < kFillerWords; ++w) {
      p.filler_local[l].push_back("f_" + langs[l] + "_" + std::to_string(w));
    }
  }
  return p;
}

const std::string& draw_word(rng::Engine& rand, double anchor_fraction,
                             const std::vector<std::string>& anchor,
                             const std::vector<std::string>& local) {
  const std::vector<std::string>& pool =
      rng::bernoulli(rand, anchor_fraction) ? anchor : local;
  return pool[rng::uniform_index(rand, pool.size())];
}

void validate_spec(const SyntheticSpec& spec) {
  if (spec.n_languages < 1 || spec.n_intents < 1 || spec.n_slot_types < 1 ||
      spec.utterances_per_intent_per_language < 1) {
    throw Error("generate_synthetic: all counts must be >= 1");
  }
  if (spec.shared_anchor_fraction < 0.0 || spec.shared_anchor_fraction > 1.0) {
    throw Error("generate_synthetic: shared_anchor_fraction must be in [0,1]");
  }
  if (spec.utterance_length.min < 1 ||
      spec.utterance_length.min > spec.utterance_length.max) {
    throw Error("generate_synthetic: utterance_length.min must be in [1, max]");
  }
}

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  std::vector<std::string> langs;
  for (std::size_t l = 0; l < spec.n_languages; ++l) {
    langs.push_back("l" + std::to_string(l));
  }
  const WordPools pools = make_pools(spec, langs);
  rng::Engine rand(spec.seed);
  const double f = spec.shared_anchor_fraction;

  std::vector<Utterance> utterances;
  for (std::size_t l = 0; l < langs.size(); ++l) {
    for (std::size_t i = 0; i < spec.n_intents; ++i) {
      for (std::size_t u = 0; u < spec.utterances_per_intent_per_language; ++u) {
        const std::size_t len =
            spec.utterance_length.min +
            rng::uniform_index(rand, spec.utterance_length.max -
                                         spec.utterance_length.min + 1);
        const std::size_t n_char = std::min<std::size_t>(2, len);
        // One slot span most of the time, when it fits after the
        // characteristic words.
        std::size_t span_len = 0;
        std::size_t slot_type = 0;
        if (len > n_char && rng::bernoulli(rand, 0.8)) {
          span_len = 1 + rng::uniform_index(
                             rand, std::min<std::size_t>(3, len - n_char));
          slot_type = rng::uniform_index(rand, spec.n_slot_types);
        }
        const std::size_t n_fill = len - n_char - span_len;

        std::vector<std::string> body;
        for (std::size_t w = 0; w < n_char; ++w) {
          body.push_back(draw_word(rand, f, pools.intent_anchor[i],
                                   pools.intent_local[l][i]));
        }
        for (std::size_t w = 0; w < n_fill; ++w) {
          body.push_back(
              draw_word(rand, f, pools.filler_anchor, pools.filler_local[l]));
        }
        rng::shuffle(body, rand);

        Utterance utt;
        utt.language = langs[l];
        utt.intent = "intent_" + std::to_string(i);
        const std::size_t span_at =
            span_len == 0 ? 0 : rng::uniform_index(rand, body.size() + 1);
        for (std::size_t pos = 0; pos <= body.size(); ++pos) {
          if (span_len > 0 && pos == span_at) {
            const std::string type = "slot_" + std::to_string(slot_type);
            utt.tokens.push_back(draw_word(rand, f,
                                           pools.slot_head_anchor[slot_type],
                                           pools.slot_head_local[l][slot_type]));
            utt.slot_tags.push_back("B-" + type);
            for (std::size_t w = 1; w < span_len; ++w) {
              utt.tokens.push_back(
                  draw_word(rand, f, pools.slot_tail_anchor[slot_type],
                            pools.slot_tail_local[l][slot_type]));
              utt.slot_tags.push_back("I-" + type);
            }
          }
          if (pos < body.size()) {
            utt.tokens.push_back(body[pos]);
            utt.slot_tags.push_back("O");
          }
        }
        utterances.push_back(std::move(utt));
      }
    }
  }
  return make_corpus(std::move(utterances));
}

StatsReport corpus_stats(const Corpus& corpus) {
  StatsReport report;
  for (const Utterance& utt : corpus.utterances) {
    LanguageStats& ls = report.per_language[utt.language];
    ++ls.utterances;
    ls.tokens += utt.tokens.size();
  }
  report.intent_count = corpus.intent_inventory.size();
  report.slot_type_count = corpus.slot_inventory.size();
  return report;
}

Corpus merge_corpora(const std::vector<Corpus>& parts) {
  std::vector<Utterance> all;
  for (const Corpus& part : parts) {
    all.insert(all.end(), part.utterances.begin(), part.utterances.end());
  }
  return make_corpus(std::move(all));
}

}  // namespace protonlu::corpus
