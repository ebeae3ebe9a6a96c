#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace protonlu::corpus {

// One annotated utterance: surface tokens, language code, utterance-level
// intent, and per-token BIO slot tags.
struct Utterance {
  std::vector<std::string> tokens;
  std::string language;
  std::string intent;
  std::vector<std::string> slot_tags;

  bool operator==(const Utterance&) const = default;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::set<std::string> languages;
  std::set<std::string> intent_inventory;
  std::set<std::string> slot_inventory;  // slot types, without B-/I- prefix

  bool operator==(const Corpus&) const = default;
};

// Immutable after construction. PAD=0 and UNK=1 are fixed; real tokens get
// dense ids from 2 upward, ordered by descending frequency then
// lexicographically.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens_in_id_order);

  std::size_t size() const { return id_to_token_.size(); }
  // UNK for tokens not in the vocabulary.
  std::size_t id_of(const std::string& token) const;
  const std::string& token_of(std::size_t id) const;
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  // Tokens from id 2 upward (PAD/UNK implied), for serialization.
  std::vector<std::string> payload_tokens() const;

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> token_to_id_;
};

struct LengthRange {
  std::size_t min = 5;
  std::size_t max = 9;
};

struct SyntheticSpec {
  std::size_t n_languages = 3;
  std::size_t n_intents = 5;
  std::size_t n_slot_types = 5;
  std::size_t utterances_per_intent_per_language = 20;
  double shared_anchor_fraction = 0.3;
  LengthRange utterance_length;
  std::uint64_t seed = 0;
};

struct LanguageStats {
  std::size_t utterances = 0;
  std::size_t tokens = 0;

  bool operator==(const LanguageStats&) const = default;
};

struct StatsReport {
  std::map<std::string, LanguageStats> per_language;
  std::size_t intent_count = 0;
  std::size_t slot_type_count = 0;

  bool operator==(const StatsReport&) const = default;
};

enum class Format { conll_tsv };

// Throws Error naming the offending utterance: tag/token length mismatch,
// bad tag grammar, or an I- tag that does not continue a same-type span.
void validate_utterance(const Utterance& utt, const std::string& name);

// Builds inventories from the utterances and validates every one.
Corpus make_corpus(std::vector<Utterance> utterances);

Corpus load_corpus(const std::string& path, Format format = Format::conll_tsv);
void save_corpus(const Corpus& corpus, const std::string& path);

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count);

Corpus generate_synthetic(const SyntheticSpec& spec);

StatsReport corpus_stats(const Corpus& corpus);

// Union of several corpora (e.g. one file per language).
Corpus merge_corpora(const std::vector<Corpus>& parts);

// "B-type" / "I-type" -> type; "O" -> empty string.
std::string slot_type_of(const std::string& tag);

}  // namespace protonlu::corpus
