#include "protonlu/model.hpp"

#include <map>
#include <set>

#include "protonlu/error.hpp"

namespace protonlu {

namespace {

using autodiff::Value;

// Encodes each distinct utterance once and caches the result; slot episodes
// reference the same utterance from several support tokens.
class EncodeCache {
 public:
  EncodeCache(autodiff::Tape& tape, const Model& model,
              const encoder::EncoderNodes& nodes, const corpus::Corpus& corpus)
      : tape_(tape), model_(model), nodes_(nodes), corpus_(corpus) {}

  const encoder::EncodedUtterance& get(std::size_t utterance) {
    auto it = cache_.find(utterance);
    if (it == cache_.end()) {
      const auto ids =
          model_.vocab.encode(corpus_.utterances[utterance].tokens);
      it = cache_
               .emplace(utterance,
                        encoder::encode(tape_, nodes_, model_.config, ids))
               .first;
    }
    return it->second;
  }

  Value token_row(const episodes::ExampleRef& ref) {
    if (!ref.token.has_value()) {
      throw Error("episode_forward: slot example without token index");
    }
    return tape_.slice_rows(get(ref.utterance).token_vectors, *ref.token, 1);
  }

 private:
  autodiff::Tape& tape_;
  const Model& model_;
  const encoder::EncoderNodes& nodes_;
  const corpus::Corpus& corpus_;
  std::map<std::size_t, encoder::EncodedUtterance> cache_;
};

}  // namespace

EpisodeForward episode_forward(autodiff::Tape& tape, const Model& model,
                               const encoder::EncoderNodes& nodes,
                               const corpus::Corpus& corpus,
                               const episodes::Episode& episode) {
  EpisodeForward fwd;
  EncodeCache cache(tape, model, nodes, corpus);

  if (episode.task == episodes::TaskKind::intent) {
    for (std::size_t c = 0; c < episode.classes.size(); ++c) {
      for (const episodes::ExampleRef& ref : episode.support[c]) {
        fwd.support.emplace_back(episode.classes[c],
                                 cache.get(ref.utterance).sequence_vector);
      }
    }
    for (std::size_t i = 0; i < episode.queries.size(); ++i) {
      Value row = cache.get(episode.queries[i].utterance).sequence_vector;
      fwd.queries.emplace_back(row, episode.query_gold[i]);
      fwd.query_rows_by_utterance.push_back({row});
    }
    return fwd;
  }

  // Slot task: tag-level prototypes over token vectors.
  const auto tagged = episodes::slot_tag_support(corpus, episode, &fwd.warnings);
  std::set<std::string> available_tags;
  for (const auto& [tag, ref] : tagged) {
    fwd.support.emplace_back(tag, cache.token_row(ref));
    available_tags.insert(tag);
  }
  for (const episodes::ExampleRef& query : episode.queries) {
    const corpus::Utterance& utt = corpus.utterances[query.utterance];
    std::vector<Value> rows;
    for (std::size_t t = 0; t < utt.tokens.size(); ++t) {
      episodes::ExampleRef ref{query.utterance, t};
      Value row = cache.token_row(ref);
      rows.push_back(row);
      if (available_tags.count(utt.slot_tags[t])) {
        fwd.queries.emplace_back(row, utt.slot_tags[t]);
      } else {
        ++fwd.dropped_query_tokens;
      }
    }
    fwd.query_rows_by_utterance.push_back(std::move(rows));
  }
  if (fwd.dropped_query_tokens > 0) {
    fwd.warnings.push_back(
        std::to_string(fwd.dropped_query_tokens) +
        " query tokens dropped from the loss (gold tag has no prototype)");
  }
  return fwd;
}

}  // namespace protonlu
