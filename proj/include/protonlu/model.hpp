#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protonlu/corpus.hpp"
#include "protonlu/encoder.hpp"
#include "protonlu/episodes.hpp"

namespace protonlu {

// Everything needed to embed text: the trained weights plus the vocabulary
// that fixes token ids. This is what a checkpoint stores.
struct Model {
  encoder::EncoderConfig config;
  encoder::EncoderParams params;
  corpus::Vocabulary vocab;

  bool operator==(const Model&) const = default;
};

// Forward pass of one episode: support and query embeddings as tape nodes,
// ready for prototype construction. Slot episodes embed individual tokens in
// their utterance context; slot query tokens whose gold tag ended up without
// a support prototype are dropped here (the tag cannot be scored), with the
// drop count reported.
struct EpisodeForward {
  std::vector<std::pair<std::string, autodiff::Value>> support;  // label, row
  std::vector<std::pair<autodiff::Value, std::string>> queries;  // row, gold
  // Slot task: query rows grouped per query utterance, aligned with
  // episode.queries; intent task: one row per query utterance.
  std::vector<std::vector<autodiff::Value>> query_rows_by_utterance;
  std::size_t dropped_query_tokens = 0;
  std::vector<std::string> warnings;
};

EpisodeForward episode_forward(autodiff::Tape& tape, const Model& model,
                               const encoder::EncoderNodes& nodes,
                               const corpus::Corpus& corpus,
                               const episodes::Episode& episode);

}  // namespace protonlu
