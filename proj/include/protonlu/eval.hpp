#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protonlu/model.hpp"

namespace protonlu::eval {

// Inclusive token range carrying one slot.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string type;

  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
};

// conlleval-compatible segmentation over raw tags. Predictions are not
// constrained to valid BIO, so an I- that follows O, start-of-sequence, or a
// different type leniently opens a span. Output is sorted by start and
// non-overlapping.
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

double intent_accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& golds);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged exact span matching (type and both boundaries). 0/0 ratios
// are 0, except that two empty span sets score a perfect 1.
Prf slot_prf(const std::vector<std::vector<std::string>>& predicted,
             const std::vector<std::vector<std::string>>& gold);

struct MetricsReport {
  episodes::TaskKind task = episodes::TaskKind::intent;
  // Per-episode metric (accuracy or span F1); for aggregated reports, the
  // per-run means. mean/stddev always come from this list.
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 when < 2 values
  std::size_t runs = 1;
  std::size_t episodes = 0;
};

MetricsReport make_report(episodes::TaskKind task, std::vector<double> values,
                          std::size_t runs, std::size_t episodes);

// Samples plan episodes, builds prototypes from each episode's support with
// the (read-only) model, predicts the queries, and averages the per-episode
// metric. Intent episodes score exact-match accuracy; slot episodes score
// span F1 over the episode's pooled query spans.
MetricsReport evaluate(const Model& model, const corpus::Corpus& corpus,
                       const episodes::SamplingPlan& plan,
                       std::size_t episode_count, std::uint64_t seed);

// Mean of run means; std across run means.
MetricsReport aggregate_runs(const std::vector<MetricsReport>& reports);

// The fixed metrics JSON schema: task, configuration, target_language,
// n_way, k_shot, episodes, runs, mean, std, per_run.
std::string metrics_to_json(const MetricsReport& report,
                            const episodes::SamplingPlan& plan);

}  // namespace protonlu::eval
