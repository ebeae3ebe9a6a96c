#include "protonlu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "protonlu/error.hpp"
#include "protonlu/rng.hpp"

namespace protonlu::eval {

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::string open_type;  // type of the span currently being built
  std::size_t open_start = 0;
  const auto close = [&](std::size_t end_exclusive) {
    if (!open_type.empty()) {
      spans.push_back(Span{open_start, end_exclusive - 1, open_type});
      open_type.clear();
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    const std::string type = corpus::slot_type_of(tag);
    if (type.empty()) {  // O or malformed
      close(i);
      continue;
    }
    if (tag[0] == 'B' || type != open_type) {
      close(i);
      open_type = type;
      open_start = i;
    }
    // I- of the open type: span continues.
  }
  close(tags.size());
  return spans;
}

double intent_accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) {
    throw Error("intent_accuracy: " + std::to_string(predictions.size()) +
                " predictions vs " + std::to_string(golds.size()) + " golds");
  }
  if (predictions.empty()) throw Error("intent_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

Prf slot_prf(const std::vector<std::vector<std::string>>& predicted,
             const std::vector<std::vector<std::string>>& gold) {
  if (predicted.size() != gold.size()) {
    throw Error("slot_prf: sequence count mismatch");
  }
  std::size_t n_predicted = 0, n_gold = 0, n_matched = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s].size() != gold[s].size()) {
      throw Error("slot_prf: length mismatch in sequence " + std::to_string(s));
    }
    const std::vector<Span> pred_spans = extract_spans(predicted[s]);
    const std::vector<Span> gold_spans = extract_spans(gold[s]);
    n_predicted += pred_spans.size();
    n_gold += gold_spans.size();
    // Both lists are sorted and duplicate-free within a sequence.
    n_matched += static_cast<std::size_t>(std::count_if(
        pred_spans.begin(), pred_spans.end(), [&](const Span& span) {
          return std::binary_search(gold_spans.begin(), gold_spans.end(), span);
        }));
  }
  Prf out;
  if (n_predicted == 0 && n_gold == 0) {
    out.precision = out.recall = out.f1 = 1.0;
    return out;
  }
  out.precision = n_predicted == 0 ? 0.0
                                   : static_cast<double>(n_matched) /
                                         static_cast<double>(n_predicted);
  out.recall = n_gold == 0 ? 0.0
                           : static_cast<double>(n_matched) /
                                 static_cast<double>(n_gold);
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall /
                     (out.precision + out.recall);
  return out;
}

MetricsReport make_report(episodes::TaskKind task, std::vector<double> values,
                          std::size_t runs, std::size_t episodes) {
  MetricsReport report;
  report.task = task;
  report.values = std::move(values);
  report.runs = runs;
  report.episodes = episodes;
  if (!report.values.empty()) {
    double sum = 0.0;
    for (double v : report.values) sum += v;
    report.mean = sum / static_cast<double>(report.values.size());
    if (report.values.size() > 1) {
      double sq = 0.0;
      for (double v : report.values) {
        sq += (v - report.mean) * (v - report.mean);
      }
      report.stddev =
          std::sqrt(sq / static_cast<double>(report.values.size() - 1));
    }
  }
  return report;
}

MetricsReport evaluate(const Model& model, const corpus::Corpus& corpus,
                       const episodes::SamplingPlan& plan,
                       std::size_t episode_count, std::uint64_t seed) {
  episodes::validate_config(plan.template_config);
  const protonet::DistanceKind kind = plan.template_config.distance;
  rng::Engine rand(seed);
  std::vector<double> values;
  values.reserve(episode_count);
  for (std::size_t ep = 0; ep < episode_count; ++ep) {
    const episodes::Episode episode =
        episodes::sample_episode(corpus, plan.template_config, rand);
    autodiff::Tape tape;
    const encoder::EncoderNodes nodes =
        encoder::bind(tape, model.params, model.config);
    const EpisodeForward fwd =
        episode_forward(tape, model, nodes, corpus, episode);

    std::vector<std::pair<std::string, Tensor>> support;
    for (const auto& [label, value] : fwd.support) {
      support.emplace_back(label, value.tensor());
    }
    const protonet::PrototypeMap protos = protonet::compute_prototypes(support);

    if (episode.task == episodes::TaskKind::intent) {
      std::vector<std::string> predictions, golds;
      for (const auto& [value, gold] : fwd.queries) {
        predictions.push_back(protonet::predict(value.tensor(), protos, kind));
        golds.push_back(gold);
      }
      values.push_back(intent_accuracy(predictions, golds));
    } else {
      std::vector<std::vector<std::string>> predicted, gold;
      for (std::size_t qi = 0; qi < episode.queries.size(); ++qi) {
        const corpus::Utterance& utt =
            corpus.utterances[episode.queries[qi].utterance];
        std::vector<std::string> tags;
        for (const autodiff::Value& row : fwd.query_rows_by_utterance[qi]) {
          tags.push_back(protonet::predict(row.tensor(), protos, kind));
        }
        predicted.push_back(std::move(tags));
        gold.push_back(utt.slot_tags);
      }
      values.push_back(slot_prf(predicted, gold).f1);
    }
  }
  return make_report(plan.template_config.task, std::move(values), 1,
                     episode_count);
}

MetricsReport aggregate_runs(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error("aggregate_runs: no reports");
  std::vector<double> run_means;
  std::size_t episodes = 0;
  for (const MetricsReport& report : reports) {
    if (report.task != reports.front().task) {
      throw Error("aggregate_runs: mixed task kinds");
    }
    run_means.push_back(report.mean);
    episodes += report.episodes;
  }
  return make_report(reports.front().task, std::move(run_means),
                     reports.size(), episodes);
}

std::string metrics_to_json(const MetricsReport& report,
                            const episodes::SamplingPlan& plan) {
  nlohmann::ordered_json j;
  j["task"] = episodes::to_string(report.task);
  j["configuration"] = episodes::to_string(plan.configuration);
  j["target_language"] = plan.target_language;
  j["n_way"] = plan.template_config.n_way;
  j["k_shot"] = plan.template_config.k_shot;
  j["episodes"] = report.episodes;
  j["runs"] = report.runs;
  j["mean"] = report.mean;
  j["std"] = report.stddev;
  j["per_run"] = report.values;
  return j.dump(2) + "\n";
}

}  // namespace protonlu::eval
