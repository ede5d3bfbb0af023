#include "setrank/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace setrank {

Prf prf_from_counts(const Counts& c) {
  Prf out;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) out.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) out.recall = tp / static_cast<double>(c.tp + c.fn);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom > 0) out.f1 = 2.0 * tp / static_cast<double>(denom);
  return out;
}

EvalReport evaluate_sets(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                         std::size_t label_count) {
  if (predictions.size() != gold.size()) throw InputError("prediction and gold counts differ");
  EvalReport report;
  report.instances = predictions.size();
  report.per_label.assign(label_count, LabelScore{});
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    predictions[n].check_within(label_count);
    gold[n].check_within(label_count);
    const auto p = predictions[n].members();
    const auto g = gold[n].members();
    auto pi = p.begin();
    auto gi = g.begin();
    while (pi != p.end() || gi != g.end()) {
      if (gi == g.end() || (pi != p.end() && *pi < *gi)) {
        ++report.per_label[*pi++].counts.fp;
      } else if (pi == p.end() || *gi < *pi) {
        ++report.per_label[*gi++].counts.fn;
      } else {
        ++report.per_label[*pi].counts.tp;
        ++pi;
        ++gi;
      }
    }
  }
  double f1_sum = 0.0;
  for (auto& label : report.per_label) {
    label.scores = prf_from_counts(label.counts);
    report.pooled += label.counts;
    f1_sum += label.scores.f1;
  }
  report.micro = prf_from_counts(report.pooled);
  report.macro_f1 = label_count > 0 ? f1_sum / static_cast<double>(label_count) : 0.0;
  return report;
}

EvalReport micro_macro_f1(const std::map<std::string, LabelSet>& predictions,
                          const std::map<std::string, LabelSet>& gold, const LabelSpace& space) {
  std::vector<std::string> missing;
  for (const auto& [id, _] : gold) {
    if (!predictions.contains(id)) missing.push_back(id + " (no prediction)");
  }
  for (const auto& [id, _] : predictions) {
    if (!gold.contains(id)) missing.push_back(id + " (no gold)");
  }
  if (!missing.empty()) {
    std::string message = "instance keys differ between predictions and gold:";
    for (const auto& m : missing) message += " " + m;
    throw InputError(message);
  }
  std::vector<LabelSet> p;
  std::vector<LabelSet> g;
  for (const auto& [id, set] : gold) {
    g.push_back(set);
    p.push_back(predictions.at(id));
  }
  return evaluate_sets(p, g, space.size());
}

double instance_f1(const LabelSet& predicted, const LabelSet& gold) {
  if (predicted.empty() && gold.empty()) return 1.0;
  std::vector<std::uint32_t> common;
  std::set_intersection(predicted.members().begin(), predicted.members().end(), gold.members().begin(),
                        gold.members().end(), std::back_inserter(common));
  return 2.0 * static_cast<double>(common.size()) / static_cast<double>(predicted.size() + gold.size());
}

std::size_t best_rank(const CandidateList& list, const LabelSet& gold) {
  if (list.candidates.empty()) throw InputError("empty candidate list for " + list.instance_id);
  std::size_t best = 0;
  double best_f1 = -1.0;
  for (std::size_t r = 0; r < list.candidates.size(); ++r) {
    const double f1 = instance_f1(list.candidates[r].set, gold);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = r;
    }
  }
  return best + 1;
}

double avg_best_rank(std::span<const CandidateList> lists, std::span<const LabelSet> gold) {
  if (lists.size() != gold.size()) throw InputError("candidate list and gold counts differ");
  if (lists.empty()) throw InputError("no instances to rank");
  double total = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i) total += static_cast<double>(best_rank(lists[i], gold[i]));
  return total / static_cast<double>(lists.size());
}

std::vector<std::size_t> label_frequencies(std::span<const LabelSet> corpus, std::size_t label_count) {
  std::vector<std::size_t> freq(label_count, 0);
  for (const auto& set : corpus) {
    set.check_within(label_count);
    for (auto m : set.members()) ++freq[m];
  }
  return freq;
}

std::vector<BucketScore> bucketed_f1(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                                     std::span<const std::size_t> train_frequencies, std::size_t buckets) {
  const std::size_t n = train_frequencies.size();
  if (buckets == 0 || buckets > n) {
    throw InputError("bucket count " + std::to_string(buckets) + " must be in [1, " + std::to_string(n) + "]");
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return train_frequencies[a] < train_frequencies[b];
  });

  const EvalReport report = evaluate_sets(predictions, gold, n);
  std::vector<BucketScore> out(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    auto& bucket = out[b];
    const std::size_t start = b * n / buckets;
    const std::size_t stop = (b + 1) * n / buckets;
    bucket.labels.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    bucket.min_frequency = train_frequencies[order[start]];
    bucket.max_frequency = train_frequencies[order[stop - 1]];
    for (auto label : bucket.labels) bucket.counts += report.per_label[label].counts;
    bucket.micro = prf_from_counts(bucket.counts);
  }
  return out;
}

std::vector<SweepPoint> sweep_k(std::span<const ScoredCandidates> lists, std::span<const LabelSet> gold,
                                std::size_t label_count, double alpha, double beta,
                                std::span<const std::size_t> k_values) {
  if (lists.size() != gold.size()) throw InputError("candidate list and gold counts differ");
  if (lists.empty()) throw InputError("no instances to sweep");
  std::vector<SweepPoint> out;
  for (std::size_t k : k_values) {
    if (k == 0) throw InputError("k values must be at least 1");
    std::vector<LabelSet> predictions;
    std::vector<CandidateList> reranked;
    double oracle_total = 0.0;
    for (const auto& scored : lists) {
      if (k > scored.list.candidates.size()) {
        throw InputError("k = " + std::to_string(k) + " exceeds the " +
                         std::to_string(scored.list.candidates.size()) + " candidates of " +
                         scored.list.instance_id);
      }
      ScoredCandidates prefix;
      prefix.list.instance_id = scored.list.instance_id;
      prefix.list.candidates.assign(scored.list.candidates.begin(),
                                    scored.list.candidates.begin() + static_cast<std::ptrdiff_t>(k));
      prefix.log_scores.assign(scored.log_scores.begin(), scored.log_scores.begin() + static_cast<std::ptrdiff_t>(k));
      RerankedList r = rescore(prefix, alpha, beta);
      predictions.push_back(r.top());
      reranked.push_back(to_candidate_list(r));
    }
    for (std::size_t i = 0; i < reranked.size(); ++i) {
      double best = 0.0;
      for (const auto& c : reranked[i].candidates) best = std::max(best, instance_f1(c.set, gold[i]));
      oracle_total += best;
    }
    SweepPoint point;
    point.k = k;
    point.report = evaluate_sets(predictions, gold, label_count);
    point.avg_best_rank = avg_best_rank(reranked, gold);
    point.oracle_instance_f1 = oracle_total / static_cast<double>(lists.size());
    out.push_back(std::move(point));
  }
  return out;
}

std::string format_report(const EvalReport& report) {
  char line[160];
  std::ostringstream out;
  std::snprintf(line, sizeof line, "%-12s %10zu\n", "instances", report.instances);
  out << line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "micro_p", report.micro.precision);
  out << line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "micro_r", report.micro.recall);
  out << line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "micro_f1", report.micro.f1);
  out << line;
  std::snprintf(line, sizeof line, "%-12s %10.4f\n", "macro_f1", report.macro_f1);
  out << line;
  return out.str();
}

}  // namespace setrank
