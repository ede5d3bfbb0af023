#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "setrank/candgen.hpp"
#include "setrank/core.hpp"
#include "setrank/rerank.hpp"

namespace setrank {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    return *this;
  }
};

/// Precision, recall and F1 from counts; each is 0 when its denominator is 0.
struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf prf_from_counts(const Counts& counts);

struct LabelScore {
  Counts counts;
  Prf scores;
};

struct EvalReport {
  std::size_t instances = 0;
  Counts pooled;
  Prf micro;
  /// Unweighted mean of per-label F1 over the whole label space. Labels never
  /// gold nor predicted contribute 0.
  double macro_f1 = 0.0;
  std::vector<LabelScore> per_label;

  double micro_f1() const { return micro.f1; }
};

/// Aligned vectors: predictions[i] is scored against gold[i].
EvalReport evaluate_sets(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                         std::size_t label_count);

/// Keyed by instance id. Throws InputError listing ids present in only one map.
EvalReport micro_macro_f1(const std::map<std::string, LabelSet>& predictions,
                          const std::map<std::string, LabelSet>& gold, const LabelSpace& space);

/// 2|p ∩ g| / (|p| + |g|), and 1 when both are empty.
double instance_f1(const LabelSet& predicted, const LabelSet& gold);

/// 1-based rank of the candidate with the highest instance F1 (lowest rank on ties).
std::size_t best_rank(const CandidateList& list, const LabelSet& gold);

/// Mean best_rank over instances. Throws InputError on an empty list or a size mismatch.
double avg_best_rank(std::span<const CandidateList> lists, std::span<const LabelSet> gold);

std::vector<std::size_t> label_frequencies(std::span<const LabelSet> corpus, std::size_t label_count);

struct BucketScore {
  std::vector<std::uint32_t> labels;
  std::size_t min_frequency = 0;
  std::size_t max_frequency = 0;
  Counts counts;
  Prf micro;
};

/// Labels are ordered by ascending training frequency (ties by index) and cut
/// into `buckets` contiguous groups of near-equal size; bucket b holds
/// positions [b*n/B, (b+1)*n/B). Micro F1 is then computed per bucket.
std::vector<BucketScore> bucketed_f1(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                                     std::span<const std::size_t> train_frequencies, std::size_t buckets);

struct SweepPoint {
  std::size_t k = 0;
  EvalReport report;
  double avg_best_rank = 0.0;
  /// Mean over instances of the best instance F1 reachable within the top k.
  double oracle_instance_f1 = 0.0;
};

/// Reranks only the top-k prefix of each list for every k in `k_values`.
/// Throws InputError when a k exceeds a list's length or is zero.
std::vector<SweepPoint> sweep_k(std::span<const ScoredCandidates> lists, std::span<const LabelSet> gold,
                                std::size_t label_count, double alpha, double beta,
                                std::span<const std::size_t> k_values);

/// Aligned plain-text summary.
std::string format_report(const EvalReport& report);

}  // namespace setrank
