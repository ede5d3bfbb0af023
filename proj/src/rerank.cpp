#include "setrank/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "setrank/eval.hpp"

namespace setrank {

double length_penalized(double log_score, std::size_t set_size, double beta) {
  if (set_size == 0) return log_score;
  return log_score / std::pow(static_cast<double>(set_size), beta);
}

std::vector<double> MadeScorer::log_scores(std::span<const LabelSet> sets) const {
  return made_log_joint_batch(model_, sets);
}

std::vector<double> MaskSaScorer::log_scores(std::span<const LabelSet> sets) const {
  std::vector<double> out;
  out.reserve(sets.size());
  for (const auto& set : sets) out.push_back(set.empty() ? 0.0 : masksa_pll(model_, set));
  return out;
}

TableScorer::TableScorer(std::size_t label_count, std::vector<double> probabilities)
    : label_count_(label_count) {
  if (label_count >= 63 || probabilities.size() != (std::size_t{1} << label_count)) {
    throw InputError("joint table must have 2^|Y| entries");
  }
  log_probs_.reserve(probabilities.size());
  for (double p : probabilities) {
    if (!(p >= 0.0) || p > 1.0) throw InputError("joint table probability outside [0, 1]");
    log_probs_.push_back(std::log(p));
  }
}

std::vector<double> TableScorer::log_scores(std::span<const LabelSet> sets) const {
  std::vector<double> out;
  out.reserve(sets.size());
  for (const auto& set : sets) {
    set.check_within(label_count_);
    out.push_back(log_probs_[set.to_mask()]);
  }
  return out;
}

ScoredCandidates score_candidates(CandidateList list, const SetScorer& scorer) {
  std::vector<LabelSet> sets;
  sets.reserve(list.candidates.size());
  for (const auto& c : list.candidates) sets.push_back(c.set);
  ScoredCandidates out{std::move(list), scorer.log_scores(sets)};
  return out;
}

std::vector<ScoredCandidates> score_candidates(std::vector<CandidateList> lists, const SetScorer& scorer,
                                               std::size_t threads) {
  // Distinct sets recur across instances, so each is scored once.
  std::map<LabelSet, std::size_t> unique_index;
  std::vector<LabelSet> unique;
  for (const auto& list : lists) {
    for (const auto& c : list.candidates) {
      if (unique_index.emplace(c.set, unique.size()).second) unique.push_back(c.set);
    }
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (unique.size() + kChunk - 1) / kChunk;
  std::vector<double> unique_scores(unique.size());
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t start = c * kChunk;
    const std::size_t stop = std::min(unique.size(), start + kChunk);
    const auto scores = scorer.log_scores(std::span<const LabelSet>(unique).subspan(start, stop - start));
    std::copy(scores.begin(), scores.end(), unique_scores.begin() + static_cast<std::ptrdiff_t>(start));
  });

  std::vector<ScoredCandidates> out;
  out.reserve(lists.size());
  for (auto& list : lists) {
    std::vector<double> scores;
    scores.reserve(list.candidates.size());
    for (const auto& c : list.candidates) scores.push_back(unique_scores[unique_index.at(c.set)]);
    out.push_back({std::move(list), std::move(scores)});
  }
  return out;
}

RerankedList rescore(const ScoredCandidates& scored, double alpha, double beta) {
  const auto& candidates = scored.list.candidates;
  if (scored.log_scores.size() != candidates.size()) {
    throw InputError("score count does not match candidate count");
  }
  RerankedList out;
  out.instance_id = scored.list.instance_id;
  out.entries.reserve(candidates.size());
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    RerankedCandidate entry{candidates[r], r + 1};
    const double rerank = length_penalized(scored.log_scores[r], candidates[r].set.size(), beta);
    entry.candidate.rerank_score = rerank;
    // alpha = 0 must not turn an infinite rerank score into NaN.
    entry.candidate.combined_score = candidates[r].base_logprob + (alpha == 0.0 ? 0.0 : alpha * rerank);
    out.entries.push_back(std::move(entry));
  }
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RerankedCandidate& a, const RerankedCandidate& b) {
                     return *a.candidate.combined_score > *b.candidate.combined_score;
                   });
  return out;
}

RerankedList rescore(const CandidateList& list, const SetScorer& scorer, double alpha, double beta) {
  return rescore(score_candidates(list, scorer), alpha, beta);
}

CandidateList to_candidate_list(const RerankedList& reranked) {
  CandidateList out;
  out.instance_id = reranked.instance_id;
  out.candidates.reserve(reranked.entries.size());
  for (const auto& e : reranked.entries) out.candidates.push_back(e.candidate);
  return out;
}

std::string objective_name(Objective objective) {
  return objective == Objective::kMicroF1 ? "micro_f1" : "macro_f1";
}

Objective parse_objective(const std::string& name) {
  if (name == "micro_f1" || name == "micro") return Objective::kMicroF1;
  if (name == "macro_f1" || name == "macro") return Objective::kMacroF1;
  throw ConfigError("unknown objective '" + name + "' (expected micro_f1 or macro_f1)");
}

std::vector<double> default_alpha_grid() { return {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}; }
std::vector<double> default_beta_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0, 1.25}; }

GridSearchResult grid_search(std::span<const ScoredCandidates> validation, std::span<const LabelSet> gold,
                             std::size_t label_count, std::span<const double> alphas,
                             std::span<const double> betas, Objective objective) {
  if (validation.empty()) throw InputError("grid search needs at least one validation instance");
  if (validation.size() != gold.size()) throw InputError("validation lists and gold sets differ in count");
  if (alphas.empty() || betas.empty()) throw InputError("grid search needs non-empty alpha and beta grids");
  for (const auto& v : validation) {
    if (v.list.candidates.empty()) throw InputError("empty candidate list for " + v.list.instance_id);
  }

  GridSearchResult result;
  result.objective = objective;
  auto value_of = [objective](const GridCell& cell) {
    return objective == Objective::kMicroF1 ? cell.micro_f1 : cell.macro_f1;
  };
  bool have_choice = false;
  std::vector<LabelSet> predictions(validation.size());
  for (double alpha : alphas) {
    for (double beta : betas) {
      for (std::size_t i = 0; i < validation.size(); ++i) predictions[i] = rescore(validation[i], alpha, beta).top();
      const EvalReport report = evaluate_sets(predictions, gold, label_count);
      const GridCell cell{alpha, beta, report.micro_f1(), report.macro_f1};
      result.table.push_back(cell);
      const bool better =
          !have_choice || value_of(cell) > value_of(result.chosen) ||
          (value_of(cell) == value_of(result.chosen) &&
           (cell.alpha < result.chosen.alpha || (cell.alpha == result.chosen.alpha && cell.beta < result.chosen.beta)));
      if (better) {
        result.chosen = cell;
        have_choice = true;
      }
    }
  }
  return result;
}

PredictionDiff diff_prediction(const LabelSet& base_top, const LabelSet& reranked_top) {
  std::vector<std::uint32_t> added;
  std::vector<std::uint32_t> removed;
  const auto base = base_top.members();
  const auto reranked = reranked_top.members();
  std::set_difference(reranked.begin(), reranked.end(), base.begin(), base.end(), std::back_inserter(added));
  std::set_difference(base.begin(), base.end(), reranked.begin(), reranked.end(), std::back_inserter(removed));
  return {LabelSet::from_indices(std::move(added)), LabelSet::from_indices(std::move(removed))};
}

}  // namespace setrank
