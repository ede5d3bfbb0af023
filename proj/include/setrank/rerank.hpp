#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "setrank/candgen.hpp"
#include "setrank/core.hpp"
#include "setrank/made.hpp"
#include "setrank/masksa.hpp"

namespace setrank {

/// Anything that assigns an unpenalized log score to a label set.
class SetScorer {
 public:
  virtual ~SetScorer() = default;
  virtual std::string name() const = 0;
  virtual std::size_t label_count() const = 0;
  virtual std::vector<double> log_scores(std::span<const LabelSet> sets) const = 0;
};

/// R = log_score / |y|^beta, with the empty set left unscaled.
double length_penalized(double log_score, std::size_t set_size, double beta);

/// Ensemble log joint.
class MadeScorer final : public SetScorer {
 public:
  explicit MadeScorer(const MadeModel& model) : model_(model) {}
  std::string name() const override { return "made"; }
  std::size_t label_count() const override { return model_.label_count(); }
  std::vector<double> log_scores(std::span<const LabelSet> sets) const override;

 private:
  const MadeModel& model_;
};

/// Pseudo-log-likelihood; the empty set scores 0.
class MaskSaScorer final : public SetScorer {
 public:
  explicit MaskSaScorer(const MaskSaModel& model) : model_(model) {}
  std::string name() const override { return "masksa"; }
  std::size_t label_count() const override { return model_.label_count(); }
  std::vector<double> log_scores(std::span<const LabelSet> sets) const override;

 private:
  const MaskSaModel& model_;
};

/// Log of a tabulated joint indexed by bitmask (bit i = label i).
class TableScorer final : public SetScorer {
 public:
  TableScorer(std::size_t label_count, std::vector<double> probabilities);
  std::string name() const override { return "exact-joint"; }
  std::size_t label_count() const override { return label_count_; }
  std::vector<double> log_scores(std::span<const LabelSet> sets) const override;

 private:
  std::size_t label_count_;
  std::vector<double> log_probs_;
};

struct RerankedCandidate {
  Candidate candidate;
  std::size_t original_rank = 0;  // 1-based rank in the candidate list
};

/// Candidates ordered by combined score, best first.
struct RerankedList {
  std::string instance_id;
  std::vector<RerankedCandidate> entries;

  const LabelSet& top() const { return entries.front().candidate.set; }
};

/// Candidate list plus the scorer's log score for every candidate.
struct ScoredCandidates {
  CandidateList list;
  std::vector<double> log_scores;
};

ScoredCandidates score_candidates(CandidateList list, const SetScorer& scorer);
std::vector<ScoredCandidates> score_candidates(std::vector<CandidateList> lists, const SetScorer& scorer,
                                               std::size_t threads = 1);

/// combined = base_logprob + alpha * R. Sorted by combined score descending;
/// ties keep the original base rank, so alpha = 0 preserves the input order.
RerankedList rescore(const ScoredCandidates& scored, double alpha, double beta);
RerankedList rescore(const CandidateList& list, const SetScorer& scorer, double alpha, double beta);

/// Reranked order as a plain candidate list.
CandidateList to_candidate_list(const RerankedList& reranked);

enum class Objective { kMicroF1, kMacroF1 };

std::string objective_name(Objective objective);
Objective parse_objective(const std::string& name);

struct GridCell {
  double alpha = 0.0;
  double beta = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

struct GridSearchResult {
  std::vector<GridCell> table;  // alpha-major in grid order
  GridCell chosen;
  Objective objective = Objective::kMicroF1;
};

std::vector<double> default_alpha_grid();
std::vector<double> default_beta_grid();

/// Evaluates every (alpha, beta) cell on pre-scored validation lists aligned
/// with `gold`. The chosen cell maximizes the objective; ties prefer smaller
/// alpha, then smaller beta. Throws InputError on an empty validation set or grid.
GridSearchResult grid_search(std::span<const ScoredCandidates> validation, std::span<const LabelSet> gold,
                             std::size_t label_count, std::span<const double> alphas,
                             std::span<const double> betas, Objective objective = Objective::kMicroF1);

struct PredictionDiff {
  LabelSet added;
  LabelSet removed;
};

PredictionDiff diff_prediction(const LabelSet& base_top, const LabelSet& reranked_top);

}  // namespace setrank
