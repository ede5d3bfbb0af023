#include <doctest.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "setrank/candgen.hpp"
#include "setrank/data.hpp"
#include "setrank/eval.hpp"
#include "setrank/rerank.hpp"
#include "setrank/synthetic.hpp"
#include "support/oracles.hpp"

using namespace setrank;

namespace {

/// Scores every set by a fixed function of its bitmask.
class LambdaScorer final : public SetScorer {
 public:
  LambdaScorer(std::size_t labels, std::function<double(const LabelSet&)> fn) : labels_(labels), fn_(std::move(fn)) {}
  std::string name() const override { return "lambda"; }
  std::size_t label_count() const override { return labels_; }
  std::vector<double> log_scores(std::span<const LabelSet> sets) const override {
    std::vector<double> out;
    for (const auto& s : sets) out.push_back(fn_(s));
    return out;
  }

 private:
  std::size_t labels_;
  std::function<double(const LabelSet&)> fn_;
};

std::vector<LabelSet> sets_of(const RerankedList& list) {
  std::vector<LabelSet> out;
  for (const auto& e : list.entries) out.push_back(e.candidate.set);
  return out;
}

std::vector<LabelSet> sets_of(const CandidateList& list) {
  std::vector<LabelSet> out;
  for (const auto& c : list.candidates) out.push_back(c.set);
  return out;
}

}  // namespace

TEST_CASE("length_penalized") {
  CHECK(length_penalized(-4.0, 2, 1.0) == -2.0);
  CHECK(length_penalized(-4.0, 2, 0.0) == -4.0);
  CHECK(length_penalized(-4.0, 1, 1.3) == -4.0);
  CHECK(length_penalized(-4.0, 0, 1.0) == -4.0);
}

TEST_CASE("alpha = 0 preserves the candidate order exactly") {
  std::mt19937_64 rng(1);
  const auto probs = oracle::random_probs(rng, 7);
  const auto list = enumerate_topk(MarginalPrediction("x", probs), 40);
  LambdaScorer scorer(7, [](const LabelSet& s) { return -static_cast<double>(s.to_mask() % 13); });
  const auto reranked = rescore(list, scorer, 0.0, 0.5);
  CHECK(sets_of(reranked) == sets_of(list));
  for (std::size_t r = 0; r < reranked.entries.size(); ++r) {
    CHECK(reranked.entries[r].original_rank == r + 1);
    CHECK(*reranked.entries[r].candidate.combined_score == list.candidates[r].base_logprob);
  }
}

TEST_CASE("a -inf rerank score with alpha = 0 keeps finite combined scores") {
  const auto list = enumerate_topk(MarginalPrediction("x", {0.8, 0.3}), 4);
  LambdaScorer scorer(2, [](const LabelSet&) { return -INFINITY; });
  const auto reranked = rescore(list, scorer, 0.0, 0.0);
  for (const auto& e : reranked.entries) CHECK(std::isfinite(*e.candidate.combined_score));
}

TEST_CASE("a single candidate stays the prediction") {
  const auto list = enumerate_topk(MarginalPrediction("x", {0.8, 0.3, 0.6}), 1);
  LambdaScorer scorer(3, [](const LabelSet& s) { return -100.0 * static_cast<double>(s.size()); });
  CHECK(rescore(list, scorer, 5.0, 1.0).top() == list.candidates[0].set);
}

TEST_CASE("combined score definition and permutation output") {
  std::mt19937_64 rng(4);
  const auto list = enumerate_topk(MarginalPrediction("x", oracle::random_probs(rng, 6)), 30);
  LambdaScorer scorer(6, [](const LabelSet& s) { return -0.3 * static_cast<double>(s.to_mask() % 7) - 1.0; });
  const double alpha = 0.7, beta = 0.5;
  const auto reranked = rescore(list, scorer, alpha, beta);
  const auto before_sets = sets_of(list);
  std::multiset<LabelSet> before(before_sets.begin(), before_sets.end());
  auto after_sets = sets_of(reranked);
  CHECK(before == std::multiset<LabelSet>(after_sets.begin(), after_sets.end()));
  for (std::size_t r = 0; r < reranked.entries.size(); ++r) {
    const auto& c = reranked.entries[r].candidate;
    const double raw = -0.3 * static_cast<double>(c.set.to_mask() % 7) - 1.0;
    const double r_score = c.set.empty() ? raw : raw / std::pow(static_cast<double>(c.set.size()), beta);
    REQUIRE(c.rerank_score.has_value());
    CHECK(*c.rerank_score == doctest::Approx(r_score).epsilon(1e-14));
    CHECK(*c.combined_score == doctest::Approx(c.base_logprob + alpha * r_score).epsilon(1e-14));
    if (r + 1 < reranked.entries.size()) {
      const auto& next = reranked.entries[r + 1];
      CHECK(c.combined_score >= next.candidate.combined_score);
      if (c.combined_score == next.candidate.combined_score)
        CHECK(reranked.entries[r].original_rank < next.original_rank);
    }
  }
}

TEST_CASE("scale coupling and idempotent re-sort") {
  std::mt19937_64 rng(5);
  const auto list = enumerate_topk(MarginalPrediction("x", oracle::random_probs(rng, 6)), 25);
  auto fn = [](const LabelSet& s) { return -0.5 * static_cast<double>(s.size()) - 0.01 * s.to_mask(); };
  LambdaScorer scorer(6, fn);
  LambdaScorer scaled(6, [&](const LabelSet& s) { return fn(s) / 4.0; });
  const auto a = rescore(list, scorer, 0.5, 0.75);
  const auto b = rescore(list, scaled, 2.0, 0.75);
  CHECK(sets_of(a) == sets_of(b));
  const auto again = rescore(to_candidate_list(a), scorer, 0.5, 0.75);
  CHECK(sets_of(again) == sets_of(a));
}

TEST_CASE("exact-joint scorer with large alpha selects the true-joint argmax among candidates") {
  const auto spec = block_mixture_spec(6, 2, 0.8, 0.1, 1.0, 17, 0, 0, 20);
  const auto data = gen_synthetic(spec);
  TableScorer scorer(6, *data.joint);
  for (const auto& m : data.test.marginals) {
    const auto list = enumerate_topk(m, 20);
    const auto reranked = rescore(list, scorer, 1e6, 0.0);
    double best = -INFINITY;
    LabelSet arg;
    for (const auto& c : list.candidates) {
      const double lp = std::log((*data.joint)[c.set.to_mask()]);
      if (lp > best) {
        best = lp;
        arg = c.set;
      }
    }
    CHECK(reranked.top() == arg);
  }
}

TEST_CASE("batched scoring deduplicates and matches per-list scoring") {
  std::mt19937_64 rng(8);
  std::vector<CandidateList> lists;
  for (int i = 0; i < 6; ++i)
    lists.push_back(enumerate_topk(MarginalPrediction("i" + std::to_string(i), oracle::random_probs(rng, 5)), 12));
  std::atomic<int> calls{0};
  LambdaScorer scorer(5, [&](const LabelSet& s) {
    ++calls;
    return -static_cast<double>(s.size());
  });
  const auto batched = score_candidates(lists, scorer, 3);
  CHECK(calls.load() <= 32);
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto single = score_candidates(lists[i], scorer);
    CHECK(batched[i].log_scores == single.log_scores);
  }
}

TEST_CASE("grid search: degenerate grid, tie policy and monotone in the grid") {
  const auto spec = block_mixture_spec(8, 2, 0.8, 0.1, 1.0, 3, 0, 60, 0);
  const auto data = gen_synthetic(spec);
  TableScorer scorer(8, *data.joint);
  std::vector<CandidateList> lists;
  for (const auto& m : data.validation.marginals) lists.push_back(enumerate_topk(m, 20));
  const auto scored = score_candidates(lists, scorer);

  const std::vector<double> zero = {0.0};
  const auto degenerate = grid_search(scored, data.validation.gold, 8, zero, zero);
  std::vector<LabelSet> base_top;
  for (const auto& l : lists) base_top.push_back(l.candidates[0].set);
  const auto base = evaluate_sets(base_top, data.validation.gold, 8);
  CHECK(degenerate.chosen.micro_f1 == base.micro_f1());
  CHECK(degenerate.chosen.macro_f1 == base.macro_f1);

  // Every beta ties at alpha = 0; the smallest wins.
  const std::vector<double> betas = {1.0, 0.0, 0.5};
  const auto ties = grid_search(scored, data.validation.gold, 8, zero, betas);
  CHECK(ties.chosen.beta == 0.0);
  CHECK(ties.table.size() == 3);

  const std::vector<double> small_alpha = {0.0, 0.1};
  const std::vector<double> small_beta = {0.0};
  const auto small = grid_search(scored, data.validation.gold, 8, small_alpha, small_beta);
  const auto full = grid_search(scored, data.validation.gold, 8, default_alpha_grid(), default_beta_grid());
  CHECK(full.chosen.micro_f1 >= small.chosen.micro_f1);
  CHECK(full.table.size() == 42);
  for (const auto& cell : full.table) CHECK(cell.micro_f1 <= full.chosen.micro_f1);

  const auto macro = grid_search(scored, data.validation.gold, 8, default_alpha_grid(), default_beta_grid(),
                                 Objective::kMacroF1);
  for (const auto& cell : macro.table) CHECK(cell.macro_f1 <= macro.chosen.macro_f1);
  CHECK(objective_name(parse_objective("macro_f1")) == "macro_f1");
  CHECK_THROWS_AS(parse_objective("accuracy"), ConfigError);

  CHECK_THROWS_AS(grid_search(std::span<const ScoredCandidates>{}, {}, 8, zero, zero), InputError);
}

TEST_CASE("default grids") {
  CHECK(default_alpha_grid() == std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0});
  CHECK(default_beta_grid() == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 1.25});
}

TEST_CASE("diff_prediction on the published samples") {
  LabelSpace space({"427.1", "427.41", "427.5", "693.0", "99.6", "995.0", "99.62", "96.04", "96.71", "571.5",
                    "733.00", "733.09", "96.72", "V66.7", "305.1", "431", "96.6"});
  auto set = [&](const std::string& text) { return parse_label_set(space, text); };

  const auto same = diff_prediction(set("427.1 99.6"), set("427.1 99.6"));
  CHECK(same.added.empty());
  CHECK(same.removed.empty());

  const auto first = diff_prediction(set("427.1 427.41 427.5 693.0 99.6 995.0"),
                                     set("427.1 427.41 427.5 693.0 99.6 995.0 99.62 96.04 96.71"));
  CHECK(first.added == set("99.62 96.04 96.71"));
  CHECK(first.removed.empty());

  const auto second = diff_prediction(set("571.5 733.00 733.09 96.04 96.72 V66.7"),
                                      set("571.5 733.00 96.04 96.72 V66.7 305.1 431 96.6"));
  CHECK(second.removed == set("733.09"));
  CHECK(second.added == set("305.1 431 96.6"));
}
