#include <doctest.h>

#include <algorithm>
#include <random>

#include "setrank/candgen.hpp"
#include "setrank/eval.hpp"
#include "setrank/rerank.hpp"
#include "setrank/synthetic.hpp"
#include "support/oracles.hpp"

using namespace setrank;

namespace {

CandidateList list_of(const std::vector<LabelSet>& sets) {
  CandidateList list{"x", {}};
  double lp = -1.0;
  for (const auto& s : sets) {
    list.candidates.push_back({s, lp, std::nullopt, lp});
    lp -= 1.0;
  }
  return list;
}

}  // namespace

TEST_CASE("hand-counted confusion: TP=2 FP=1 FN=1") {
  LabelSpace space({"a", "b", "c", "d"});
  const std::map<std::string, LabelSet> gold = {{"n", LabelSet::from_indices({0, 1, 2})}};
  const std::map<std::string, LabelSet> pred = {{"n", LabelSet::from_indices({0, 1, 3})}};
  const auto report = micro_macro_f1(pred, gold, space);
  CHECK(report.pooled.tp == 2);
  CHECK(report.pooled.fp == 1);
  CHECK(report.pooled.fn == 1);
  CHECK(report.micro_f1() == doctest::Approx(0.6667).epsilon(1e-4));
  // Per-label F1 (1, 1, 0, 0) over four labels.
  CHECK(report.macro_f1 == doctest::Approx(0.5));
}

TEST_CASE("perfect predictions score one") {
  LabelSpace space({"a", "b"});
  const std::map<std::string, LabelSet> gold = {{"1", LabelSet::from_indices({0})}, {"2", LabelSet::from_indices({0, 1})}};
  const auto report = micro_macro_f1(gold, gold, space);
  CHECK(report.micro_f1() == 1.0);
  CHECK(report.macro_f1 == 1.0);
}

TEST_CASE("mismatched instance keys are rejected") {
  LabelSpace space({"a"});
  const std::map<std::string, LabelSet> gold = {{"1", LabelSet{}}};
  const std::map<std::string, LabelSet> pred = {{"2", LabelSet{}}};
  CHECK_THROWS_AS(micro_macro_f1(pred, gold, space), InputError);
}

TEST_CASE("metrics agree exactly with a counting oracle on random corpora") {
  std::mt19937_64 rng(99);
  for (int corpus = 0; corpus < 100; ++corpus) {
    const std::size_t labels = 3 + corpus % 20;
    std::vector<LabelSet> gold, pred;
    for (int n = 0; n < 25; ++n) {
      gold.push_back(oracle::random_set(rng, labels, 0.2));
      pred.push_back(oracle::random_set(rng, labels, 0.25));
    }
    const auto report = evaluate_sets(pred, gold, labels);
    const auto want = oracle::count_f1(pred, gold, labels);
    CHECK(report.micro_f1() == want.micro);
    CHECK(report.macro_f1 == want.macro);
    CHECK(report.micro_f1() >= 0.0);
    CHECK(report.micro_f1() <= 1.0);
  }
}

TEST_CASE("micro F1 is order invariant and monotone in correct additions") {
  std::mt19937_64 rng(12);
  const std::size_t labels = 10;
  std::vector<LabelSet> gold, pred;
  for (int n = 0; n < 30; ++n) {
    gold.push_back(oracle::random_set(rng, labels, 0.3));
    pred.push_back(oracle::random_set(rng, labels, 0.3));
  }
  const double base = evaluate_sets(pred, gold, labels).micro_f1();
  auto rg = gold, rp = pred;
  std::reverse(rg.begin(), rg.end());
  std::reverse(rp.begin(), rp.end());
  CHECK(evaluate_sets(rp, rg, labels).micro_f1() == base);

  for (std::size_t n = 0; n < gold.size(); ++n) {
    for (auto l : gold[n].members()) {
      if (pred[n].contains(l)) continue;
      auto better = pred;
      auto members = std::vector<std::uint32_t>(pred[n].members().begin(), pred[n].members().end());
      members.push_back(l);
      better[n] = LabelSet::from_indices(members);
      CHECK(evaluate_sets(better, gold, labels).micro_f1() >= base);
      break;
    }
    for (std::uint32_t l = 0; l < labels; ++l) {
      if (gold[n].contains(l) || pred[n].contains(l)) continue;
      auto worse = pred;
      auto members = std::vector<std::uint32_t>(pred[n].members().begin(), pred[n].members().end());
      members.push_back(l);
      worse[n] = LabelSet::from_indices(members);
      CHECK(evaluate_sets(worse, gold, labels).micro_f1() <= base);
      break;
    }
  }
}

TEST_CASE("instance F1 and best rank") {
  CHECK(instance_f1(LabelSet{}, LabelSet{}) == 1.0);
  CHECK(instance_f1(LabelSet::from_indices({0}), LabelSet{}) == 0.0);
  CHECK(instance_f1(LabelSet::from_indices({0, 1}), LabelSet::from_indices({1, 2})) == 0.5);

  const auto gold = LabelSet::from_indices({1, 2});
  const auto at1 = list_of({gold, LabelSet::from_indices({1}), LabelSet{}});
  CHECK(best_rank(at1, gold) == 1);
  const auto at3 = list_of({LabelSet{}, LabelSet::from_indices({0}), gold, LabelSet::from_indices({1})});
  const auto at5 = list_of({LabelSet{}, LabelSet::from_indices({0}), LabelSet::from_indices({3}),
                            LabelSet::from_indices({4}), gold});
  CHECK(best_rank(at3, gold) == 3);
  const std::vector<CandidateList> lists = {at3, at5};
  const std::vector<LabelSet> golds = {gold, gold};
  CHECK(avg_best_rank(lists, golds) == 4.0);
  // Equal best F1 at ranks 2 and 3: the lower rank wins.
  const auto tie = list_of({LabelSet{}, LabelSet::from_indices({1}), LabelSet::from_indices({2})});
  CHECK(best_rank(tie, gold) == 2);
  CHECK_THROWS_AS(avg_best_rank(lists, std::vector<LabelSet>{gold}), InputError);
}

TEST_CASE("frequency buckets") {
  std::mt19937_64 rng(3);
  const std::size_t labels = 12;
  std::vector<LabelSet> train, gold, pred;
  for (int n = 0; n < 200; ++n) train.push_back(oracle::random_set(rng, labels, 0.3));
  for (int n = 0; n < 50; ++n) {
    gold.push_back(oracle::random_set(rng, labels, 0.3));
    pred.push_back(oracle::random_set(rng, labels, 0.3));
  }
  const auto freq = label_frequencies(train, labels);
  const auto overall = evaluate_sets(pred, gold, labels);

  const auto single = bucketed_f1(pred, gold, freq, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].micro.f1 == overall.micro_f1());

  const auto six = bucketed_f1(pred, gold, freq, 6);
  REQUIRE(six.size() == 6);
  Counts pooled;
  std::size_t covered = 0;
  for (std::size_t b = 0; b < six.size(); ++b) {
    pooled += six[b].counts;
    covered += six[b].labels.size();
    CHECK(six[b].labels.size() == 2);
    if (b > 0) CHECK(six[b].min_frequency >= six[b - 1].max_frequency);
  }
  CHECK(covered == labels);
  CHECK(prf_from_counts(pooled).f1 == overall.micro_f1());

  const std::vector<std::size_t> flat(labels, 10);
  const auto perfect = bucketed_f1(gold, gold, flat, 6);
  for (const auto& b : perfect) {
    if (b.counts.tp > 0) CHECK(b.micro.f1 == 1.0);
  }
  CHECK_THROWS_AS(bucketed_f1(pred, gold, freq, 13), InputError);
  CHECK_THROWS_AS(bucketed_f1(pred, gold, freq, 0), InputError);
}

TEST_CASE("candidate-count sweep") {
  const auto spec = block_mixture_spec(8, 2, 0.8, 0.1, 1.0, 5, 0, 0, 80);
  const auto data = gen_synthetic(spec);
  TableScorer scorer(8, *data.joint);
  std::vector<CandidateList> lists;
  for (const auto& m : data.test.marginals) lists.push_back(enumerate_topk(m, 30));
  const auto scored = score_candidates(lists, scorer);
  const std::vector<std::size_t> ks = {1, 2, 5, 10, 30};
  const auto curve = sweep_k(scored, data.test.gold, 8, 1.0, 0.5, ks);
  REQUIRE(curve.size() == ks.size());

  std::vector<LabelSet> base_top;
  for (const auto& l : lists) base_top.push_back(l.candidates[0].set);
  CHECK(curve[0].report.micro_f1() == evaluate_sets(base_top, data.test.gold, 8).micro_f1());
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].oracle_instance_f1 >= curve[i - 1].oracle_instance_f1);
    CHECK(curve[i].avg_best_rank >= 1.0);
    CHECK(curve[i].avg_best_rank <= static_cast<double>(ks[i]));
  }
  const std::vector<std::size_t> too_big = {31};
  CHECK_THROWS_AS(sweep_k(scored, data.test.gold, 8, 1.0, 0.5, too_big), InputError);
}

TEST_CASE("report formatting lists both headline metrics") {
  const std::vector<LabelSet> gold = {LabelSet::from_indices({0})};
  const auto text = format_report(evaluate_sets(gold, gold, 2));
  CHECK(text.find("micro") != std::string::npos);
  CHECK(text.find("macro") != std::string::npos);
}
