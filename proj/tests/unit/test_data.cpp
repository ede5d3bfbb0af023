#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>

#include "setrank/candgen.hpp"
#include "setrank/data.hpp"
#include "setrank/rerank.hpp"
#include "support/oracles.hpp"

using namespace setrank;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("format_double round-trips bit-exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> wide(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::exp(wide(rng)) * (i % 2 ? 1.0 : -1.0);
    CHECK(same_bits(std::stod(format_double(v)), v));
  }
  CHECK(format_double(0.1) == "1.0000000000000001e-01");
}

TEST_CASE("marginals parse sparse lines in vocabulary order") {
  LabelSpace space({"401.9", "96.71", "427.31"});
  std::istringstream in("doc1\t401.9:0.93 96.71:0.40\n");
  const auto m = read_marginals(in, space);
  REQUIRE(m.size() == 1);
  CHECK(m[0].instance_id() == "doc1");
  CHECK(m[0].probs()[0] == 0.93);
  CHECK(m[0].probs()[1] == 0.40);
  CHECK(m[0].probs()[2] == kDefaultMarginal);
}

TEST_CASE("marginal parse errors carry the line number") {
  LabelSpace space({"a", "b"});
  auto parse = [&](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      read_marginals(in, space, "m.txt");
    });
  };
  CHECK(parse("x\ta:0.5\n\tb:0.2\n").find("m.txt:2") != std::string::npos);
  const auto unknown = parse("x\tzz:0.5\n");
  CHECK(unknown.find("m.txt:1") != std::string::npos);
  CHECK(unknown.find("zz") != std::string::npos);
  CHECK(parse("x\ta:abc\n").find("m.txt:1") != std::string::npos);
  CHECK(parse("x\ta:1.5\n").find("m.txt:1") != std::string::npos);
  CHECK(parse("x\ta:0.5\nx\tb:0.1\n").find("m.txt:2") != std::string::npos);
}

TEST_CASE("marginals round-trip losslessly") {
  std::vector<std::string> codes;
  for (int i = 0; i < 30; ++i) codes.push_back("c" + std::to_string(i));
  LabelSpace space(codes);
  std::mt19937_64 rng(4);
  std::vector<MarginalPrediction> original;
  for (int n = 0; n < 40; ++n) {
    auto p = oracle::random_probs(rng, 30);
    p[n % 30] = kDefaultMarginal;
    original.emplace_back("inst" + std::to_string(n), p);
  }
  std::stringstream buffer;
  write_marginals(buffer, space, original);
  const auto back = read_marginals(buffer, space);
  REQUIRE(back.size() == original.size());
  for (std::size_t n = 0; n < back.size(); ++n) {
    CHECK(back[n].instance_id() == original[n].instance_id());
    for (std::size_t i = 0; i < 30; ++i) CHECK(same_bits(back[n].probs()[i], original[n].probs()[i]));
  }
}

TEST_CASE("gold and vocabulary round-trip") {
  LabelSpace space({"x1", "x2", "x3", "x4"});
  std::stringstream vocab;
  write_vocab(vocab, space);
  CHECK(read_vocab(vocab).codes() == space.codes());

  LabeledSets gold = {{"a", LabelSet::from_indices({0, 3})}, {"b", LabelSet{}}, {"c", LabelSet::from_indices({2})}};
  std::stringstream buffer;
  write_gold(buffer, space, gold);
  CHECK(read_gold(buffer, space) == gold);

  std::istringstream dup("v\nw\nv\n");
  CHECK(error_of([&] { read_vocab(dup, "voc"); }).find("voc:3") != std::string::npos);
}

TEST_CASE("candidate files round-trip, including reranker columns") {
  std::vector<std::string> codes;
  for (int i = 0; i < 8; ++i) codes.push_back("k" + std::to_string(i));
  LabelSpace space(codes);
  std::mt19937_64 rng(6);
  std::vector<CandidateList> lists;
  for (int n = 0; n < 5; ++n)
    lists.push_back(enumerate_topk(MarginalPrediction("id" + std::to_string(n), oracle::random_probs(rng, 8)), 10));

  std::stringstream plain;
  write_candidates(plain, space, lists);
  CHECK(plain.str().find("\tNA\tNA\t") != std::string::npos);
  const auto back = read_candidates(plain, space);
  REQUIRE(back.size() == lists.size());
  for (std::size_t n = 0; n < lists.size(); ++n) {
    CHECK(back[n].instance_id == lists[n].instance_id);
    REQUIRE(back[n].candidates.size() == lists[n].candidates.size());
    for (std::size_t r = 0; r < lists[n].candidates.size(); ++r) {
      CHECK(back[n].candidates[r].set == lists[n].candidates[r].set);
      CHECK(same_bits(back[n].candidates[r].base_logprob, lists[n].candidates[r].base_logprob));
      CHECK_FALSE(back[n].candidates[r].rerank_score.has_value());
    }
  }

  TableScorer scorer(8, std::vector<double>(256, 1.0 / 256.0));
  std::vector<RerankedList> reranked;
  for (const auto& l : lists) reranked.push_back(rescore(l, scorer, 0.3, 0.5));
  std::stringstream rr;
  write_reranked(rr, space, reranked);
  const auto rback = read_candidates(rr, space);
  for (std::size_t n = 0; n < reranked.size(); ++n) {
    for (std::size_t r = 0; r < reranked[n].entries.size(); ++r) {
      const auto& want = reranked[n].entries[r].candidate;
      const auto& got = rback[n].candidates[r];
      CHECK(got.set == want.set);
      CHECK(same_bits(*got.rerank_score, *want.rerank_score));
      CHECK(same_bits(*got.combined_score, *want.combined_score));
    }
  }
}

TEST_CASE("candidate files reject broken rank sequences") {
  LabelSpace space({"a", "b"});
  std::istringstream gap("x\t1\t-1\tNA\tNA\ta\nx\t3\t-2\tNA\tNA\tb\n");
  CHECK(error_of([&] { read_candidates(gap, space, "c"); }).find("c:2") != std::string::npos);
}

TEST_CASE("joint table round-trip and completeness") {
  std::vector<double> table = {0.1, 0.2, 0.3, 0.4};
  std::stringstream buffer;
  write_joint_table(buffer, table);
  const auto back = read_joint_table(buffer, 2);
  CHECK(back == table);
  std::istringstream missing("0\t0.5\n1\t0.5\n");
  CHECK_THROWS_AS(read_joint_table(missing, 2), InputError);
}
