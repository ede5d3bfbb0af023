#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "setrank/candgen.hpp"
#include "setrank/core.hpp"
#include "setrank/data.hpp"
#include "support/oracles.hpp"

using namespace setrank;

TEST_CASE("clamp_probability keeps interior points and clamps the boundary") {
  CHECK(clamp_probability(0.5) == 0.5);
  CHECK(clamp_probability(0.0) == 1e-12);
  CHECK(clamp_probability(1.0) == 1.0 - 1e-12);
  CHECK_THROWS_AS(clamp_probability(std::numeric_limits<double>::quiet_NaN()), InputError);
  CHECK_THROWS_AS(clamp_probability(std::numeric_limits<double>::infinity()), InputError);
}

TEST_CASE("set_base_logprob hand cases") {
  MarginalPrediction uniform("a", {0.5, 0.5});
  CHECK(set_base_logprob(uniform, LabelSet{}) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(set_base_logprob(uniform, LabelSet{}) == doctest::Approx(-1.386294).epsilon(1e-6));

  MarginalPrediction high("b", {0.9, 0.9, 0.9});
  CHECK(set_base_logprob(high, LabelSet::from_indices({0, 1, 2})) == doctest::Approx(std::log(0.729)).epsilon(1e-12));
}

TEST_CASE("set_base_logprob matches the direct product for every subset of 10 labels") {
  std::mt19937_64 rng(11);
  const auto probs = oracle::random_probs(rng, 10);
  MarginalPrediction m("x", probs);
  for (std::uint64_t mask = 0; mask < 1024; ++mask) {
    double product = 1.0;
    for (int i = 0; i < 10; ++i) product *= (mask >> i & 1U) ? probs[i] : 1.0 - probs[i];
    CHECK(set_base_logprob(m, LabelSet::from_mask(mask, 10)) == doctest::Approx(std::log(product)).epsilon(1e-12));
  }
}

TEST_CASE("set_base_logprob rejects a set outside the label space") {
  MarginalPrediction m("x", {0.2, 0.7});
  CHECK_THROWS_AS(set_base_logprob(m, LabelSet::from_indices({2})), InputError);
}

TEST_CASE("independent marginals normalize and peak at the threshold set") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1u, 4u, 9u, 15u}) {
    auto probs = oracle::random_probs(rng, n);
    probs[0] = 0.0;  // exercise clamping
    MarginalPrediction m("x", probs);
    const std::uint64_t total = std::uint64_t{1} << n;
    double mass = 0.0;
    double best = -INFINITY;
    std::uint64_t best_mask = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      const double lp = set_base_logprob(m, LabelSet::from_mask(mask, n));
      mass += std::exp(lp);
      if (lp > best) {
        best = lp;
        best_mask = mask;
      }
    }
    CHECK(std::abs(mass - 1.0) < 1e-9);
    CHECK(LabelSet::from_mask(best_mask, n) == map_set(m));
  }
}

TEST_CASE("MarginalPrediction clamps and validates") {
  MarginalPrediction m("id", {0.0, 1.0, 0.3});
  CHECK(m.probs()[0] == 1e-12);
  CHECK(m.probs()[1] == 1.0 - 1e-12);
  CHECK_THROWS_AS(MarginalPrediction("id", {1.5}), InputError);
  CHECK_THROWS_AS(MarginalPrediction("id", {}), InputError);
}

TEST_CASE("LabelSpace invariants") {
  LabelSpace space({"401.9", "96.71", "427.31"});
  CHECK(space.size() == 3);
  for (std::uint32_t i = 0; i < space.size(); ++i) CHECK(space.index_of(space.code(i)) == i);
  CHECK_FALSE(space.find("250.00").has_value());
  CHECK_THROWS_AS(space.index_of("250.00"), InputError);
  CHECK_THROWS_AS(LabelSpace({}), InputError);
  CHECK_THROWS_AS(LabelSpace({"a", "a"}), InputError);
  CHECK_THROWS_AS(LabelSpace({"a", ""}), InputError);
  CHECK(space.digest() != LabelSpace({"401.9", "96.71"}).digest());
  CHECK(space.digest().size() == 64);
}

TEST_CASE("LabelSet canonical form") {
  const auto set = LabelSet::from_indices({5, 1, 3});
  CHECK(std::vector<std::uint32_t>(set.members().begin(), set.members().end()) == std::vector<std::uint32_t>{1, 3, 5});
  CHECK_THROWS_AS(LabelSet::from_indices({1, 1}), InputError);
  CHECK(set.contains(3));
  CHECK_FALSE(set.contains(2));
  CHECK(LabelSet::from_dense(set.to_dense(6)) == set);
  CHECK(LabelSet::from_mask(set.to_mask(), 6) == set);
  CHECK_THROWS_AS(set.to_dense(4), InputError);
}

TEST_CASE("label set text form round-trips on random sets") {
  std::vector<std::string> codes;
  for (int i = 0; i < 40; ++i) codes.push_back("C" + std::to_string(i * 7) + "." + std::to_string(i % 3));
  LabelSpace space(codes);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto set = oracle::random_set(rng, space.size());
    CHECK(parse_label_set(space, format_label_set(space, set)) == set);
  }
}

TEST_CASE("RerankConfig validation") {
  RerankConfig config;
  CHECK(config.k == 50);
  CHECK(config.n_orderings == 10);
  CHECK(config.train.optimizer.step_size == 2e-5);
  CHECK(config.train.batch_size == 64);
  CHECK(config.train.epochs == 30);
  CHECK_NOTHROW(config.validate());
  config.k = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.k = 1;
  config.alpha = -1.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("parallel_for visits every index once and propagates failures") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(100, 3,
                               [](std::size_t i) {
                                 if (i == 42) throw InputError("boom");
                               }),
                  InputError);
}
