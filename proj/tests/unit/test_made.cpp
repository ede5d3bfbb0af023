#include <doctest.h>

#include <cmath>
#include <random>

#include "setrank/made.hpp"
#include "setrank/synthetic.hpp"
#include "support/oracles.hpp"

using namespace setrank;

namespace {

MadeConfig small_config(std::size_t hidden, std::size_t n, std::uint64_t seed) {
  MadeConfig config;
  config.hidden = hidden;
  config.n_orderings = n;
  config.seed = seed;
  return config;
}

void randomize_biases(MadeModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  auto& b1 = model.input_layer().bias;
  auto& b2 = model.output_layer().bias;
  for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = normal(rng);
  for (Eigen::Index i = 0; i < b2.size(); ++i) b2(i) = normal(rng);
}

}  // namespace

TEST_CASE("Ordering validates permutations") {
  CHECK_NOTHROW(Ordering({2, 0, 1}));
  CHECK_THROWS_AS(Ordering({0, 0, 1}), InputError);
  CHECK_THROWS_AS(Ordering({0, 3, 1}), InputError);
}

TEST_CASE("zero-initialized model: every conditional is one half") {
  const auto space = synthetic_label_space(4);
  MadeModel model(space, small_config(12, 3, 1), ParamInit::kZero);
  const auto set = LabelSet::from_indices({0, 2});
  for (std::size_t j = 0; j < 3; ++j) {
    const auto c = made_conditionals(model, j, set);
    for (Eigen::Index i = 0; i < c.size(); ++i) CHECK(c(i) == 0.5);
  }
  CHECK(made_log_joint(model, set) == doctest::Approx(-2.772589).epsilon(1e-6));
  CHECK(made_log_joint(model, LabelSet{}) == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(r_made(model, LabelSet::from_indices({0, 1}), 1.0) == doctest::Approx(-1.386294).epsilon(1e-6));
}

TEST_CASE("mask construction follows the connectivity rule") {
  MadeModel model(synthetic_label_space(6), small_config(20, 4, 7));
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& o = model.ordering(j);
    const auto m = model.connectivity(j);
    for (std::size_t h = 0; h < 20; ++h) {
      CHECK(m[h] <= 4);
      for (std::size_t i = 0; i < 6; ++i) {
        CHECK(model.input_mask(j)(h, i) == (m[h] >= o.position(i) ? 1.0 : 0.0));
        CHECK(model.output_mask(j)(i, h) == (o.position(i) > m[h] ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("conditionals match a scalar recomputation") {
  MadeModel model(synthetic_label_space(8), small_config(30, 3, 11));
  randomize_biases(model, 2);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = oracle::random_set(rng, 8, 0.4);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto got = made_conditionals(model, j, set);
      const auto want = oracle::made_conditionals_loop(model, j, set);
      for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(got(i) - want[i]) < 1e-12);
    }
  }
}

TEST_CASE("autoregressive property under exhaustive bit-flip probes") {
  for (std::size_t labels : {2u, 5u, 9u, 16u}) {
    MadeModel model(synthetic_label_space(labels), small_config(40, 4, labels));
    randomize_biases(model, labels + 1);
    std::mt19937_64 rng(labels);
    for (int trial = 0; trial < 3; ++trial) {
      const auto set = oracle::random_set(rng, labels, 0.5);
      for (std::size_t j = 0; j < 4; ++j) {
        const auto base = made_conditionals(model, j, set);
        const auto& o = model.ordering(j);
        for (std::uint32_t flip = 0; flip < labels; ++flip) {
          auto dense = set.to_dense(labels);
          dense[flip] = !dense[flip];
          const auto probe = made_conditionals(model, j, LabelSet::from_dense(dense));
          for (std::size_t i = 0; i < labels; ++i) {
            if (o.position(flip) >= o.position(i)) CHECK(probe(i) == base(i));
          }
        }
      }
    }
  }
}

TEST_CASE("per-ordering and ensemble joints normalize") {
  MadeModel model(synthetic_label_space(8), small_config(25, 5, 3));
  randomize_biases(model, 9);
  std::vector<LabelSet> all;
  for (std::uint64_t mask = 0; mask < 256; ++mask) all.push_back(LabelSet::from_mask(mask, 8));
  for (std::size_t j = 0; j < 5; ++j) {
    double total = 0.0;
    for (const auto& s : all) total += std::exp(made_ordering_log_joint(model, j, s));
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  double total = 0.0;
  const auto batch = made_log_joint_batch(model, all);
  for (std::size_t k = 0; k < all.size(); ++k) {
    CHECK(batch[k] == made_log_joint(model, all[k]));
    total += std::exp(batch[k]);
  }
  CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("a single ordering reduces to its own product") {
  MadeModel model(synthetic_label_space(5), small_config(10, 1, 4));
  randomize_biases(model, 4);
  const auto set = LabelSet::from_indices({1, 4});
  CHECK(made_log_joint(model, set) == doctest::Approx(made_ordering_log_joint(model, 0, set)).epsilon(1e-14));
}

TEST_CASE("length penalty identities and direction") {
  MadeModel model(synthetic_label_space(5), small_config(10, 2, 4));
  const auto one = LabelSet::from_indices({3});
  const auto three = LabelSet::from_indices({0, 1, 3});
  CHECK(r_made(model, three, 0.0) == made_log_joint(model, three));
  CHECK(r_made(model, one, 1.7) == made_log_joint(model, one));
  CHECK(r_made(model, LabelSet{}, 1.0) == made_log_joint(model, LabelSet{}));
  const double l = -3.0;
  for (double beta : {0.25, 1.0}) CHECK(l / std::pow(2.0, beta) < l / std::pow(3.0, beta));
}

TEST_CASE("BCE gradients match finite differences; masked entries are zero") {
  MadeModel model(synthetic_label_space(6), small_config(9, 3, 21));
  randomize_biases(model, 21);
  std::mt19937_64 rng(3);
  std::vector<LabelSet> sets;
  for (int i = 0; i < 5; ++i) sets.push_back(oracle::random_set(rng, 6, 0.4));
  const auto batch = to_dense_rows(sets, 6);
  for (std::size_t j = 0; j < 3; ++j) {
    MadeGrad grad(model);
    grad.zero();
    made_loss(model, j, batch, &grad);
    const auto& m1 = model.input_mask(j);
    const auto& m2 = model.output_mask(j);
    for (Eigen::Index i = 0; i < m1.size(); ++i)
      if (m1.data()[i] == 0.0) CHECK(grad.input.weights.data()[i] == 0.0);
    for (Eigen::Index i = 0; i < m2.size(); ++i)
      if (m2.data()[i] == 0.0) CHECK(grad.output.weights.data()[i] == 0.0);
    auto loss = [&] { return made_loss(model, j, batch); };
    const auto result = nn::grad_check(model.parameters(), grad.parameters(), loss, 1e-4);
    CHECK(result.passed);
  }
}

TEST_CASE("training concentrates mass on a repeated set and is deterministic") {
  const auto space = synthetic_label_space(6);
  const auto target = LabelSet::from_indices({1, 2, 5});
  std::vector<LabelSet> corpus(64, target);
  MadeConfig config = small_config(16, 2, 8);
  config.train.epochs = 40;
  config.train.batch_size = 16;
  config.train.optimizer.step_size = 1e-2;
  MadeModel untrained(space, config);
  const auto first = train_made(corpus, space, config);
  const auto second = train_made(corpus, space, config);
  CHECK(first.model.input_layer().weights == second.model.input_layer().weights);
  CHECK(first.model.output_layer().bias == second.model.output_layer().bias);
  CHECK(first.epoch_losses == second.epoch_losses);

  const double before = made_log_joint(untrained, target);
  const double after = made_log_joint(first.model, target);
  CHECK(after > before);
  for (std::uint64_t mask = 0; mask < 64; ++mask) {
    const auto other = LabelSet::from_mask(mask, 6);
    if (other != target) CHECK(made_log_joint(first.model, other) < after);
  }
  CHECK(first.epoch_losses.back() <= first.epoch_losses.front());
  CHECK_THROWS_AS(train_made(std::vector<LabelSet>{}, space, config), InputError);
}
