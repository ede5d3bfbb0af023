#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "setrank/checkpoint.hpp"
#include "setrank/synthetic.hpp"
#include "support/oracles.hpp"

using namespace setrank;

namespace {

MadeModel small_made(std::uint64_t seed) {
  MadeConfig config;
  config.hidden = 12;
  config.n_orderings = 3;
  config.seed = seed;
  return MadeModel(synthetic_label_space(7), config);
}

MaskSaModel small_masksa(std::uint64_t seed) {
  MaskSaConfig config;
  config.width = 8;
  config.layers = 2;
  config.heads = 2;
  config.seed = seed;
  return MaskSaModel(synthetic_label_space(7), config);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("MADE round-trip preserves scores bit-exactly") {
  const auto model = small_made(3);
  const auto bytes = serialize_checkpoint(model, {{"epochs", "30"}});
  CHECK(checkpoint_kind(bytes) == ModelKind::kMade);
  CHECK(checkpoint_meta(bytes).at("epochs") == "30");
  const auto back = deserialize_made(bytes, model.space());
  CHECK(serialize_checkpoint(back, {{"epochs", "30"}}) == bytes);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto set = oracle::random_set(rng, 7, 0.4);
    CHECK(same_bits(made_log_joint(back, set), made_log_joint(model, set)));
  }
}

TEST_CASE("Mask-SA round-trip preserves scores bit-exactly") {
  const auto model = small_masksa(4);
  const auto bytes = serialize_checkpoint(model);
  CHECK(checkpoint_kind(bytes) == ModelKind::kMaskSa);
  const auto back = deserialize_masksa(bytes, model.space());
  CHECK(serialize_checkpoint(back) == bytes);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 30; ++i) {
    auto set = oracle::random_set(rng, 7, 0.4);
    if (set.empty()) continue;
    CHECK(same_bits(masksa_pll(back, set), masksa_pll(model, set)));
  }
}

TEST_CASE("file save and load") {
  const auto dir = std::filesystem::temp_directory_path() / "setrank_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto model = small_made(5);
  save_checkpoint(model, dir / "made.ckpt");
  const auto back = load_made_checkpoint(dir / "made.ckpt", model.space());
  CHECK(back.input_layer().weights == model.input_layer().weights);
  CHECK_THROWS_AS(load_masksa_checkpoint(dir / "made.ckpt", model.space()), InputError);
  CHECK_THROWS_AS(load_made_checkpoint(dir / "missing.ckpt", model.space()), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncation, corruption, version and digest errors") {
  const auto model = small_made(6);
  const auto bytes = serialize_checkpoint(model);
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_made(bytes.substr(0, cut), model.space()), InputError);
  }
  auto corrupt = bytes;
  corrupt[corrupt.size() - 3] ^= 0x01;
  CHECK_THROWS_AS(deserialize_made(corrupt, model.space()), InputError);

  auto version = bytes;
  const auto at = version.find("version 1");
  REQUIRE(at != std::string::npos);
  version[at + 8] = '9';
  CHECK_THROWS_AS(deserialize_made(version, model.space()), InputError);

  CHECK_THROWS_AS(deserialize_made(bytes, synthetic_label_space(8)), InputError);
  LabelSpace renamed({"L0", "L1", "L2", "L3", "L4", "L5", "X6"});
  CHECK_THROWS_AS(deserialize_made(bytes, renamed), InputError);
  CHECK_THROWS_AS(deserialize_masksa(bytes, model.space()), InputError);
}

TEST_CASE("fixed-seed retraining yields identical checkpoints") {
  const auto space = synthetic_label_space(5);
  std::mt19937_64 rng(9);
  std::vector<LabelSet> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(oracle::random_set(rng, 5, 0.4));
  MadeConfig mc;
  mc.hidden = 8;
  mc.n_orderings = 2;
  mc.seed = 1;
  mc.train.epochs = 2;
  mc.train.batch_size = 8;
  CHECK(sha256_hex(serialize_checkpoint(train_made(corpus, space, mc).model)) ==
        sha256_hex(serialize_checkpoint(train_made(corpus, space, mc).model)));
  MaskSaConfig sc;
  sc.width = 8;
  sc.layers = 1;
  sc.heads = 2;
  sc.seed = 1;
  sc.train.epochs = 2;
  sc.train.batch_size = 8;
  CHECK(sha256_hex(serialize_checkpoint(train_masksa(corpus, space, sc).model)) ==
        sha256_hex(serialize_checkpoint(train_masksa(corpus, space, sc).model)));
}
