#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace setrank {

// Error taxonomy. Every module throws one of these; the CLI maps them to exit codes.

/// Malformed or inconsistent caller-supplied data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters or model dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request exceeds a documented capability limit (e.g. exact joint tables).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower clamp applied to every probability before a log is taken.
inline constexpr double kProbEpsilon = 1e-12;

/// Ordered label vocabulary with code -> index lookup.
class LabelSpace {
 public:
  explicit LabelSpace(std::vector<std::string> codes);

  std::size_t size() const { return codes_.size(); }
  const std::string& code(std::size_t index) const { return codes_.at(index); }
  const std::vector<std::string>& codes() const { return codes_; }

  std::optional<std::uint32_t> find(std::string_view code) const;
  /// Throws InputError naming the code when it is not in the vocabulary.
  std::uint32_t index_of(std::string_view code) const;

  /// Hex SHA-256 over the newline-joined codes. Identifies a vocabulary in checkpoints.
  const std::string& digest() const { return digest_; }

  bool operator==(const LabelSpace& other) const { return digest_ == other.digest_; }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::string digest_;
};

/// A subset of the label space, stored as strictly ascending indices.
class LabelSet {
 public:
  LabelSet() = default;

  /// Sorts the indices; duplicates are rejected with InputError.
  static LabelSet from_indices(std::vector<std::uint32_t> indices);
  static LabelSet from_dense(std::span<const std::uint8_t> bits);
  /// Bit i of `mask` selects label i. Requires label_count <= 64.
  static LabelSet from_mask(std::uint64_t mask, std::size_t label_count);

  std::span<const std::uint32_t> members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  bool contains(std::uint32_t index) const;

  std::vector<std::uint8_t> to_dense(std::size_t label_count) const;
  std::uint64_t to_mask() const;

  /// Throws InputError if any member is >= label_count.
  void check_within(std::size_t label_count) const;

  auto operator<=>(const LabelSet&) const = default;
  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::uint32_t> members_;
};

/// One instance's independent per-label probabilities from an external base predictor.
/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] on construction.
class MarginalPrediction {
 public:
  MarginalPrediction(std::string instance_id, std::vector<double> probs);

  const std::string& instance_id() const { return instance_id_; }
  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

 private:
  std::string instance_id_;
  std::vector<double> probs_;
};

struct Candidate {
  LabelSet set;
  double base_logprob = 0.0;
  std::optional<double> rerank_score;
  std::optional<double> combined_score;
};

struct OptimizerSettings {
  double step_size = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double stabilizer = 1e-8;
};

struct TrainSettings {
  OptimizerSettings optimizer;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

struct RerankConfig {
  std::size_t k = 50;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t n_orderings = 10;
  std::uint64_t seed = 0;
  TrainSettings train;

  /// Throws ConfigError when k or n_orderings is zero or alpha/beta are negative.
  void validate() const;
};

/// min(max(p, eps), 1 - eps). Throws InputError for non-finite p.
double clamp_probability(double p);

/// Natural-log probability of `set` under independent marginals.
double set_base_logprob(const MarginalPrediction& marginals, const LabelSet& set);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; callers write results by index so output is
/// independent of scheduling.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace setrank
