#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "setrank/core.hpp"

namespace setrank {

/// One mixture component: independent Bernoulli labels.
struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> probs;
};

/// Correlated label sets with a known joint:
///   P(y) = Σ_c w_c Π_i p_ci^y_i (1 - p_ci)^(1 - y_i).
/// Each instance's evidence identifies the component it was drawn from, so
/// its true posterior marginals are that component's probabilities. The base
/// predictor sees those marginals perturbed by N(0, noise²) in logit space.
struct SyntheticSpec {
  std::size_t label_count = 8;
  std::vector<MixtureComponent> components;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::size_t train_size = 1000;
  std::size_t validation_size = 200;
  std::size_t test_size = 200;

  /// Throws ConfigError on inconsistent dimensions, non-positive weights or
  /// weights that do not sum to 1 (within 1e-9), or probabilities outside [0, 1].
  void validate() const;
};

inline constexpr std::size_t kMaxExactJointLabels = 20;

/// Components over disjoint label blocks: labels are shuffled and cut into
/// `components` contiguous blocks; component c gives its own block probability
/// `p_in` and every other label `p_out`. Weights are uniform.
SyntheticSpec block_mixture_spec(std::size_t label_count, std::size_t components, double p_in, double p_out,
                                 double noise, std::uint64_t seed, std::size_t train_size,
                                 std::size_t validation_size, std::size_t test_size);

struct SyntheticSplit {
  std::vector<std::string> ids;
  std::vector<LabelSet> gold;
  std::vector<MarginalPrediction> marginals;
  std::vector<std::size_t> component;
};

struct SyntheticDataset {
  LabelSpace space;
  SyntheticSplit train;
  SyntheticSplit validation;
  SyntheticSplit test;
  /// Indexed by bitmask (bit i = label i). Present when requested.
  std::optional<std::vector<double>> joint;
};

/// Codes "L0", "L1", ... for a synthetic vocabulary.
LabelSpace synthetic_label_space(std::size_t label_count);

/// P(y) for every y; throws CapabilityError above kMaxExactJointLabels labels.
std::vector<double> exact_joint(const SyntheticSpec& spec);

/// Bitwise reproducible for a fixed spec. With `with_joint`, a label count
/// above kMaxExactJointLabels throws CapabilityError.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec, bool with_joint = true);

}  // namespace setrank
