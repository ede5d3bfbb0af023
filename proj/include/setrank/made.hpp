#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "setrank/core.hpp"
#include "setrank/nnsub.hpp"

namespace setrank {

/// An autoregressive order over labels: position(i) is label i's place in the order.
class Ordering {
 public:
  /// Throws InputError unless `position` is a permutation of [0, n).
  explicit Ordering(std::vector<std::uint32_t> position);

  std::uint32_t position(std::size_t label) const { return position_[label]; }
  std::span<const std::uint32_t> positions() const { return position_; }
  std::size_t size() const { return position_.size(); }

  bool operator==(const Ordering&) const = default;

 private:
  std::vector<std::uint32_t> position_;
};

struct MadeConfig {
  std::size_t hidden = 500;
  std::size_t n_orderings = 10;
  std::uint64_t seed = 0;
  TrainSettings train;
};

enum class ParamInit { kRandom, kZero };

/// One-hidden-layer MADE over binary label vectors. A single set of weights is
/// shared by all orderings; each ordering only contributes its pair of masks.
///
/// For ordering j, hidden unit h carries connectivity m(h) in [0, |Y|-2].
/// Input i' feeds h iff m(h) >= o(i'), and h feeds output i iff o(i) > m(h),
/// so output i sees exactly the inputs that precede it in o.
class MadeModel {
 public:
  /// Draws weights (unless kZero), orderings and connectivity from `config.seed`.
  MadeModel(LabelSpace space, const MadeConfig& config, ParamInit init = ParamInit::kRandom);

  /// Reassembles a model from stored parts; masks are rebuilt from the orderings.
  MadeModel(LabelSpace space, std::uint64_t seed, std::vector<Ordering> orderings,
            std::vector<std::vector<std::uint32_t>> connectivity, nn::DenseLayer input_layer,
            nn::DenseLayer output_layer);

  const LabelSpace& space() const { return space_; }
  std::size_t label_count() const { return space_.size(); }
  std::size_t hidden() const { return input_layer_.out_dim(); }
  std::size_t n_orderings() const { return orderings_.size(); }
  std::uint64_t seed() const { return seed_; }

  const Ordering& ordering(std::size_t j) const { return orderings_.at(j); }
  std::span<const std::uint32_t> connectivity(std::size_t j) const { return connectivity_.at(j); }
  const nn::Matrix& input_mask(std::size_t j) const { return input_masks_.at(j); }
  const nn::Matrix& output_mask(std::size_t j) const { return output_masks_.at(j); }

  const nn::DenseLayer& input_layer() const { return input_layer_; }
  const nn::DenseLayer& output_layer() const { return output_layer_; }
  nn::DenseLayer& input_layer() { return input_layer_; }
  nn::DenseLayer& output_layer() { return output_layer_; }

  std::vector<nn::ParamView> parameters();

  /// Output logits for ordering j on a batch of dense label vectors, one row each.
  nn::Matrix logits(std::size_t j, const nn::Matrix& inputs) const;

 private:
  void build_masks();

  LabelSpace space_;
  std::uint64_t seed_ = 0;
  std::vector<Ordering> orderings_;
  std::vector<std::vector<std::uint32_t>> connectivity_;
  std::vector<nn::Matrix> input_masks_;
  std::vector<nn::Matrix> output_masks_;
  nn::DenseLayer input_layer_;
  nn::DenseLayer output_layer_;
};

/// Dense batch of label vectors, one row per set.
nn::Matrix to_dense_rows(std::span<const LabelSet> sets, std::size_t label_count);

/// Entry i is P(y_i = 1 | labels preceding i under ordering j).
nn::Vector made_conditionals(const MadeModel& model, std::size_t ordering, const LabelSet& set);

/// log Π_i P(y_i = ŷ_i | ŷ_{o_j < i}) under a single ordering.
double made_ordering_log_joint(const MadeModel& model, std::size_t ordering, const LabelSet& set);

/// Log of the mean joint probability over all orderings (log-sum-exp minus log n).
double made_log_joint(const MadeModel& model, const LabelSet& set);
std::vector<double> made_log_joint_batch(const MadeModel& model, std::span<const LabelSet> sets);

/// made_log_joint / |y|^beta; the empty set is returned unscaled.
double r_made(const MadeModel& model, const LabelSet& set, double beta);

struct MadeGrad {
  nn::DenseGrad input;
  nn::DenseGrad output;

  explicit MadeGrad(const MadeModel& model);
  void zero();
  std::vector<nn::ParamView> parameters();
};

/// Mean binary cross-entropy over all outputs and batch rows for ordering j.
/// Gradients are accumulated into `grad` when given.
double made_loss(const MadeModel& model, std::size_t ordering, const nn::Matrix& batch,
                 MadeGrad* grad = nullptr);

struct MadeTrainingResult {
  MadeModel model;
  std::vector<double> epoch_losses;
};

/// Minibatch Adam on mean BCE. Minibatch b uses ordering b mod n. Throws
/// InputError on an empty corpus.
MadeTrainingResult train_made(std::span<const LabelSet> corpus, const LabelSpace& space,
                              const MadeConfig& config);

}  // namespace setrank
