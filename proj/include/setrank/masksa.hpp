#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "setrank/core.hpp"
#include "setrank/nnsub.hpp"

namespace setrank {

struct MaskSaConfig {
  std::size_t width = 256;
  std::size_t layers = 6;
  std::size_t heads = 8;
  /// Feed-forward inner width; 0 selects 4 * width.
  std::size_t ff_width = 0;
  std::uint64_t seed = 0;
  TrainSettings train;

  std::size_t resolved_ff_width() const { return ff_width == 0 ? 4 * width : ff_width; }
};

/// Pre-norm encoder block: x += attn(LN1(x)); x += FF(LN2(x)).
struct EncoderBlock {
  nn::LayerNorm attn_norm;
  nn::AttentionWeights attention;
  nn::LayerNorm ff_norm;
  nn::DenseLayer ff_in;
  nn::DenseLayer ff_out;
};

/// Transformer encoder over an unordered multiset of label tokens. There is
/// no positional term anywhere, so outputs depend only on the token multiset.
/// Token ids are label indices, plus mask_token() == |Y| for the cloze slot.
class MaskSaModel {
 public:
  MaskSaModel(LabelSpace space, const MaskSaConfig& config);

  const LabelSpace& space() const { return space_; }
  std::size_t label_count() const { return space_.size(); }
  std::uint32_t mask_token() const { return static_cast<std::uint32_t>(space_.size()); }
  std::size_t width() const { return static_cast<std::size_t>(embedding_.cols()); }
  std::size_t layer_count() const { return blocks_.size(); }
  std::size_t heads() const { return blocks_.empty() ? 1 : blocks_.front().attention.heads; }
  std::size_t ff_width() const { return blocks_.empty() ? 0 : blocks_.front().ff_in.out_dim(); }
  std::uint64_t seed() const { return seed_; }

  nn::Matrix& embedding() { return embedding_; }
  const nn::Matrix& embedding() const { return embedding_; }
  std::vector<EncoderBlock>& blocks() { return blocks_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }
  nn::LayerNorm& final_norm() { return final_norm_; }
  const nn::LayerNorm& final_norm() const { return final_norm_; }
  nn::DenseLayer& head() { return head_; }
  const nn::DenseLayer& head() const { return head_; }

  /// Stable order used by optimizers and checkpoints.
  std::vector<nn::ParamView> parameters();

 private:
  LabelSpace space_;
  std::uint64_t seed_ = 0;
  nn::Matrix embedding_;  // [(|Y| + 1) x width]
  std::vector<EncoderBlock> blocks_;
  nn::LayerNorm final_norm_;
  nn::DenseLayer head_;  // width -> |Y|
};

/// Logits over the label vocabulary at `masked_slot` of an arbitrary token sequence.
nn::Vector cloze_logits(const MaskSaModel& model, std::span<const std::uint32_t> tokens,
                        std::size_t masked_slot);

/// P_MSA(label | set - {label}): encodes the set with `label` replaced by the
/// mask token and returns the softmax at that slot. Throws InputError if
/// `label` is not in `set`.
nn::Vector masksa_cloze(const MaskSaModel& model, const LabelSet& set, std::uint32_t label);

/// Σ over members of log P_MSA(member | rest). Throws InputError on an empty set.
double masksa_pll(const MaskSaModel& model, const LabelSet& set);

/// masksa_pll / |y|^beta, and 0 for the empty set.
double r_msa(const MaskSaModel& model, const LabelSet& set, double beta);

class MaskSaGrad {
 public:
  explicit MaskSaGrad(const MaskSaModel& model);
  void zero();
  std::vector<nn::ParamView> parameters();

  nn::Matrix embedding;
  struct Block {
    nn::LayerNormGrad attn_norm;
    nn::AttentionGrad attention;
    nn::LayerNormGrad ff_norm;
    nn::DenseGrad ff_in;
    nn::DenseGrad ff_out;
  };
  std::vector<Block> blocks;
  nn::LayerNormGrad final_norm;
  nn::DenseGrad head;
};

/// Cross-entropy of predicting `target` at `masked_slot` (which must hold the
/// mask token). Gradients are accumulated into `grad`, scaled by `weight`.
double cloze_loss(const MaskSaModel& model, std::span<const std::uint32_t> tokens, std::size_t masked_slot,
                  std::uint32_t target, MaskSaGrad* grad = nullptr, double weight = 1.0);

struct MaskSaTrainingResult {
  MaskSaModel model;
  std::vector<double> epoch_losses;
};

/// Each step masks one uniformly drawn member of every set in the minibatch
/// and minimizes the mean cloze cross-entropy. Empty sets are skipped; a
/// corpus with no non-empty set throws InputError.
MaskSaTrainingResult train_masksa(std::span<const LabelSet> corpus, const LabelSpace& space,
                                  const MaskSaConfig& config);

}  // namespace setrank
