#include "setrank/masksa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace setrank {

MaskSaModel::MaskSaModel(LabelSpace space, const MaskSaConfig& config)
    : space_(std::move(space)), seed_(config.seed) {
  if (config.width == 0 || config.layers == 0) throw ConfigError("Mask-SA width and layers must be positive");
  if (config.heads == 0 || config.width % config.heads != 0) {
    throw ConfigError("Mask-SA width " + std::to_string(config.width) + " is not divisible by " +
                      std::to_string(config.heads) + " heads");
  }
  const std::size_t width = config.width;
  const std::size_t ff = config.resolved_ff_width();
  nn::ParamInitializer init(config.seed);

  embedding_.resize(static_cast<Eigen::Index>(space_.size() + 1), static_cast<Eigen::Index>(width));
  init.init_normal(embedding_, 0.02);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderBlock block{nn::LayerNorm(width), nn::AttentionWeights(width, config.heads), nn::LayerNorm(width),
                       nn::DenseLayer(width, ff), nn::DenseLayer(ff, width)};
    init.init_dense(block.attention.query);
    init.init_dense(block.attention.key);
    init.init_dense(block.attention.value);
    init.init_dense(block.attention.output);
    init.init_dense(block.ff_in);
    init.init_dense(block.ff_out);
    blocks_.push_back(std::move(block));
  }
  final_norm_ = nn::LayerNorm(width);
  head_ = nn::DenseLayer(width, space_.size());
  init.init_dense(head_);
}

std::vector<nn::ParamView> MaskSaModel::parameters() {
  std::vector<nn::ParamView> out;
  out.push_back({"embedding", nn::as_span(embedding_)});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string prefix = "block" + std::to_string(l);
    auto& b = blocks_[l];
    b.attn_norm.append_params(prefix + ".attn_norm", out);
    b.attention.append_params(prefix + ".attention", out);
    b.ff_norm.append_params(prefix + ".ff_norm", out);
    b.ff_in.append_params(prefix + ".ff_in", out);
    b.ff_out.append_params(prefix + ".ff_out", out);
  }
  final_norm_.append_params("final_norm", out);
  head_.append_params("head", out);
  return out;
}

MaskSaGrad::MaskSaGrad(const MaskSaModel& model)
    : embedding(nn::Matrix::Zero(model.embedding().rows(), model.embedding().cols())),
      final_norm(model.final_norm()),
      head(model.head()) {
  for (const auto& b : model.blocks()) {
    blocks.push_back(Block{nn::LayerNormGrad(b.attn_norm), nn::AttentionGrad(b.attention),
                           nn::LayerNormGrad(b.ff_norm), nn::DenseGrad(b.ff_in), nn::DenseGrad(b.ff_out)});
  }
}

void MaskSaGrad::zero() {
  embedding.setZero();
  for (auto& b : blocks) {
    b.attn_norm.zero();
    b.attention.zero();
    b.ff_norm.zero();
    b.ff_in.zero();
    b.ff_out.zero();
  }
  final_norm.zero();
  head.zero();
}

std::vector<nn::ParamView> MaskSaGrad::parameters() {
  std::vector<nn::ParamView> out;
  out.push_back({"embedding", nn::as_span(embedding)});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string prefix = "block" + std::to_string(l);
    auto& b = blocks[l];
    b.attn_norm.append_params(prefix + ".attn_norm", out);
    b.attention.append_params(prefix + ".attention", out);
    b.ff_norm.append_params(prefix + ".ff_norm", out);
    b.ff_in.append_params(prefix + ".ff_in", out);
    b.ff_out.append_params(prefix + ".ff_out", out);
  }
  final_norm.append_params("final_norm", out);
  head.append_params("head", out);
  return out;
}

namespace {

struct BlockCache {
  nn::Matrix input;
  nn::LayerNormCache attn_norm;
  nn::AttentionCache attention;
  nn::LayerNormCache ff_norm;
  nn::Matrix ff_input;
  nn::Matrix ff_pre;
  nn::Matrix ff_act;
};

struct EncoderCache {
  std::vector<BlockCache> blocks;
  nn::LayerNormCache final_norm;
  nn::Matrix final_out;
};

void check_tokens(const MaskSaModel& model, std::span<const std::uint32_t> tokens, std::size_t masked_slot) {
  if (tokens.empty()) throw InputError("Mask-SA input has no tokens");
  if (masked_slot >= tokens.size()) throw InputError("masked slot outside the token sequence");
  for (auto t : tokens) {
    if (t > model.mask_token()) throw InputError("token id " + std::to_string(t) + " outside vocabulary");
  }
}

// Encoder output rows after the final norm.
nn::Matrix encode(const MaskSaModel& model, std::span<const std::uint32_t> tokens, EncoderCache* cache) {
  nn::Matrix x(static_cast<Eigen::Index>(tokens.size()), model.embedding().cols());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    x.row(static_cast<Eigen::Index>(t)) = model.embedding().row(tokens[t]);
  }
  if (cache) cache->blocks.resize(model.blocks().size());
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    const auto& b = model.blocks()[l];
    BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
    if (bc) bc->input = x;
    const nn::Matrix a = nn::forward_layer_norm(b.attn_norm, x, bc ? &bc->attn_norm : nullptr);
    x += nn::attention_block(b.attention, a, a, a, bc ? &bc->attention : nullptr);
    nn::Matrix f = nn::forward_layer_norm(b.ff_norm, x, bc ? &bc->ff_norm : nullptr);
    nn::Matrix pre = nn::forward_dense_rows(b.ff_in, f);
    nn::Matrix act = pre.cwiseMax(0.0);
    x += nn::forward_dense_rows(b.ff_out, act);
    if (bc) {
      bc->ff_input = std::move(f);
      bc->ff_pre = std::move(pre);
      bc->ff_act = std::move(act);
    }
  }
  nn::Matrix out = nn::forward_layer_norm(model.final_norm(), x, cache ? &cache->final_norm : nullptr);
  if (cache) cache->final_out = out;
  return out;
}

}  // namespace

nn::Vector cloze_logits(const MaskSaModel& model, std::span<const std::uint32_t> tokens,
                        std::size_t masked_slot) {
  check_tokens(model, tokens, masked_slot);
  const nn::Matrix encoded = encode(model, tokens, nullptr);
  const nn::Matrix row = encoded.row(static_cast<Eigen::Index>(masked_slot));
  return nn::forward_dense_rows(model.head(), row).row(0).transpose();
}

nn::Vector masksa_cloze(const MaskSaModel& model, const LabelSet& set, std::uint32_t label) {
  set.check_within(model.label_count());
  if (!set.contains(label)) {
    throw InputError("label " + std::to_string(label) + " is not a member of the scored set");
  }
  std::vector<std::uint32_t> tokens(set.members().begin(), set.members().end());
  const auto slot = static_cast<std::size_t>(std::find(tokens.begin(), tokens.end(), label) - tokens.begin());
  tokens[slot] = model.mask_token();
  return nn::softmax(cloze_logits(model, tokens, slot));
}

double masksa_pll(const MaskSaModel& model, const LabelSet& set) {
  if (set.empty()) throw InputError("pseudo-log-likelihood is undefined for the empty set");
  set.check_within(model.label_count());
  std::vector<std::uint32_t> tokens(set.members().begin(), set.members().end());
  double total = 0.0;
  for (std::size_t slot = 0; slot < tokens.size(); ++slot) {
    const std::uint32_t label = tokens[slot];
    tokens[slot] = model.mask_token();
    total += nn::log_softmax(cloze_logits(model, tokens, slot))(label);
    tokens[slot] = label;
  }
  return total;
}

double r_msa(const MaskSaModel& model, const LabelSet& set, double beta) {
  if (set.empty()) return 0.0;
  return masksa_pll(model, set) / std::pow(static_cast<double>(set.size()), beta);
}

double cloze_loss(const MaskSaModel& model, std::span<const std::uint32_t> tokens, std::size_t masked_slot,
                  std::uint32_t target, MaskSaGrad* grad, double weight) {
  check_tokens(model, tokens, masked_slot);
  if (tokens[masked_slot] != model.mask_token()) throw InputError("masked slot does not hold the mask token");
  if (target >= model.label_count()) throw InputError("cloze target outside label space");

  EncoderCache cache;
  const nn::Matrix encoded = encode(model, tokens, grad ? &cache : nullptr);
  const auto slot = static_cast<Eigen::Index>(masked_slot);
  const nn::Matrix row = encoded.row(slot);
  const nn::Vector logits = nn::forward_dense_rows(model.head(), row).row(0).transpose();
  const nn::Vector log_probs = nn::log_softmax(logits);
  const double loss = -log_probs(target);
  if (!grad) return loss;

  nn::Vector grad_logits = log_probs.array().exp().matrix();
  grad_logits(target) -= 1.0;
  grad_logits *= weight;
  const nn::Matrix grad_row = nn::backward_dense_rows(model.head(), row, grad_logits.transpose(), grad->head);
  nn::Matrix grad_x = nn::Matrix::Zero(encoded.rows(), encoded.cols());
  grad_x.row(slot) = grad_row.row(0);
  grad_x = nn::backward_layer_norm(model.final_norm(), cache.final_norm, grad_x, grad->final_norm);

  for (std::size_t l = model.blocks().size(); l-- > 0;) {
    const auto& b = model.blocks()[l];
    const auto& bc = cache.blocks[l];
    auto& g = grad->blocks[l];
    nn::Matrix grad_act = nn::backward_dense_rows(b.ff_out, bc.ff_act, grad_x, g.ff_out);
    grad_act = grad_act.cwiseProduct((bc.ff_pre.array() > 0.0).cast<double>().matrix());
    const nn::Matrix grad_f = nn::backward_dense_rows(b.ff_in, bc.ff_input, grad_act, g.ff_in);
    grad_x += nn::backward_layer_norm(b.ff_norm, bc.ff_norm, grad_f, g.ff_norm);
    const auto grad_in = nn::backward_attention(b.attention, bc.attention, grad_x, g.attention);
    const nn::Matrix grad_a = grad_in.queries + grad_in.keys + grad_in.values;
    grad_x += nn::backward_layer_norm(b.attn_norm, bc.attn_norm, grad_a, g.attn_norm);
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    grad->embedding.row(tokens[t]) += grad_x.row(static_cast<Eigen::Index>(t));
  }
  return loss;
}

MaskSaTrainingResult train_masksa(std::span<const LabelSet> corpus, const LabelSpace& space,
                                  const MaskSaConfig& config) {
  if (config.train.batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpus[i].check_within(space.size());
    if (!corpus[i].empty()) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("Mask-SA training corpus has no non-empty label sets");

  MaskSaTrainingResult result{MaskSaModel(space, config), {}};
  MaskSaModel& model = result.model;
  MaskSaGrad grad(model);
  auto params = model.parameters();
  auto grad_views = grad.parameters();
  nn::AdamOptimizer optimizer(config.train.optimizer, params);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::uint32_t> tokens;
  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < usable.size(); start += config.train.batch_size) {
      const std::size_t stop = std::min(usable.size(), start + config.train.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      grad.zero();
      for (std::size_t b = start; b < stop; ++b) {
        const LabelSet& set = corpus[usable[b]];
        tokens.assign(set.members().begin(), set.members().end());
        std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
        const std::size_t slot = pick(rng);
        const std::uint32_t target = tokens[slot];
        tokens[slot] = model.mask_token();
        epoch_loss += cloze_loss(model, tokens, slot, target, &grad, weight);
      }
      optimizer.step(params, grad_views);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(usable.size()));
  }
  return result;
}

}  // namespace setrank
