#include "setrank/made.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace setrank {

Ordering::Ordering(std::vector<std::uint32_t> position) : position_(std::move(position)) {
  std::vector<bool> seen(position_.size(), false);
  for (auto p : position_) {
    if (p >= position_.size() || seen[p]) throw InputError("ordering is not a permutation");
    seen[p] = true;
  }
}

MadeModel::MadeModel(LabelSpace space, const MadeConfig& config, ParamInit init)
    : space_(std::move(space)), seed_(config.seed) {
  if (config.hidden == 0) throw ConfigError("MADE hidden width must be at least 1");
  if (config.n_orderings == 0) throw ConfigError("MADE needs at least one ordering");
  const std::size_t labels = space_.size();
  input_layer_ = nn::DenseLayer(labels, config.hidden);
  output_layer_ = nn::DenseLayer(config.hidden, labels);

  nn::ParamInitializer initializer(config.seed);
  if (init == ParamInit::kRandom) {
    initializer.init_dense(input_layer_);
    initializer.init_dense(output_layer_);
  }
  auto& rng = initializer.engine();
  const auto max_connectivity = static_cast<std::uint32_t>(labels >= 2 ? labels - 2 : 0);
  std::uniform_int_distribution<std::uint32_t> connect(0, max_connectivity);
  for (std::size_t j = 0; j < config.n_orderings; ++j) {
    std::vector<std::uint32_t> position(labels);
    std::iota(position.begin(), position.end(), 0U);
    std::shuffle(position.begin(), position.end(), rng);
    orderings_.emplace_back(std::move(position));
    std::vector<std::uint32_t> m(config.hidden);
    for (auto& value : m) value = connect(rng);
    connectivity_.push_back(std::move(m));
  }
  build_masks();
}

MadeModel::MadeModel(LabelSpace space, std::uint64_t seed, std::vector<Ordering> orderings,
                     std::vector<std::vector<std::uint32_t>> connectivity, nn::DenseLayer input_layer,
                     nn::DenseLayer output_layer)
    : space_(std::move(space)),
      seed_(seed),
      orderings_(std::move(orderings)),
      connectivity_(std::move(connectivity)),
      input_layer_(std::move(input_layer)),
      output_layer_(std::move(output_layer)) {
  const std::size_t labels = space_.size();
  if (orderings_.empty() || orderings_.size() != connectivity_.size()) {
    throw InputError("MADE needs one connectivity vector per ordering");
  }
  if (input_layer_.in_dim() != labels || output_layer_.out_dim() != labels ||
      output_layer_.in_dim() != input_layer_.out_dim()) {
    throw InputError("MADE layer shapes do not match the label space");
  }
  for (std::size_t j = 0; j < orderings_.size(); ++j) {
    if (orderings_[j].size() != labels) throw InputError("ordering length does not match label space");
    if (connectivity_[j].size() != hidden()) throw InputError("connectivity length does not match hidden width");
  }
  build_masks();
}

void MadeModel::build_masks() {
  const auto labels = static_cast<Eigen::Index>(label_count());
  const auto width = static_cast<Eigen::Index>(hidden());
  input_masks_.clear();
  output_masks_.clear();
  for (std::size_t j = 0; j < orderings_.size(); ++j) {
    const auto& o = orderings_[j];
    const auto& m = connectivity_[j];
    nn::Matrix in_mask(width, labels);
    nn::Matrix out_mask(labels, width);
    for (Eigen::Index h = 0; h < width; ++h) {
      for (Eigen::Index i = 0; i < labels; ++i) {
        in_mask(h, i) = m[h] >= o.position(i) ? 1.0 : 0.0;
        out_mask(i, h) = o.position(i) > m[h] ? 1.0 : 0.0;
      }
    }
    input_masks_.push_back(std::move(in_mask));
    output_masks_.push_back(std::move(out_mask));
  }
}

std::vector<nn::ParamView> MadeModel::parameters() {
  std::vector<nn::ParamView> out;
  input_layer_.append_params("input", out);
  output_layer_.append_params("output", out);
  return out;
}

nn::Matrix MadeModel::logits(std::size_t j, const nn::Matrix& inputs) const {
  const nn::Matrix hidden_pre = nn::forward_dense_rows(input_layer_, inputs, &input_mask(j));
  const nn::Matrix hidden_act = hidden_pre.cwiseMax(0.0);
  return nn::forward_dense_rows(output_layer_, hidden_act, &output_mask(j));
}

nn::Matrix to_dense_rows(std::span<const LabelSet> sets, std::size_t label_count) {
  nn::Matrix rows = nn::Matrix::Zero(static_cast<Eigen::Index>(sets.size()),
                                     static_cast<Eigen::Index>(label_count));
  for (std::size_t r = 0; r < sets.size(); ++r) {
    sets[r].check_within(label_count);
    for (auto m : sets[r].members()) rows(static_cast<Eigen::Index>(r), m) = 1.0;
  }
  return rows;
}

nn::Vector made_conditionals(const MadeModel& model, std::size_t ordering, const LabelSet& set) {
  const nn::Matrix logits = model.logits(ordering, to_dense_rows({&set, 1}, model.label_count()));
  nn::Vector out(logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) out(i) = nn::sigmoid(logits(0, i));
  return out;
}

namespace {

// Row r: Σ_i log P(y_i = x_ri) from logits.
nn::Vector row_log_likelihoods(const nn::Matrix& logits, const nn::Matrix& inputs) {
  nn::Vector out = nn::Vector::Zero(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      const double l = logits(r, i);
      total += inputs(r, i) > 0.5 ? nn::log_sigmoid(l) : nn::log_sigmoid(-l);
    }
    out(r) = total;
  }
  return out;
}

}  // namespace

double made_ordering_log_joint(const MadeModel& model, std::size_t ordering, const LabelSet& set) {
  const nn::Matrix inputs = to_dense_rows({&set, 1}, model.label_count());
  return row_log_likelihoods(model.logits(ordering, inputs), inputs)(0);
}

std::vector<double> made_log_joint_batch(const MadeModel& model, std::span<const LabelSet> sets) {
  const nn::Matrix inputs = to_dense_rows(sets, model.label_count());
  const auto rows = static_cast<Eigen::Index>(sets.size());
  const auto n = static_cast<Eigen::Index>(model.n_orderings());
  nn::Matrix per_ordering(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    per_ordering.col(j) = row_log_likelihoods(model.logits(static_cast<std::size_t>(j), inputs), inputs);
  }
  std::vector<double> out(sets.size());
  const double log_n = std::log(static_cast<double>(n));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double top = per_ordering.row(r).maxCoeff();
    out[static_cast<std::size_t>(r)] =
        top + std::log((per_ordering.row(r).array() - top).exp().sum()) - log_n;
  }
  return out;
}

double made_log_joint(const MadeModel& model, const LabelSet& set) {
  return made_log_joint_batch(model, {&set, 1}).front();
}

double r_made(const MadeModel& model, const LabelSet& set, double beta) {
  const double log_joint = made_log_joint(model, set);
  if (set.empty()) return log_joint;
  return log_joint / std::pow(static_cast<double>(set.size()), beta);
}

MadeGrad::MadeGrad(const MadeModel& model) : input(model.input_layer()), output(model.output_layer()) {}

void MadeGrad::zero() {
  input.zero();
  output.zero();
}

std::vector<nn::ParamView> MadeGrad::parameters() {
  std::vector<nn::ParamView> out;
  input.append_params("input", out);
  output.append_params("output", out);
  return out;
}

double made_loss(const MadeModel& model, std::size_t ordering, const nn::Matrix& batch, MadeGrad* grad) {
  const nn::Matrix& in_mask = model.input_mask(ordering);
  const nn::Matrix& out_mask = model.output_mask(ordering);
  const nn::Matrix hidden_pre = nn::forward_dense_rows(model.input_layer(), batch, &in_mask);
  const nn::Matrix hidden_act = hidden_pre.cwiseMax(0.0);
  const nn::Matrix logits = nn::forward_dense_rows(model.output_layer(), hidden_act, &out_mask);

  const double count = static_cast<double>(batch.rows() * batch.cols());
  const double loss = -row_log_likelihoods(logits, batch).sum() / count;
  if (!grad) return loss;

  nn::Matrix grad_logits(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      grad_logits(r, i) = (nn::sigmoid(logits(r, i)) - batch(r, i)) / count;
    }
  }
  nn::Matrix grad_hidden =
      nn::backward_dense_rows(model.output_layer(), hidden_act, grad_logits, grad->output, &out_mask);
  grad_hidden = grad_hidden.cwiseProduct((hidden_pre.array() > 0.0).cast<double>().matrix());
  nn::backward_dense_rows(model.input_layer(), batch, grad_hidden, grad->input, &in_mask);
  return loss;
}

MadeTrainingResult train_made(std::span<const LabelSet> corpus, const LabelSpace& space,
                              const MadeConfig& config) {
  if (corpus.empty()) throw InputError("MADE training corpus is empty");
  if (config.train.batch_size == 0) throw ConfigError("batch size must be at least 1");
  for (const auto& set : corpus) set.check_within(space.size());

  MadeTrainingResult result{MadeModel(space, config), {}};
  MadeModel& model = result.model;
  MadeGrad grad(model);
  auto params = model.parameters();
  auto grad_views = grad.parameters();
  nn::AdamOptimizer optimizer(config.train.optimizer, params);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabelSet> batch_sets;
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.train.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.train.batch_size);
      batch_sets.clear();
      for (std::size_t b = start; b < stop; ++b) batch_sets.push_back(corpus[order[b]]);
      const nn::Matrix batch = to_dense_rows(batch_sets, space.size());
      grad.zero();
      const std::size_t j = batch_counter++ % model.n_orderings();
      epoch_loss += made_loss(model, j, batch, &grad) * static_cast<double>(stop - start);
      optimizer.step(params, grad_views);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

}  // namespace setrank
