#include "setrank/nnsub.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace setrank::nn {

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weights(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias(Vector::Zero(static_cast<Eigen::Index>(out))) {}

Matrix DenseLayer::effective_weights(const Matrix* mask_override) const {
  const Matrix* active = mask_override ? mask_override : (mask ? &*mask : nullptr);
  if (!active) return weights;
  if (active->rows() != weights.rows() || active->cols() != weights.cols()) {
    throw InputError("mask shape does not match dense layer weights");
  }
  return weights.cwiseProduct(*active);
}

void DenseLayer::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".weights", as_span(weights)});
  out.push_back({prefix + ".bias", as_span(bias)});
}

DenseGrad::DenseGrad(const DenseLayer& layer)
    : weights(Matrix::Zero(layer.weights.rows(), layer.weights.cols())),
      bias(Vector::Zero(layer.bias.size())) {}

void DenseGrad::zero() {
  weights.setZero();
  bias.setZero();
}

void DenseGrad::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".weights", as_span(weights)});
  out.push_back({prefix + ".bias", as_span(bias)});
}

Vector forward_dense(const DenseLayer& layer, const Vector& input) {
  if (static_cast<std::size_t>(input.size()) != layer.in_dim()) {
    throw InputError("dense input has length " + std::to_string(input.size()) + ", expected " +
                     std::to_string(layer.in_dim()));
  }
  return layer.effective_weights() * input + layer.bias;
}

Matrix forward_dense_rows(const DenseLayer& layer, const Matrix& input, const Matrix* mask_override) {
  if (static_cast<std::size_t>(input.cols()) != layer.in_dim()) {
    throw InputError("dense input has width " + std::to_string(input.cols()) + ", expected " +
                     std::to_string(layer.in_dim()));
  }
  // Coefficient-wise product: each output row is independent of the batch shape.
  Matrix out = input.lazyProduct(layer.effective_weights(mask_override).transpose());
  out.rowwise() += layer.bias.transpose();
  return out;
}

Matrix backward_dense_rows(const DenseLayer& layer, const Matrix& input, const Matrix& grad_output,
                           DenseGrad& grad, const Matrix* mask_override) {
  const Matrix* active = mask_override ? mask_override : (layer.mask ? &*layer.mask : nullptr);
  Matrix weight_grad = grad_output.transpose() * input;
  if (active) weight_grad = weight_grad.cwiseProduct(*active);
  grad.weights += weight_grad;
  grad.bias += grad_output.colwise().sum().transpose();
  return grad_output * layer.effective_weights(mask_override);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Vector softmax(const Vector& logits) {
  Vector shifted = (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

Vector log_softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  const double log_norm = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - log_norm).matrix();
}

LayerNorm::LayerNorm(std::size_t width)
    : gain(Vector::Ones(static_cast<Eigen::Index>(width))),
      shift(Vector::Zero(static_cast<Eigen::Index>(width))) {}

void LayerNorm::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".gain", as_span(gain)});
  out.push_back({prefix + ".shift", as_span(shift)});
}

LayerNormGrad::LayerNormGrad(const LayerNorm& norm)
    : gain(Vector::Zero(norm.gain.size())), shift(Vector::Zero(norm.shift.size())) {}

void LayerNormGrad::zero() {
  gain.setZero();
  shift.setZero();
}

void LayerNormGrad::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".gain", as_span(gain)});
  out.push_back({prefix + ".shift", as_span(shift)});
}

Matrix normalize_rows(const Matrix& input, LayerNormCache* cache) {
  const auto width = static_cast<double>(input.cols());
  Matrix out(input.rows(), input.cols());
  Vector inv_std(input.rows());
  for (Eigen::Index r = 0; r < input.rows(); ++r) {
    const double mean = input.row(r).sum() / width;
    const RowVector centered = input.row(r).array() - mean;
    const double variance = centered.squaredNorm() / width;
    inv_std(r) = 1.0 / std::sqrt(variance + kLayerNormEpsilon);
    out.row(r) = centered * inv_std(r);
  }
  if (cache) {
    cache->normalized = out;
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Matrix forward_layer_norm(const LayerNorm& norm, const Matrix& input, LayerNormCache* cache) {
  Matrix out = normalize_rows(input, cache);
  out = out.array().rowwise() * norm.gain.transpose().array();
  out.rowwise() += norm.shift.transpose();
  return out;
}

Matrix backward_layer_norm(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& grad_output,
                           LayerNormGrad& grad) {
  grad.gain += grad_output.cwiseProduct(cache.normalized).colwise().sum().transpose();
  grad.shift += grad_output.colwise().sum().transpose();
  const Matrix grad_norm = grad_output.array().rowwise() * norm.gain.transpose().array();
  const auto width = static_cast<double>(grad_output.cols());
  Matrix grad_input(grad_output.rows(), grad_output.cols());
  for (Eigen::Index r = 0; r < grad_output.rows(); ++r) {
    const double mean_grad = grad_norm.row(r).sum() / width;
    const double mean_dot = grad_norm.row(r).dot(cache.normalized.row(r)) / width;
    grad_input.row(r) =
        cache.inv_std(r) *
        (grad_norm.row(r).array() - mean_grad - cache.normalized.row(r).array() * mean_dot).matrix();
  }
  return grad_input;
}

AttentionWeights::AttentionWeights(std::size_t width, std::size_t heads_)
    : query(width, width), key(width, width), value(width, width), output(width, width), heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

void AttentionWeights::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  query.append_params(prefix + ".query", out);
  key.append_params(prefix + ".key", out);
  value.append_params(prefix + ".value", out);
  output.append_params(prefix + ".output", out);
}

AttentionGrad::AttentionGrad(const AttentionWeights& weights)
    : query(weights.query), key(weights.key), value(weights.value), output(weights.output) {}

void AttentionGrad::zero() {
  query.zero();
  key.zero();
  value.zero();
  output.zero();
}

void AttentionGrad::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  query.append_params(prefix + ".query", out);
  key.append_params(prefix + ".key", out);
  value.append_params(prefix + ".value", out);
  output.append_params(prefix + ".output", out);
}

Matrix attention_block(const AttentionWeights& weights, const Matrix& queries, const Matrix& keys,
                       const Matrix& values, AttentionCache* cache) {
  const std::size_t width = weights.width();
  if (weights.heads == 0 || width % weights.heads != 0) {
    throw ConfigError("attention width is not divisible by the number of heads");
  }
  if (keys.rows() != values.rows()) throw InputError("attention keys and values differ in length");
  const auto head_dim = static_cast<Eigen::Index>(width / weights.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix q = forward_dense_rows(weights.query, queries);
  Matrix k = forward_dense_rows(weights.key, keys);
  Matrix v = forward_dense_rows(weights.value, values);
  Matrix concat(queries.rows(), static_cast<Eigen::Index>(width));
  std::vector<Matrix> probs;
  probs.reserve(weights.heads);

  for (std::size_t h = 0; h < weights.heads; ++h) {
    const Eigen::Index col = static_cast<Eigen::Index>(h) * head_dim;
    Matrix scores = q.middleCols(col, head_dim) * k.middleCols(col, head_dim).transpose() * scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      scores.row(r) = softmax(scores.row(r).transpose()).transpose();
    }
    concat.middleCols(col, head_dim) = scores * v.middleCols(col, head_dim);
    probs.push_back(std::move(scores));
  }
  Matrix out = forward_dense_rows(weights.output, concat);
  if (cache) {
    cache->queries_in = queries;
    cache->keys_in = keys;
    cache->values_in = values;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

AttentionInputGrads backward_attention(const AttentionWeights& weights, const AttentionCache& cache,
                                       const Matrix& grad_output, AttentionGrad& grad) {
  const auto head_dim = static_cast<Eigen::Index>(weights.width() / weights.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Matrix grad_concat = backward_dense_rows(weights.output, cache.concat, grad_output, grad.output);
  Matrix grad_q = Matrix::Zero(cache.q.rows(), cache.q.cols());
  Matrix grad_k = Matrix::Zero(cache.k.rows(), cache.k.cols());
  Matrix grad_v = Matrix::Zero(cache.v.rows(), cache.v.cols());

  for (std::size_t h = 0; h < weights.heads; ++h) {
    const Eigen::Index col = static_cast<Eigen::Index>(h) * head_dim;
    const Matrix& p = cache.probs[h];
    const Matrix grad_head = grad_concat.middleCols(col, head_dim);
    grad_v.middleCols(col, head_dim) = p.transpose() * grad_head;
    const Matrix grad_p = grad_head * cache.v.middleCols(col, head_dim).transpose();
    const Vector row_dot = grad_p.cwiseProduct(p).rowwise().sum();
    const Matrix grad_scores = p.cwiseProduct(grad_p.colwise() - row_dot) * scale;
    grad_q.middleCols(col, head_dim) = grad_scores * cache.k.middleCols(col, head_dim);
    grad_k.middleCols(col, head_dim) = grad_scores.transpose() * cache.q.middleCols(col, head_dim);
  }

  AttentionInputGrads out;
  out.queries = backward_dense_rows(weights.query, cache.queries_in, grad_q, grad.query);
  out.keys = backward_dense_rows(weights.key, cache.keys_in, grad_k, grad.key);
  out.values = backward_dense_rows(weights.value, cache.values_in, grad_v, grad.value);
  return out;
}

void ParamInitializer::init_dense(DenseLayer& layer) {
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(engine_);
  layer.bias.setZero();
}

void ParamInitializer::init_normal(Matrix& m, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(engine_);
}

AdamOptimizer::AdamOptimizer(OptimizerSettings settings, const std::vector<ParamView>& params)
    : settings_(settings) {
  first_.reserve(params.size());
  second_.reserve(params.size());
  for (const auto& p : params) {
    first_.emplace_back(p.values.size(), 0.0);
    second_.emplace_back(p.values.size(), 0.0);
  }
}

void AdamOptimizer::step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
  if (params.size() != first_.size() || grads.size() != first_.size()) {
    throw InputError("optimizer parameter list changed shape");
  }
  ++steps_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].values;
    auto g = grads[t].values;
    auto& m = first_[t];
    auto& v = second_[t];
    if (g.size() != values.size() || m.size() != values.size()) {
      throw InputError("gradient shape mismatch for " + params[t].name);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      values[i] -= settings_.step_size * mhat / (std::sqrt(vhat) + settings_.stabilizer);
    }
  }
}

GradCheckResult grad_check(const std::vector<ParamView>& params, const std::vector<ParamView>& analytic,
                           const std::function<double()>& loss, double tolerance,
                           const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw InputError("gradient list does not match parameter list");
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != analytic[t].values.size()) {
      throw InputError("gradient shape mismatch for " + params[t].name);
    }
    for (std::size_t i = 0; i < params[t].values.size(); ++i) coords.emplace_back(t, i);
  }
  if (options.samples > 0 && options.samples < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
  }

  auto checked_loss = [&] {
    const double value = loss();
    if (!std::isfinite(value)) throw NumericError("loss is not finite during gradient check");
    return value;
  };

  GradCheckResult result;
  for (const auto& [t, i] : coords) {
    double& slot = params[t].values[i];
    const double saved = slot;
    slot = saved + options.step;
    const double plus = checked_loss();
    slot = saved - options.step;
    const double minus = checked_loss();
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic[t].values[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.checked;
  }
  result.passed = result.max_relative_error <= tolerance;
  return result;
}

}  // namespace setrank::nn
