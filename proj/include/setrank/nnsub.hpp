#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "setrank/core.hpp"

// Small neural building blocks shared by the MADE and masked self-attention
// rerankers. Everything runs in double precision; batched activations are
// stored one row per example or token.

namespace setrank::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Named mutable window onto one parameter (or gradient) tensor.
struct ParamView {
  std::string name;
  std::span<double> values;
};

inline std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// y = (W ⊙ M) x + b. A zero mask entry removes the connection in both passes.
struct DenseLayer {
  Matrix weights;  // [out x in]
  Vector bias;     // [out]
  std::optional<Matrix> mask;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }

  Matrix effective_weights(const Matrix* mask_override = nullptr) const;
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct DenseGrad {
  Matrix weights;
  Vector bias;

  DenseGrad() = default;
  explicit DenseGrad(const DenseLayer& layer);
  void zero();
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

Vector forward_dense(const DenseLayer& layer, const Vector& input);

/// Row-batched forward: input [rows x in] -> [rows x out]. `mask_override`
/// replaces the layer's own mask when given.
Matrix forward_dense_rows(const DenseLayer& layer, const Matrix& input,
                          const Matrix* mask_override = nullptr);

/// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
/// Weight gradients are multiplied by the active mask, so masked entries are exactly zero.
Matrix backward_dense_rows(const DenseLayer& layer, const Matrix& input, const Matrix& grad_output,
                           DenseGrad& grad, const Matrix* mask_override = nullptr);

double sigmoid(double x);
/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);

Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);

inline constexpr double kLayerNormEpsilon = 1e-10;

/// Per-row normalization to zero mean and unit variance, then gain * x + shift.
struct LayerNorm {
  Vector gain;
  Vector shift;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct LayerNormGrad {
  Vector gain;
  Vector shift;

  LayerNormGrad() = default;
  explicit LayerNormGrad(const LayerNorm& norm);
  void zero();
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct LayerNormCache {
  Matrix normalized;  // pre-affine
  Vector inv_std;     // one per row
};

/// Pre-affine normalization only.
Matrix normalize_rows(const Matrix& input, LayerNormCache* cache = nullptr);
Matrix forward_layer_norm(const LayerNorm& norm, const Matrix& input, LayerNormCache* cache = nullptr);
Matrix backward_layer_norm(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& grad_output,
                           LayerNormGrad& grad);

/// Multi-head scaled dot-product attention with input and output projections.
/// Contains no position-dependent term, so it is equivariant under any
/// permutation of the query rows and invariant under a joint permutation of
/// key/value rows.
struct AttentionWeights {
  DenseLayer query;
  DenseLayer key;
  DenseLayer value;
  DenseLayer output;
  std::size_t heads = 1;

  AttentionWeights() = default;
  /// Throws ConfigError when width is not divisible by heads.
  AttentionWeights(std::size_t width, std::size_t heads);
  std::size_t width() const { return query.out_dim(); }
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct AttentionGrad {
  DenseGrad query;
  DenseGrad key;
  DenseGrad value;
  DenseGrad output;

  AttentionGrad() = default;
  explicit AttentionGrad(const AttentionWeights& weights);
  void zero();
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct AttentionCache {
  Matrix queries_in, keys_in, values_in;  // raw inputs
  Matrix q, k, v;                         // projected
  std::vector<Matrix> probs;              // per head, [queries x keys]
  Matrix concat;                          // heads concatenated, before output projection
};

/// queries [Tq x d], keys and values [Tk x d] -> [Tq x d].
Matrix attention_block(const AttentionWeights& weights, const Matrix& queries, const Matrix& keys,
                       const Matrix& values, AttentionCache* cache = nullptr);

struct AttentionInputGrads {
  Matrix queries, keys, values;
};

AttentionInputGrads backward_attention(const AttentionWeights& weights, const AttentionCache& cache,
                                       const Matrix& grad_output, AttentionGrad& grad);

/// Seeded parameter initialization.
class ParamInitializer {
 public:
  explicit ParamInitializer(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in ±sqrt(6 / (in + out)); bias zeroed.
  void init_dense(DenseLayer& layer);
  void init_normal(Matrix& m, double stddev);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Adam over a fixed list of parameter tensors.
class AdamOptimizer {
 public:
  AdamOptimizer(OptimizerSettings settings, const std::vector<ParamView>& params);

  /// params[i] -= step * mhat / (sqrt(vhat) + stabilizer), elementwise.
  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);

  std::uint64_t steps_taken() const { return steps_; }
  const OptimizerSettings& settings() const { return settings_; }

 private:
  OptimizerSettings settings_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t steps_ = 0;
};

struct GradCheckOptions {
  double step = 1e-4;
  /// Number of randomly sampled coordinates; 0 checks every coordinate.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error, for near-zero gradients.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Compares `analytic` against central differences of `loss`, perturbing
/// `params` in place (and restoring them). Relative error per coordinate is
/// |a - n| / max(|a|, |n|, floor). Throws NumericError on a non-finite loss.
GradCheckResult grad_check(const std::vector<ParamView>& params, const std::vector<ParamView>& analytic,
                           const std::function<double()>& loss, double tolerance,
                           const GradCheckOptions& options = {});

}  // namespace setrank::nn
