#include "setrank/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace setrank {

void SyntheticSpec::validate() const {
  if (label_count == 0) throw ConfigError("synthetic spec needs at least one label");
  if (components.empty()) throw ConfigError("synthetic spec needs at least one mixture component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ConfigError("mixture weights must be positive");
    if (c.probs.size() != label_count) throw ConfigError("component probability vector has the wrong length");
    for (double p : c.probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("component probability outside [0, 1]");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise level must be finite and >= 0");
}

SyntheticSpec block_mixture_spec(std::size_t label_count, std::size_t components, double p_in, double p_out,
                                 double noise, std::uint64_t seed, std::size_t train_size,
                                 std::size_t validation_size, std::size_t test_size) {
  if (components == 0 || components > label_count) {
    throw ConfigError("component count must be between 1 and the number of labels");
  }
  std::vector<std::size_t> labels(label_count);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(labels.begin(), labels.end(), rng);

  SyntheticSpec spec;
  spec.label_count = label_count;
  spec.noise = noise;
  spec.seed = seed;
  spec.train_size = train_size;
  spec.validation_size = validation_size;
  spec.test_size = test_size;
  for (std::size_t c = 0; c < components; ++c) {
    MixtureComponent component;
    component.weight = 1.0 / static_cast<double>(components);
    component.probs.assign(label_count, p_out);
    const std::size_t start = c * label_count / components;
    const std::size_t stop = (c + 1) * label_count / components;
    for (std::size_t b = start; b < stop; ++b) component.probs[labels[b]] = p_in;
    spec.components.push_back(std::move(component));
  }
  spec.validate();
  return spec;
}

LabelSpace synthetic_label_space(std::size_t label_count) {
  std::vector<std::string> codes;
  codes.reserve(label_count);
  for (std::size_t i = 0; i < label_count; ++i) codes.push_back("L" + std::to_string(i));
  return LabelSpace(std::move(codes));
}

std::vector<double> exact_joint(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.label_count > kMaxExactJointLabels) {
    throw CapabilityError("exact joint tables support at most " + std::to_string(kMaxExactJointLabels) +
                          " labels, got " + std::to_string(spec.label_count));
  }
  const std::size_t entries = std::size_t{1} << spec.label_count;
  std::vector<double> table(entries, 0.0);
  for (const auto& c : spec.components) {
    for (std::size_t mask = 0; mask < entries; ++mask) {
      double p = c.weight;
      for (std::size_t i = 0; i < spec.label_count; ++i) p *= (mask >> i & 1U) ? c.probs[i] : 1.0 - c.probs[i];
      table[mask] += p;
    }
  }
  return table;
}

namespace {

double noisy_marginal(double p, double noise, std::normal_distribution<double>& normal, std::mt19937_64& rng) {
  if (noise == 0.0) return p;
  const double clamped = std::min(std::max(p, kProbEpsilon), 1.0 - kProbEpsilon);
  const double logit = std::log(clamped) - std::log1p(-clamped) + noise * normal(rng);
  return 1.0 / (1.0 + std::exp(-logit));
}

SyntheticSplit sample_split(const SyntheticSpec& spec, const std::string& prefix, std::size_t count,
                            std::mt19937_64& rng) {
  std::vector<double> weights;
  for (const auto& c : spec.components) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticSplit split;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t c = pick(rng);
    const auto& probs = spec.components[c].probs;
    std::vector<std::uint32_t> members;
    std::vector<double> marginals(spec.label_count);
    for (std::size_t i = 0; i < spec.label_count; ++i) {
      if (unit(rng) < probs[i]) members.push_back(static_cast<std::uint32_t>(i));
      marginals[i] = noisy_marginal(probs[i], spec.noise, normal, rng);
    }
    std::string id = prefix + std::to_string(n);
    split.ids.push_back(id);
    split.gold.push_back(LabelSet::from_indices(std::move(members)));
    split.marginals.emplace_back(std::move(id), std::move(marginals));
    split.component.push_back(c);
  }
  return split;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec, bool with_joint) {
  spec.validate();
  if (with_joint && spec.label_count > kMaxExactJointLabels) {
    throw CapabilityError("exact joint tables support at most " + std::to_string(kMaxExactJointLabels) +
                          " labels, got " + std::to_string(spec.label_count));
  }
  std::mt19937_64 rng(spec.seed);
  SyntheticDataset data{synthetic_label_space(spec.label_count), {}, {}, {}, std::nullopt};
  data.train = sample_split(spec, "train", spec.train_size, rng);
  data.validation = sample_split(spec, "val", spec.validation_size, rng);
  data.test = sample_split(spec, "test", spec.test_size, rng);
  if (with_joint) data.joint = exact_joint(spec);
  return data;
}

}  // namespace setrank
