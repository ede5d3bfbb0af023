#include "setrank/core.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace setrank {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

LabelSpace::LabelSpace(std::vector<std::string> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw InputError("label space must contain at least one code");
  std::string joined;
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    const auto& code = codes_[i];
    if (code.empty()) throw InputError("empty label code at index " + std::to_string(i));
    if (code.find_first_of(" \t\r\n") != std::string::npos) {
      throw InputError("label code contains whitespace: '" + code + "'");
    }
    if (!index_.emplace(code, static_cast<std::uint32_t>(i)).second) {
      throw InputError("duplicate label code: " + code);
    }
    joined += code;
    joined += '\n';
  }
  digest_ = sha256_hex(joined);
}

std::optional<std::uint32_t> LabelSpace::find(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t LabelSpace::index_of(std::string_view code) const {
  if (auto found = find(code)) return *found;
  throw InputError("unknown label code: " + std::string(code));
}

LabelSet LabelSet::from_indices(std::vector<std::uint32_t> indices) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw InputError("label set contains duplicate indices");
  }
  LabelSet set;
  set.members_ = std::move(indices);
  return set;
}

LabelSet LabelSet::from_dense(std::span<const std::uint8_t> bits) {
  LabelSet set;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) set.members_.push_back(static_cast<std::uint32_t>(i));
  }
  return set;
}

LabelSet LabelSet::from_mask(std::uint64_t mask, std::size_t label_count) {
  if (label_count > 64) throw CapabilityError("bitmask sets support at most 64 labels");
  LabelSet set;
  for (std::size_t i = 0; i < label_count; ++i) {
    if (mask >> i & 1U) set.members_.push_back(static_cast<std::uint32_t>(i));
  }
  return set;
}

bool LabelSet::contains(std::uint32_t index) const {
  return std::binary_search(members_.begin(), members_.end(), index);
}

std::vector<std::uint8_t> LabelSet::to_dense(std::size_t label_count) const {
  check_within(label_count);
  std::vector<std::uint8_t> bits(label_count, 0);
  for (auto m : members_) bits[m] = 1;
  return bits;
}

std::uint64_t LabelSet::to_mask() const {
  std::uint64_t mask = 0;
  for (auto m : members_) {
    if (m >= 64) throw CapabilityError("bitmask sets support at most 64 labels");
    mask |= std::uint64_t{1} << m;
  }
  return mask;
}

void LabelSet::check_within(std::size_t label_count) const {
  if (!members_.empty() && members_.back() >= label_count) {
    throw InputError("label index " + std::to_string(members_.back()) +
                     " outside label space of size " + std::to_string(label_count));
  }
}

MarginalPrediction::MarginalPrediction(std::string instance_id, std::vector<double> probs)
    : instance_id_(std::move(instance_id)), probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("marginal prediction has no labels");
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InputError("probability for label " + std::to_string(i) + " of instance '" +
                       instance_id_ + "' is outside [0, 1]");
    }
    probs_[i] = clamp_probability(p);
  }
}

void RerankConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (n_orderings == 0) throw ConfigError("n_orderings must be at least 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
  if (train.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(train.optimizer.step_size > 0.0)) throw ConfigError("step size must be positive");
}

double clamp_probability(double p) {
  if (!std::isfinite(p)) throw InputError("probability is not finite");
  return std::min(std::max(p, kProbEpsilon), 1.0 - kProbEpsilon);
}

double set_base_logprob(const MarginalPrediction& marginals, const LabelSet& set) {
  const auto probs = marginals.probs();
  set.check_within(probs.size());
  double total = 0.0;
  auto member = set.members().begin();
  const auto end = set.members().end();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (member != end && *member == i) {
      total += std::log(probs[i]);
      ++member;
    } else {
      total += std::log1p(-probs[i]);
    }
  }
  return total;
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace setrank
