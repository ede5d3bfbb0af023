#include "setrank/candgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace setrank {
namespace {

struct FlipNode {
  std::vector<std::uint32_t> positions;  // ascending positions into the cost-sorted label order
  std::vector<std::uint32_t> flips;      // ascending label indices, for tie-breaking
  double cost = 0.0;
};

struct WorseFirst {
  bool operator()(const FlipNode& a, const FlipNode& b) const {
    if (a.cost != b.cost) return a.cost > b.cost;
    return a.flips > b.flips;
  }
};

class FlipSearch {
 public:
  FlipSearch(std::vector<double> costs, std::vector<std::uint32_t> order)
      : costs_(std::move(costs)), order_(std::move(order)) {}

  FlipNode make(std::vector<std::uint32_t> positions) const {
    FlipNode node;
    node.flips.reserve(positions.size());
    // Summing in ascending position order makes the cost monotone in each term,
    // so a child's cost never rounds below its parent's.
    for (auto p : positions) {
      node.cost += costs_[order_[p]];
      node.flips.push_back(order_[p]);
    }
    std::sort(node.flips.begin(), node.flips.end());
    node.positions = std::move(positions);
    return node;
  }

  void push_children(const FlipNode& parent,
                     std::priority_queue<FlipNode, std::vector<FlipNode>, WorseFirst>& frontier) const {
    const std::uint32_t n = static_cast<std::uint32_t>(order_.size());
    if (parent.positions.empty()) {
      if (n > 0) frontier.push(make({0}));
      return;
    }
    const std::uint32_t last = parent.positions.back();
    if (last + 1 >= n) return;
    auto extended = parent.positions;
    extended.push_back(last + 1);
    frontier.push(make(std::move(extended)));
    auto replaced = parent.positions;
    replaced.back() = last + 1;
    frontier.push(make(std::move(replaced)));
  }

 private:
  std::vector<double> costs_;
  std::vector<std::uint32_t> order_;
};

LabelSet apply_flips(const std::vector<std::uint8_t>& map_bits, std::span<const std::uint32_t> flips) {
  auto bits = map_bits;
  for (auto f : flips) bits[f] ^= 1U;
  return LabelSet::from_dense(bits);
}

}  // namespace

LabelSet map_set(const MarginalPrediction& marginals) {
  std::vector<std::uint32_t> members;
  const auto probs = marginals.probs();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] >= 0.5) members.push_back(static_cast<std::uint32_t>(i));
  }
  return LabelSet::from_indices(std::move(members));
}

CandidateList enumerate_topk(const MarginalPrediction& marginals, std::size_t k) {
  if (k == 0) throw InputError("k must be at least 1");
  const auto probs = marginals.probs();
  const std::size_t n = probs.size();

  std::size_t limit = k;
  if (n < 63) limit = std::min<std::size_t>(k, std::size_t{1} << n);

  std::vector<double> costs(n);
  for (std::size_t i = 0; i < n; ++i) {
    costs[i] = std::abs(std::log(probs[i]) - std::log1p(-probs[i]));
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return costs[a] < costs[b]; });

  const LabelSet map = map_set(marginals);
  const auto map_bits = map.to_dense(n);
  const double map_logprob = set_base_logprob(marginals, map);

  CandidateList out;
  out.instance_id = marginals.instance_id();
  out.candidates.reserve(limit);

  FlipSearch search(std::move(costs), std::move(order));
  std::priority_queue<FlipNode, std::vector<FlipNode>, WorseFirst> frontier;
  frontier.push(FlipNode{});
  while (out.candidates.size() < limit && !frontier.empty()) {
    FlipNode node = frontier.top();
    frontier.pop();
    Candidate candidate;
    candidate.set = apply_flips(map_bits, node.flips);
    candidate.base_logprob = map_logprob - node.cost;
    out.candidates.push_back(std::move(candidate));
    search.push_children(node, frontier);
  }
  return out;
}

}  // namespace setrank
