#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "setrank/core.hpp"

namespace setrank {

/// Top-k label sets for one instance, best first.
struct CandidateList {
  std::string instance_id;
  std::vector<Candidate> candidates;
};

/// The most probable set under independent marginals: {i : p_i >= 0.5}.
LabelSet map_set(const MarginalPrediction& marginals);

/// Exact top-k subsets by base log-probability.
///
/// Every subset is the MAP set with some labels flipped, and flipping label i
/// costs |log(p_i / (1 - p_i))|. Flip sets are visited in non-decreasing total
/// cost by a best-first search over cost-sorted labels, where each flip set
/// has exactly one parent (extend by the next label, or replace the last
/// label by the next one). Equal costs are ordered by the lexicographically
/// smaller sorted flip-index list, which keeps the output deterministic and
/// prefix-consistent in k.
///
/// Returns min(k, 2^|Y|) candidates. base_logprob is MAP log-probability minus
/// flip cost, so it is non-increasing along the list.
CandidateList enumerate_topk(const MarginalPrediction& marginals, std::size_t k);

}  // namespace setrank
