#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "setrank/candgen.hpp"
#include "setrank/core.hpp"
#include "setrank/rerank.hpp"

// Line-oriented text formats. Parsers reject malformed input with an
// InputError of the form "<source>:<line>: <problem>"; nothing is repaired.
//
//   vocabulary   one code per line, line number = index
//   marginals    id<TAB>code:prob code:prob ...   (unlisted labels get kDefaultMarginal)
//   gold         id<TAB>code code ...
//   candidates   id<TAB>rank<TAB>base<TAB>rerank<TAB>combined<TAB>code code ...
//   joint table  bitmask<TAB>probability

namespace setrank {

inline constexpr double kDefaultMarginal = 1e-6;

/// Instance id with its label set, in file order.
using LabeledSets = std::vector<std::pair<std::string, LabelSet>>;

/// 17 significant digits in scientific notation; parses back bit-exactly.
std::string format_double(double value);

LabelSpace read_vocab(std::istream& in, const std::string& source = "vocab");
LabelSpace read_vocab(const std::filesystem::path& path);
void write_vocab(std::ostream& out, const LabelSpace& space);
void write_vocab(const std::filesystem::path& path, const LabelSpace& space);

/// Space-separated codes in index order.
std::string format_label_set(const LabelSpace& space, const LabelSet& set);
LabelSet parse_label_set(const LabelSpace& space, std::string_view text);

std::vector<MarginalPrediction> read_marginals(std::istream& in, const LabelSpace& space,
                                               const std::string& source = "marginals");
std::vector<MarginalPrediction> read_marginals(const std::filesystem::path& path, const LabelSpace& space);
/// Labels whose probability equals kDefaultMarginal are omitted.
void write_marginals(std::ostream& out, const LabelSpace& space, std::span<const MarginalPrediction> marginals);
void write_marginals(const std::filesystem::path& path, const LabelSpace& space,
                     std::span<const MarginalPrediction> marginals);

LabeledSets read_gold(std::istream& in, const LabelSpace& space, const std::string& source = "gold");
LabeledSets read_gold(const std::filesystem::path& path, const LabelSpace& space);
void write_gold(std::ostream& out, const LabelSpace& space, const LabeledSets& sets);
void write_gold(const std::filesystem::path& path, const LabelSpace& space, const LabeledSets& sets);

/// Absent rerank or combined scores are written as NA. Ranks are 1-based list positions.
void write_candidates(std::ostream& out, const LabelSpace& space, std::span<const CandidateList> lists);
void write_candidates(const std::filesystem::path& path, const LabelSpace& space,
                      std::span<const CandidateList> lists);
void write_reranked(std::ostream& out, const LabelSpace& space, std::span<const RerankedList> lists);
void write_reranked(const std::filesystem::path& path, const LabelSpace& space,
                    std::span<const RerankedList> lists);
/// Consecutive lines with the same id form one list; ranks must run 1, 2, ...
std::vector<CandidateList> read_candidates(std::istream& in, const LabelSpace& space,
                                           const std::string& source = "candidates");
std::vector<CandidateList> read_candidates(const std::filesystem::path& path, const LabelSpace& space);

void write_joint_table(std::ostream& out, std::span<const double> probabilities);
void write_joint_table(const std::filesystem::path& path, std::span<const double> probabilities);
/// Requires every bitmask in [0, 2^label_count) exactly once.
std::vector<double> read_joint_table(std::istream& in, std::size_t label_count,
                                     const std::string& source = "joint");
std::vector<double> read_joint_table(const std::filesystem::path& path, std::size_t label_count);

}  // namespace setrank
