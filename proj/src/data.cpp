#include "setrank/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <algorithm>

namespace setrank {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw InputError("failed writing " + path.string());
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw InputError(source_ + ":" + std::to_string(number_) + ": " + message);
  }

  std::size_t number() const { return number_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t number_ = 0;
};

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_spaces(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto token : split(text, ' ')) {
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

bool parse_real(std::string_view text, double& value) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

template <typename Int>
bool parse_integer(std::string_view text, Int& value) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::pair<std::string, std::string_view> split_id(LineReader& reader, std::string_view line) {
  const std::size_t tab = line.find('\t');
  if (tab == std::string_view::npos) reader.fail("missing TAB after instance id");
  if (tab == 0) reader.fail("empty instance id");
  return {std::string(line.substr(0, tab)), line.substr(tab + 1)};
}

LabelSet parse_codes(LineReader& reader, const LabelSpace& space, std::string_view text) {
  std::vector<std::uint32_t> members;
  for (auto code : split_spaces(text)) {
    const auto index = space.find(code);
    if (!index) reader.fail("unknown label code '" + std::string(code) + "'");
    members.push_back(*index);
  }
  const std::size_t count = members.size();
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.size() != count) reader.fail("label code listed twice");
  return LabelSet::from_indices(std::move(members));
}

std::string optional_score(const std::optional<double>& value) {
  return value ? format_double(*value) : "NA";
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::scientific, 16);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buffer, ptr);
}

LabelSpace read_vocab(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  std::vector<std::string> codes;
  std::set<std::string> seen;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) reader.fail("empty label code");
    if (line.find_first_of(" \t") != std::string::npos) reader.fail("label code contains whitespace");
    if (!seen.insert(line).second) reader.fail("duplicate label code '" + line + "'");
    codes.push_back(line);
  }
  if (codes.empty()) throw InputError(source + ": vocabulary is empty");
  return LabelSpace(std::move(codes));
}

LabelSpace read_vocab(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_vocab(in, path.string());
}

void write_vocab(std::ostream& out, const LabelSpace& space) {
  for (const auto& code : space.codes()) out << code << '\n';
}

void write_vocab(const std::filesystem::path& path, const LabelSpace& space) {
  auto out = open_output(path);
  write_vocab(out, space);
  finish(out, path);
}

std::string format_label_set(const LabelSpace& space, const LabelSet& set) {
  set.check_within(space.size());
  std::string out;
  for (auto m : set.members()) {
    if (!out.empty()) out += ' ';
    out += space.code(m);
  }
  return out;
}

LabelSet parse_label_set(const LabelSpace& space, std::string_view text) {
  std::istringstream dummy;
  LineReader reader(dummy, "label set");
  return parse_codes(reader, space, text);
}

std::vector<MarginalPrediction> read_marginals(std::istream& in, const LabelSpace& space,
                                               const std::string& source) {
  LineReader reader(in, source);
  std::vector<MarginalPrediction> out;
  std::set<std::string> ids;
  std::string line;
  while (reader.next(line)) {
    auto [id, rest] = split_id(reader, line);
    if (!ids.insert(id).second) reader.fail("duplicate instance id '" + id + "'");
    std::vector<double> probs(space.size(), kDefaultMarginal);
    std::vector<bool> listed(space.size(), false);
    for (auto pair : split_spaces(rest)) {
      const std::size_t colon = pair.rfind(':');
      if (colon == std::string_view::npos || colon == 0) {
        reader.fail("malformed code:prob pair '" + std::string(pair) + "'");
      }
      const auto code = pair.substr(0, colon);
      const auto index = space.find(code);
      if (!index) reader.fail("unknown label code '" + std::string(code) + "'");
      if (listed[*index]) reader.fail("label code '" + std::string(code) + "' listed twice");
      double p = 0.0;
      if (!parse_real(pair.substr(colon + 1), p) || !std::isfinite(p) || p < 0.0 || p > 1.0) {
        reader.fail("malformed probability '" + std::string(pair.substr(colon + 1)) + "' for code '" +
                    std::string(code) + "'");
      }
      probs[*index] = p;
      listed[*index] = true;
    }
    out.emplace_back(std::move(id), std::move(probs));
  }
  return out;
}

std::vector<MarginalPrediction> read_marginals(const std::filesystem::path& path, const LabelSpace& space) {
  auto in = open_input(path);
  return read_marginals(in, space, path.string());
}

void write_marginals(std::ostream& out, const LabelSpace& space, std::span<const MarginalPrediction> marginals) {
  for (const auto& m : marginals) {
    if (m.size() != space.size()) throw InputError("marginal vector length does not match vocabulary");
    out << m.instance_id() << '\t';
    bool first = true;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.probs()[i] == kDefaultMarginal) continue;
      if (!first) out << ' ';
      out << space.code(i) << ':' << format_double(m.probs()[i]);
      first = false;
    }
    out << '\n';
  }
}

void write_marginals(const std::filesystem::path& path, const LabelSpace& space,
                     std::span<const MarginalPrediction> marginals) {
  auto out = open_output(path);
  write_marginals(out, space, marginals);
  finish(out, path);
}

LabeledSets read_gold(std::istream& in, const LabelSpace& space, const std::string& source) {
  LineReader reader(in, source);
  LabeledSets out;
  std::set<std::string> ids;
  std::string line;
  while (reader.next(line)) {
    auto [id, rest] = split_id(reader, line);
    if (!ids.insert(id).second) reader.fail("duplicate instance id '" + id + "'");
    out.emplace_back(std::move(id), parse_codes(reader, space, rest));
  }
  return out;
}

LabeledSets read_gold(const std::filesystem::path& path, const LabelSpace& space) {
  auto in = open_input(path);
  return read_gold(in, space, path.string());
}

void write_gold(std::ostream& out, const LabelSpace& space, const LabeledSets& sets) {
  for (const auto& [id, set] : sets) out << id << '\t' << format_label_set(space, set) << '\n';
}

void write_gold(const std::filesystem::path& path, const LabelSpace& space, const LabeledSets& sets) {
  auto out = open_output(path);
  write_gold(out, space, sets);
  finish(out, path);
}

void write_candidates(std::ostream& out, const LabelSpace& space, std::span<const CandidateList> lists) {
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.candidates.size(); ++r) {
      const auto& c = list.candidates[r];
      out << list.instance_id << '\t' << r + 1 << '\t' << format_double(c.base_logprob) << '\t'
          << optional_score(c.rerank_score) << '\t' << optional_score(c.combined_score) << '\t'
          << format_label_set(space, c.set) << '\n';
    }
  }
}

void write_candidates(const std::filesystem::path& path, const LabelSpace& space,
                      std::span<const CandidateList> lists) {
  auto out = open_output(path);
  write_candidates(out, space, lists);
  finish(out, path);
}

void write_reranked(std::ostream& out, const LabelSpace& space, std::span<const RerankedList> lists) {
  std::vector<CandidateList> plain;
  plain.reserve(lists.size());
  for (const auto& r : lists) plain.push_back(to_candidate_list(r));
  write_candidates(out, space, plain);
}

void write_reranked(const std::filesystem::path& path, const LabelSpace& space,
                    std::span<const RerankedList> lists) {
  auto out = open_output(path);
  write_reranked(out, space, lists);
  finish(out, path);
}

std::vector<CandidateList> read_candidates(std::istream& in, const LabelSpace& space, const std::string& source) {
  LineReader reader(in, source);
  std::vector<CandidateList> out;
  std::set<std::string> finished_ids;
  std::string line;
  while (reader.next(line)) {
    const auto fields = split(line, '\t');
    if (fields.size() != 6) reader.fail("expected 6 TAB-separated fields, found " + std::to_string(fields.size()));
    const std::string id(fields[0]);
    if (id.empty()) reader.fail("empty instance id");
    std::size_t rank = 0;
    if (!parse_integer(fields[1], rank) || rank == 0) reader.fail("malformed rank '" + std::string(fields[1]) + "'");

    if (out.empty() || out.back().instance_id != id) {
      if (!out.empty()) finished_ids.insert(out.back().instance_id);
      if (finished_ids.contains(id)) reader.fail("lines for instance '" + id + "' are not contiguous");
      out.push_back(CandidateList{id, {}});
    }
    auto& list = out.back();
    if (rank != list.candidates.size() + 1) {
      reader.fail("rank " + std::to_string(rank) + " out of sequence for instance '" + id + "'");
    }
    Candidate c;
    if (!parse_real(fields[2], c.base_logprob)) reader.fail("malformed base log-probability");
    for (int f = 3; f <= 4; ++f) {
      if (fields[f] == "NA") continue;
      double value = 0.0;
      if (!parse_real(fields[f], value)) reader.fail("malformed score '" + std::string(fields[f]) + "'");
      (f == 3 ? c.rerank_score : c.combined_score) = value;
    }
    c.set = parse_codes(reader, space, fields[5]);
    list.candidates.push_back(std::move(c));
  }
  return out;
}

std::vector<CandidateList> read_candidates(const std::filesystem::path& path, const LabelSpace& space) {
  auto in = open_input(path);
  return read_candidates(in, space, path.string());
}

void write_joint_table(std::ostream& out, std::span<const double> probabilities) {
  for (std::size_t mask = 0; mask < probabilities.size(); ++mask) {
    out << mask << '\t' << format_double(probabilities[mask]) << '\n';
  }
}

void write_joint_table(const std::filesystem::path& path, std::span<const double> probabilities) {
  auto out = open_output(path);
  write_joint_table(out, probabilities);
  finish(out, path);
}

std::vector<double> read_joint_table(std::istream& in, std::size_t label_count, const std::string& source) {
  if (label_count > 20) throw CapabilityError("exact joint tables support at most 20 labels");
  const std::size_t entries = std::size_t{1} << label_count;
  std::vector<double> table(entries, 0.0);
  std::vector<bool> seen(entries, false);
  LineReader reader(in, source);
  std::string line;
  while (reader.next(line)) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2) reader.fail("expected bitmask<TAB>probability");
    std::size_t mask = 0;
    if (!parse_integer(fields[0], mask) || mask >= entries) reader.fail("bitmask out of range");
    if (seen[mask]) reader.fail("bitmask " + std::to_string(mask) + " listed twice");
    double p = 0.0;
    if (!parse_real(fields[1], p) || !(p >= 0.0) || p > 1.0) reader.fail("malformed probability");
    table[mask] = p;
    seen[mask] = true;
  }
  for (std::size_t mask = 0; mask < entries; ++mask) {
    if (!seen[mask]) throw InputError(source + ": bitmask " + std::to_string(mask) + " missing");
  }
  return table;
}

std::vector<double> read_joint_table(const std::filesystem::path& path, std::size_t label_count) {
  auto in = open_input(path);
  return read_joint_table(in, label_count, path.string());
}

}  // namespace setrank
