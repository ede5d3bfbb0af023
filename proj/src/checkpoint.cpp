#include "setrank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace setrank {
namespace {

constexpr std::string_view kMagic = "setrank-checkpoint";

struct TensorDecl {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

[[noreturn]] void corrupt(const std::string& message) {
  throw InputError("checkpoint: " + message);
}

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) return bits;
  std::uint64_t out = 0;
  for (int b = 0; b < 8; ++b) out |= ((bits >> (8 * b)) & 0xFFU) << (8 * (7 - b));
  return out;
}

void append_payload(std::string& payload, std::span<const double> values) {
  for (double v : values) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    payload.append(bytes, 8);
  }
}

std::vector<std::size_t> shape_of(const nn::Matrix& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

// Shapes recovered from the parameter list of a model; Eigen vectors have one dim.
std::vector<TensorDecl> declare(const std::vector<nn::ParamView>& params,
                                const std::vector<std::vector<std::size_t>>& shapes) {
  std::vector<TensorDecl> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({params[i].name, shapes[i]});
  return out;
}

std::string assemble(const std::vector<std::string>& header_lines, const std::vector<TensorDecl>& decls,
                     const std::vector<nn::ParamView>& params, const CheckpointMeta& meta) {
  std::string payload;
  for (const auto& p : params) append_payload(payload, p.values);
  std::ostringstream header;
  header << kMagic << '\n' << "version " << kCheckpointVersion << '\n';
  for (const auto& line : header_lines) header << line << '\n';
  for (const auto& [key, value] : meta) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw InputError("checkpoint metadata must be single-line with a whitespace-free key");
    }
    header << "meta " << key << ' ' << value << '\n';
  }
  for (const auto& d : decls) {
    header << "tensor " << d.name;
    for (auto s : d.shape) header << ' ' << s;
    header << '\n';
  }
  header << "payload-bytes " << payload.size() << '\n';
  header << "payload-sha256 " << sha256_hex(payload) << '\n';
  return header.str() + payload;
}

struct ParsedCheckpoint {
  std::map<std::string, std::vector<std::string>> fields;  // single-occurrence keys
  std::vector<std::vector<std::string>> orderings;
  std::vector<std::vector<std::string>> connectivity;
  CheckpointMeta meta;
  std::vector<TensorDecl> tensors;
  std::string_view payload;

  const std::vector<std::string>& field(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end() || it->second.empty()) corrupt("missing header field '" + key + "'");
    return it->second;
  }

  std::size_t size_field(const std::string& key) const {
    const auto& values = field(key);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(values.front(), &used);
      if (used != values.front().size()) throw std::invalid_argument(key);
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      corrupt("malformed integer for '" + key + "'");
    }
  }
};

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream in(line);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

ParsedCheckpoint parse(const std::string& bytes) {
  ParsedCheckpoint parsed;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) corrupt("truncated header");
    line = bytes.substr(pos, end - pos);
    pos = end + 1;
  };
  std::string line;
  next_line(line);
  if (line != kMagic) corrupt("not a setrank checkpoint");
  next_line(line);
  if (line != "version " + std::to_string(kCheckpointVersion)) {
    corrupt("unsupported format '" + line + "' (expected version " + std::to_string(kCheckpointVersion) + ")");
  }
  while (true) {
    next_line(line);
    auto tokens = tokens_of(line);
    if (tokens.empty()) corrupt("blank header line");
    const std::string key = tokens.front();
    tokens.erase(tokens.begin());
    if (key == "meta") {
      const std::size_t key_end = line.find(' ', 5);
      if (tokens.empty()) corrupt("meta line without key");
      parsed.meta[tokens.front()] = key_end == std::string::npos ? "" : line.substr(key_end + 1);
    } else if (key == "ordering") {
      parsed.orderings.push_back(std::move(tokens));
    } else if (key == "connectivity") {
      parsed.connectivity.push_back(std::move(tokens));
    } else if (key == "tensor") {
      if (tokens.empty()) corrupt("tensor line without name");
      TensorDecl decl{tokens.front(), {}};
      try {
        for (std::size_t i = 1; i < tokens.size(); ++i) decl.shape.push_back(std::stoull(tokens[i]));
      } catch (const std::logic_error&) {
        corrupt("malformed shape for tensor '" + decl.name + "'");
      }
      parsed.tensors.push_back(std::move(decl));
    } else {
      if (!parsed.fields.emplace(key, tokens).second) corrupt("duplicate header field '" + key + "'");
      if (key == "payload-sha256") break;
    }
  }
  const std::size_t payload_bytes = parsed.size_field("payload-bytes");
  if (bytes.size() - pos != payload_bytes) {
    corrupt("payload has " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
            std::to_string(payload_bytes));
  }
  parsed.payload = std::string_view(bytes).substr(pos);
  if (sha256_hex(parsed.payload) != parsed.field("payload-sha256").front()) corrupt("payload checksum mismatch");
  return parsed;
}

void check_identity(const ParsedCheckpoint& parsed, ModelKind kind, const LabelSpace& space) {
  const std::string& found = parsed.field("kind").front();
  if (found != model_kind_name(kind)) {
    corrupt("holds a '" + found + "' model, expected '" + model_kind_name(kind) + "'");
  }
  if (parsed.field("label-digest").front() != space.digest()) {
    corrupt("label-space digest mismatch: checkpoint was trained on a different vocabulary");
  }
  if (parsed.size_field("labels") != space.size()) corrupt("label count mismatch");
}

void fill(const ParsedCheckpoint& parsed, const std::vector<nn::ParamView>& params,
          const std::vector<TensorDecl>& expected) {
  if (parsed.tensors.size() != expected.size()) corrupt("unexpected tensor count");
  std::size_t offset = 0;
  for (std::size_t t = 0; t < expected.size(); ++t) {
    if (parsed.tensors[t].name != expected[t].name || parsed.tensors[t].shape != expected[t].shape) {
      corrupt("tensor '" + parsed.tensors[t].name + "' does not match the declared architecture");
    }
    auto values = params[t].values;
    if (offset + 8 * values.size() > parsed.payload.size()) corrupt("payload shorter than declared tensors");
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, parsed.payload.data() + offset, 8);
      values[i] = std::bit_cast<double>(to_little_endian(bits));
      offset += 8;
    }
  }
  if (offset != parsed.payload.size()) corrupt("payload longer than declared tensors");
}

std::vector<std::vector<std::size_t>> made_shapes(const MadeModel& m) {
  return {shape_of(m.input_layer().weights), {m.hidden()}, shape_of(m.output_layer().weights), {m.label_count()}};
}

std::vector<std::vector<std::size_t>> masksa_shapes(const MaskSaModel& m) {
  std::vector<std::vector<std::size_t>> shapes;
  shapes.push_back(shape_of(m.embedding()));
  auto dense = [&](const nn::DenseLayer& d) {
    shapes.push_back(shape_of(d.weights));
    shapes.push_back({d.out_dim()});
  };
  auto norm = [&](const nn::LayerNorm& n) {
    shapes.push_back({static_cast<std::size_t>(n.gain.size())});
    shapes.push_back({static_cast<std::size_t>(n.shift.size())});
  };
  for (const auto& b : m.blocks()) {
    norm(b.attn_norm);
    dense(b.attention.query);
    dense(b.attention.key);
    dense(b.attention.value);
    dense(b.attention.output);
    norm(b.ff_norm);
    dense(b.ff_in);
    dense(b.ff_out);
  }
  norm(m.final_norm());
  dense(m.head());
  return shapes;
}

std::vector<std::uint32_t> parse_indices(const std::vector<std::string>& tokens, std::size_t expected) {
  if (tokens.size() != expected + 1) corrupt("ordering/connectivity line has the wrong length");
  std::vector<std::uint32_t> out;
  out.reserve(expected);
  try {
    for (std::size_t i = 1; i < tokens.size(); ++i) out.push_back(static_cast<std::uint32_t>(std::stoul(tokens[i])));
  } catch (const std::logic_error&) {
    corrupt("malformed index in ordering/connectivity line");
  }
  return out;
}

std::string join(std::span<const std::uint32_t> values) {
  std::string out;
  for (auto v : values) out += ' ' + std::to_string(v);
  return out;
}

}  // namespace

std::string model_kind_name(ModelKind kind) { return kind == ModelKind::kMade ? "made" : "masksa"; }

std::string serialize_checkpoint(const MadeModel& model, const CheckpointMeta& meta) {
  MadeModel copy = model;
  const auto params = copy.parameters();
  std::vector<std::string> lines = {
      "kind made",
      "label-digest " + model.space().digest(),
      "labels " + std::to_string(model.label_count()),
      "seed " + std::to_string(model.seed()),
      "hidden " + std::to_string(model.hidden()),
      "orderings " + std::to_string(model.n_orderings()),
  };
  for (std::size_t j = 0; j < model.n_orderings(); ++j) {
    lines.push_back("ordering " + std::to_string(j) + join(model.ordering(j).positions()));
    lines.push_back("connectivity " + std::to_string(j) + join(model.connectivity(j)));
  }
  return assemble(lines, declare(params, made_shapes(model)), params, meta);
}

std::string serialize_checkpoint(const MaskSaModel& model, const CheckpointMeta& meta) {
  MaskSaModel copy = model;
  const auto params = copy.parameters();
  std::vector<std::string> lines = {
      "kind masksa",
      "label-digest " + model.space().digest(),
      "labels " + std::to_string(model.label_count()),
      "seed " + std::to_string(model.seed()),
      "width " + std::to_string(model.width()),
      "layers " + std::to_string(model.layer_count()),
      "heads " + std::to_string(model.heads()),
      "ff-width " + std::to_string(model.ff_width()),
  };
  return assemble(lines, declare(params, masksa_shapes(copy)), params, meta);
}

ModelKind checkpoint_kind(const std::string& bytes) {
  const auto parsed = parse(bytes);
  const auto& kind = parsed.field("kind").front();
  if (kind == "made") return ModelKind::kMade;
  if (kind == "masksa") return ModelKind::kMaskSa;
  corrupt("unknown model kind '" + kind + "'");
}

CheckpointMeta checkpoint_meta(const std::string& bytes) { return parse(bytes).meta; }

MadeModel deserialize_made(const std::string& bytes, const LabelSpace& space) {
  const auto parsed = parse(bytes);
  check_identity(parsed, ModelKind::kMade, space);
  const std::size_t labels = space.size();
  const std::size_t hidden = parsed.size_field("hidden");
  const std::size_t n = parsed.size_field("orderings");
  if (hidden == 0 || n == 0) corrupt("MADE hidden width and ordering count must be positive");
  if (parsed.orderings.size() != n || parsed.connectivity.size() != n) corrupt("ordering count mismatch");

  std::vector<Ordering> orderings;
  std::vector<std::vector<std::uint32_t>> connectivity;
  for (std::size_t j = 0; j < n; ++j) {
    if (parsed.orderings[j].empty() || parsed.orderings[j].front() != std::to_string(j) ||
        parsed.connectivity[j].empty() || parsed.connectivity[j].front() != std::to_string(j)) {
      corrupt("ordering lines out of sequence");
    }
    try {
      orderings.emplace_back(parse_indices(parsed.orderings[j], labels));
    } catch (const InputError&) {
      corrupt("ordering " + std::to_string(j) + " is not a permutation");
    }
    connectivity.push_back(parse_indices(parsed.connectivity[j], hidden));
  }
  nn::DenseLayer input(labels, hidden);
  nn::DenseLayer output(hidden, labels);
  std::vector<nn::ParamView> params;
  input.append_params("input", params);
  output.append_params("output", params);
  const std::vector<std::vector<std::size_t>> shapes = {{hidden, labels}, {hidden}, {labels, hidden}, {labels}};
  fill(parsed, params, declare(params, shapes));
  return MadeModel(space, std::stoull(parsed.field("seed").front()), std::move(orderings), std::move(connectivity),
                   std::move(input), std::move(output));
}

MaskSaModel deserialize_masksa(const std::string& bytes, const LabelSpace& space) {
  const auto parsed = parse(bytes);
  check_identity(parsed, ModelKind::kMaskSa, space);
  MaskSaConfig config;
  config.width = parsed.size_field("width");
  config.layers = parsed.size_field("layers");
  config.heads = parsed.size_field("heads");
  config.ff_width = parsed.size_field("ff-width");
  config.seed = std::stoull(parsed.field("seed").front());
  if (config.ff_width == 0) corrupt("feed-forward width must be positive");
  MaskSaModel model = [&] {
    try {
      return MaskSaModel(space, config);
    } catch (const ConfigError& e) {
      corrupt(std::string("invalid architecture: ") + e.what());
    }
  }();
  const auto params = model.parameters();
  fill(parsed, params, declare(params, masksa_shapes(model)));
  return model;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string() + " for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void save_checkpoint(const MadeModel& model, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

void save_checkpoint(const MaskSaModel& model, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

MadeModel load_made_checkpoint(const std::filesystem::path& path, const LabelSpace& space) {
  return deserialize_made(read_file_bytes(path), space);
}

MaskSaModel load_masksa_checkpoint(const std::filesystem::path& path, const LabelSpace& space) {
  return deserialize_masksa(read_file_bytes(path), space);
}

}  // namespace setrank
