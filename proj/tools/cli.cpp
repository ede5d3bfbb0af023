#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "setrank/candgen.hpp"
#include "setrank/checkpoint.hpp"
#include "setrank/core.hpp"
#include "setrank/data.hpp"
#include "setrank/eval.hpp"
#include "setrank/made.hpp"
#include "setrank/masksa.hpp"
#include "setrank/rerank.hpp"
#include "setrank/synthetic.hpp"

namespace setrank::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// JSON configuration: top-level keys set global options, and an object under
// a subcommand's name sets that subcommand's options. Command-line values
// always win because CLI11 only fills options that are still empty.
class JsonConfig final : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return dump(app, default_also).dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json root;
    try {
      root = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(root, {}, items);
    return items;
  }

 private:
  static json dump(const CLI::App* app, bool default_also) {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        out[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      json nested = dump(sub, default_also);
      if (!nested.empty()) out[sub->get_name()] = std::move(nested);
    }
    return out;
  }

  static std::string scalar(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    if (value.is_number() || value.is_null()) return value.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }

  static void collect(const json& node, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : node.items()) {
      std::string name = key;
      std::replace(name.begin(), name.end(), '_', '-');
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        collect(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = name;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::uint64_t seed = 0;
  std::string vocab;
  std::string out_dir = ".";
  std::size_t threads = 1;
};

/// Tracks one command's inputs and outputs. Outputs written by a command that
/// does not reach commit() are deleted when the Run goes out of scope.
class Run {
 public:
  Run(std::string name, const Globals& globals)
      : name_(std::move(name)), dir_(globals.out_dir), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
  }

  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  ~Run() {
    if (committed_) return;
    std::error_code ignored;
    for (const auto& [key, path] : outputs_) fs::remove(path, ignored);
    fs::remove(manifest_path(), ignored);
  }

  fs::path output(const std::string& key, const std::string& file) {
    const fs::path path = dir_ / file;
    outputs_.emplace_back(key, path);
    return path;
  }

  void input(const std::string& key, const std::string& path) { inputs_[key] = path; }

  void commit(const CLI::App& command, const Globals& globals, std::ostream& out) {
    json manifest;
    manifest["command"] = name_;
    manifest["seed"] = globals.seed;
    manifest["config"] = resolved(command);
    manifest["inputs"] = inputs_;
    json outputs = json::object();
    for (const auto& [key, path] : outputs_) {
      if (!fs::is_regular_file(path)) throw std::runtime_error("expected output was not written: " + path.string());
      outputs[key] = {{"path", path.string()}, {"sha256", sha256_hex(read_file_bytes(path))}};
    }
    manifest["outputs"] = outputs;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    manifest["duration_seconds"] = elapsed.count();
    std::ofstream file(manifest_path());
    file << manifest.dump(2) << '\n';
    file.close();
    if (!file) throw std::runtime_error("could not write " + manifest_path().string());
    committed_ = true;
    out << "wrote " << manifest_path().string() << '\n';
  }

 private:
  fs::path manifest_path() const { return dir_ / (name_ + ".manifest.json"); }

  static json resolved(const CLI::App& command) {
    json config = json::object();
    const CLI::App* app = &command;
    while (app != nullptr) {
      for (const CLI::Option* opt : app->get_options()) {
        std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        if (name == "help" || name == "config" || config.contains(name)) continue;
        if (opt->count() > 0) {
          config[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
        } else {
          config[name] = opt->get_default_str();
        }
      }
      app = app->get_parent();
    }
    return config;
  }

  std::string name_;
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<std::string, fs::path>> outputs_;
  std::map<std::string, std::string> inputs_;
  bool committed_ = false;
};

LabelSpace require_vocab(const Globals& globals) {
  if (globals.vocab.empty()) throw InputError("--vocab is required for this command");
  return read_vocab(globals.vocab);
}

std::vector<LabelSet> sets_only(const LabeledSets& labeled) {
  std::vector<LabelSet> out;
  out.reserve(labeled.size());
  for (const auto& [id, set] : labeled) out.push_back(set);
  return out;
}

std::map<std::string, LabelSet> as_map(const LabeledSets& labeled) {
  std::map<std::string, LabelSet> out;
  for (const auto& [id, set] : labeled) {
    if (!out.emplace(id, set).second) throw InputError("duplicate instance id '" + id + "'");
  }
  return out;
}

/// A loaded reranker: a checkpointed model or an exact joint table.
struct LoadedScorer {
  std::unique_ptr<MadeModel> made;
  std::unique_ptr<MaskSaModel> masksa;
  std::unique_ptr<SetScorer> scorer;
};

LoadedScorer load_scorer(const std::string& checkpoint, const std::string& joint, const LabelSpace& space) {
  LoadedScorer loaded;
  if (checkpoint.empty() == joint.empty()) throw InputError("give exactly one of --checkpoint or --joint");
  if (!joint.empty()) {
    loaded.scorer = std::make_unique<TableScorer>(space.size(), read_joint_table(fs::path(joint), space.size()));
    return loaded;
  }
  const std::string bytes = read_file_bytes(checkpoint);
  if (checkpoint_kind(bytes) == ModelKind::kMade) {
    loaded.made = std::make_unique<MadeModel>(deserialize_made(bytes, space));
    loaded.scorer = std::make_unique<MadeScorer>(*loaded.made);
  } else {
    loaded.masksa = std::make_unique<MaskSaModel>(deserialize_masksa(bytes, space));
    loaded.scorer = std::make_unique<MaskSaScorer>(*loaded.masksa);
  }
  return loaded;
}

std::vector<CandidateList> generate(const std::vector<MarginalPrediction>& marginals, std::size_t k) {
  std::vector<CandidateList> lists;
  lists.reserve(marginals.size());
  for (const auto& m : marginals) lists.push_back(enumerate_topk(m, k));
  return lists;
}

/// Gold sets reordered to follow `ids`; throws listing ids without gold.
std::vector<LabelSet> aligned_gold(const std::vector<std::string>& ids, const LabeledSets& gold) {
  const auto by_id = as_map(gold);
  std::vector<LabelSet> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
    } else {
      out.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 10) list += ", ...";
    throw InputError(std::to_string(missing.size()) + " instance(s) have no gold set: " + list);
  }
  if (by_id.size() != ids.size()) throw InputError("gold file lists instances that have no marginals");
  return out;
}

/// Parses "1..50" or "1,5,10" (or a mix: "1..5,10,20").
std::vector<std::size_t> parse_k_values(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream stream(text);
  std::string piece;
  auto number = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || v == 0) throw ConfigError("bad --k-curve entry '" + s + "'");
    return static_cast<std::size_t>(v);
  };
  while (std::getline(stream, piece, ',')) {
    const auto dots = piece.find("..");
    if (dots == std::string::npos) {
      out.push_back(number(piece));
      continue;
    }
    const std::size_t lo = number(piece.substr(0, dots));
    const std::size_t hi = number(piece.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty --k-curve range '" + piece + "'");
    for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("--k-curve lists no values");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

json report_json(const EvalReport& report) {
  return {{"instances", report.instances},
          {"micro_precision", report.micro.precision},
          {"micro_recall", report.micro.recall},
          {"micro_f1", report.micro.f1},
          {"macro_f1", report.macro_f1},
          {"tp", report.pooled.tp},
          {"fp", report.pooled.fp},
          {"fn", report.pooled.fn}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  file << text;
  file.close();
  if (!file) throw InputError("could not write " + path.string());
}


// Option storage for every command; CLI11 binds straight into these fields.
struct Options {
  Globals globals;

  struct {
    std::size_t labels = 10;
    std::size_t components = 3;
    double p_in = 0.75;
    double p_out = 0.1;
    double noise = 1.0;
    std::size_t train = 20000;
    std::size_t val = 2000;
    std::size_t test = 2000;
    bool exact_joint = false;
    bool no_exact_joint = false;
  } synth;

  struct {
    std::string kind;
    std::string gold;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double step_size = 2e-5;
    std::size_t hidden = 500;
    std::size_t orderings = 10;
    std::size_t width = 256;
    std::size_t layers = 6;
    std::size_t heads = 8;
    std::size_t ff_width = 0;
  } train;

  struct {
    std::string marginals;
    std::string checkpoint;
    std::string joint;
    std::size_t k = 50;
    double alpha = 0.0;
    double beta = 0.0;
  } rerank;

  struct {
    std::string gold;
    std::string predictions;
    std::string candidates;
    std::string train_gold;
    std::size_t buckets = 6;
  } eval;

  struct {
    std::string gold;
    std::string marginals;
    std::string checkpoint;
    std::string joint;
    std::size_t k = 50;
    std::vector<double> grid_alpha = default_alpha_grid();
    std::vector<double> grid_beta = default_beta_grid();
    std::string objective = "micro_f1";
    std::string k_curve;
    std::optional<double> alpha;
    std::optional<double> beta;
  } sweep;

  struct {
    std::string base;
    std::string reranked;
  } diff;
};

void cmd_synth(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.synth;
  Run run("synth", o.globals);
  const auto spec = block_mixture_spec(opt.labels, opt.components, opt.p_in, opt.p_out, opt.noise, o.globals.seed,
                                       opt.train, opt.val, opt.test);
  const bool with_joint = opt.exact_joint || (!opt.no_exact_joint && opt.labels <= kMaxExactJointLabels);
  const auto data = gen_synthetic(spec, with_joint);
  write_vocab(run.output("vocab", "vocab.txt"), data.space);
  const std::pair<std::string, const SyntheticSplit*> splits[] = {
      {"train", &data.train}, {"val", &data.validation}, {"test", &data.test}};
  for (const auto& [name, split] : splits) {
    LabeledSets gold;
    for (std::size_t n = 0; n < split->ids.size(); ++n) gold.emplace_back(split->ids[n], split->gold[n]);
    write_gold(run.output(name + "_gold", name + ".gold"), data.space, gold);
    write_marginals(run.output(name + "_marginals", name + ".marginals"), data.space, split->marginals);
  }
  if (data.joint) write_joint_table(run.output("joint", "joint.tsv"), *data.joint);
  out << "synthesized " << data.train.ids.size() << '/' << data.validation.ids.size() << '/'
      << data.test.ids.size() << " instances over " << data.space.size() << " labels\n";
  run.commit(command, o.globals, out);
}

void cmd_train(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.train;
  const LabelSpace space = require_vocab(o.globals);
  Run run("train-" + opt.kind, o.globals);
  run.input("vocab", o.globals.vocab);
  run.input("gold", opt.gold);
  const auto corpus = sets_only(read_gold(fs::path(opt.gold), space));

  TrainSettings settings;
  settings.epochs = opt.epochs;
  settings.batch_size = opt.batch_size;
  settings.optimizer.step_size = opt.step_size;
  const CheckpointMeta meta = {{"epochs", std::to_string(opt.epochs)},
                               {"batch_size", std::to_string(opt.batch_size)},
                               {"step_size", format_double(opt.step_size)},
                               {"training_sets", std::to_string(corpus.size())}};

  std::vector<double> losses;
  if (opt.kind == "made") {
    MadeConfig config;
    config.hidden = opt.hidden;
    config.n_orderings = opt.orderings;
    config.seed = o.globals.seed;
    config.train = settings;
    auto result = train_made(corpus, space, config);
    save_checkpoint(result.model, run.output("checkpoint", "made.ckpt"), meta);
    losses = std::move(result.epoch_losses);
  } else {
    MaskSaConfig config;
    config.width = opt.width;
    config.layers = opt.layers;
    config.heads = opt.heads;
    config.ff_width = opt.ff_width;
    config.seed = o.globals.seed;
    config.train = settings;
    auto result = train_masksa(corpus, space, config);
    save_checkpoint(result.model, run.output("checkpoint", "masksa.ckpt"), meta);
    losses = std::move(result.epoch_losses);
  }
  std::string curve = "epoch\tloss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) curve += std::to_string(e + 1) + '\t' + format_double(losses[e]) + '\n';
  write_text(run.output("losses", opt.kind + ".losses.tsv"), curve);
  if (!losses.empty()) out << opt.kind << ": final epoch loss " << losses.back() << '\n';
  run.commit(command, o.globals, out);
}

void cmd_rerank(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.rerank;
  RerankConfig check;
  check.k = opt.k;
  check.alpha = opt.alpha;
  check.beta = opt.beta;
  check.validate();
  const LabelSpace space = require_vocab(o.globals);
  Run run("rerank", o.globals);
  run.input("vocab", o.globals.vocab);
  run.input("marginals", opt.marginals);
  run.input(opt.joint.empty() ? "checkpoint" : "joint", opt.joint.empty() ? opt.checkpoint : opt.joint);
  const auto loaded = load_scorer(opt.checkpoint, opt.joint, space);
  const auto marginals = read_marginals(fs::path(opt.marginals), space);
  auto lists = generate(marginals, opt.k);
  write_candidates(run.output("candidates", "candidates.tsv"), space, lists);

  LabeledSets base_top, top;
  for (const auto& l : lists) base_top.emplace_back(l.instance_id, l.candidates.front().set);
  const auto scored = score_candidates(std::move(lists), *loaded.scorer, o.globals.threads);
  std::vector<RerankedList> reranked;
  reranked.reserve(scored.size());
  for (const auto& s : scored) {
    reranked.push_back(rescore(s, opt.alpha, opt.beta));
    top.emplace_back(reranked.back().instance_id, reranked.back().top());
  }
  write_reranked(run.output("reranked", "reranked.tsv"), space, reranked);
  write_gold(run.output("base_predictions", "base_predictions.gold"), space, base_top);
  write_gold(run.output("predictions", "predictions.gold"), space, top);
  std::size_t changed = 0;
  for (std::size_t n = 0; n < top.size(); ++n) changed += top[n].second != base_top[n].second ? 1 : 0;
  out << "reranked " << reranked.size() << " instances with " << loaded.scorer->name() << "; " << changed
      << " top-1 sets changed\n";
  run.commit(command, o.globals, out);
}

void cmd_eval(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.eval;
  const LabelSpace space = require_vocab(o.globals);
  if (opt.predictions.empty() && opt.candidates.empty()) throw InputError("give --predictions and/or --candidates");
  Run run("eval", o.globals);
  run.input("vocab", o.globals.vocab);
  run.input("gold", opt.gold);
  const auto gold = read_gold(fs::path(opt.gold), space);
  const auto gold_map = as_map(gold);

  json result = json::object();
  std::string text;
  if (!opt.predictions.empty()) {
    run.input("predictions", opt.predictions);
    const auto predictions = read_gold(fs::path(opt.predictions), space);
    const auto report = micro_macro_f1(as_map(predictions), gold_map, space);
    result["report"] = report_json(report);
    text += format_report(report);

    std::string per_label = "label\ttp\tfp\tfn\tprecision\trecall\tf1\n";
    for (std::size_t l = 0; l < report.per_label.size(); ++l) {
      const auto& s = report.per_label[l];
      per_label += space.code(l) + '\t' + std::to_string(s.counts.tp) + '\t' + std::to_string(s.counts.fp) + '\t' +
                   std::to_string(s.counts.fn) + '\t' + format_double(s.scores.precision) + '\t' +
                   format_double(s.scores.recall) + '\t' + format_double(s.scores.f1) + '\n';
    }
    write_text(run.output("per_label", "per_label.tsv"), per_label);

    if (!opt.train_gold.empty()) {
      run.input("train_gold", opt.train_gold);
      const auto train = sets_only(read_gold(fs::path(opt.train_gold), space));
      const auto freq = label_frequencies(train, space.size());
      std::vector<std::string> ids;
      for (const auto& [id, set] : predictions) ids.push_back(id);
      const auto aligned = aligned_gold(ids, gold);
      const auto buckets = bucketed_f1(sets_only(predictions), aligned, freq, opt.buckets);
      json rows = json::array();
      char line[160];
      for (std::size_t b = 0; b < buckets.size(); ++b) {
        rows.push_back({{"bucket", b}, {"labels", buckets[b].labels.size()},
                        {"min_frequency", buckets[b].min_frequency}, {"max_frequency", buckets[b].max_frequency},
                        {"micro_f1", buckets[b].micro.f1}});
        std::snprintf(line, sizeof line, "bucket %zu (freq %zu-%zu, %zu labels) micro_f1 %.4f\n", b,
                      buckets[b].min_frequency, buckets[b].max_frequency, buckets[b].labels.size(),
                      buckets[b].micro.f1);
        text += line;
      }
      result["buckets"] = rows;
    }
  }
  if (!opt.candidates.empty()) {
    run.input("candidates", opt.candidates);
    const auto lists = read_candidates(fs::path(opt.candidates), space);
    std::vector<std::string> ids;
    for (const auto& l : lists) ids.push_back(l.instance_id);
    const double rank = avg_best_rank(lists, aligned_gold(ids, gold));
    result["avg_best_rank"] = rank;
    char line[80];
    std::snprintf(line, sizeof line, "%-12s %10.2f\n", "avg_best_rank", rank);
    text += line;
  }
  write_text(run.output("report_text", "eval.txt"), text);
  write_text(run.output("report_json", "eval.json"), result.dump(2) + "\n");
  out << text;
  run.commit(command, o.globals, out);
}

void cmd_sweep(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.sweep;
  const LabelSpace space = require_vocab(o.globals);
  const Objective objective = parse_objective(opt.objective);
  Run run("sweep", o.globals);
  run.input("vocab", o.globals.vocab);
  run.input("gold", opt.gold);
  run.input("marginals", opt.marginals);
  run.input(opt.joint.empty() ? "checkpoint" : "joint", opt.joint.empty() ? opt.checkpoint : opt.joint);
  const auto loaded = load_scorer(opt.checkpoint, opt.joint, space);
  const auto marginals = read_marginals(fs::path(opt.marginals), space);
  std::vector<std::string> ids;
  for (const auto& m : marginals) ids.push_back(m.instance_id());
  const auto gold = aligned_gold(ids, read_gold(fs::path(opt.gold), space));
  const auto scored = score_candidates(generate(marginals, opt.k), *loaded.scorer, o.globals.threads);

  const auto grid = grid_search(scored, gold, space.size(), opt.grid_alpha, opt.grid_beta, objective);
  std::string table = "alpha\tbeta\tmicro_f1\tmacro_f1\n";
  for (const auto& cell : grid.table) {
    table += format_double(cell.alpha) + '\t' + format_double(cell.beta) + '\t' + format_double(cell.micro_f1) + '\t' +
             format_double(cell.macro_f1) + '\n';
  }
  write_text(run.output("grid", "grid.tsv"), table);
  json summary = {{"objective", objective_name(objective)},
                  {"scorer", loaded.scorer->name()},
                  {"chosen",
                   {{"alpha", grid.chosen.alpha},
                    {"beta", grid.chosen.beta},
                    {"micro_f1", grid.chosen.micro_f1},
                    {"macro_f1", grid.chosen.macro_f1}}}};
  out << "chosen alpha " << grid.chosen.alpha << " beta " << grid.chosen.beta << ": micro_f1 " << grid.chosen.micro_f1
      << " macro_f1 " << grid.chosen.macro_f1 << '\n';

  if (!opt.k_curve.empty()) {
    const double alpha = opt.alpha.value_or(grid.chosen.alpha);
    const double beta = opt.beta.value_or(grid.chosen.beta);
    const auto curve = sweep_k(scored, gold, space.size(), alpha, beta, parse_k_values(opt.k_curve));
    std::string records;
    for (const auto& point : curve) {
      json record = {{"k", point.k},
                     {"alpha", alpha},
                     {"beta", beta},
                     {"micro_f1", point.report.micro_f1()},
                     {"macro_f1", point.report.macro_f1},
                     {"avg_best_rank", point.avg_best_rank},
                     {"oracle_instance_f1", point.oracle_instance_f1}};
      records += record.dump() + '\n';
    }
    write_text(run.output("curve", "curve.jsonl"), records);
    summary["curve_points"] = curve.size();
  }
  write_text(run.output("summary", "sweep.json"), summary.dump(2) + "\n");
  run.commit(command, o.globals, out);
}

void cmd_diff(const CLI::App& command, const Options& o, std::ostream& out) {
  const auto& opt = o.diff;
  const LabelSpace space = require_vocab(o.globals);
  Run run("diff", o.globals);
  run.input("vocab", o.globals.vocab);
  run.input("base", opt.base);
  run.input("reranked", opt.reranked);
  const auto base = read_gold(fs::path(opt.base), space);
  const auto reranked = as_map(read_gold(fs::path(opt.reranked), space));
  if (reranked.size() != base.size()) throw InputError("base and reranked predictions cover different instances");
  std::string table = "instance\tadded\tremoved\n";
  std::size_t changed = 0;
  for (const auto& [id, set] : base) {
    const auto it = reranked.find(id);
    if (it == reranked.end()) throw InputError("instance '" + id + "' missing from reranked predictions");
    const auto d = diff_prediction(set, it->second);
    if (d.added.empty() && d.removed.empty()) continue;
    ++changed;
    table += id + '\t' + format_label_set(space, d.added) + '\t' + format_label_set(space, d.removed) + '\n';
  }
  write_text(run.output("diff", "diff.tsv"), table);
  out << changed << " of " << base.size() << " predictions changed\n";
  run.commit(command, o.globals, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app("Rerank multi-label predictions as whole label sets", "setrank");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON configuration file; command-line flags take precedence");
  app.add_option("--seed", o.globals.seed, "Random seed");
  app.add_option("--vocab", o.globals.vocab, "Label vocabulary file");
  app.add_option("--out-dir", o.globals.out_dir, "Directory for outputs and the run manifest");
  app.add_option("--threads", o.globals.threads, "Worker threads for scoring")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate a correlated synthetic corpus with a known joint");
  synth->add_option("--labels", o.synth.labels, "Number of labels")->check(CLI::PositiveNumber);
  synth->add_option("--components", o.synth.components, "Mixture components over disjoint label blocks")
      ->check(CLI::PositiveNumber);
  synth->add_option("--p-in", o.synth.p_in, "Label probability inside a component's block")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--p-out", o.synth.p_out, "Label probability outside it")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--noise", o.synth.noise, "Logit-noise std of the simulated base predictor")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--train", o.synth.train, "Training instances");
  synth->add_option("--val", o.synth.val, "Validation instances");
  synth->add_option("--test", o.synth.test, "Test instances");
  auto* joint_on = synth->add_flag("--exact-joint", o.synth.exact_joint,
                                   "Write the exact joint table (default: when there are at most 20 labels)");
  synth->add_flag("--no-exact-joint", o.synth.no_exact_joint, "Never write the exact joint table")
      ->excludes(joint_on);

  auto* train = app.add_subcommand("train", "Train a MADE or Mask-SA reranker on gold label sets");
  train->add_option("kind", o.train.kind, "made or masksa")->required()->check(CLI::IsMember({"made", "masksa"}));
  train->add_option("--gold", o.train.gold, "Training label sets")->required();
  train->add_option("--epochs", o.train.epochs, "Training epochs");
  train->add_option("--batch-size", o.train.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", o.train.step_size, "Adam step size")->check(CLI::PositiveNumber);
  train->add_option("--hidden", o.train.hidden, "MADE hidden units")->check(CLI::PositiveNumber);
  train->add_option("--orderings", o.train.orderings, "MADE ordering ensemble size")->check(CLI::PositiveNumber);
  train->add_option("--width", o.train.width, "Mask-SA model width")->check(CLI::PositiveNumber);
  train->add_option("--layers", o.train.layers, "Mask-SA encoder layers");
  train->add_option("--heads", o.train.heads, "Mask-SA attention heads")->check(CLI::PositiveNumber);
  train->add_option("--ff-width", o.train.ff_width, "Mask-SA feed-forward width (0: 4 x width)");

  auto* rerank = app.add_subcommand("rerank", "Generate top-k candidates and rerank them");
  rerank->add_option("--marginals", o.rerank.marginals, "Base predictor marginals")->required();
  rerank->add_option("--checkpoint", o.rerank.checkpoint, "Trained reranker checkpoint");
  rerank->add_option("--joint", o.rerank.joint, "Exact joint table to rerank with instead of a model");
  rerank->add_option("--k", o.rerank.k, "Candidates per instance")->check(CLI::PositiveNumber);
  rerank->add_option("--alpha", o.rerank.alpha, "Reranker weight")->check(CLI::NonNegativeNumber);
  rerank->add_option("--beta", o.rerank.beta, "Length penalty exponent")->check(CLI::NonNegativeNumber);

  auto* eval = app.add_subcommand("eval", "Score predictions against gold");
  eval->add_option("--gold", o.eval.gold, "Gold label sets")->required();
  eval->add_option("--predictions", o.eval.predictions, "Predicted label sets");
  eval->add_option("--candidates", o.eval.candidates, "Candidate or reranked list, for the average best rank");
  eval->add_option("--train-gold", o.eval.train_gold, "Training label sets, for frequency-bucketed F1");
  eval->add_option("--buckets", o.eval.buckets, "Number of frequency buckets")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Grid-search alpha and beta, optionally sweeping k");
  sweep->add_option("--gold", o.sweep.gold, "Gold label sets for the marginals")->required();
  sweep->add_option("--marginals", o.sweep.marginals, "Base predictor marginals")->required();
  sweep->add_option("--checkpoint", o.sweep.checkpoint, "Trained reranker checkpoint");
  sweep->add_option("--joint", o.sweep.joint, "Exact joint table to rerank with instead of a model");
  sweep->add_option("--k", o.sweep.k, "Candidates per instance")->check(CLI::PositiveNumber);
  sweep->add_option("--grid-alpha", o.sweep.grid_alpha, "Alpha grid")->delimiter(',');
  sweep->add_option("--grid-beta", o.sweep.grid_beta, "Beta grid")->delimiter(',');
  sweep->add_option("--objective", o.sweep.objective, "micro_f1 or macro_f1");
  sweep->add_option("--k-curve", o.sweep.k_curve, "Candidate counts to sweep, e.g. 1..50 or 1,5,10");
  sweep->add_option("--alpha", o.sweep.alpha, "Alpha for the k sweep (default: chosen cell)");
  sweep->add_option("--beta", o.sweep.beta, "Beta for the k sweep (default: chosen cell)");

  auto* diff = app.add_subcommand("diff", "List labels added and removed by reranking");
  diff->add_option("--base", o.diff.base, "Base top-1 predictions")->required();
  diff->add_option("--reranked", o.diff.reranked, "Reranked top-1 predictions")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::pair<CLI::App*, void (*)(const CLI::App&, const Options&, std::ostream&)> commands[] = {
      {synth, cmd_synth}, {train, cmd_train}, {rerank, cmd_rerank},
      {eval, cmd_eval},   {sweep, cmd_sweep}, {diff, cmd_diff}};
  try {
    for (const auto& [command, handler] : commands) {
      if (command->parsed()) handler(*command, o, out);
    }
    return kOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CapabilityError& e) {
    err << "error: " << e.what() << '\n';
    return kUnsupported;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace setrank::cli
