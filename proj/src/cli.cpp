#include "seqmask/cli.hpp"

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqmask/checkpoint.hpp"
#include "seqmask/data.hpp"
#include "seqmask/evaluation.hpp"
#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/kernels.hpp"
#include "seqmask/losses.hpp"
#include "seqmask/masking.hpp"
#include "seqmask/tensor.hpp"
#include "seqmask/training.hpp"

namespace seqmask {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Bad argument values that CLI11 cannot catch on its own (e.g. an unparsable
// --classes string). These map to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Manifest support
// ---------------------------------------------------------------------------

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash artifact: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[4096];
  while (in.read(buf, sizeof buf), in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << v;
  return out.str();
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir);
}

// Every run directory gets exactly one manifest.json recording the command,
// the effective configuration, the inputs, and an FNV-1a hash per artifact.
// The wall-clock timestamp lives only here so the artifacts themselves stay
// byte-reproducible.
void write_manifest(const std::string& out_dir, const std::string& command,
                    std::uint64_t seed, const json& config, const json& inputs,
                    const std::vector<std::string>& artifacts) {
  json j;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = inputs;
  json outs = json::object();
  for (const std::string& name : artifacts)
    outs[name] = "fnv1a:" + hex64(fnv1a_file(out_dir + "/" + name));
  j["outputs"] = outs;
  j["seed"] = seed;
  j["timestamp"] = utc_now();
  const std::string path = out_dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

std::string html_escape_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<HeadSpec> parse_classes(const std::string& text) {
  std::vector<std::int64_t> counts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 2)
        throw std::invalid_argument("bad count");
      counts.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--classes expects counts like 4x12, each at least 2; got '" +
                       text + "'");
    }
  }
  if (counts.empty())
    throw UsageError("--classes expects counts like 4x12; got '" + text + "'");
  for (std::size_t i = 0; i + 1 < counts.size(); ++i) {
    if (counts[i + 1] % counts[i] != 0)
      throw UsageError(
          "--classes must nest: each level's class count must divide the next "
          "(got '" + text + "')");
  }
  std::vector<HeadSpec> heads;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::string name;
    if (counts.size() == 1)
      name = "label";
    else if (counts.size() == 2)
      name = i == 0 ? "coarse" : "fine";
    else
      name = "level" + std::to_string(i);
    heads.push_back({name, static_cast<int>(counts[i])});
  }
  return heads;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch, train_loss, val_loss, lr\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const EpochStats& e = history.epochs[i];
    out << i << ", " << e.train_loss << ", " << e.val_loss << ", " << e.last_lr
        << "\n";
  }
}

void check_vocab_hash(std::uint64_t checkpoint_hash, std::uint64_t meta_hash,
                      const std::string& what) {
  if (checkpoint_hash != meta_hash) {
    throw std::runtime_error(
        "vocabulary hash mismatch: " + what + " was built for vocab " +
        hex64(checkpoint_hash) + " but the dataset records " +
        hex64(meta_hash));
  }
}

std::vector<std::string> token_strings(const Vocabulary& vocab,
                                       const TokenSequence& x) {
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(x.valid_len));
  for (std::int64_t i = 0; i < x.valid_len; ++i)
    tokens.push_back(vocab.token_string(x.ids[static_cast<std::size_t>(i)]));
  return tokens;
}

MaskRecord record_for_item(const Explainer& explainer, const LabeledDataset& data,
                           std::size_t i, double threshold) {
  const TokenSequence& x = data.sequences[i];
  const MaskStack S = explainer.explain(x);
  const Tensor m = target_mask(S, data.labels[i]);
  MaskRecord rec;
  rec.id = data.record_ids[i];
  const auto values = m.values();
  rec.mask.assign(values.begin(),
                  values.begin() + static_cast<std::ptrdiff_t>(x.valid_len));
  rec.rounded = round_mask(rec.mask, threshold);
  rec.chunks = segment_chunks(rec.rounded, x.valid_len);
  return rec;
}

void write_masks_html(const std::string& path, const LabeledDataset& data,
                      const Vocabulary& vocab,
                      const std::vector<MaskRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
      << "<title>token masks</title>\n<style>\n"
      << "body { font-family: monospace; margin: 2em; }\n"
      << ".seq { margin-bottom: 1.5em; }\n"
      << "</style></head>\n<body>\n<h1>Token masks</h1>\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const MaskRecord& rec = records[i];
    out << "<div class=\"seq\"><h3>" << html_escape_text(rec.id) << "</h3>\n"
        << render_mask_html(token_strings(vocab, data.sequences[i]), rec.mask,
                            rec.rounded)
        << "\n</div>\n";
  }
  out << "</body></html>\n";
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataOpts {
  std::string out;
  std::uint64_t seed = 0;
  std::string classes = "4x12";
  std::int64_t n_per_class = 220;
  std::int64_t kmer = 3;
  std::int64_t sequence_bases = 192;
  std::int64_t motif_bases = 12;
  double test_fraction = 5.0 / 33.0;
  double val_fraction = 1.0 / 11.0;
};

int run_gen_data(const GenDataOpts& opts) {
  const std::vector<HeadSpec> heads = parse_classes(opts.classes);
  const Vocabulary vocab(static_cast<int>(opts.kmer));
  const MotifSpec spec = make_motif_spec(vocab, heads, opts.sequence_bases,
                                         opts.motif_bases, opts.seed);
  LabeledDataset data =
      generate_motif_dataset(spec, vocab, opts.n_per_class, opts.seed + 1);
  data.label_names.clear();
  for (const HeadSpec& head : data.heads) {
    std::vector<std::string> names;
    for (int c = 0; c < head.num_classes; ++c)
      names.push_back(head.name + std::to_string(c));
    data.label_names.push_back(std::move(names));
  }
  const SplitResult split = stratified_split(data, opts.test_fraction,
                                             opts.val_fraction, opts.seed + 2);

  ensure_dir(opts.out);
  write_dataset_meta(opts.out + "/meta.json", vocab, data);
  write_dataset_jsonl(opts.out + "/train.jsonl", split.train);
  write_dataset_jsonl(opts.out + "/val.jsonl", split.val);
  write_dataset_jsonl(opts.out + "/test.jsonl", split.test);

  json config;
  config["classes"] = opts.classes;
  config["n"] = opts.n_per_class;
  config["kmer"] = opts.kmer;
  config["sequence_bases"] = opts.sequence_bases;
  config["motif_bases"] = opts.motif_bases;
  config["test_fraction"] = opts.test_fraction;
  config["val_fraction"] = opts.val_fraction;
  write_manifest(opts.out, "gen-data", opts.seed, config, json::object(),
                 {"meta.json", "train.jsonl", "val.jsonl", "test.jsonl"});

  std::cout << "wrote " << split.train.sequences.size() << " train / "
            << split.val.sequences.size() << " val / "
            << split.test.sequences.size() << " test items to " << opts.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-explanandum
// ---------------------------------------------------------------------------

struct TrainExplanandumOpts {
  std::string data_dir;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 16;
  double lr = 0.0002;
  std::int64_t patience = 3;
  std::int64_t warmup = 0;
  double weight_decay = 0.0;
  std::int64_t embedding_dim = 32;
  std::string encoder = "attention";
  std::string pooling = "mean";
  bool no_freeze = false;
};

json train_inputs(const std::string& data_dir) {
  json inputs;
  inputs["data"] = data_dir;
  inputs["meta.json"] = "fnv1a:" + hex64(fnv1a_file(data_dir + "/meta.json"));
  inputs["train.jsonl"] =
      "fnv1a:" + hex64(fnv1a_file(data_dir + "/train.jsonl"));
  inputs["val.jsonl"] = "fnv1a:" + hex64(fnv1a_file(data_dir + "/val.jsonl"));
  return inputs;
}

int run_train_explanandum(const TrainExplanandumOpts& opts) {
  const DatasetMeta meta = read_dataset_meta(opts.data_dir + "/meta.json");
  const LabeledDataset train = read_dataset_jsonl(opts.data_dir + "/train.jsonl",
                                                  opts.data_dir + "/meta.json");
  const LabeledDataset val = read_dataset_jsonl(opts.data_dir + "/val.jsonl",
                                                opts.data_dir + "/meta.json");

  ExplanandumConfig config;
  config.vocab_size = meta.vocab.size();
  config.embedding_dim = opts.embedding_dim;
  config.encoder = encoder_from_string(opts.encoder);
  config.pooling = pooling_from_string(opts.pooling);
  config.heads = meta.heads;
  config.seed = opts.seed;
  Explanandum model(config);

  TrainConfig tc;
  tc.base_lr = opts.lr;
  tc.batch_size = opts.batch_size;
  tc.max_epochs = opts.epochs;
  tc.patience = opts.patience;
  tc.warmup_steps = opts.warmup;
  tc.weight_decay = opts.weight_decay;
  tc.seed = opts.seed;
  const TrainHistory history = train_explanandum(model, train, val, tc);
  if (!opts.no_freeze) model.freeze();

  ensure_dir(opts.out);
  save_explanandum(opts.out + "/explanandum.json", model, meta.vocab_hash);
  write_history_csv(opts.out + "/history.csv", history);

  json config_json;
  config_json["epochs"] = opts.epochs;
  config_json["batch_size"] = opts.batch_size;
  config_json["lr"] = opts.lr;
  config_json["patience"] = opts.patience;
  config_json["warmup"] = opts.warmup;
  config_json["weight_decay"] = opts.weight_decay;
  config_json["embedding_dim"] = opts.embedding_dim;
  config_json["encoder"] = opts.encoder;
  config_json["pooling"] = opts.pooling;
  config_json["freeze"] = !opts.no_freeze;
  write_manifest(opts.out, "train-explanandum", opts.seed, config_json,
                 train_inputs(opts.data_dir),
                 {"explanandum.json", "history.csv"});

  std::cout << "trained " << history.epochs.size() << " epochs; best val loss "
            << history.best_val_loss << " at epoch " << history.best_epoch
            << (model.frozen() ? "; checkpoint frozen" : "; checkpoint left trainable")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-explainer
// ---------------------------------------------------------------------------

struct TrainExplainerOpts {
  std::string data_dir;
  std::string model_path;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t epochs = 30;
  std::int64_t batch_size = 16;
  double lr = 0.0002;
  std::int64_t patience = 3;
  std::int64_t warmup = 0;
  double weight_decay = 0.0;
  std::int64_t embedding_dim = 32;
  std::int64_t hidden = 16;
  std::int64_t layers = 2;
  double lambda_e = 1.0;
  double lambda_a = 1.0;
  double lambda_tv = 1.0;
  double area_a = 0.1;
  double area_b = 0.5;
};

int run_train_explainer(const TrainExplainerOpts& opts) {
  const DatasetMeta meta = read_dataset_meta(opts.data_dir + "/meta.json");
  const LoadedExplanandum loaded = load_explanandum(opts.model_path);
  check_vocab_hash(loaded.vocab_hash, meta.vocab_hash, "the classifier");
  if (!loaded.model.frozen()) {
    throw std::runtime_error(
        "classifier checkpoint is not frozen; retrain it without --no-freeze "
        "before fitting an explainer");
  }
  const LabeledDataset train = read_dataset_jsonl(opts.data_dir + "/train.jsonl",
                                                  opts.data_dir + "/meta.json");
  const LabeledDataset val = read_dataset_jsonl(opts.data_dir + "/val.jsonl",
                                                opts.data_dir + "/meta.json");

  ExplainerConfig config;
  config.vocab_size = meta.vocab.size();
  config.embedding_dim = opts.embedding_dim;
  config.hidden = opts.hidden;
  config.layers = opts.layers;
  config.heads = meta.heads;
  config.seed = opts.seed;
  Explainer explainer(config);

  TrainConfig tc;
  tc.base_lr = opts.lr;
  tc.batch_size = opts.batch_size;
  tc.max_epochs = opts.epochs;
  tc.patience = opts.patience;
  tc.warmup_steps = opts.warmup;
  tc.weight_decay = opts.weight_decay;
  tc.seed = opts.seed;
  LossWeights weights;
  weights.lambda_e = opts.lambda_e;
  weights.lambda_a = opts.lambda_a;
  weights.lambda_tv = opts.lambda_tv;
  AreaBounds bounds;
  bounds.a = opts.area_a;
  bounds.b = opts.area_b;

  ensure_dir(opts.out);
  const ExplainerTrainResult result =
      train_explainer(explainer, loaded.model, train, val, tc, weights, bounds,
                      opts.out + "/loss_log.csv");
  save_explainer(opts.out + "/explainer.json", explainer, meta.vocab_hash);
  write_history_csv(opts.out + "/history.csv", result.history);

  json config_json;
  config_json["epochs"] = opts.epochs;
  config_json["batch_size"] = opts.batch_size;
  config_json["lr"] = opts.lr;
  config_json["patience"] = opts.patience;
  config_json["warmup"] = opts.warmup;
  config_json["weight_decay"] = opts.weight_decay;
  config_json["embedding_dim"] = opts.embedding_dim;
  config_json["hidden"] = opts.hidden;
  config_json["layers"] = opts.layers;
  config_json["lambda_e"] = opts.lambda_e;
  config_json["lambda_a"] = opts.lambda_a;
  config_json["lambda_tv"] = opts.lambda_tv;
  config_json["area_a"] = opts.area_a;
  config_json["area_b"] = opts.area_b;
  json inputs = train_inputs(opts.data_dir);
  inputs["model"] = opts.model_path;
  inputs["explanandum.json"] = "fnv1a:" + hex64(fnv1a_file(opts.model_path));
  write_manifest(opts.out, "train-explainer", opts.seed, config_json, inputs,
                 {"explainer.json", "loss_log.csv", "history.csv"});

  std::cout << "trained " << result.history.epochs.size()
            << " epochs; best val loss " << result.history.best_val_loss
            << " at epoch " << result.history.best_epoch << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

struct ExplainOpts {
  std::string data_dir;
  std::string split = "test";
  std::string model_path;
  std::string explainer_path;
  std::string out;
  std::string format = "jsonl";
  std::int64_t limit = 0;
  double threshold = 0.5;
};

struct LoadedPair {
  DatasetMeta meta;
  LoadedExplanandum model;
  LoadedExplainer explainer;
  LabeledDataset data;
};

LoadedPair load_pipeline(const std::string& data_dir, const std::string& split,
                         const std::string& model_path,
                         const std::string& explainer_path) {
  DatasetMeta meta = read_dataset_meta(data_dir + "/meta.json");
  LoadedExplanandum model = load_explanandum(model_path);
  LoadedExplainer explainer = load_explainer(explainer_path);
  check_vocab_hash(model.vocab_hash, meta.vocab_hash, "the classifier");
  check_vocab_hash(explainer.vocab_hash, meta.vocab_hash, "the explainer");
  LabeledDataset data = read_dataset_jsonl(data_dir + "/" + split + ".jsonl",
                                           data_dir + "/meta.json");
  return {std::move(meta), std::move(model), std::move(explainer),
          std::move(data)};
}

int run_explain(const ExplainOpts& opts) {
  LoadedPair p = load_pipeline(opts.data_dir, opts.split, opts.model_path,
                               opts.explainer_path);
  std::size_t n = p.data.sequences.size();
  if (opts.limit > 0) n = std::min(n, static_cast<std::size_t>(opts.limit));

  NoGradGuard guard;
  std::vector<MaskRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    records.push_back(record_for_item(p.explainer.explainer, p.data, i,
                                      opts.threshold));

  ensure_dir(opts.out);
  write_masks_jsonl(opts.out + "/masks.jsonl", records);
  std::vector<std::string> artifacts = {"masks.jsonl"};
  if (opts.format == "html") {
    write_masks_html(opts.out + "/masks.html", p.data, p.meta.vocab, records);
    artifacts.push_back("masks.html");
  } else if (opts.format == "ansi") {
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::cout << records[i].id << "  "
                << render_mask_ansi(token_strings(p.meta.vocab,
                                                  p.data.sequences[i]),
                                    records[i].mask, records[i].rounded)
                << "\n";
    }
  }

  json config;
  config["split"] = opts.split;
  config["format"] = opts.format;
  config["limit"] = opts.limit;
  config["threshold"] = opts.threshold;
  json inputs;
  inputs["data"] = opts.data_dir;
  inputs["model"] = opts.model_path;
  inputs["explainer"] = opts.explainer_path;
  inputs["explanandum.json"] = "fnv1a:" + hex64(fnv1a_file(opts.model_path));
  inputs["explainer.json"] = "fnv1a:" + hex64(fnv1a_file(opts.explainer_path));
  write_manifest(opts.out, "explain", 0, config, inputs, artifacts);

  std::cout << "explained " << records.size() << " items from " << opts.split
            << " split\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string data_dir;
  std::string split = "test";
  std::string model_path;
  std::string explainer_path;
  std::string out;
  double threshold = 0.5;
  std::int64_t bins = 10;
  std::int64_t gallery = 8;
};

void print_balanced_accuracy(const EvaluationReport& report) {
  std::cout << std::setprecision(4);
  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    std::cout << "  " << std::left << std::setw(18) << report.conditions[c]
              << std::right;
    for (std::size_t h = 0; h < report.head_names.size(); ++h)
      std::cout << "  " << report.head_names[h] << "="
                << report.balanced_acc[c][h];
    std::cout << "  (items " << report.items_used[c] << ")\n";
  }
}

int run_evaluate(const EvaluateOpts& opts) {
  LoadedPair p = load_pipeline(opts.data_dir, opts.split, opts.model_path,
                               opts.explainer_path);
  EvaluationOptions eval_opts;
  eval_opts.round_threshold = opts.threshold;
  eval_opts.histogram_bins = static_cast<int>(opts.bins);
  eval_opts.gallery_items = static_cast<int>(opts.gallery);
  const EvaluationReport report =
      evaluate(p.model.model, p.explainer.explainer, p.data, eval_opts);

  ensure_dir(opts.out);
  write_evaluation_json(opts.out + "/eval.json", report);
  write_masks_jsonl(opts.out + "/masks.jsonl", report.masks);
  write_markdown_report(opts.out + "/report.md", report);

  json config;
  config["split"] = opts.split;
  config["threshold"] = opts.threshold;
  config["bins"] = opts.bins;
  config["gallery"] = opts.gallery;
  json inputs;
  inputs["data"] = opts.data_dir;
  inputs["model"] = opts.model_path;
  inputs["explainer"] = opts.explainer_path;
  inputs["explanandum.json"] = "fnv1a:" + hex64(fnv1a_file(opts.model_path));
  inputs["explainer.json"] = "fnv1a:" + hex64(fnv1a_file(opts.explainer_path));
  write_manifest(opts.out, "evaluate", 0, config, inputs,
                 {"eval.json", "masks.jsonl", "report.md"});

  std::cout << "balanced accuracy per condition (" << opts.split << " split, "
            << p.data.sequences.size() << " items):\n";
  print_balanced_accuracy(report);
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOpts {
  std::string eval_dir;
  std::string data_dir;
  std::string split = "test";
  std::string out;
  std::int64_t gallery = 8;
};

int run_report(const ReportOpts& opts) {
  EvaluationReport report = read_evaluation_json(opts.eval_dir + "/eval.json");
  report.masks = read_masks_jsonl(opts.eval_dir + "/masks.jsonl");
  const DatasetMeta meta = read_dataset_meta(opts.data_dir + "/meta.json");
  const LabeledDataset data = read_dataset_jsonl(
      opts.data_dir + "/" + opts.split + ".jsonl", opts.data_dir + "/meta.json");
  if (report.masks.size() > data.sequences.size())
    throw std::runtime_error(
        "stored masks do not match the dataset split: more mask records than "
        "items");
  for (std::size_t i = 0; i < report.masks.size(); ++i) {
    if (report.masks[i].id != data.record_ids[i])
      throw std::runtime_error("stored masks do not match the dataset split: "
                               "record id mismatch at item " +
                               std::to_string(i));
  }

  ensure_dir(opts.out);
  write_markdown_report(opts.out + "/report.md", report);
  write_html_report(opts.out + "/report.html", report, data, meta.vocab,
                    static_cast<int>(opts.gallery));
  write_histogram_csv(opts.out + "/histogram.csv", report.statistics);

  json config;
  config["split"] = opts.split;
  config["gallery"] = opts.gallery;
  json inputs;
  inputs["eval"] = opts.eval_dir;
  inputs["data"] = opts.data_dir;
  inputs["eval.json"] = "fnv1a:" + hex64(fnv1a_file(opts.eval_dir + "/eval.json"));
  inputs["masks.jsonl"] =
      "fnv1a:" + hex64(fnv1a_file(opts.eval_dir + "/masks.jsonl"));
  write_manifest(opts.out, "report", 0, config, inputs,
                 {"report.md", "report.html", "histogram.csv"});

  std::cout << "regenerated report.md, report.html, histogram.csv in "
            << opts.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Option wiring
// ---------------------------------------------------------------------------

// Values from --config act as defaults; explicit flags override them.
template <typename T>
void config_default(const json& config, const char* key, T& target) {
  if (config.contains(key)) target = config.at(key).get<T>();
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed config file " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw std::runtime_error("malformed config file " + path +
                             ": top level must be a JSON object");
  return j;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  // --config must take effect before option defaults are registered, so it is
  // resolved with a pre-scan rather than by the parser.
  json config = json::object();
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc)
        config = load_config_json(argv[i + 1]);
      else if (arg.rfind("--config=", 0) == 0)
        config = load_config_json(arg.substr(9));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"Soft-mask explanations for hierarchical sequence classifiers"};
  app.require_subcommand(1);
  std::string config_path;
  std::int64_t threads = 0;
  app.add_option("--config", config_path,
                 "JSON object of default flag values (long names without --)");
  config_default(config, "threads", threads);
  app.add_option("--threads", threads,
                 "cap parallel worker threads (0 keeps the library default)");

  std::function<int()> action;

  GenDataOpts gd;
  config_default(config, "classes", gd.classes);
  config_default(config, "n", gd.n_per_class);
  config_default(config, "kmer", gd.kmer);
  config_default(config, "sequence_bases", gd.sequence_bases);
  config_default(config, "motif_bases", gd.motif_bases);
  config_default(config, "test_fraction", gd.test_fraction);
  config_default(config, "val_fraction", gd.val_fraction);
  config_default(config, "seed", gd.seed);
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a planted-motif synthetic dataset with splits");
  gen->fallthrough();
  gen->add_option("--out", gd.out, "run directory for the dataset")->required();
  gen->add_option("--seed", gd.seed, "RNG seed")->capture_default_str();
  gen->add_option("--classes", gd.classes,
                  "class counts per level, e.g. 4x12 (each divides the next)")->capture_default_str();
  gen->add_option("--n", gd.n_per_class, "items per fine-grained class")->capture_default_str();
  gen->add_option("--kmer", gd.kmer, "tokenizer k-mer width")->capture_default_str()
      ->check(CLI::Range(std::int64_t{1}, std::int64_t{8}));
  gen->add_option("--sequence-bases", gd.sequence_bases,
                  "base-pair length of each sequence")->capture_default_str();
  gen->add_option("--motif-bases", gd.motif_bases,
                  "base-pair length of each planted motif")->capture_default_str();
  gen->add_option("--test-fraction", gd.test_fraction,
                  "fraction of items held out for testing")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--val-fraction", gd.val_fraction,
                  "fraction of items held out for validation")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->callback([&] { action = [&] { return run_gen_data(gd); }; });

  TrainExplanandumOpts te;
  config_default(config, "seed", te.seed);
  config_default(config, "epochs", te.epochs);
  config_default(config, "batch_size", te.batch_size);
  config_default(config, "lr", te.lr);
  config_default(config, "patience", te.patience);
  config_default(config, "warmup", te.warmup);
  config_default(config, "weight_decay", te.weight_decay);
  config_default(config, "embedding_dim", te.embedding_dim);
  config_default(config, "encoder", te.encoder);
  config_default(config, "pooling", te.pooling);
  CLI::App* tr1 = app.add_subcommand(
      "train-explanandum", "Train and freeze the token classifier");
  tr1->fallthrough();
  tr1->add_option("--data", te.data_dir, "directory produced by gen-data")
      ->required();
  tr1->add_option("--out", te.out, "run directory for the checkpoint")
      ->required();
  tr1->add_option("--seed", te.seed, "RNG seed")->capture_default_str();
  tr1->add_option("--epochs", te.epochs, "maximum training epochs")->capture_default_str();
  tr1->add_option("--batch-size", te.batch_size, "minibatch size")->capture_default_str();
  tr1->add_option("--lr", te.lr, "base learning rate")->capture_default_str();
  tr1->add_option("--patience", te.patience,
                  "epochs without val improvement before stopping")->capture_default_str();
  tr1->add_option("--warmup", te.warmup, "linear warmup steps")->capture_default_str();
  tr1->add_option("--weight-decay", te.weight_decay,
                  "decoupled weight decay")->capture_default_str();
  tr1->add_option("--embedding-dim", te.embedding_dim, "embedding width")->capture_default_str();
  tr1->add_option("--encoder", te.encoder, "token mixer")->capture_default_str()
      ->check(CLI::IsMember({"attention", "none"}));
  tr1->add_option("--pooling", te.pooling, "sequence pooling")->capture_default_str()
      ->check(CLI::IsMember({"mean", "cls"}));
  tr1->add_flag("--no-freeze", te.no_freeze,
                "leave the checkpoint trainable (not usable by train-explainer)");
  tr1->callback([&] { action = [&] { return run_train_explanandum(te); }; });

  TrainExplainerOpts tx;
  config_default(config, "seed", tx.seed);
  config_default(config, "epochs", tx.epochs);
  config_default(config, "batch_size", tx.batch_size);
  config_default(config, "lr", tx.lr);
  config_default(config, "patience", tx.patience);
  config_default(config, "warmup", tx.warmup);
  config_default(config, "weight_decay", tx.weight_decay);
  config_default(config, "embedding_dim", tx.embedding_dim);
  config_default(config, "hidden", tx.hidden);
  config_default(config, "layers", tx.layers);
  config_default(config, "lambda_e", tx.lambda_e);
  config_default(config, "lambda_a", tx.lambda_a);
  config_default(config, "lambda_tv", tx.lambda_tv);
  config_default(config, "area_a", tx.area_a);
  config_default(config, "area_b", tx.area_b);
  CLI::App* tr2 = app.add_subcommand(
      "train-explainer", "Train the mask explainer against a frozen classifier");
  tr2->fallthrough();
  tr2->add_option("--data", tx.data_dir, "directory produced by gen-data")
      ->required();
  tr2->add_option("--model", tx.model_path, "frozen classifier checkpoint")
      ->required();
  tr2->add_option("--out", tx.out, "run directory for the checkpoint")
      ->required();
  tr2->add_option("--seed", tx.seed, "RNG seed")->capture_default_str();
  tr2->add_option("--epochs", tx.epochs, "maximum training epochs")->capture_default_str();
  tr2->add_option("--batch-size", tx.batch_size, "minibatch size")->capture_default_str();
  tr2->add_option("--lr", tx.lr, "base learning rate")->capture_default_str();
  tr2->add_option("--patience", tx.patience,
                  "epochs without val improvement before stopping")->capture_default_str();
  tr2->add_option("--warmup", tx.warmup, "linear warmup steps")->capture_default_str();
  tr2->add_option("--weight-decay", tx.weight_decay,
                  "decoupled weight decay")->capture_default_str();
  tr2->add_option("--embedding-dim", tx.embedding_dim,
                  "explainer embedding width")->capture_default_str();
  tr2->add_option("--hidden", tx.hidden, "LSTM hidden width")->capture_default_str();
  tr2->add_option("--layers", tx.layers, "stacked LSTM layers")->capture_default_str();
  tr2->add_option("--lambda-e", tx.lambda_e, "entropy term weight")->capture_default_str();
  tr2->add_option("--lambda-a", tx.lambda_a, "area term weight")->capture_default_str();
  tr2->add_option("--lambda-tv", tx.lambda_tv,
                  "total-variation term weight")->capture_default_str();
  tr2->add_option("--area-a", tx.area_a, "lower mask-area bound")->capture_default_str();
  tr2->add_option("--area-b", tx.area_b, "upper mask-area bound")->capture_default_str();
  tr2->callback([&] { action = [&] { return run_train_explainer(tx); }; });

  ExplainOpts ex;
  config_default(config, "split", ex.split);
  config_default(config, "format", ex.format);
  config_default(config, "limit", ex.limit);
  config_default(config, "threshold", ex.threshold);
  CLI::App* exp = app.add_subcommand(
      "explain", "Emit per-token masks for a dataset split");
  exp->fallthrough();
  exp->add_option("--data", ex.data_dir, "directory produced by gen-data")
      ->required();
  exp->add_option("--model", ex.model_path, "frozen classifier checkpoint")
      ->required();
  exp->add_option("--explainer", ex.explainer_path, "explainer checkpoint")
      ->required();
  exp->add_option("--out", ex.out, "run directory for the masks")->required();
  exp->add_option("--split", ex.split, "dataset split to explain")->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  exp->add_option("--format", ex.format, "extra rendering next to masks.jsonl")->capture_default_str()
      ->check(CLI::IsMember({"jsonl", "ansi", "html"}));
  exp->add_option("--limit", ex.limit, "explain only the first N items (0 = all)")->capture_default_str();
  exp->add_option("--threshold", ex.threshold, "rounding threshold")->capture_default_str()
      ->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
  exp->callback([&] { action = [&] { return run_explain(ex); }; });

  EvaluateOpts ev;
  config_default(config, "split", ev.split);
  config_default(config, "threshold", ev.threshold);
  config_default(config, "bins", ev.bins);
  config_default(config, "gallery", ev.gallery);
  CLI::App* eva = app.add_subcommand(
      "evaluate", "Run the masking/inversion/rounding/chunk protocol");
  eva->fallthrough();
  eva->add_option("--data", ev.data_dir, "directory produced by gen-data")
      ->required();
  eva->add_option("--model", ev.model_path, "frozen classifier checkpoint")
      ->required();
  eva->add_option("--explainer", ev.explainer_path, "explainer checkpoint")
      ->required();
  eva->add_option("--out", ev.out, "run directory for the report")->required();
  eva->add_option("--split", ev.split, "dataset split to evaluate")->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  eva->add_option("--threshold", ev.threshold, "rounding threshold")->capture_default_str()
      ->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
  eva->add_option("--bins", ev.bins, "mask histogram bins")->capture_default_str()
      ->check(CLI::Range(std::int64_t{1}, std::int64_t{1000}));
  eva->add_option("--gallery", ev.gallery, "items rendered in HTML reports")->capture_default_str();
  eva->callback([&] { action = [&] { return run_evaluate(ev); }; });

  ReportOpts rp;
  config_default(config, "split", rp.split);
  config_default(config, "gallery", rp.gallery);
  CLI::App* rep = app.add_subcommand(
      "report", "Regenerate human-readable reports from stored evaluation JSON");
  rep->fallthrough();
  rep->add_option("--eval", rp.eval_dir,
                  "directory produced by evaluate (eval.json + masks.jsonl)")
      ->required();
  rep->add_option("--data", rp.data_dir, "directory produced by gen-data")
      ->required();
  rep->add_option("--out", rp.out, "run directory for the reports")->required();
  rep->add_option("--split", rp.split, "split the evaluation ran on")->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  rep->add_option("--gallery", rp.gallery, "items rendered in HTML reports")->capture_default_str();
  rep->callback([&] { action = [&] { return run_report(rp); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads > 0) kernels::set_max_threads(static_cast<int>(threads));
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace seqmask
