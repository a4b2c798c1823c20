#include "seqmask/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

namespace {

using nlohmann::json;

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

void check_heads_match(const std::vector<HeadSpec>& a,
                       const std::vector<HeadSpec>& b, const char* what) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].name == b[i].name && a[i].num_classes == b[i].num_classes;
  }
  if (!ok) {
    throw std::invalid_argument(std::string("evaluate: ") + what +
                                " disagrees with the dataset heads");
  }
}

std::string escape_html(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

double balanced_accuracy(const std::vector<int>& y_true,
                         const std::vector<int>& y_pred, int num_classes) {
  if (y_true.empty()) {
    throw std::invalid_argument("balanced_accuracy: empty input");
  }
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("balanced_accuracy: size mismatch");
  }
  if (num_classes <= 0) {
    throw std::invalid_argument("balanced_accuracy: num_classes must be positive");
  }
  std::vector<std::int64_t> support(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> hits(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    if (t < 0 || t >= num_classes) {
      throw std::out_of_range("balanced_accuracy: label out of range");
    }
    ++support[static_cast<std::size_t>(t)];
    if (y_pred[i] == t) ++hits[static_cast<std::size_t>(t)];
  }
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (support[static_cast<std::size_t>(c)] == 0) continue;
    recall_sum += static_cast<double>(hits[static_cast<std::size_t>(c)]) /
                  static_cast<double>(support[static_cast<std::size_t>(c)]);
    ++present;
  }
  return recall_sum / static_cast<double>(present);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("auroc: invalid input sizes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  std::vector<double> ranks(scores.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    // Average rank over the tie run [i, j], ranks are 1-based.
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum = 0.0;
  std::int64_t n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0) {
      rank_sum += ranks[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auroc: both classes must be present");
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<double> occlusion_importance(const Explanandum& model,
                                         const TokenSequence& x,
                                         const std::vector<int>& y) {
  if (x.valid_len <= 0) {
    throw std::invalid_argument("occlusion_importance: empty sequence");
  }
  NoGradGuard guard;
  const auto d = static_cast<std::int64_t>(x.ids.size());
  auto true_prob_sum = [&](const std::vector<Tensor>& probs) {
    double s = 0.0;
    for (std::size_t h = 0; h < probs.size(); ++h) {
      s += probs[h].at(y[h]);
    }
    return s;
  };
  const double base = true_prob_sum(model.predict_probs(x));

  std::vector<double> importance(static_cast<std::size_t>(x.valid_len), 0.0);
  std::vector<double> mask_values(static_cast<std::size_t>(d), 1.0);
  for (std::int64_t i = 0; i < x.valid_len; ++i) {
    mask_values[static_cast<std::size_t>(i)] = 0.0;
    Tensor mask = Tensor::from({d}, mask_values);
    importance[static_cast<std::size_t>(i)] =
        base - true_prob_sum(model.predict_probs(x, &mask));
    mask_values[static_cast<std::size_t>(i)] = 1.0;
  }
  return importance;
}

MaskStatistics mask_statistics(const std::vector<MaskRecord>& records,
                               int bins) {
  if (records.empty()) {
    throw std::invalid_argument("mask_statistics: no records");
  }
  if (bins <= 0) {
    throw std::invalid_argument("mask_statistics: bins must be positive");
  }
  MaskStatistics stats;
  stats.items = static_cast<std::int64_t>(records.size());
  stats.histogram.assign(static_cast<std::size_t>(bins), 0.0);

  std::size_t max_len = 0;
  for (const MaskRecord& r : records) max_len = std::max(max_len, r.mask.size());
  stats.position_mean.assign(max_len, 0.0);
  stats.position_std.assign(max_len, 0.0);
  stats.position_min.assign(max_len, 0.0);
  stats.position_max.assign(max_len, 0.0);
  std::vector<std::int64_t> pos_count(max_len, 0);

  double value_sum = 0.0;
  std::int64_t above_half = 0;
  std::vector<std::int64_t> hist_counts(static_cast<std::size_t>(bins), 0);
  std::vector<std::int64_t> chunk_lengths;
  for (const MaskRecord& r : records) {
    for (std::size_t p = 0; p < r.mask.size(); ++p) {
      const double v = r.mask[p];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("mask_statistics: value outside [0,1]");
      }
      value_sum += v;
      ++stats.positions;
      if (v > 0.5) ++above_half;
      const auto bin = std::min<std::size_t>(
          static_cast<std::size_t>(v * static_cast<double>(bins)),
          static_cast<std::size_t>(bins - 1));
      ++hist_counts[bin];
      if (pos_count[p] == 0) {
        stats.position_min[p] = v;
        stats.position_max[p] = v;
      } else {
        stats.position_min[p] = std::min(stats.position_min[p], v);
        stats.position_max[p] = std::max(stats.position_max[p], v);
      }
      stats.position_mean[p] += v;
      ++pos_count[p];
    }
    for (const Chunk& c : r.chunks) {
      if (!c.important) continue;
      ++stats.total_chunks;
      chunk_lengths.push_back(c.end - c.start);
    }
  }
  stats.mean = value_sum / static_cast<double>(stats.positions);
  stats.fraction_above_half =
      static_cast<double>(above_half) / static_cast<double>(stats.positions);
  for (std::size_t b = 0; b < hist_counts.size(); ++b) {
    stats.histogram[b] = static_cast<double>(hist_counts[b]) /
                         static_cast<double>(stats.positions);
  }
  for (std::size_t p = 0; p < max_len; ++p) {
    stats.position_mean[p] /= static_cast<double>(pos_count[p]);
  }
  for (const MaskRecord& r : records) {
    for (std::size_t p = 0; p < r.mask.size(); ++p) {
      const double d = r.mask[p] - stats.position_mean[p];
      stats.position_std[p] += d * d;
    }
  }
  for (std::size_t p = 0; p < max_len; ++p) {
    stats.position_std[p] =
        std::sqrt(stats.position_std[p] / static_cast<double>(pos_count[p]));
  }
  stats.mean_chunks_per_item = static_cast<double>(stats.total_chunks) /
                               static_cast<double>(stats.items);
  if (!chunk_lengths.empty()) {
    stats.min_chunk_length =
        *std::min_element(chunk_lengths.begin(), chunk_lengths.end());
    stats.max_chunk_length =
        *std::max_element(chunk_lengths.begin(), chunk_lengths.end());
    stats.mean_chunk_length =
        static_cast<double>(
            std::accumulate(chunk_lengths.begin(), chunk_lengths.end(),
                            std::int64_t{0})) /
        static_cast<double>(chunk_lengths.size());
  }
  return stats;
}

const std::vector<std::string>& condition_names() {
  static const std::vector<std::string> names = {
      "unmasked",         "masked",          "inverted",
      "rounded",          "inverted_rounded", "relevant_chunks",
      "irrelevant_chunks"};
  return names;
}

EvaluationReport evaluate(const Explanandum& model, const Explainer& explainer,
                          const LabeledDataset& data,
                          const EvaluationOptions& options) {
  if (data.size() == 0) {
    throw std::invalid_argument("evaluate: dataset is empty");
  }
  check_heads_match(model.config().heads, data.heads, "classifier");
  check_heads_match(explainer.config().heads, data.heads, "explainer");

  NoGradGuard guard;
  const std::size_t num_heads = data.heads.size();
  const std::size_t num_conditions = condition_names().size();

  EvaluationReport report;
  report.conditions = condition_names();
  for (const HeadSpec& h : data.heads) report.head_names.push_back(h.name);

  // y_true/y_pred per condition per head; chunk conditions may skip items.
  std::vector<std::vector<std::vector<int>>> truth(
      num_conditions, std::vector<std::vector<int>>(num_heads));
  std::vector<std::vector<std::vector<int>>> pred(
      num_conditions, std::vector<std::vector<int>>(num_heads));

  std::vector<double> sep_scores;
  std::vector<int> sep_labels;

  for (std::size_t item = 0; item < data.size(); ++item) {
    const TokenSequence& x = data.sequences[item];
    const std::vector<int>& y = data.labels[item];
    const auto d = static_cast<std::int64_t>(x.ids.size());
    const std::int64_t valid = x.valid_len;

    MaskStack S = explainer.explain(x);
    Tensor m = target_mask(S, y);
    const auto m_all = m.values();
    std::vector<double> m_valid(m_all.begin(), m_all.begin() + valid);
    std::vector<int> rounded = round_mask(m_valid, options.round_threshold);
    std::vector<Chunk> chunks = segment_chunks(rounded, valid);

    MaskRecord record;
    record.id = data.record_ids[item];
    record.mask = m_valid;
    record.rounded = rounded;
    record.chunks = chunks;
    report.masks.push_back(record);

    if (!data.importance.empty() && !data.importance[item].empty()) {
      for (std::int64_t p = 0; p < valid; ++p) {
        sep_scores.push_back(m_valid[static_cast<std::size_t>(p)]);
        sep_labels.push_back(data.importance[item][static_cast<std::size_t>(p)]);
      }
    }

    // Soft, inverted, and rounded variants of the input mask.
    Tensor m_inv = complement_mask(m, valid);
    std::vector<double> padded(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t p = 0; p < valid; ++p) {
      padded[static_cast<std::size_t>(p)] =
          static_cast<double>(rounded[static_cast<std::size_t>(p)]);
    }
    Tensor m_round = Tensor::from({d}, padded);
    for (std::int64_t p = 0; p < valid; ++p) {
      padded[static_cast<std::size_t>(p)] =
          1.0 - padded[static_cast<std::size_t>(p)];
    }
    Tensor m_round_inv = Tensor::from({d}, padded);

    const std::vector<std::vector<Tensor>> mask_probs = {
        model.predict_probs(x),
        model.predict_probs(x, &m),
        model.predict_probs(x, &m_inv),
        model.predict_probs(x, &m_round),
        model.predict_probs(x, &m_round_inv),
    };
    for (std::size_t c = 0; c < mask_probs.size(); ++c) {
      for (std::size_t h = 0; h < num_heads; ++h) {
        truth[c][h].push_back(y[h]);
        pred[c][h].push_back(argmax_lowest(mask_probs[c][h].values()));
      }
    }

    // Chunk conditions: average classifier probabilities over the chunks of
    // the requested kind, each chunk fed as a standalone sequence.
    for (int kind = 0; kind < 2; ++kind) {
      const bool want_important = kind == 0;
      const std::size_t cond = want_important ? 5 : 6;
      std::vector<std::vector<double>> prob_sums(num_heads);
      int used_chunks = 0;
      for (const Chunk& chunk : chunks) {
        if (chunk.important != want_important) continue;
        TokenSequence piece;
        piece.ids.assign(x.ids.begin() + chunk.start, x.ids.begin() + chunk.end);
        piece.valid_len = chunk.end - chunk.start;
        const auto probs = model.predict_probs(piece);
        for (std::size_t h = 0; h < num_heads; ++h) {
          const auto pv = probs[h].values();
          if (prob_sums[h].empty()) prob_sums[h].assign(pv.size(), 0.0);
          for (std::size_t k = 0; k < pv.size(); ++k) prob_sums[h][k] += pv[k];
        }
        ++used_chunks;
      }
      if (used_chunks == 0) continue;  // no chunk of this kind: skip the item
      for (std::size_t h = 0; h < num_heads; ++h) {
        truth[cond][h].push_back(y[h]);
        pred[cond][h].push_back(argmax_lowest(prob_sums[h]));
      }
    }
  }

  report.balanced_acc.assign(num_conditions, std::vector<double>(num_heads, 0.0));
  report.items_used.assign(num_conditions, 0);
  for (std::size_t c = 0; c < num_conditions; ++c) {
    report.items_used[c] = static_cast<std::int64_t>(truth[c][0].size());
    for (std::size_t h = 0; h < num_heads; ++h) {
      if (truth[c][h].empty()) continue;
      report.balanced_acc[c][h] = balanced_accuracy(
          truth[c][h], pred[c][h], data.heads[h].num_classes);
    }
  }

  report.statistics = mask_statistics(report.masks, options.histogram_bins);
  const bool has_pos = std::find(sep_labels.begin(), sep_labels.end(), 1) !=
                       sep_labels.end();
  const bool has_neg = std::find(sep_labels.begin(), sep_labels.end(), 0) !=
                       sep_labels.end();
  if (has_pos && has_neg) {
    report.has_importance = true;
    double on_sum = 0.0, off_sum = 0.0;
    std::int64_t on_n = 0, off_n = 0;
    for (std::size_t k = 0; k < sep_labels.size(); ++k) {
      if (sep_labels[k] != 0) {
        on_sum += sep_scores[k];
        ++on_n;
      } else {
        off_sum += sep_scores[k];
        ++off_n;
      }
    }
    report.separation = on_sum / static_cast<double>(on_n) -
                        off_sum / static_cast<double>(off_n);
    report.mask_auroc = auroc(sep_scores, sep_labels);
  }
  return report;
}

std::string render_mask_ansi(const std::vector<std::string>& tokens,
                             const std::vector<double>& mask,
                             const std::vector<int>& rounded) {
  if (tokens.size() != mask.size() || tokens.size() != rounded.size()) {
    throw std::invalid_argument("render_mask_ansi: size mismatch");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double v = std::clamp(mask[i], 0.0, 1.0);
    // Green axis of the 6x6x6 terminal color cube: 16 + 6 * level.
    const int level = std::min(5, static_cast<int>(v * 6.0));
    const int bg = 16 + 6 * level;
    const int fg = level >= 3 ? 16 : 231;  // black on bright, white on dark
    if (i > 0) out << ' ';
    if (rounded[i] != 0) out << "\x1b[1m";
    out << "\x1b[48;5;" << bg << "m\x1b[38;5;" << fg << 'm' << tokens[i]
        << "\x1b[0m";
  }
  return out.str();
}

std::string render_mask_html(const std::vector<std::string>& tokens,
                             const std::vector<double>& mask,
                             const std::vector<int>& rounded) {
  if (tokens.size() != mask.size() || tokens.size() != rounded.size()) {
    throw std::invalid_argument("render_mask_html: size mismatch");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double v = std::clamp(mask[i], 0.0, 1.0);
    if (i > 0) out << ' ';
    out << "<span style=\"background-color:rgba(0,153,0," << format_fixed(v, 3)
        << ");font-weight:" << (rounded[i] != 0 ? 700 : 400) << "\">"
        << escape_html(tokens[i]) << "</span>";
  }
  return out.str();
}

namespace {

json statistics_to_json(const MaskStatistics& s) {
  return {{"items", s.items},
          {"positions", s.positions},
          {"mean", s.mean},
          {"fraction_above_half", s.fraction_above_half},
          {"histogram", s.histogram},
          {"position_mean", s.position_mean},
          {"position_std", s.position_std},
          {"position_min", s.position_min},
          {"position_max", s.position_max},
          {"total_chunks", s.total_chunks},
          {"mean_chunks_per_item", s.mean_chunks_per_item},
          {"mean_chunk_length", s.mean_chunk_length},
          {"min_chunk_length", s.min_chunk_length},
          {"max_chunk_length", s.max_chunk_length}};
}

}  // namespace

void write_evaluation_json(const std::string& path,
                           const EvaluationReport& report) {
  json j;
  j["head_names"] = report.head_names;
  j["conditions"] = report.conditions;
  json ba = json::object();
  json used = json::object();
  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    json per_head = json::object();
    for (std::size_t h = 0; h < report.head_names.size(); ++h) {
      per_head[report.head_names[h]] = report.balanced_acc[c][h];
    }
    ba[report.conditions[c]] = per_head;
    used[report.conditions[c]] = report.items_used[c];
  }
  j["balanced_accuracy"] = ba;
  j["items_used"] = used;
  j["mask_statistics"] = statistics_to_json(report.statistics);
  j["has_importance"] = report.has_importance;
  if (report.has_importance) {
    j["separation"] = report.separation;
    j["mask_auroc"] = report.mask_auroc;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << j.dump(2) << '\n';
}

EvaluationReport read_evaluation_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("report " + path + ": " + e.what());
  }
  EvaluationReport report;
  report.head_names = j.at("head_names").get<std::vector<std::string>>();
  report.conditions = j.at("conditions").get<std::vector<std::string>>();
  for (const std::string& cond : report.conditions) {
    std::vector<double> row;
    for (const std::string& head : report.head_names) {
      row.push_back(j.at("balanced_accuracy").at(cond).at(head).get<double>());
    }
    report.balanced_acc.push_back(std::move(row));
    report.items_used.push_back(
        j.at("items_used").at(cond).get<std::int64_t>());
  }
  const json& s = j.at("mask_statistics");
  MaskStatistics& stats = report.statistics;
  stats.items = s.at("items").get<std::int64_t>();
  stats.positions = s.at("positions").get<std::int64_t>();
  stats.mean = s.at("mean").get<double>();
  stats.fraction_above_half = s.at("fraction_above_half").get<double>();
  stats.histogram = s.at("histogram").get<std::vector<double>>();
  stats.position_mean = s.at("position_mean").get<std::vector<double>>();
  stats.position_std = s.at("position_std").get<std::vector<double>>();
  stats.position_min = s.at("position_min").get<std::vector<double>>();
  stats.position_max = s.at("position_max").get<std::vector<double>>();
  stats.total_chunks = s.at("total_chunks").get<std::int64_t>();
  stats.mean_chunks_per_item = s.at("mean_chunks_per_item").get<double>();
  stats.mean_chunk_length = s.at("mean_chunk_length").get<double>();
  stats.min_chunk_length = s.at("min_chunk_length").get<std::int64_t>();
  stats.max_chunk_length = s.at("max_chunk_length").get<std::int64_t>();
  report.has_importance = j.at("has_importance").get<bool>();
  if (report.has_importance) {
    report.separation = j.at("separation").get<double>();
    report.mask_auroc = j.at("mask_auroc").get<double>();
  }
  return report;
}

void write_markdown_report(const std::string& path,
                           const EvaluationReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "# Mask evaluation\n\n";
  out << "## Balanced accuracy by condition\n\n";
  out << "| condition | items |";
  for (const std::string& h : report.head_names) out << ' ' << h << " |";
  out << "\n|---|---|";
  for (std::size_t h = 0; h < report.head_names.size(); ++h) out << "---|";
  out << '\n';
  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    out << "| " << report.conditions[c] << " | " << report.items_used[c]
        << " |";
    for (std::size_t h = 0; h < report.head_names.size(); ++h) {
      out << ' ' << format_fixed(report.balanced_acc[c][h]) << " |";
    }
    out << '\n';
  }
  const MaskStatistics& s = report.statistics;
  out << "\n## Mask statistics\n\n";
  out << "- items: " << s.items << "\n";
  out << "- mean mask value: " << format_fixed(s.mean) << "\n";
  out << "- fraction above 0.5: " << format_fixed(s.fraction_above_half)
      << "\n";
  out << "- highlighted chunks per item: "
      << format_fixed(s.mean_chunks_per_item) << "\n";
  out << "- mean chunk length: " << format_fixed(s.mean_chunk_length)
      << " tokens\n";
  if (report.has_importance) {
    out << "\n## Agreement with planted importance\n\n";
    out << "- separation: " << format_fixed(report.separation) << "\n";
    out << "- AUROC: " << format_fixed(report.mask_auroc) << "\n";
  }
}

void write_html_report(const std::string& path, const EvaluationReport& report,
                       const LabeledDataset& data, const Vocabulary& vocab,
                       int gallery_items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      << "<title>Mask evaluation</title>\n"
      << "<style>body{font-family:sans-serif;max-width:70em;margin:auto}"
      << "table{border-collapse:collapse}td,th{border:1px solid #999;"
      << "padding:0.3em 0.6em}.seq{font-family:monospace;line-height:1.8;"
      << "margin:0.5em 0 1.5em}</style>\n</head>\n<body>\n";
  out << "<h1>Mask evaluation</h1>\n<h2>Balanced accuracy</h2>\n<table>\n"
      << "<tr><th>condition</th><th>items</th>";
  for (const std::string& h : report.head_names) out << "<th>" << escape_html(h) << "</th>";
  out << "</tr>\n";
  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    out << "<tr><td>" << report.conditions[c] << "</td><td>"
        << report.items_used[c] << "</td>";
    for (std::size_t h = 0; h < report.head_names.size(); ++h) {
      out << "<td>" << format_fixed(report.balanced_acc[c][h]) << "</td>";
    }
    out << "</tr>\n";
  }
  out << "</table>\n<h2>Highlighted sequences</h2>\n";
  const std::size_t n =
      std::min<std::size_t>(report.masks.size(),
                            static_cast<std::size_t>(std::max(gallery_items, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    const MaskRecord& r = report.masks[i];
    out << "<h3>" << escape_html(r.id) << "</h3>\n<div class=\"seq\">";
    std::vector<std::string> tokens;
    const TokenSequence& x = data.sequences[i];
    for (std::int64_t p = 0; p < x.valid_len; ++p) {
      tokens.push_back(
          vocab.token_string(x.ids[static_cast<std::size_t>(p)]));
    }
    out << render_mask_html(tokens, r.mask, r.rounded);
    out << "</div>\n";
  }
  out << "</body>\n</html>\n";
}

void write_histogram_csv(const std::string& path, const MaskStatistics& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write histogram: " + path);
  out << std::setprecision(17);
  out << "bin_low, bin_high, fraction\n";
  const auto bins = static_cast<double>(stats.histogram.size());
  for (std::size_t b = 0; b < stats.histogram.size(); ++b) {
    out << (static_cast<double>(b) / bins) << ", "
        << (static_cast<double>(b + 1) / bins) << ", " << stats.histogram[b]
        << "\n";
  }
}

}  // namespace seqmask
