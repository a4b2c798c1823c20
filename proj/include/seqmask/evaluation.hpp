#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/masking.hpp"

namespace seqmask {

// Mean of per-class recalls over the classes that actually occur in y_true;
// classes without support are left out of the mean.
double balanced_accuracy(const std::vector<int>& y_true,
                         const std::vector<int>& y_pred, int num_classes);

// Mann-Whitney AUROC with tie-averaged ranks. Requires both a positive and a
// negative label to be present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-token baseline saliency: summed over heads, the drop in true-class
// probability when that single token is masked out.
std::vector<double> occlusion_importance(const Explanandum& model,
                                         const TokenSequence& x,
                                         const std::vector<int>& y);

struct MaskStatistics {
  std::int64_t items = 0;
  std::int64_t positions = 0;          // valid mask entries pooled over items
  double mean = 0.0;
  double fraction_above_half = 0.0;    // strictly greater than 0.5
  std::vector<double> histogram;       // fractions per equal bin over [0,1];
                                       // final bin includes the value 1.0
  // Per-position profile across items; shorter items simply stop counting.
  std::vector<double> position_mean;
  std::vector<double> position_std;    // population standard deviation
  std::vector<double> position_min;
  std::vector<double> position_max;
  // Distribution of the highlighted (rounded-to-1) chunks.
  std::int64_t total_chunks = 0;
  double mean_chunks_per_item = 0.0;
  double mean_chunk_length = 0.0;
  std::int64_t min_chunk_length = 0;
  std::int64_t max_chunk_length = 0;
};

MaskStatistics mask_statistics(const std::vector<MaskRecord>& records,
                               int bins = 10);

// Fixed evaluation order: unmasked, masked, inverted, rounded,
// inverted_rounded, relevant_chunks, irrelevant_chunks.
const std::vector<std::string>& condition_names();

struct EvaluationOptions {
  double round_threshold = 0.5;
  int histogram_bins = 10;
  int gallery_items = 8;  // items rendered into the HTML report
};

struct EvaluationReport {
  std::vector<std::string> head_names;
  std::vector<std::string> conditions;
  std::vector<std::vector<double>> balanced_acc;  // [condition][head]
  std::vector<std::int64_t> items_used;           // [condition]
  MaskStatistics statistics;
  bool has_importance = false;  // ground-truth flags were available
  double separation = 0.0;      // mean mask on flagged minus unflagged tokens
  double mask_auroc = 0.0;      // mask value as a detector of flagged tokens
  std::vector<MaskRecord> masks;  // per item, valid prefix only
};

// Runs the full protocol: explain every item, rebuild the masked inputs under
// each condition, and score per-head balanced accuracy. Chunk conditions
// feed each chunk through the classifier alone and average the resulting
// probabilities; items without a chunk of the required kind do not count
// toward that condition.
EvaluationReport evaluate(const Explanandum& model, const Explainer& explainer,
                          const LabeledDataset& data,
                          const EvaluationOptions& options = {});

// Terminal rendering: green background intensity follows the mask value,
// bold marks tokens rounded to 1. The HTML variant uses alpha-scaled
// highlight spans and is self-contained.
std::string render_mask_ansi(const std::vector<std::string>& tokens,
                             const std::vector<double>& mask,
                             const std::vector<int>& rounded);
std::string render_mask_html(const std::vector<std::string>& tokens,
                             const std::vector<double>& mask,
                             const std::vector<int>& rounded);

void write_evaluation_json(const std::string& path,
                           const EvaluationReport& report);
// Inverse of write_evaluation_json for the aggregate fields; per-item masks
// are stored separately (masks JSONL) and must be re-attached by the caller.
EvaluationReport read_evaluation_json(const std::string& path);
void write_markdown_report(const std::string& path,
                           const EvaluationReport& report);
void write_html_report(const std::string& path, const EvaluationReport& report,
                       const LabeledDataset& data, const Vocabulary& vocab,
                       int gallery_items = 8);
void write_histogram_csv(const std::string& path, const MaskStatistics& stats);

}  // namespace seqmask
