#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

// Per-token, per-class soft mask matrix S (d x C). Columns are the classes of
// every head concatenated in head order; values live in [0,1] and rows at or
// beyond valid_len are zero.
struct MaskStack {
  Tensor values;  // d x C
  std::int64_t valid_len = 0;
  std::vector<HeadSpec> heads;
};

// Column index of (head, class) in the concatenated layout.
std::int64_t mask_column(const std::vector<HeadSpec>& heads, int head, int cls);
std::int64_t total_classes(const std::vector<HeadSpec>& heads);

// m[i] = max over the true-class column of each head. Differentiable w.r.t.
// S; padded positions are forced to 0.
Tensor target_mask(const MaskStack& S, const std::vector<int>& y);

// n[i] = max over all non-true-class columns.
Tensor nontarget_mask(const MaskStack& S, const std::vector<int>& y);

// 1 - m on valid positions; padded tail stays 0.
Tensor complement_mask(const Tensor& m, std::int64_t valid_len);

// Scales embedding row i by m[i] (mask repeated across the embedding width).
Tensor apply_mask(const Tensor& embeddings, const Tensor& m);

// Inclusive threshold: 1 iff m[i] >= threshold. threshold must be in (0,1).
std::vector<int> round_mask(const Tensor& m, double threshold = 0.5);
std::vector<int> round_mask(const std::vector<double>& m, double threshold = 0.5);

struct Chunk {
  std::int64_t start = 0;  // half-open token range [start, end)
  std::int64_t end = 0;
  bool important = false;

  bool operator==(const Chunk&) const = default;
};

// Maximal runs of equal values over [0, valid_len); flags alternate.
std::vector<Chunk> segment_chunks(const std::vector<int>& rounded,
                                  std::int64_t valid_len);

// One JSON object per line: {chunks, id, mask, rounded}.
struct MaskRecord {
  std::string id;
  std::vector<double> mask;
  std::vector<int> rounded;
  std::vector<Chunk> chunks;
};

void write_masks_jsonl(const std::string& path,
                       const std::vector<MaskRecord>& records);
std::vector<MaskRecord> read_masks_jsonl(const std::string& path);

}  // namespace seqmask
