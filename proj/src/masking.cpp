#include "seqmask/masking.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace seqmask {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Constant 1/0 indicator of valid positions; constant w.r.t. gradients, so
// multiplying by it zeroes padded entries without touching the graph leaves.
Tensor valid_indicator(std::int64_t d, std::int64_t valid_len) {
  std::vector<double> v(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t i = 0; i < valid_len; ++i)
    v[static_cast<std::size_t>(i)] = 1.0;
  return Tensor::from({d}, std::move(v));
}

void check_stack(const MaskStack& S, const std::vector<int>& y) {
  require(S.values.defined(), "mask stack has no values");
  require(S.values.cols() == total_classes(S.heads),
          "mask stack width does not match the head layout");
  require(y.size() == S.heads.size(),
          "label count does not match the head count");
  for (std::size_t h = 0; h < y.size(); ++h)
    require(y[h] >= 0 && y[h] < S.heads[h].num_classes,
            "label out of range for head " + S.heads[h].name);
  require(S.valid_len >= 0 && S.valid_len <= S.values.rows(),
          "mask stack valid_len out of range");
}

}  // namespace

std::int64_t mask_column(const std::vector<HeadSpec>& heads, int head,
                         int cls) {
  require(head >= 0 && head < static_cast<int>(heads.size()),
          "mask_column: head out of range");
  require(cls >= 0 && cls < heads[static_cast<std::size_t>(head)].num_classes,
          "mask_column: class out of range");
  std::int64_t offset = 0;
  for (int h = 0; h < head; ++h)
    offset += heads[static_cast<std::size_t>(h)].num_classes;
  return offset + cls;
}

std::int64_t total_classes(const std::vector<HeadSpec>& heads) {
  std::int64_t c = 0;
  for (const auto& h : heads) c += h.num_classes;
  return c;
}

Tensor target_mask(const MaskStack& S, const std::vector<int>& y) {
  check_stack(S, y);
  std::vector<Tensor> columns;
  for (std::size_t h = 0; h < y.size(); ++h)
    columns.push_back(
        col(S.values, mask_column(S.heads, static_cast<int>(h), y[h])));
  Tensor m = elementwise_max_reduce(columns);
  return mul(m, valid_indicator(S.values.rows(), S.valid_len));
}

Tensor nontarget_mask(const MaskStack& S, const std::vector<int>& y) {
  check_stack(S, y);
  std::vector<bool> is_true(static_cast<std::size_t>(total_classes(S.heads)),
                            false);
  for (std::size_t h = 0; h < y.size(); ++h)
    is_true[static_cast<std::size_t>(
        mask_column(S.heads, static_cast<int>(h), y[h]))] = true;
  std::vector<Tensor> columns;
  for (std::int64_t c = 0; c < total_classes(S.heads); ++c)
    if (!is_true[static_cast<std::size_t>(c)])
      columns.push_back(col(S.values, c));
  require(!columns.empty(),
          "nontarget_mask: no non-true classes exist (degenerate head set)");
  Tensor n = elementwise_max_reduce(columns);
  return mul(n, valid_indicator(S.values.rows(), S.valid_len));
}

Tensor complement_mask(const Tensor& m, std::int64_t valid_len) {
  const std::int64_t d = m.shape()[0];
  require(valid_len >= 0 && valid_len <= d,
          "complement_mask: valid_len out of range");
  Tensor flipped = add_scalar(mul_scalar(m, -1.0), 1.0);
  return mul(flipped, valid_indicator(d, valid_len));
}

Tensor apply_mask(const Tensor& embeddings, const Tensor& m) {
  require(embeddings.rows() == m.shape()[0],
          "apply_mask: mask length must equal the embedding row count");
  return mul(embeddings, repeat_column(m, embeddings.cols()));
}

std::vector<int> round_mask(const std::vector<double>& m, double threshold) {
  require(threshold > 0.0 && threshold < 1.0,
          "round_mask: threshold must lie in (0,1)");
  std::vector<int> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<int> round_mask(const Tensor& m, double threshold) {
  return round_mask(std::vector<double>(m.values().begin(), m.values().end()),
                    threshold);
}

std::vector<Chunk> segment_chunks(const std::vector<int>& rounded,
                                  std::int64_t valid_len) {
  require(valid_len >= 1, "segment_chunks: valid_len must be at least 1");
  require(valid_len <= static_cast<std::int64_t>(rounded.size()),
          "segment_chunks: valid_len exceeds the mask length");
  for (std::int64_t i = 0; i < valid_len; ++i)
    require(rounded[static_cast<std::size_t>(i)] == 0 ||
                rounded[static_cast<std::size_t>(i)] == 1,
            "segment_chunks: mask must be binary");
  std::vector<Chunk> chunks;
  std::int64_t start = 0;
  for (std::int64_t i = 1; i <= valid_len; ++i) {
    if (i == valid_len ||
        rounded[static_cast<std::size_t>(i)] !=
            rounded[static_cast<std::size_t>(start)]) {
      chunks.push_back(
          {start, i, rounded[static_cast<std::size_t>(start)] == 1});
      start = i;
    }
  }
  return chunks;
}

void write_masks_jsonl(const std::string& path,
                       const std::vector<MaskRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write masks: " + path);
  for (const auto& r : records) {
    json chunks = json::array();
    for (const auto& c : r.chunks)
      chunks.push_back({c.start, c.end, c.important ? 1 : 0});
    json j;
    j["chunks"] = chunks;
    j["id"] = r.id;
    j["mask"] = r.mask;
    j["rounded"] = r.rounded;
    out << j.dump() << "\n";
  }
}

std::vector<MaskRecord> read_masks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open masks: " + path);
  std::vector<MaskRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    MaskRecord r;
    r.id = j.at("id").get<std::string>();
    r.mask = j.at("mask").get<std::vector<double>>();
    r.rounded = j.at("rounded").get<std::vector<int>>();
    for (const auto& c : j.at("chunks"))
      r.chunks.push_back({c.at(0).get<std::int64_t>(),
                          c.at(1).get<std::int64_t>(),
                          c.at(2).get<int>() == 1});
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace seqmask
