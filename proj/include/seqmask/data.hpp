#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seqmask/rng.hpp"

namespace seqmask {

// k-mer vocabulary over an ordered symbol alphabet with three special tokens.
// Token ids: PAD=0, UNK=1, CLS=2, then every k-mer packed base-|alphabet|:
// id = 3 + sum_j index(char_j) * |alphabet|^(k-1-j).
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;
  static constexpr std::int64_t kCls = 2;

  Vocabulary(int k, std::string alphabet = "ACGT");

  int k() const { return k_; }
  const std::string& alphabet() const { return alphabet_; }
  std::int64_t size() const { return size_; }

  // UNK for any window containing a symbol outside the alphabet.
  std::int64_t kmer_id(std::string_view kmer) const;
  // Inverse of kmer_id for regular tokens; specials render as [PAD] etc.
  std::string token_string(std::int64_t id) const;

  // Stable identity used to detect checkpoint/dataset mismatches.
  std::uint64_t hash() const;

 private:
  int k_;
  std::string alphabet_;
  std::int64_t size_;
  std::vector<int> symbol_index_;  // 256 entries, -1 for non-alphabet bytes
};

struct TokenSequence {
  std::vector<std::int64_t> ids;
  std::int64_t valid_len = 0;  // ids at index >= valid_len are PAD
};

// Non-overlapping k-mer windows; the trailing remainder (< k bases) is
// dropped. Lowercase input is folded to uppercase.
TokenSequence kmer_tokenize(std::string_view seq, const Vocabulary& vocab);

// Reconstructs the base string of the retained prefix. Special tokens render
// as their bracketed names, so the identity holds only for alphabet-only
// k-aligned inputs.
std::string detokenize(const TokenSequence& x, const Vocabulary& vocab);

struct HeadSpec {
  std::string name;
  int num_classes = 0;
};

struct LabeledDataset {
  std::vector<HeadSpec> heads;
  std::vector<std::string> record_ids;
  std::vector<TokenSequence> sequences;
  std::vector<std::vector<int>> labels;      // [item][head]
  std::vector<std::vector<int>> importance;  // [item][token], empty if unknown
  // Optional per-head class name dictionaries (index -> string), populated by
  // the FASTA/CSV loader.
  std::vector<std::vector<std::string>> label_names;

  std::size_t size() const { return sequences.size(); }
};

// Synthetic planted-motif task. Head h of an item with finest-head class f
// gets label f / (C_last / C_h); class counts must nest evenly. One motif per
// head is planted token-aligned and non-overlapping; importance flags mark
// exactly the motif tokens.
struct MotifSpec {
  std::vector<HeadSpec> heads;
  std::vector<std::vector<std::string>> motifs;  // [head][class]
  std::int64_t sequence_bases = 192;
  std::vector<double> background;  // per-symbol probabilities; empty = uniform
};

// Draws pairwise-distinct random motifs of motif_bases for every head class.
MotifSpec make_motif_spec(const Vocabulary& vocab, std::vector<HeadSpec> heads,
                          std::int64_t sequence_bases, std::int64_t motif_bases,
                          std::uint64_t seed);

LabeledDataset generate_motif_dataset(const MotifSpec& spec,
                                      const Vocabulary& vocab,
                                      std::int64_t n_per_class,
                                      std::uint64_t seed);

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

// Stratifies by the last head's label. Split sizes use round-half-up of the
// fractions; per-class counts are apportioned by largest remainder, so each
// class deviates from its proportional share by at most one item.
SplitResult stratified_split(const LabeledDataset& data, double test_fraction,
                             double val_fraction, std::uint64_t seed);

struct FastaLoadResult {
  LabeledDataset data;
  int skipped_records = 0;  // FASTA records without a label row
};

// labels_csv header: id,head1,head2,...; label strings are mapped to indices
// through per-head dictionaries sorted alphabetically.
FastaLoadResult load_fasta(const std::string& fasta_path,
                           const std::string& labels_csv_path,
                           const Vocabulary& vocab);

// One JSON object per line: {flags?, id, ids, labels, valid_len}. A sibling
// meta file carries the vocabulary identity and head layout.
void write_dataset_jsonl(const std::string& path, const LabeledDataset& data);
void write_dataset_meta(const std::string& path, const Vocabulary& vocab,
                        const LabeledDataset& data);
LabeledDataset read_dataset_jsonl(const std::string& jsonl_path,
                                  const std::string& meta_path);
// Verifies the meta file against the given vocabulary; throws on mismatch.
void check_dataset_meta(const std::string& meta_path, const Vocabulary& vocab);

struct DatasetMeta {
  Vocabulary vocab;
  std::uint64_t vocab_hash = 0;
  std::vector<HeadSpec> heads;
};

// Rebuilds the vocabulary and head layout recorded next to a dataset.
DatasetMeta read_dataset_meta(const std::string& meta_path);

}  // namespace seqmask
