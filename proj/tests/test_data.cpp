#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "seqmask/data.hpp"
#include "seqmask/rng.hpp"

using namespace seqmask;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("seqmask_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("k-mer ids follow the positional formula") {
  Vocabulary v(2);
  CHECK(v.size() == 16 + 3);
  auto t = kmer_tokenize("ACGT", v);
  REQUIRE(t.ids.size() == 2);
  CHECK(t.ids[0] == 4);   // AC = 0*4 + 1 -> +3
  CHECK(t.ids[1] == 14);  // GT = 2*4 + 3 -> +3
  CHECK(t.valid_len == 2);
  CHECK(v.token_string(4) == "AC");
  CHECK(v.token_string(14) == "GT");
  CHECK(v.token_string(Vocabulary::kPad) == "[PAD]");

  Vocabulary v3(3);
  CHECK(v3.size() == 64 + 3);
  CHECK(v3.kmer_id("AAA") == 3);
  CHECK(v3.kmer_id("TTT") == 3 + 63);
}

TEST_CASE("tokenizer truncates, folds case, and maps unknown symbols to UNK") {
  Vocabulary v(2);
  CHECK(kmer_tokenize("ACG", v).ids.size() == 1);  // trailing G dropped
  CHECK(kmer_tokenize("", v).valid_len == 0);
  auto lower = kmer_tokenize("acgt", v);
  auto upper = kmer_tokenize("ACGT", v);
  CHECK(lower.ids == upper.ids);
  auto with_n = kmer_tokenize("ANGT", v);
  CHECK(with_n.ids[0] == Vocabulary::kUnk);
  CHECK(with_n.ids[1] == upper.ids[1]);
}

TEST_CASE("a 1500-base sequence yields 250 6-mer tokens") {
  Vocabulary v(6);
  std::string seq;
  Rng rng(5);
  for (int i = 0; i < 1500; ++i) seq += "ACGT"[rng.uniform_int(4)];
  CHECK(kmer_tokenize(seq, v).ids.size() == 250);
}

TEST_CASE("detokenize inverts tokenize on k-aligned alphabet strings") {
  Vocabulary v(3);
  const std::string seq = "ACGTGACTGACG";
  CHECK(detokenize(kmer_tokenize(seq, v), v) == seq);
  // Non-aligned input: identity holds on the retained prefix.
  CHECK(detokenize(kmer_tokenize(seq + "AC", v), v) == seq);
}

TEST_CASE("vocabulary hash distinguishes k and alphabet") {
  Vocabulary a(3), b(3), c(2), d(3, "ACGU");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash() != d.hash());
}

TEST_CASE("motif spec motifs are distinct, aligned, and reproducible") {
  Vocabulary v(3);
  auto spec = make_motif_spec(v, {{"coarse", 4}, {"fine", 12}}, 192, 12, 99);
  auto spec2 = make_motif_spec(v, {{"coarse", 4}, {"fine", 12}}, 192, 12, 99);
  std::set<std::string> all;
  for (std::size_t h = 0; h < spec.motifs.size(); ++h) {
    CHECK(spec.motifs[h].size() ==
          static_cast<std::size_t>(spec.heads[h].num_classes));
    for (std::size_t c = 0; c < spec.motifs[h].size(); ++c) {
      const auto& m = spec.motifs[h][c];
      CHECK(m.size() == 12);
      CHECK(all.insert(m).second);
      CHECK(m == spec2.motifs[h][c]);
    }
  }
}

TEST_CASE("generated dataset is balanced with consistent flags and labels") {
  Vocabulary v(3);
  auto spec = make_motif_spec(v, {{"coarse", 4}, {"fine", 12}}, 192, 12, 7);
  auto data = generate_motif_dataset(spec, v, 5, 21);
  REQUIRE(data.size() == 60);
  std::vector<int> per_fine(12, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int coarse = data.labels[i][0];
    const int fine = data.labels[i][1];
    ++per_fine[static_cast<std::size_t>(fine)];
    CHECK(coarse == fine / 3);  // nested hierarchy
    CHECK(data.sequences[i].valid_len == 64);
    // Both planted motifs cover 4 tokens each.
    int flagged = 0;
    for (int f : data.importance[i]) flagged += f;
    CHECK(flagged == 8);
    // Re-scan: every flagged run of tokens spells one of the class motifs.
    const std::string bases = detokenize(data.sequences[i], v);
    const auto& flags = data.importance[i];
    std::size_t t = 0;
    while (t < flags.size()) {
      if (flags[t] == 0) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < flags.size() && flags[end] == 1) ++end;
      const std::string span = bases.substr(t * 3, (end - t) * 3);
      const std::string& cm = spec.motifs[0][static_cast<std::size_t>(coarse)];
      const std::string& fm = spec.motifs[1][static_cast<std::size_t>(fine)];
      const bool is_coarse = span == cm;
      const bool is_fine = span == fm;
      const bool is_adjacent_pair =
          span == cm + fm || span == fm + cm;  // motifs planted back-to-back
      CHECK((is_coarse || is_fine || is_adjacent_pair));
      t = end;
    }
  }
  for (int c : per_fine) CHECK(c == 5);

  auto again = generate_motif_dataset(spec, v, 5, 21);
  CHECK(again.sequences[17].ids == data.sequences[17].ids);
  CHECK(again.importance[42] == data.importance[42]);
}

TEST_CASE("generator rejects invalid specs") {
  Vocabulary v(3);
  auto spec = make_motif_spec(v, {{"coarse", 4}, {"fine", 12}}, 192, 12, 7);
  auto bad_long = spec;
  bad_long.motifs[0][0] = std::string(300, 'A');
  CHECK_THROWS_AS(generate_motif_dataset(bad_long, v, 2, 1),
                  std::invalid_argument);
  auto bad_align = spec;
  bad_align.motifs[0][0] = "ACGTA";  // length 5, not a multiple of k=3
  CHECK_THROWS_AS(generate_motif_dataset(bad_align, v, 2, 1),
                  std::invalid_argument);
  auto bad_dup = spec;
  bad_dup.motifs[1][3] = bad_dup.motifs[1][2];
  CHECK_THROWS_AS(generate_motif_dataset(bad_dup, v, 2, 1),
                  std::invalid_argument);
}

namespace {

LabeledDataset tiny_stratified_fixture(int per_class) {
  LabeledDataset data;
  data.heads = {{"coarse", 4}, {"fine", 12}};
  int idx = 0;
  for (int f = 0; f < 12; ++f) {
    for (int i = 0; i < per_class; ++i) {
      data.record_ids.push_back("r" + std::to_string(idx++));
      data.sequences.push_back({{3, 4, 5}, 3});
      data.labels.push_back({f / 3, f});
    }
  }
  return data;
}

}  // namespace

TEST_CASE("stratified split hits exact totals with per-class balance") {
  auto data = tiny_stratified_fixture(220);  // 2640 items
  auto split = stratified_split(data, 400.0 / 2640.0, 240.0 / 2640.0, 3);
  CHECK(split.test.size() == 400);
  CHECK(split.val.size() == 240);
  CHECK(split.train.size() == 2000);

  std::vector<int> test_per_class(12, 0);
  for (const auto& l : split.test.labels) ++test_per_class[l[1]];
  for (int c : test_per_class) {
    // exact share 400/12 = 33.33; largest remainder keeps within one item
    CHECK(c >= 33);
    CHECK(c <= 34);
  }

  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (const auto& id : part->record_ids) CHECK(seen.insert(id).second);
  CHECK(seen.size() == data.size());

  auto split2 = stratified_split(data, 400.0 / 2640.0, 240.0 / 2640.0, 3);
  CHECK(split2.test.record_ids == split.test.record_ids);
  auto split3 = stratified_split(data, 400.0 / 2640.0, 240.0 / 2640.0, 4);
  CHECK(split3.test.record_ids != split.test.record_ids);
}

TEST_CASE("stratified split rejects classes smaller than the partition count") {
  auto data = tiny_stratified_fixture(2);
  CHECK_THROWS_AS(stratified_split(data, 0.2, 0.2, 1), std::invalid_argument);
}

TEST_CASE("FASTA records join the CSV labels; unlabeled records are skipped") {
  auto dir = temp_dir("fasta");
  {
    std::ofstream f(dir / "seqs.fasta");
    f << ">rec1 extra description\nACGTAC\nGTACGT\n"
      << ">rec2\nacgtacgtacgt\n"
      << ">rec3\nACGTACGTACGT\n";
    std::ofstream c(dir / "labels.csv");
    c << "id,phylum,genus\nrec1,firmicutes,bacillus\nrec2,proteobacteria,"
         "escherichia\n";
  }
  Vocabulary v(3);
  auto loaded = load_fasta((dir / "seqs.fasta").string(),
                           (dir / "labels.csv").string(), v);
  CHECK(loaded.skipped_records == 1);  // rec3 has no label row
  REQUIRE(loaded.data.size() == 2);
  CHECK(loaded.data.record_ids[0] == "rec1");
  CHECK(loaded.data.sequences[0].valid_len == 4);  // 12 bases joined over lines
  CHECK(loaded.data.sequences[1].ids == loaded.data.sequences[0].ids);  // same bases
  REQUIRE(loaded.data.heads.size() == 2);
  CHECK(loaded.data.heads[0].name == "phylum");
  CHECK(loaded.data.heads[1].num_classes == 2);
  // Dictionaries sorted alphabetically: bacillus=0, escherichia=1.
  CHECK(loaded.data.labels[0][1] == 0);
  CHECK(loaded.data.labels[1][1] == 1);
  fs::remove_all(dir);
}

TEST_CASE("malformed FASTA input throws") {
  auto dir = temp_dir("fasta_bad");
  {
    std::ofstream f(dir / "bad.fasta");
    f << "ACGT\n>rec1\nACGT\n";
    std::ofstream c(dir / "labels.csv");
    c << "id,head\nrec1,x\n";
  }
  Vocabulary v(2);
  CHECK_THROWS_AS(
      load_fasta((dir / "bad.fasta").string(), (dir / "labels.csv").string(), v),
      std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("JSONL persistence round-trips byte-identically") {
  Vocabulary v(3);
  auto spec = make_motif_spec(v, {{"coarse", 4}, {"fine", 12}}, 96, 12, 7);
  auto data = generate_motif_dataset(spec, v, 2, 11);
  auto dir = temp_dir("jsonl");
  const auto jsonl = dir / "data.jsonl";
  const auto meta = dir / "meta.json";
  write_dataset_jsonl(jsonl.string(), data);
  write_dataset_meta(meta.string(), v, data);
  auto loaded = read_dataset_jsonl(jsonl.string(), meta.string());
  CHECK(loaded.size() == data.size());
  CHECK(loaded.heads.size() == 2);
  CHECK(loaded.heads[1].num_classes == 12);
  CHECK(loaded.sequences[5].ids == data.sequences[5].ids);
  CHECK(loaded.labels == data.labels);
  CHECK(loaded.importance == data.importance);

  const auto rewritten = dir / "data2.jsonl";
  write_dataset_jsonl(rewritten.string(), loaded);
  CHECK(read_file(rewritten) == read_file(jsonl));

  check_dataset_meta(meta.string(), v);  // must not throw
  Vocabulary other(2);
  CHECK_THROWS_AS(check_dataset_meta(meta.string(), other), std::runtime_error);
  fs::remove_all(dir);
}
