#include "seqmask/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace seqmask {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(int k, std::string alphabet)
    : k_(k), alphabet_(std::move(alphabet)) {
  require(k_ >= 1, "vocabulary: k must be at least 1");
  require(!alphabet_.empty(), "vocabulary: alphabet must not be empty");
  symbol_index_.assign(256, -1);
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    auto& slot = symbol_index_[static_cast<unsigned char>(alphabet_[i])];
    require(slot == -1, "vocabulary: duplicate alphabet symbol");
    slot = static_cast<int>(i);
  }
  std::int64_t kmers = 1;
  for (int i = 0; i < k_; ++i)
    kmers *= static_cast<std::int64_t>(alphabet_.size());
  size_ = kmers + 3;
}

std::int64_t Vocabulary::kmer_id(std::string_view kmer) const {
  require(static_cast<int>(kmer.size()) == k_,
          "kmer_id: window length must equal k");
  std::int64_t id = 0;
  for (char c : kmer) {
    const int idx = symbol_index_[static_cast<unsigned char>(c)];
    if (idx < 0) return kUnk;
    id = id * static_cast<std::int64_t>(alphabet_.size()) + idx;
  }
  return id + 3;
}

std::string Vocabulary::token_string(std::int64_t id) const {
  require(id >= 0 && id < size_, "token_string: id out of range");
  if (id == kPad) return "[PAD]";
  if (id == kUnk) return "[UNK]";
  if (id == kCls) return "[CLS]";
  std::string s(static_cast<std::size_t>(k_), alphabet_[0]);
  std::int64_t v = id - 3;
  for (int j = k_ - 1; j >= 0; --j) {
    s[static_cast<std::size_t>(j)] =
        alphabet_[static_cast<std::size_t>(v % alphabet_.size())];
    v /= static_cast<std::int64_t>(alphabet_.size());
  }
  return s;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = kFnvOffset;
  h = fnv1a(h, &k_, sizeof(k_));
  h = fnv1a(h, alphabet_.data(), alphabet_.size());
  return h;
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

TokenSequence kmer_tokenize(std::string_view seq, const Vocabulary& vocab) {
  TokenSequence out;
  const int k = vocab.k();
  std::string window(static_cast<std::size_t>(k), ' ');
  const std::size_t tokens = seq.size() / static_cast<std::size_t>(k);
  out.ids.reserve(tokens);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (int j = 0; j < k; ++j)
      window[static_cast<std::size_t>(j)] = static_cast<char>(std::toupper(
          static_cast<unsigned char>(seq[t * static_cast<std::size_t>(k) +
                                         static_cast<std::size_t>(j)])));
    out.ids.push_back(vocab.kmer_id(window));
  }
  out.valid_len = static_cast<std::int64_t>(out.ids.size());
  return out;
}

std::string detokenize(const TokenSequence& x, const Vocabulary& vocab) {
  std::string s;
  for (std::int64_t i = 0; i < x.valid_len; ++i)
    s += vocab.token_string(x.ids[static_cast<std::size_t>(i)]);
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic planted-motif dataset
// ---------------------------------------------------------------------------

MotifSpec make_motif_spec(const Vocabulary& vocab, std::vector<HeadSpec> heads,
                          std::int64_t sequence_bases, std::int64_t motif_bases,
                          std::uint64_t seed) {
  require(motif_bases % vocab.k() == 0,
          "motif length must be a multiple of k");
  MotifSpec spec;
  spec.heads = std::move(heads);
  spec.sequence_bases = sequence_bases;
  Rng rng(seed);
  std::set<std::string> used;
  for (const auto& head : spec.heads) {
    std::vector<std::string> class_motifs;
    for (int c = 0; c < head.num_classes; ++c) {
      std::string motif;
      do {
        motif.clear();
        for (std::int64_t b = 0; b < motif_bases; ++b)
          motif += vocab.alphabet()[rng.uniform_int(vocab.alphabet().size())];
      } while (used.count(motif) > 0);
      used.insert(motif);
      class_motifs.push_back(std::move(motif));
    }
    spec.motifs.push_back(std::move(class_motifs));
  }
  return spec;
}

LabeledDataset generate_motif_dataset(const MotifSpec& spec,
                                      const Vocabulary& vocab,
                                      std::int64_t n_per_class,
                                      std::uint64_t seed) {
  require(!spec.heads.empty(), "motif dataset: at least one head required");
  require(spec.motifs.size() == spec.heads.size(),
          "motif dataset: one motif list per head required");
  const int k = vocab.k();
  require(spec.sequence_bases % k == 0,
          "motif dataset: sequence length must be a multiple of k");
  const int c_last = spec.heads.back().num_classes;
  std::set<std::string> distinct;
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    require(spec.heads[h].num_classes >= 2,
            "motif dataset: every head needs at least 2 classes");
    require(c_last % spec.heads[h].num_classes == 0,
            "motif dataset: head class counts must nest into the last head");
    require(static_cast<int>(spec.motifs[h].size()) ==
                spec.heads[h].num_classes,
            "motif dataset: one motif per head class required");
    for (const auto& m : spec.motifs[h]) {
      require(static_cast<std::int64_t>(m.size()) % k == 0,
              "motif dataset: motif length must be a multiple of k");
      require(static_cast<std::int64_t>(m.size()) <= spec.sequence_bases,
              "motif dataset: motif longer than the sequence");
      require(distinct.insert(m).second,
              "motif dataset: motifs must be pairwise distinct");
    }
  }
  require(n_per_class >= 1, "motif dataset: n_per_class must be positive");

  std::vector<double> bg = spec.background;
  if (bg.empty()) bg.assign(vocab.alphabet().size(), 1.0);
  require(bg.size() == vocab.alphabet().size(),
          "motif dataset: background distribution size mismatch");
  double bg_sum = 0.0;
  for (double p : bg) {
    require(p >= 0.0, "motif dataset: negative background probability");
    bg_sum += p;
  }
  require(bg_sum > 0.0, "motif dataset: background distribution is all zero");
  std::vector<double> cum(bg.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < bg.size(); ++i) {
    acc += bg[i] / bg_sum;
    cum[i] = acc;
  }
  cum.back() = 1.0;

  const std::int64_t d_tokens = spec.sequence_bases / k;
  LabeledDataset out;
  out.heads = spec.heads;
  Rng rng(seed);
  std::int64_t index = 0;
  for (int f = 0; f < c_last; ++f) {
    for (std::int64_t i = 0; i < n_per_class; ++i) {
      std::string bases(static_cast<std::size_t>(spec.sequence_bases), ' ');
      for (auto& ch : bases) {
        const double u = rng.uniform();
        std::size_t s = 0;
        while (u >= cum[s]) ++s;
        ch = vocab.alphabet()[s];
      }
      std::vector<int> labels;
      std::vector<int> flags(static_cast<std::size_t>(d_tokens), 0);
      std::vector<std::pair<std::int64_t, std::int64_t>> occupied;
      for (std::size_t h = 0; h < spec.heads.size(); ++h) {
        const int label = f / (c_last / spec.heads[h].num_classes);
        labels.push_back(label);
        const std::string& motif =
            spec.motifs[h][static_cast<std::size_t>(label)];
        const std::int64_t m_tokens =
            static_cast<std::int64_t>(motif.size()) / k;
        std::int64_t start = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
          start = static_cast<std::int64_t>(
              rng.uniform_int(static_cast<std::uint64_t>(d_tokens - m_tokens + 1)));
          placed = true;
          for (auto [s0, s1] : occupied)
            if (start < s1 && s0 < start + m_tokens) placed = false;
        }
        if (!placed)
          throw std::invalid_argument(
              "motif dataset: could not place motifs without overlap");
        occupied.emplace_back(start, start + m_tokens);
        bases.replace(static_cast<std::size_t>(start * k), motif.size(), motif);
        for (std::int64_t t = start; t < start + m_tokens; ++t)
          flags[static_cast<std::size_t>(t)] = 1;
      }
      std::ostringstream id;
      id << "seq-";
      id.width(6);
      id.fill('0');
      id << index++;
      out.record_ids.push_back(id.str());
      out.sequences.push_back(kmer_tokenize(bases, vocab));
      out.labels.push_back(std::move(labels));
      out.importance.push_back(std::move(flags));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

namespace {

LabeledDataset subset(const LabeledDataset& data,
                      const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.heads = data.heads;
  out.label_names = data.label_names;
  for (std::size_t i : indices) {
    out.record_ids.push_back(data.record_ids[i]);
    out.sequences.push_back(data.sequences[i]);
    out.labels.push_back(data.labels[i]);
    if (!data.importance.empty())
      out.importance.push_back(data.importance[i]);
  }
  return out;
}

// Proportional quotas by largest remainder: per-class integer targets that
// sum exactly to `total`, each within one item of its exact share.
std::vector<std::int64_t> apportion(const std::vector<std::int64_t>& counts,
                                    std::int64_t total, std::int64_t grand) {
  std::vector<std::int64_t> target(counts.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = static_cast<double>(counts[c]) *
                         static_cast<double>(total) /
                         static_cast<double>(grand);
    target[c] = static_cast<std::int64_t>(std::floor(exact));
    assigned += target[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    ++target[remainders[i].second];
    ++assigned;
  }
  if (assigned != total)
    throw std::invalid_argument("stratified_split: quota apportionment failed");
  return target;
}

}  // namespace

SplitResult stratified_split(const LabeledDataset& data, double test_fraction,
                             double val_fraction, std::uint64_t seed) {
  require(test_fraction >= 0.0 && val_fraction >= 0.0 &&
              test_fraction + val_fraction < 1.0,
          "stratified_split: fractions must be non-negative and sum below 1");
  require(!data.sequences.empty(), "stratified_split: empty dataset");
  const int strat_head = static_cast<int>(data.heads.size()) - 1;
  const int classes = data.heads[static_cast<std::size_t>(strat_head)].num_classes;

  std::vector<std::vector<std::size_t>> per_class(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    per_class[static_cast<std::size_t>(
                  data.labels[i][static_cast<std::size_t>(strat_head)])]
        .push_back(i);

  const std::int64_t n = static_cast<std::int64_t>(data.size());
  const std::int64_t test_total = round_half_up(test_fraction * static_cast<double>(n));
  const std::int64_t val_total = round_half_up(val_fraction * static_cast<double>(n));
  const int partitions = 1 + (test_total > 0 ? 1 : 0) + (val_total > 0 ? 1 : 0);

  std::vector<std::int64_t> counts;
  for (const auto& members : per_class) {
    require(static_cast<int>(members.size()) >= partitions,
            "stratified_split: a class has fewer items than partitions");
    counts.push_back(static_cast<std::int64_t>(members.size()));
  }
  const auto test_target = apportion(counts, test_total, n);
  const auto val_target = apportion(counts, val_total, n);

  Rng rng(seed);
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto members = per_class[c];
    require(test_target[c] + val_target[c] <
                static_cast<std::int64_t>(members.size()),
            "stratified_split: class too small for requested fractions");
    Rng class_rng = rng.fork(c);
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[class_rng.uniform_int(i)]);
    std::size_t pos = 0;
    for (std::int64_t t = 0; t < test_target[c]; ++t)
      test_idx.push_back(members[pos++]);
    for (std::int64_t v = 0; v < val_target[c]; ++v)
      val_idx.push_back(members[pos++]);
    for (; pos < members.size(); ++pos) train_idx.push_back(members[pos]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(data, train_idx), subset(data, val_idx),
          subset(data, test_idx)};
}

// ---------------------------------------------------------------------------
// FASTA + labels CSV ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  // Plain comma splitting; ids and label strings are expected not to contain
  // commas or quotes.
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

FastaLoadResult load_fasta(const std::string& fasta_path,
                           const std::string& labels_csv_path,
                           const Vocabulary& vocab) {
  std::ifstream csv(labels_csv_path);
  if (!csv) throw std::runtime_error("cannot open labels CSV: " + labels_csv_path);
  std::string line;
  if (!std::getline(csv, line))
    throw std::runtime_error("labels CSV is empty: " + labels_csv_path);
  auto header = split_csv_line(strip_cr(line));
  if (header.size() < 2 || header[0] != "id")
    throw std::runtime_error("labels CSV header must be id,head1,...");
  const std::size_t n_heads = header.size() - 1;

  std::map<std::string, std::vector<std::string>> rows;
  std::vector<std::set<std::string>> head_values(n_heads);
  while (std::getline(csv, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("labels CSV row has wrong field count: " + line);
    std::vector<std::string> values(fields.begin() + 1, fields.end());
    for (std::size_t h = 0; h < n_heads; ++h) head_values[h].insert(values[h]);
    rows[fields[0]] = std::move(values);
  }

  FastaLoadResult result;
  for (std::size_t h = 0; h < n_heads; ++h) {
    result.data.heads.push_back(
        {header[h + 1], static_cast<int>(head_values[h].size())});
    result.data.label_names.emplace_back(head_values[h].begin(),
                                         head_values[h].end());
  }

  std::ifstream fasta(fasta_path);
  if (!fasta) throw std::runtime_error("cannot open FASTA: " + fasta_path);
  std::string id, seq;
  bool have_record = false;
  auto flush = [&]() {
    if (!have_record) return;
    auto it = rows.find(id);
    if (it == rows.end()) {
      ++result.skipped_records;
      return;
    }
    std::vector<int> labels;
    for (std::size_t h = 0; h < n_heads; ++h) {
      const auto& dict = result.data.label_names[h];
      const auto pos = std::lower_bound(dict.begin(), dict.end(), it->second[h]);
      labels.push_back(static_cast<int>(pos - dict.begin()));
    }
    result.data.record_ids.push_back(id);
    result.data.sequences.push_back(kmer_tokenize(seq, vocab));
    result.data.labels.push_back(std::move(labels));
  };
  while (std::getline(fasta, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line[0] == '>') {
      flush();
      have_record = true;
      seq.clear();
      id = line.substr(1);
      const auto ws = id.find_first_of(" \t");
      if (ws != std::string::npos) id = id.substr(0, ws);
      if (id.empty()) throw std::runtime_error("malformed FASTA: empty record id");
    } else {
      if (!have_record)
        throw std::runtime_error("malformed FASTA: sequence before header");
      seq += line;
    }
  }
  flush();
  return result;
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

void write_dataset_jsonl(const std::string& path, const LabeledDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    json j;
    j["id"] = data.record_ids[i];
    j["ids"] = data.sequences[i].ids;
    j["labels"] = data.labels[i];
    j["valid_len"] = data.sequences[i].valid_len;
    if (!data.importance.empty()) j["flags"] = data.importance[i];
    out << j.dump() << "\n";
  }
}

void write_dataset_meta(const std::string& path, const Vocabulary& vocab,
                        const LabeledDataset& data) {
  json heads = json::array();
  for (std::size_t h = 0; h < data.heads.size(); ++h) {
    json hj;
    hj["name"] = data.heads[h].name;
    hj["num_classes"] = data.heads[h].num_classes;
    if (h < data.label_names.size() && !data.label_names[h].empty())
      hj["labels"] = data.label_names[h];
    heads.push_back(hj);
  }
  json j;
  j["alphabet"] = vocab.alphabet();
  j["k"] = vocab.k();
  j["vocab_hash"] = vocab.hash();
  j["heads"] = heads;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset meta: " + path);
  out << j.dump(2) << "\n";
}

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  in >> j;
  return j;
}

}  // namespace

void check_dataset_meta(const std::string& meta_path, const Vocabulary& vocab) {
  const json meta = load_json_file(meta_path);
  if (meta.at("vocab_hash").get<std::uint64_t>() != vocab.hash())
    throw std::runtime_error(
        "vocabulary mismatch between dataset meta and configuration: " +
        meta_path);
}

DatasetMeta read_dataset_meta(const std::string& meta_path) {
  const json meta = load_json_file(meta_path);
  DatasetMeta out{Vocabulary(meta.at("k").get<int>(),
                             meta.at("alphabet").get<std::string>()),
                  meta.at("vocab_hash").get<std::uint64_t>(),
                  {}};
  for (const auto& hj : meta.at("heads")) {
    out.heads.push_back(
        {hj.at("name").get<std::string>(), hj.at("num_classes").get<int>()});
  }
  if (out.vocab.hash() != out.vocab_hash) {
    throw std::runtime_error("dataset meta is internally inconsistent: " +
                             meta_path);
  }
  return out;
}

LabeledDataset read_dataset_jsonl(const std::string& jsonl_path,
                                  const std::string& meta_path) {
  const json meta = load_json_file(meta_path);
  LabeledDataset data;
  for (const auto& hj : meta.at("heads")) {
    data.heads.push_back(
        {hj.at("name").get<std::string>(), hj.at("num_classes").get<int>()});
    if (hj.contains("labels"))
      data.label_names.push_back(hj.at("labels").get<std::vector<std::string>>());
    else
      data.label_names.emplace_back();
  }
  std::ifstream in(jsonl_path);
  if (!in) throw std::runtime_error("cannot open dataset: " + jsonl_path);
  std::string line;
  bool any_flags = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line);
    data.record_ids.push_back(j.at("id").get<std::string>());
    TokenSequence seq;
    seq.ids = j.at("ids").get<std::vector<std::int64_t>>();
    seq.valid_len = j.at("valid_len").get<std::int64_t>();
    if (seq.valid_len < 0 ||
        seq.valid_len > static_cast<std::int64_t>(seq.ids.size()))
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": valid_len out of range");
    data.sequences.push_back(std::move(seq));
    data.labels.push_back(j.at("labels").get<std::vector<int>>());
    if (j.contains("flags")) {
      any_flags = true;
      data.importance.push_back(j.at("flags").get<std::vector<int>>());
    } else {
      data.importance.emplace_back();
    }
  }
  if (!any_flags) data.importance.clear();
  return data;
}

}  // namespace seqmask
