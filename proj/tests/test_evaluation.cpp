#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "seqmask/data.hpp"
#include "seqmask/evaluation.hpp"
#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/masking.hpp"
#include "seqmask/tensor.hpp"

using namespace seqmask;

namespace {

struct EvalFixture {
  Vocabulary vocab{2};
  std::vector<HeadSpec> heads = {{"coarse", 2}, {"fine", 4}};
  LabeledDataset data;
  Explanandum model;
  Explainer explainer;

  EvalFixture()
      : model(make_model_config()), explainer(make_explainer_config()) {
    MotifSpec spec = make_motif_spec(vocab, heads, 24, 6, 13);
    data = generate_motif_dataset(spec, vocab, 3, 14);  // 12 items
    model.freeze();
  }

  ExplanandumConfig make_model_config() {
    ExplanandumConfig cfg;
    cfg.vocab_size = Vocabulary(2).size();
    cfg.embedding_dim = 8;
    cfg.heads = {{"coarse", 2}, {"fine", 4}};
    cfg.seed = 41;
    return cfg;
  }

  ExplainerConfig make_explainer_config() {
    ExplainerConfig cfg;
    cfg.vocab_size = Vocabulary(2).size();
    cfg.embedding_dim = 6;
    cfg.hidden = 4;
    cfg.layers = 1;
    cfg.heads = {{"coarse", 2}, {"fine", 4}};
    cfg.seed = 42;
    return cfg;
  }

  // Saturates the mask head so every mask value becomes bitwise 0.0 or 1.0.
  void force_dense_bias(double value) {
    for (auto& [name, tensor] : explainer.named_params()) {
      if (name == "dense.b") {
        for (auto& v : tensor.mutable_values()) v = value;
      }
    }
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("balanced accuracy averages per-class recalls") {
  CHECK(balanced_accuracy({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 1.0);
  CHECK(balanced_accuracy({0, 0, 1, 1, 1}, {0, 1, 1, 1, 0}, 2) ==
        doctest::Approx(0.5 * (0.5 + 2.0 / 3.0)).epsilon(1e-12));
  // A class absent from y_true does not drag the mean down.
  CHECK(balanced_accuracy({0, 0, 1, 1}, {0, 0, 1, 1}, 5) == 1.0);
  CHECK(balanced_accuracy({0, 0}, {1, 1}, 3) == 0.0);
  // Predictions into an absent class still count as misses for the truth.
  CHECK(balanced_accuracy({0, 0, 1, 1}, {0, 2, 1, 2}, 3) ==
        doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS(balanced_accuracy({}, {}, 2));
  CHECK_THROWS(balanced_accuracy({0, 1}, {0}, 2));
  CHECK_THROWS(balanced_accuracy({0, 3}, {0, 1}, 2));
  CHECK_THROWS(balanced_accuracy({0, 1}, {0, 1}, 0));
}

TEST_CASE("auroc with and without ties") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) ==
        doctest::Approx(0.75).epsilon(1e-12));
  // All-equal scores carry no information: tie-averaged ranks give 0.5.
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(auroc({0.3, 0.7, 0.7, 0.9}, {0, 0, 1, 1}) ==
        doctest::Approx(0.875).epsilon(1e-12));

  CHECK_THROWS(auroc({0.1, 0.2}, {1, 1}));
  CHECK_THROWS(auroc({0.1, 0.2}, {0, 0}));
  CHECK_THROWS(auroc({}, {}));
  CHECK_THROWS(auroc({0.1}, {0, 1}));
}

TEST_CASE("occlusion importance matches its definition") {
  EvalFixture fx;
  const TokenSequence& x = fx.data.sequences[0];
  const std::vector<int>& y = fx.data.labels[0];
  const auto scores = occlusion_importance(fx.model, x, y);
  REQUIRE(scores.size() == static_cast<std::size_t>(x.valid_len));

  NoGradGuard guard;
  auto base_probs = fx.model.predict_probs(x);
  double base = 0.0;
  for (std::size_t h = 0; h < y.size(); ++h) {
    base += base_probs[h].at(y[h]);
  }
  for (std::int64_t i : {std::int64_t{0}, x.valid_len / 2, x.valid_len - 1}) {
    std::vector<double> mv(x.ids.size(), 1.0);
    mv[static_cast<std::size_t>(i)] = 0.0;
    Tensor mask = Tensor::from({static_cast<std::int64_t>(x.ids.size())}, mv);
    auto probs = fx.model.predict_probs(x, &mask);
    double dropped = 0.0;
    for (std::size_t h = 0; h < y.size(); ++h) {
      dropped += probs[h].at(y[h]);
    }
    CHECK(scores[static_cast<std::size_t>(i)] ==
          doctest::Approx(base - dropped).epsilon(1e-12));
  }
  TokenSequence empty;
  CHECK_THROWS(occlusion_importance(fx.model, empty, y));
}

TEST_CASE("mask statistics against hand-computed values") {
  MaskRecord r1;
  r1.id = "a";
  r1.mask = {1.0, 0.0, 0.5, 1.0};
  r1.rounded = round_mask(r1.mask);
  r1.chunks = segment_chunks(r1.rounded, 4);
  MaskRecord r2;
  r2.id = "b";
  r2.mask = {0.25, 0.75};
  r2.rounded = round_mask(r2.mask);
  r2.chunks = segment_chunks(r2.rounded, 2);

  MaskStatistics s = mask_statistics({r1, r2}, 4);
  CHECK(s.items == 2);
  CHECK(s.positions == 6);
  CHECK(s.mean == 3.5 / 6.0);
  CHECK(s.fraction_above_half == 0.5);  // 1.0, 1.0, 0.75 out of six values

  REQUIRE(s.histogram.size() == 4);
  CHECK(s.histogram[0] == 1.0 / 6.0);  // 0.0
  CHECK(s.histogram[1] == 1.0 / 6.0);  // 0.25
  CHECK(s.histogram[2] == 1.0 / 6.0);  // 0.5
  CHECK(s.histogram[3] == 3.0 / 6.0);  // 0.75, 1.0, 1.0

  REQUIRE(s.position_mean.size() == 4);
  CHECK(s.position_mean[0] == 0.625);
  CHECK(s.position_std[0] == 0.375);
  CHECK(s.position_min[0] == 0.25);
  CHECK(s.position_max[0] == 1.0);
  CHECK(s.position_mean[1] == 0.375);
  CHECK(s.position_std[1] == 0.375);
  CHECK(s.position_mean[2] == 0.5);
  CHECK(s.position_std[2] == 0.0);
  CHECK(s.position_mean[3] == 1.0);
  CHECK(s.position_max[3] == 1.0);

  // Highlighted runs: r1 has [0,1) and [2,4), r2 has [1,2).
  CHECK(s.total_chunks == 3);
  CHECK(s.mean_chunks_per_item == 1.5);
  CHECK(s.mean_chunk_length == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(s.min_chunk_length == 1);
  CHECK(s.max_chunk_length == 2);

  CHECK_THROWS(mask_statistics({}, 4));
  CHECK_THROWS(mask_statistics({r1}, 0));
  MaskRecord bad;
  bad.mask = {1.5};
  CHECK_THROWS(mask_statistics({bad}, 4));
}

TEST_CASE("evaluation report structure and determinism") {
  EvalFixture fx;
  EvaluationReport report = evaluate(fx.model, fx.explainer, fx.data);

  CHECK(report.conditions == condition_names());
  REQUIRE(report.conditions.size() == 7);
  CHECK(report.head_names == std::vector<std::string>{"coarse", "fine"});
  REQUIRE(report.balanced_acc.size() == 7);
  for (const auto& row : report.balanced_acc) {
    REQUIRE(row.size() == 2);
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto n = static_cast<std::int64_t>(fx.data.size());
  for (std::size_t c = 0; c < 5; ++c) CHECK(report.items_used[c] == n);
  CHECK(report.items_used[5] <= n);
  CHECK(report.items_used[6] <= n);

  REQUIRE(report.masks.size() == fx.data.size());
  for (std::size_t i = 0; i < report.masks.size(); ++i) {
    const MaskRecord& r = report.masks[i];
    CHECK(r.id == fx.data.record_ids[i]);
    CHECK(r.mask.size() ==
          static_cast<std::size_t>(fx.data.sequences[i].valid_len));
    CHECK(r.rounded == round_mask(r.mask));
    // Chunks partition the valid range.
    std::int64_t covered = 0;
    for (const Chunk& c : r.chunks) covered += c.end - c.start;
    CHECK(covered == fx.data.sequences[i].valid_len);
  }

  // Planted flags exist, so the agreement block is populated.
  CHECK(report.has_importance);
  CHECK(report.mask_auroc >= 0.0);
  CHECK(report.mask_auroc <= 1.0);

  EvaluationReport again = evaluate(fx.model, fx.explainer, fx.data);
  TempFile f1("eval_a.json"), f2("eval_b.json");
  write_evaluation_json(f1.path, report);
  write_evaluation_json(f2.path, again);
  CHECK(read_file(f1.path) == read_file(f2.path));
}

TEST_CASE("saturated masks make every condition outcome exact") {
  EvalFixture fx;

  SUBCASE("all-ones masks") {
    fx.force_dense_bias(50.0);
    EvaluationReport report = evaluate(fx.model, fx.explainer, fx.data);

    // Every mask value is bitwise 1.0.
    for (const MaskRecord& r : report.masks) {
      for (double v : r.mask) CHECK(v == 1.0);
      CHECK(std::all_of(r.rounded.begin(), r.rounded.end(),
                        [](int b) { return b == 1; }));
      REQUIRE(r.chunks.size() == 1);
      CHECK(r.chunks[0].important);
    }
    // Identity masking: masked, rounded, and whole-sequence chunks all equal
    // the unmasked run.
    CHECK(report.balanced_acc[1] == report.balanced_acc[0]);
    CHECK(report.balanced_acc[3] == report.balanced_acc[0]);
    CHECK(report.balanced_acc[5] == report.balanced_acc[0]);
    const auto n = static_cast<std::int64_t>(fx.data.size());
    CHECK(report.items_used[5] == n);
    // No irrelevant chunks exist anywhere.
    CHECK(report.items_used[6] == 0);
    for (double v : report.balanced_acc[6]) CHECK(v == 0.0);

    // Inversion hides everything: fully-masked input collapses to a single
    // constant prediction per head, so balanced accuracy is exactly 1/C on
    // this class-balanced set.
    CHECK(report.balanced_acc[2][0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report.balanced_acc[2][1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(report.balanced_acc[4] == report.balanced_acc[2]);
  }

  SUBCASE("all-zeros masks") {
    fx.force_dense_bias(-50.0);
    EvaluationReport report = evaluate(fx.model, fx.explainer, fx.data);

    for (const MaskRecord& r : report.masks) {
      for (double v : r.mask) {
        CHECK(v >= 0.0);
        CHECK(v < 1e-12);
      }
      REQUIRE(r.chunks.size() == 1);
      CHECK(!r.chunks[0].important);
    }
    // The complement of a (numerically) zero mask is bitwise one: the
    // inverted condition reproduces the unmasked run exactly.
    CHECK(report.balanced_acc[2] == report.balanced_acc[0]);
    CHECK(report.balanced_acc[4] == report.balanced_acc[0]);
    CHECK(report.items_used[5] == 0);
    CHECK(report.items_used[6] == static_cast<std::int64_t>(fx.data.size()));
    CHECK(report.balanced_acc[6] == report.balanced_acc[0]);
    // Masked input is as good as empty.
    CHECK(report.balanced_acc[1][0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report.balanced_acc[1][1] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("evaluate rejects mismatched heads and empty data") {
  EvalFixture fx;
  LabeledDataset empty;
  empty.heads = fx.data.heads;
  CHECK_THROWS(evaluate(fx.model, fx.explainer, empty));

  LabeledDataset renamed = fx.data;
  renamed.heads[0].name = "other";
  CHECK_THROWS(evaluate(fx.model, fx.explainer, renamed));
}

TEST_CASE("ansi and html rendering") {
  const std::vector<std::string> tokens = {"AAA", "CCC"};
  const std::vector<double> mask = {0.0, 1.0};
  const std::vector<int> rounded = {0, 1};

  const std::string ansi = render_mask_ansi(tokens, mask, rounded);
  CHECK(ansi ==
        "\x1b[48;5;16m\x1b[38;5;231mAAA\x1b[0m "
        "\x1b[1m\x1b[48;5;46m\x1b[38;5;16mCCC\x1b[0m");

  const std::string html = render_mask_html(tokens, mask, rounded);
  CHECK(html ==
        "<span style=\"background-color:rgba(0,153,0,0.000);"
        "font-weight:400\">AAA</span> "
        "<span style=\"background-color:rgba(0,153,0,1.000);"
        "font-weight:700\">CCC</span>");

  // Markup-sensitive characters are escaped in the HTML path.
  const std::string esc =
      render_mask_html({"<&>"}, {0.5}, {1});
  CHECK(esc.find("&lt;&amp;&gt;") != std::string::npos);
  CHECK(esc.find("<&>") == std::string::npos);

  CHECK_THROWS(render_mask_ansi({"A"}, {0.5, 0.5}, {0}));
  CHECK_THROWS(render_mask_html({"A"}, {0.5}, {0, 1}));
}

TEST_CASE("report writers emit parseable, timestamp-free artifacts") {
  EvalFixture fx;
  EvaluationReport report = evaluate(fx.model, fx.explainer, fx.data);

  TempFile fj("report.json"), fm("report.md"), fh("report.html"),
      fc("hist.csv");
  write_evaluation_json(fj.path, report);
  write_markdown_report(fm.path, report);
  write_html_report(fh.path, report, fx.data, fx.vocab, 3);
  write_histogram_csv(fc.path, report.statistics);

  const std::string raw = read_file(fj.path);
  const auto j = nlohmann::json::parse(raw);
  CHECK(j.at("conditions").size() == 7);
  CHECK(j.at("balanced_accuracy").at("unmasked").contains("coarse"));
  CHECK(j.at("mask_statistics").at("items").get<int>() ==
        static_cast<int>(fx.data.size()));
  CHECK(j.at("items_used").at("masked").get<std::int64_t>() ==
        static_cast<std::int64_t>(fx.data.size()));
  CHECK(raw.find("time") == std::string::npos);
  CHECK(raw.find("date") == std::string::npos);

  const std::string md = read_file(fm.path);
  CHECK(md.find("| condition | items | coarse | fine |") != std::string::npos);
  CHECK(md.find("| unmasked |") != std::string::npos);
  CHECK(md.find("| irrelevant_chunks |") != std::string::npos);
  CHECK(md.find("AUROC") != std::string::npos);

  const std::string html = read_file(fh.path);
  CHECK(html.find("<!DOCTYPE html>") == 0);
  CHECK(html.find("<h2>Highlighted sequences</h2>") != std::string::npos);
  // Three gallery items, each token of each item in its own span.
  std::size_t spans = 0;
  for (std::size_t pos = html.find("<span"); pos != std::string::npos;
       pos = html.find("<span", pos + 1)) {
    ++spans;
  }
  std::size_t expected = 0;
  for (int i = 0; i < 3; ++i) {
    expected += static_cast<std::size_t>(fx.data.sequences[static_cast<std::size_t>(i)].valid_len);
  }
  CHECK(spans == expected);

  std::ifstream hist(fc.path);
  std::string line;
  std::getline(hist, line);
  CHECK(line == "bin_low, bin_high, fraction");
  double total = 0.0;
  std::size_t rows = 0;
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    const auto last = line.rfind(", ");
    total += std::stod(line.substr(last + 2));
    ++rows;
  }
  CHECK(rows == report.statistics.histogram.size());
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}
