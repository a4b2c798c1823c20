#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "seqmask/checkpoint.hpp"
#include "seqmask/data.hpp"
#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/tensor.hpp"

using namespace seqmask;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
  const auto va = a.values();
  const auto vb = b.values();
  return std::equal(va.begin(), va.end(), vb.begin(), vb.end());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExplanandumConfig model_config() {
  ExplanandumConfig cfg;
  cfg.vocab_size = 25;
  cfg.embedding_dim = 10;
  cfg.heads = {{"coarse", 2}, {"fine", 4}};
  cfg.seed = 3;
  return cfg;
}

ExplainerConfig explainer_config() {
  ExplainerConfig cfg;
  cfg.vocab_size = 25;
  cfg.embedding_dim = 6;
  cfg.hidden = 4;
  cfg.layers = 2;
  cfg.heads = {{"coarse", 2}, {"fine", 4}};
  cfg.seed = 9;
  return cfg;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("classifier checkpoint round-trips parameters, config, and freeze") {
  Explanandum model(model_config());
  model.freeze();
  TempFile f("ck_explanandum.json");
  save_explanandum(f.path, model, 0xabcdefULL);

  LoadedExplanandum loaded = load_explanandum(f.path);
  CHECK(loaded.vocab_hash == 0xabcdefULL);
  CHECK(loaded.model.frozen());
  CHECK(loaded.model.param_hash() == model.param_hash());
  CHECK(loaded.model.config().embedding_dim == 10);
  CHECK(loaded.model.config().heads.size() == 2);
  CHECK(loaded.model.config().heads[1].num_classes == 4);

  // Behavioural equality on a probe input.
  TokenSequence x;
  x.ids = {3, 9, 17, 4};
  x.valid_len = 4;
  NoGradGuard guard;
  auto p0 = model.predict_probs(x);
  auto p1 = loaded.model.predict_probs(x);
  REQUIRE(p0.size() == p1.size());
  for (std::size_t h = 0; h < p0.size(); ++h) {
    CHECK(same_values(p0[h], p1[h]));
  }
}

TEST_CASE("unfrozen classifier loads unfrozen") {
  Explanandum model(model_config());
  TempFile f("ck_unfrozen.json");
  save_explanandum(f.path, model, 1);
  CHECK(!load_explanandum(f.path).model.frozen());
}

TEST_CASE("explainer checkpoint round-trips parameters and buffers") {
  Explainer explainer(explainer_config());
  // Push the running statistics away from their initial values.
  explainer.set_buffer("bn.running_mean",
                       std::vector<double>(
                           static_cast<std::size_t>(
                               explainer.config().feature_width()),
                           0.25));
  TempFile f("ck_explainer.json");
  save_explainer(f.path, explainer, 42);

  LoadedExplainer loaded = load_explainer(f.path);
  CHECK(loaded.vocab_hash == 42);
  CHECK(loaded.explainer.param_hash() == explainer.param_hash());
  CHECK(loaded.explainer.named_buffers() == explainer.named_buffers());

  TokenSequence x;
  x.ids = {5, 11, 2, 19, 7};
  x.valid_len = 5;
  MaskStack a = explainer.explain(x);
  MaskStack b = loaded.explainer.explain(x);
  CHECK(same_values(a.values, b.values));
}

TEST_CASE("checkpoints are byte-identical across saves and round-trips") {
  Explanandum model(model_config());
  TempFile f1("ck_bytes_1.json");
  TempFile f2("ck_bytes_2.json");
  save_explanandum(f1.path, model, 7);
  save_explanandum(f2.path, model, 7);
  CHECK(read_file(f1.path) == read_file(f2.path));

  // Save -> load -> save reproduces the file exactly.
  LoadedExplanandum loaded = load_explanandum(f1.path);
  TempFile f3("ck_bytes_3.json");
  save_explanandum(f3.path, loaded.model, loaded.vocab_hash);
  CHECK(read_file(f1.path) == read_file(f3.path));

  Explainer explainer(explainer_config());
  TempFile g1("ck_bytes_e1.json");
  TempFile g3("ck_bytes_e3.json");
  save_explainer(g1.path, explainer, 7);
  LoadedExplainer le = load_explainer(g1.path);
  save_explainer(g3.path, le.explainer, le.vocab_hash);
  CHECK(read_file(g1.path) == read_file(g3.path));
}

TEST_CASE("checkpoint loader rejects corrupt and mismatched files") {
  Explanandum model(model_config());
  TempFile f("ck_guard.json");
  save_explanandum(f.path, model, 7);

  SUBCASE("missing file") {
    CHECK_THROWS(load_explanandum("does_not_exist.json"));
  }
  SUBCASE("wrong kind") { CHECK_THROWS(load_explainer(f.path)); }
  SUBCASE("garbage contents") {
    std::ofstream out(f.path);
    out << "not json";
    out.close();
    CHECK_THROWS(load_explanandum(f.path));
  }
  SUBCASE("wrong version") {
    std::ofstream out(f.path);
    out << R"({"version": 2, "kind": "explanandum"})";
    out.close();
    CHECK_THROWS(load_explanandum(f.path));
  }
  SUBCASE("missing parameter") {
    std::ifstream in(f.path);
    {
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string text = buf.str();
      const auto pos = text.find("\"embedding\"");
      REQUIRE(pos != std::string::npos);
      text.replace(pos, 11, "\"embeddinx\"");
      std::ofstream out(f.path);
      out << text;
    }
    CHECK_THROWS(load_explanandum(f.path));
  }
}
