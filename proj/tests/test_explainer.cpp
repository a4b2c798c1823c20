#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "seqmask/explainer.hpp"
#include "seqmask/rng.hpp"
#include "support/finite_diff.hpp"

using namespace seqmask;

namespace {

ExplainerConfig tiny_config() {
  ExplainerConfig cfg;
  cfg.vocab_size = 19;
  cfg.embedding_dim = 4;
  cfg.hidden = 3;
  cfg.layers = 2;
  cfg.bidirectional = true;
  cfg.concat_cell = true;
  cfg.heads = {{"a", 2}, {"b", 3}};
  cfg.seed = 5;
  return cfg;
}

TokenSequence seq(std::vector<std::int64_t> ids, std::int64_t valid = -1) {
  TokenSequence s;
  s.valid_len = valid < 0 ? static_cast<std::int64_t>(ids.size()) : valid;
  s.ids = std::move(ids);
  return s;
}

}  // namespace

TEST_CASE("feature width follows the hidden/cell concatenation rule") {
  ExplainerConfig cfg = tiny_config();
  cfg.hidden = 40;
  CHECK(cfg.feature_width() == 160);  // hidden+cell, both directions
  cfg.concat_cell = false;
  CHECK(cfg.feature_width() == 80);
  cfg.bidirectional = false;
  CHECK(cfg.feature_width() == 40);
  cfg.concat_cell = true;
  CHECK(cfg.feature_width() == 80);
}

TEST_CASE("explain emits a d x C stack in (0,1) with padded rows zeroed") {
  Explainer ex(tiny_config());
  auto x = seq({3, 7, 11, 4, 0, 0}, 4);  // two PAD positions
  MaskStack s = ex.explain(x);
  CHECK(s.values.rows() == 6);
  CHECK(s.values.cols() == 5);
  CHECK(s.valid_len == 4);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 5; ++j) {
      CHECK(s.values.at(i, j) > 0.0);
      CHECK(s.values.at(i, j) < 1.0);
    }
  for (std::int64_t i = 4; i < 6; ++i)
    for (std::int64_t j = 0; j < 5; ++j) CHECK(s.values.at(i, j) == 0.0);

  // Variable lengths are supported without reconfiguration.
  CHECK(ex.explain(seq({5})).values.rows() == 1);
  CHECK(ex.explain(seq({5, 6, 7, 8, 9, 10, 11})).values.rows() == 7);
  CHECK_THROWS_AS(ex.explain(seq({}, 0)), std::invalid_argument);
}

TEST_CASE("inference is deterministic with frozen running stats") {
  Explainer ex(tiny_config());
  auto x = seq({3, 7, 11, 4});
  auto a = ex.explain(x);
  auto b = ex.explain(x);
  const auto av = a.values.values(), bv = b.values.values();
  CHECK(std::memcmp(av.data(), bv.data(), av.size() * sizeof(double)) == 0);

  Explainer ex2(tiny_config());
  CHECK(ex.param_hash() == ex2.param_hash());
}

TEST_CASE("batchnorm train mode normalizes columns and tracks running stats") {
  Explainer ex(tiny_config());
  const std::int64_t f = ex.config().feature_width();
  Rng rng(9);
  const std::int64_t n = 64;
  std::vector<double> vals(static_cast<std::size_t>(n * f));
  for (auto& v : vals) v = rng.normal(2.0, 3.0);
  Tensor rows = Tensor::from({n, f}, vals);
  Tensor out = ex.batchnorm_train(rows);
  for (std::int64_t j = 0; j < f; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += out.at(i, j);
    mean /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double dlt = out.at(i, j) - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(n);
    CHECK(std::abs(mean) < 1e-9);       // gamma=1, beta=0 at init
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Running stats moved toward the batch statistics (momentum 0.1).
  auto buffers = ex.named_buffers();
  bool any_mean_moved = false;
  for (double v : buffers[0].second)
    if (std::abs(v) > 1e-6) any_mean_moved = true;
  CHECK(any_mean_moved);

  // update_running=false leaves buffers untouched.
  Explainer ex2(tiny_config());
  auto before = ex2.named_buffers();
  (void)ex2.batchnorm_train(rows, false);
  CHECK(ex2.named_buffers()[0].second == before[0].second);
  CHECK(ex2.named_buffers()[1].second == before[1].second);
}

TEST_CASE("batchnorm inference uses the stored running statistics") {
  Explainer ex(tiny_config());
  const std::int64_t f = ex.config().feature_width();
  std::vector<double> mean(static_cast<std::size_t>(f), 2.0);
  std::vector<double> var(static_cast<std::size_t>(f), 4.0);
  ex.set_buffer("bn.running_mean", mean);
  ex.set_buffer("bn.running_var", var);
  Tensor rows = Tensor::full({3, f}, 2.0);
  Tensor out = ex.batchnorm_infer(rows);
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t j = 0; j < f; ++j)
      CHECK(out.at(i, j) == doctest::Approx(0.0).epsilon(1e-12));
  Tensor rows2 = Tensor::full({1, f}, 4.0);
  Tensor out2 = ex.batchnorm_infer(rows2);
  // (4-2)/sqrt(4+eps) ~ 1
  CHECK(out2.at(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK_THROWS_AS(ex.set_buffer("bn.running_mean", std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("finite differences through the full explainer training path") {
  ExplainerConfig cfg = tiny_config();
  cfg.hidden = 2;
  cfg.embedding_dim = 3;
  Explainer ex(cfg);
  auto x1 = seq({3, 7, 11});
  auto x2 = seq({4, 5});
  auto build = [&] {
    Tensor f1 = ex.features(x1);
    Tensor f2 = ex.features(x2);
    std::vector<Tensor> parts{f1, f2};
    Tensor all = concat_rows(parts);
    Tensor bn = ex.batchnorm_train(all, /*update_running=*/false);
    Tensor s = ex.mask_head(bn);
    return mean_all(s);
  };
  std::vector<Tensor> leaves;
  for (auto& [name, t] : ex.named_params()) leaves.push_back(t);
  fdtest::check_gradients(build, leaves);
}

TEST_CASE("gradient reaches every explainer parameter") {
  Explainer ex(tiny_config());
  auto x = seq({3, 7, 11, 4, 9});
  Tensor f = ex.features(x);
  Tensor bn = ex.batchnorm_train(f, false);
  Tensor loss = mean_all(ex.mask_head(bn));
  loss.backward();
  for (auto& [name, t] : ex.named_params()) {
    REQUIRE(t.has_grad());
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    CAPTURE(name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("stacked layers consume lower-layer outputs") {
  // One- vs two-layer configs must disagree on the same input.
  ExplainerConfig c1 = tiny_config();
  c1.layers = 1;
  ExplainerConfig c2 = tiny_config();
  c2.layers = 2;
  Explainer e1(c1), e2(c2);
  auto x = seq({3, 7, 11, 4});
  auto s1 = e1.explain(x), s2 = e2.explain(x);
  bool differ = false;
  for (std::int64_t i = 0; i < s1.values.numel(); ++i)
    if (s1.values.at(i) != s2.values.at(i)) differ = true;
  CHECK(differ);
}
