#include "seqmask/explanandum.hpp"

#include <cmath>
#include <stdexcept>

#include "seqmask/masking.hpp"
#include "seqmask/rng.hpp"

namespace seqmask {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor normal_leaf(Rng& rng, Shape shape, double stddev) {
  std::int64_t numel = 1;
  for (auto d : shape) numel *= d;
  std::vector<double> v(static_cast<std::size_t>(numel));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

Explanandum::Explanandum(ExplanandumConfig config) : config_(std::move(config)) {
  require(config_.vocab_size >= 4, "explanandum: vocab too small");
  require(config_.embedding_dim >= 1, "explanandum: embedding dim must be >= 1");
  require(!config_.heads.empty(), "explanandum: at least one head required");
  for (const auto& h : config_.heads)
    require(h.num_classes >= 2, "explanandum: every head needs >= 2 classes");

  Rng rng(config_.seed);
  const std::int64_t h = config_.embedding_dim;
  const double wscale = 1.0 / std::sqrt(static_cast<double>(h));
  embedding_ = normal_leaf(rng, {config_.vocab_size, h}, 0.1);
  if (config_.encoder == EncoderKind::attention) {
    // Projection biases start slightly off zero so that a zeroed embedding
    // still produces nonzero encoder output; the second mask application is
    // what removes that signal for fully masked inputs.
    wq_ = normal_leaf(rng, {h, h}, wscale);
    bq_ = normal_leaf(rng, {h}, 0.05);
    wk_ = normal_leaf(rng, {h, h}, wscale);
    bk_ = normal_leaf(rng, {h}, 0.05);
    wv_ = normal_leaf(rng, {h, h}, wscale);
    bv_ = normal_leaf(rng, {h}, 0.05);
    wo_ = normal_leaf(rng, {h, h}, wscale);
    bo_ = normal_leaf(rng, {h}, 0.05);
  }
  for (const auto& head : config_.heads) {
    head_w_.push_back(normal_leaf(rng, {h, head.num_classes}, wscale));
    head_b_.push_back(Tensor::zeros({head.num_classes}, true));
  }
}

Tensor Explanandum::embed(const TokenSequence& x) const {
  for (auto id : x.ids)
    require(id >= 0 && id < config_.vocab_size, "embed: token id out of range");
  return gather_rows(embedding_, x.ids);
}

Tensor Explanandum::encode(const Tensor& embeddings) const {
  if (config_.encoder == EncoderKind::none) return embeddings;
  const double scale =
      1.0 / std::sqrt(static_cast<double>(config_.embedding_dim));
  Tensor q = add_rowvec(matmul(embeddings, wq_), bq_);
  Tensor k = add_rowvec(matmul(embeddings, wk_), bk_);
  Tensor v = add_rowvec(matmul(embeddings, wv_), bv_);
  Tensor attn = softmax_rows(mul_scalar(matmul_nt(q, k), scale));
  Tensor ctx = matmul(attn, v);
  return add(embeddings, add_rowvec(matmul(ctx, wo_), bo_));
}

HeadLogits Explanandum::forward(const TokenSequence& x,
                                const Tensor* mask) const {
  const std::int64_t d_full = static_cast<std::int64_t>(x.ids.size());
  const std::int64_t valid = x.valid_len;
  require(valid >= 0 && valid <= d_full, "forward: valid_len out of range");
  if (mask != nullptr) {
    require(mask->defined() && mask->shape().size() == 1 &&
                mask->shape()[0] == d_full,
            "forward: mask length must equal the token count");
    for (double v : mask->values())
      require(v >= 0.0 && v <= 1.0, "forward: mask values must lie in [0,1]");
  }

  Tensor pooled;
  if (valid == 0) {
    pooled = Tensor::zeros({config_.embedding_dim});
  } else {
    TokenSequence prefix;
    prefix.ids.assign(x.ids.begin(), x.ids.begin() + valid);
    prefix.valid_len = valid;
    if (config_.pooling == PoolingKind::cls)
      require(prefix.ids[0] == Vocabulary::kCls,
              "forward: CLS pooling requires a CLS token at position 0");
    Tensor e = embed(prefix);
    Tensor mask_valid;
    if (mask != nullptr) {
      mask_valid = slice_rows(*mask, 0, valid);
      if (config_.pooling == PoolingKind::cls) {
        // The classification anchor is never masked.
        std::vector<double> keep(static_cast<std::size_t>(valid), 1.0);
        keep[0] = 0.0;
        std::vector<double> anchor(static_cast<std::size_t>(valid), 0.0);
        anchor[0] = 1.0;
        mask_valid = add(mul(mask_valid, Tensor::from({valid}, keep)),
                         Tensor::from({valid}, anchor));
      }
      e = apply_mask(e, mask_valid);
    }
    Tensor enc = encode(e);
    if (config_.pooling == PoolingKind::mean) {
      if (mask != nullptr) enc = mul_colvec(enc, mask_valid);
      pooled = mean_pool_valid(enc, valid);
    } else {
      pooled = row(enc, 0);
    }
  }

  HeadLogits logits;
  for (std::size_t h = 0; h < head_w_.size(); ++h)
    logits.push_back(add(matmul(pooled, head_w_[h]), head_b_[h]));
  return logits;
}

std::vector<Tensor> Explanandum::predict_probs(const TokenSequence& x,
                                               const Tensor* mask) const {
  HeadLogits logits = forward(x, mask);
  std::vector<Tensor> probs;
  probs.reserve(logits.size());
  for (const auto& l : logits) probs.push_back(softmax_rows(l));
  return probs;
}

Tensor Explanandum::loss(const HeadLogits& logits,
                         const std::vector<int>& y) const {
  require(logits.size() == config_.heads.size(),
          "loss: logits/head count mismatch");
  require(y.size() == config_.heads.size(), "loss: label/head count mismatch");
  Tensor total;
  for (std::size_t h = 0; h < logits.size(); ++h) {
    require(y[h] >= 0 && y[h] < config_.heads[h].num_classes,
            "loss: label out of range");
    Tensor log_probs = log_clamped(softmax_rows(logits[h]));
    Tensor nll = mul_scalar(take(log_probs, y[h]), -1.0);
    total = h == 0 ? nll : add(total, nll);
  }
  return total;
}

void Explanandum::freeze() {
  for (auto& p : params()) p.set_requires_grad(false);
  frozen_ = true;
}

std::vector<std::pair<std::string, Tensor>> Explanandum::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding_);
  if (config_.encoder == EncoderKind::attention) {
    out.emplace_back("attn.wq", wq_);
    out.emplace_back("attn.bq", bq_);
    out.emplace_back("attn.wk", wk_);
    out.emplace_back("attn.bk", bk_);
    out.emplace_back("attn.wv", wv_);
    out.emplace_back("attn.bv", bv_);
    out.emplace_back("attn.wo", wo_);
    out.emplace_back("attn.bo", bo_);
  }
  for (std::size_t h = 0; h < head_w_.size(); ++h) {
    out.emplace_back("head." + config_.heads[h].name + ".w", head_w_[h]);
    out.emplace_back("head." + config_.heads[h].name + ".b", head_b_[h]);
  }
  return out;
}

std::vector<Tensor> Explanandum::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

std::uint64_t Explanandum::param_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : named_params()) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    const auto vals = t.values();
    const auto* bytes = reinterpret_cast<const unsigned char*>(vals.data());
    for (std::size_t i = 0; i < vals.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string to_string(EncoderKind k) {
  return k == EncoderKind::none ? "none" : "attention";
}

std::string to_string(PoolingKind k) {
  return k == PoolingKind::mean ? "mean" : "cls";
}

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "none") return EncoderKind::none;
  if (s == "attention") return EncoderKind::attention;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

PoolingKind pooling_from_string(const std::string& s) {
  if (s == "mean") return PoolingKind::mean;
  if (s == "cls") return PoolingKind::cls;
  throw std::invalid_argument("unknown pooling kind: " + s);
}

}  // namespace seqmask
