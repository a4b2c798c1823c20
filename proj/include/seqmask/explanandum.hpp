#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

enum class EncoderKind { none, attention };
enum class PoolingKind { mean, cls };

struct ExplanandumConfig {
  std::int64_t vocab_size = 0;
  std::int64_t embedding_dim = 32;
  EncoderKind encoder = EncoderKind::attention;
  PoolingKind pooling = PoolingKind::mean;
  std::vector<HeadSpec> heads;
  std::uint64_t seed = 0;
};

using HeadLogits = std::vector<Tensor>;  // one {C_head} vector per head

// The classifier being explained. Pipeline: embedding -> optional Hadamard
// with a soft mask -> encoder -> (mean pooling with a mask) second Hadamard
// -> pooling over valid tokens -> one linear head per label level. The second
// mask application is what makes a fully masked sequence indistinguishable
// from an empty one.
class Explanandum {
 public:
  explicit Explanandum(ExplanandumConfig config);

  const ExplanandumConfig& config() const { return config_; }

  // Full-length embedding matrix (PAD rows included; pooling excludes them).
  Tensor embed(const TokenSequence& x) const;

  // mask, when given, must cover every position of x.ids with values in
  // [0,1]. With CLS pooling the entry at position 0 is overridden to 1.
  HeadLogits forward(const TokenSequence& x, const Tensor* mask = nullptr) const;
  std::vector<Tensor> predict_probs(const TokenSequence& x,
                                    const Tensor* mask = nullptr) const;

  // Differentiable sum of per-head cross-entropies.
  Tensor loss(const HeadLogits& logits, const std::vector<int>& y) const;

  // Marks every parameter requires_grad=false. Irreversible by design.
  void freeze();
  bool frozen() const { return frozen_; }

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> params() const;

  // FNV-1a over the exact parameter bytes; used by the freeze contract.
  std::uint64_t param_hash() const;

 private:
  Tensor encode(const Tensor& embeddings) const;

  ExplanandumConfig config_;
  bool frozen_ = false;

  Tensor embedding_;                    // V x h
  Tensor wq_, wk_, wv_, wo_;            // h x h (attention encoder only)
  Tensor bq_, bk_, bv_, bo_;            // {h}
  std::vector<Tensor> head_w_;          // h x C_head
  std::vector<Tensor> head_b_;          // {C_head}
};

std::string to_string(EncoderKind k);
std::string to_string(PoolingKind k);
EncoderKind encoder_from_string(const std::string& s);
PoolingKind pooling_from_string(const std::string& s);

}  // namespace seqmask
