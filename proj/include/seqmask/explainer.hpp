#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/masking.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

struct ExplainerConfig {
  std::int64_t vocab_size = 0;
  std::int64_t embedding_dim = 32;
  std::int64_t hidden = 16;
  int layers = 2;
  bool bidirectional = true;
  // Concatenate cell states with hidden states in the per-token feature
  // (width 4*hidden when bidirectional); false keeps hidden states only.
  bool concat_cell = true;
  std::vector<HeadSpec> heads;  // defines C = sum of class counts
  std::uint64_t seed = 0;

  std::int64_t feature_width() const {
    const std::int64_t per_dir = concat_cell ? 2 * hidden : hidden;
    return bidirectional ? 2 * per_dir : per_dir;
  }
};

// Mask network: embedding -> stacked (bi)LSTM -> per-token concat of final
// hidden/cell states -> ReLU -> batch normalization -> dense -> sigmoid,
// giving a d x C stack of per-class soft masks.
class Explainer {
 public:
  explicit Explainer(ExplainerConfig config);

  const ExplainerConfig& config() const { return config_; }

  // Per-token ReLU features over the valid prefix of x (valid_len x F).
  // Differentiable; used directly by the training loop.
  Tensor features(const TokenSequence& x) const;

  // Batch-statistics normalization over the row axis (batch-and-token);
  // updates the running averages unless update_running is false.
  Tensor batchnorm_train(const Tensor& rows, bool update_running = true);
  // Running-statistics normalization for inference.
  Tensor batchnorm_infer(const Tensor& rows) const;

  // Dense + sigmoid head mapping normalized features to mask columns.
  Tensor mask_head(const Tensor& normalized) const;

  // Full inference pipeline; rows at padded positions are zeroed. Gradients
  // are not recorded.
  MaskStack explain(const TokenSequence& x) const;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> params() const;
  // Non-trainable state (batch-norm running statistics).
  std::vector<std::pair<std::string, std::vector<double>>> named_buffers() const;
  void set_buffer(const std::string& name, std::vector<double> values);

  std::uint64_t param_hash() const;

  static constexpr double kBnMomentum = 0.1;
  static constexpr double kBnEpsilon = 1e-5;

 private:
  struct LstmCell {
    Tensor w;  // in x 4H
    Tensor u;  // H x 4H
    Tensor b;  // {4H}
  };

  // Runs one direction of one layer; fills per-token hidden (and cell) rows.
  void run_direction(const Tensor& input, const LstmCell& cell, bool reverse,
                     std::vector<Tensor>& hidden,
                     std::vector<Tensor>& cellstate) const;

  ExplainerConfig config_;
  Tensor embedding_;                    // V x emb
  std::vector<std::vector<LstmCell>> cells_;  // [layer][direction]
  Tensor bn_gamma_, bn_beta_;           // {F}
  std::vector<double> bn_running_mean_, bn_running_var_;
  Tensor dense_w_;                      // F x C
  Tensor dense_b_;                      // {C}
};

}  // namespace seqmask
