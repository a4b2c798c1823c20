#include "seqmask/explainer.hpp"

#include <cmath>
#include <stdexcept>

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

Explainer::Explainer(ExplainerConfig config) : config_(std::move(config)) {
  require(config_.vocab_size >= 4, "explainer: vocab too small");
  require(config_.embedding_dim >= 1 && config_.hidden >= 1,
          "explainer: embedding and hidden dims must be >= 1");
  require(config_.layers >= 1, "explainer: at least one LSTM layer required");
  require(!config_.heads.empty(), "explainer: at least one head required");

  Rng rng(config_.seed);
  const std::int64_t hsz = config_.hidden;
  const int dirs = config_.bidirectional ? 2 : 1;
  embedding_ = normal_leaf(rng, {config_.vocab_size, config_.embedding_dim}, 0.1);
  for (int l = 0; l < config_.layers; ++l) {
    const std::int64_t in =
        l == 0 ? config_.embedding_dim : static_cast<std::int64_t>(dirs) * hsz;
    std::vector<LstmCell> layer;
    for (int d = 0; d < dirs; ++d) {
      LstmCell cell;
      cell.w = normal_leaf(rng, {in, 4 * hsz},
                           1.0 / std::sqrt(static_cast<double>(in)));
      cell.u = normal_leaf(rng, {hsz, 4 * hsz},
                           1.0 / std::sqrt(static_cast<double>(hsz)));
      // Forget-gate bias starts at 1 so early training does not erase state.
      std::vector<double> b(static_cast<std::size_t>(4 * hsz), 0.0);
      for (std::int64_t j = hsz; j < 2 * hsz; ++j)
        b[static_cast<std::size_t>(j)] = 1.0;
      cell.b = Tensor::from({4 * hsz}, std::move(b), true);
      layer.push_back(std::move(cell));
    }
    cells_.push_back(std::move(layer));
  }
  const std::int64_t f = config_.feature_width();
  bn_gamma_ = Tensor::full({f}, 1.0, true);
  bn_beta_ = Tensor::zeros({f}, true);
  bn_running_mean_.assign(static_cast<std::size_t>(f), 0.0);
  bn_running_var_.assign(static_cast<std::size_t>(f), 1.0);
  const std::int64_t c = total_classes(config_.heads);
  dense_w_ =
      normal_leaf(rng, {f, c}, 1.0 / std::sqrt(static_cast<double>(f)));
  dense_b_ = Tensor::zeros({c}, true);
}

void Explainer::run_direction(const Tensor& input, const LstmCell& cell,
                              bool reverse, std::vector<Tensor>& hidden,
                              std::vector<Tensor>& cellstate) const {
  const std::int64_t d = input.rows();
  const std::int64_t hsz = config_.hidden;
  hidden.assign(static_cast<std::size_t>(d), Tensor());
  cellstate.assign(static_cast<std::size_t>(d), Tensor());
  Tensor xw = matmul(input, cell.w);  // d x 4H, one matmul per direction
  Tensor h = Tensor::zeros({hsz});
  Tensor c = Tensor::zeros({hsz});
  for (std::int64_t step = 0; step < d; ++step) {
    const std::int64_t t = reverse ? d - 1 - step : step;
    Tensor gates = add(add(row(xw, t), matmul(h, cell.u)), cell.b);
    Tensor i = sigmoid(slice_rows(gates, 0, hsz));
    Tensor f = sigmoid(slice_rows(gates, hsz, hsz));
    Tensor g = tanh(slice_rows(gates, 2 * hsz, hsz));
    Tensor o = sigmoid(slice_rows(gates, 3 * hsz, hsz));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    hidden[static_cast<std::size_t>(t)] = h;
    cellstate[static_cast<std::size_t>(t)] = c;
  }
}

Tensor Explainer::features(const TokenSequence& x) const {
  const std::int64_t valid = x.valid_len;
  require(valid >= 1, "explainer: empty sequence");
  require(valid <= static_cast<std::int64_t>(x.ids.size()),
          "explainer: valid_len out of range");
  for (std::int64_t i = 0; i < valid; ++i)
    require(x.ids[static_cast<std::size_t>(i)] >= 0 &&
                x.ids[static_cast<std::size_t>(i)] < config_.vocab_size,
            "explainer: token id out of range");

  std::vector<std::int64_t> prefix(x.ids.begin(), x.ids.begin() + valid);
  Tensor layer_input = gather_rows(embedding_, prefix);
  std::vector<Tensor> h_fwd, c_fwd, h_bwd, c_bwd;
  for (int l = 0; l < config_.layers; ++l) {
    run_direction(layer_input, cells_[static_cast<std::size_t>(l)][0], false,
                  h_fwd, c_fwd);
    if (config_.bidirectional)
      run_direction(layer_input, cells_[static_cast<std::size_t>(l)][1], true,
                    h_bwd, c_bwd);
    if (l + 1 < config_.layers) {
      // Stacked layers consume hidden states only.
      std::vector<Tensor> rows;
      rows.reserve(static_cast<std::size_t>(valid));
      for (std::int64_t t = 0; t < valid; ++t) {
        if (config_.bidirectional) {
          std::vector<Tensor> hc{h_fwd[static_cast<std::size_t>(t)],
                                 h_bwd[static_cast<std::size_t>(t)]};
          rows.push_back(concat_rows(hc));
        } else {
          rows.push_back(h_fwd[static_cast<std::size_t>(t)]);
        }
      }
      layer_input = stack_rows(rows);
    }
  }
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(valid));
  for (std::int64_t t = 0; t < valid; ++t) {
    std::vector<Tensor> parts;
    parts.push_back(h_fwd[static_cast<std::size_t>(t)]);
    if (config_.concat_cell) parts.push_back(c_fwd[static_cast<std::size_t>(t)]);
    if (config_.bidirectional) {
      parts.push_back(h_bwd[static_cast<std::size_t>(t)]);
      if (config_.concat_cell)
        parts.push_back(c_bwd[static_cast<std::size_t>(t)]);
    }
    rows.push_back(concat_rows(parts));
  }
  return relu(stack_rows(rows));
}

Tensor Explainer::batchnorm_train(const Tensor& rows, bool update_running) {
  const std::int64_t n = rows.rows();
  const std::int64_t f = config_.feature_width();
  require(rows.cols() == f, "batchnorm: feature width mismatch");
  Tensor mean = mean_pool_valid(rows, n);
  Tensor centered = add_rowvec(rows, mul_scalar(mean, -1.0));
  // Biased variance in both normalization and the running buffer keeps the
  // train and inference transforms consistent.
  Tensor var = mean_pool_valid(mul(centered, centered), n);
  Tensor norm = mul_rowvec(centered, rsqrt(add_scalar(var, kBnEpsilon)));
  if (update_running) {
    for (std::int64_t j = 0; j < f; ++j) {
      auto& rm = bn_running_mean_[static_cast<std::size_t>(j)];
      auto& rv = bn_running_var_[static_cast<std::size_t>(j)];
      rm = (1.0 - kBnMomentum) * rm + kBnMomentum * mean.at(j);
      rv = (1.0 - kBnMomentum) * rv + kBnMomentum * var.at(j);
    }
  }
  return add_rowvec(mul_rowvec(norm, bn_gamma_), bn_beta_);
}

Tensor Explainer::batchnorm_infer(const Tensor& rows) const {
  const std::int64_t f = config_.feature_width();
  require(rows.cols() == f, "batchnorm: feature width mismatch");
  std::vector<double> neg_mean(bn_running_mean_.size());
  std::vector<double> inv(bn_running_var_.size());
  for (std::size_t j = 0; j < inv.size(); ++j) {
    neg_mean[j] = -bn_running_mean_[j];
    inv[j] = 1.0 / std::sqrt(bn_running_var_[j] + kBnEpsilon);
  }
  Tensor centered = add_rowvec(rows, Tensor::from({f}, std::move(neg_mean)));
  Tensor norm = mul_rowvec(centered, Tensor::from({f}, std::move(inv)));
  return add_rowvec(mul_rowvec(norm, bn_gamma_), bn_beta_);
}

Tensor Explainer::mask_head(const Tensor& normalized) const {
  return sigmoid(add_rowvec(matmul(normalized, dense_w_), dense_b_));
}

MaskStack Explainer::explain(const TokenSequence& x) const {
  NoGradGuard guard;
  const std::int64_t d = static_cast<std::int64_t>(x.ids.size());
  const std::int64_t valid = x.valid_len;
  Tensor s_valid = mask_head(batchnorm_infer(features(x)));
  const std::int64_t c = s_valid.cols();
  std::vector<double> values(static_cast<std::size_t>(d * c), 0.0);
  for (std::int64_t i = 0; i < valid; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      values[static_cast<std::size_t>(i * c + j)] = s_valid.at(i, j);
  MaskStack stack;
  stack.values = Tensor::from({d, c}, std::move(values));
  stack.valid_len = valid;
  stack.heads = config_.heads;
  return stack;
}

std::vector<std::pair<std::string, Tensor>> Explainer::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding_);
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    for (std::size_t d = 0; d < cells_[l].size(); ++d) {
      const std::string prefix = "lstm.l" + std::to_string(l) +
                                 (d == 0 ? ".fwd" : ".bwd");
      out.emplace_back(prefix + ".w", cells_[l][d].w);
      out.emplace_back(prefix + ".u", cells_[l][d].u);
      out.emplace_back(prefix + ".b", cells_[l][d].b);
    }
  }
  out.emplace_back("bn.gamma", bn_gamma_);
  out.emplace_back("bn.beta", bn_beta_);
  out.emplace_back("dense.w", dense_w_);
  out.emplace_back("dense.b", dense_b_);
  return out;
}

std::vector<Tensor> Explainer::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>>>
Explainer::named_buffers() const {
  return {{"bn.running_mean", bn_running_mean_},
          {"bn.running_var", bn_running_var_}};
}

void Explainer::set_buffer(const std::string& name,
                           std::vector<double> values) {
  const std::size_t f = static_cast<std::size_t>(config_.feature_width());
  require(values.size() == f, "set_buffer: wrong length for " + name);
  if (name == "bn.running_mean")
    bn_running_mean_ = std::move(values);
  else if (name == "bn.running_var")
    bn_running_var_ = std::move(values);
  else
    throw std::invalid_argument("set_buffer: unknown buffer " + name);
}

std::uint64_t Explainer::param_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : named_params()) {
    mix_bytes(name.data(), name.size());
    const auto vals = t.values();
    mix_bytes(vals.data(), vals.size() * sizeof(double));
  }
  for (const auto& [name, buf] : named_buffers()) {
    mix_bytes(name.data(), name.size());
    mix_bytes(buf.data(), buf.size() * sizeof(double));
  }
  return h;
}

}  // namespace seqmask
