#include "seqmask/losses.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqmask {

namespace {

void check_bounds(const AreaBounds& bounds) {
  if (!(bounds.a > 0.0 && bounds.a < bounds.b && bounds.b < 1.0)) {
    throw std::invalid_argument("area bounds must satisfy 0 < a < b < 1");
  }
}

std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

}  // namespace

Tensor classification_loss(const std::vector<Tensor>& probs_masked,
                           const std::vector<int>& y) {
  if (probs_masked.empty()) {
    throw std::invalid_argument("classification_loss: no heads");
  }
  if (probs_masked.size() != y.size()) {
    throw std::invalid_argument("classification_loss: heads/labels mismatch");
  }
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t h = 0; h < probs_masked.size(); ++h) {
    const Tensor& p = probs_masked[h];
    if (y[h] < 0 || y[h] >= p.numel()) {
      throw std::out_of_range("classification_loss: label out of range");
    }
    loss = add(loss, mul_scalar(take(log_clamped(p), y[h]), -1.0));
  }
  return loss;
}

Tensor entropy_loss(const std::vector<Tensor>& probs_complement) {
  if (probs_complement.empty()) {
    throw std::invalid_argument("entropy_loss: no heads");
  }
  Tensor acc = Tensor::scalar(0.0);
  for (const Tensor& p : probs_complement) {
    Tensor plogp = sum_all(mul(p, log_clamped(p)));
    acc = add(acc, mul_scalar(plogp, 1.0 / static_cast<double>(p.numel())));
  }
  return mul_scalar(acc, 1.0 / static_cast<double>(probs_complement.size()));
}

Tensor area_mean(const Tensor& mask, std::int64_t valid_len) {
  if (valid_len <= 0) {
    throw std::invalid_argument("area_mean: valid_len must be positive");
  }
  if (mask.numel() < valid_len) {
    throw std::invalid_argument("area_mean: mask shorter than valid_len");
  }
  // Padded tail entries are zero by contract, so the full sum equals the sum
  // over valid positions.
  return mul_scalar(sum_all(mask), 1.0 / static_cast<double>(valid_len));
}

Tensor bounding_measure(const Tensor& s_col, std::int64_t valid_len,
                        const AreaBounds& bounds) {
  check_bounds(bounds);
  if (valid_len <= 0) {
    throw std::invalid_argument("bounding_measure: valid_len must be positive");
  }
  if (s_col.numel() < valid_len) {
    throw std::invalid_argument("bounding_measure: column shorter than valid_len");
  }
  const std::int64_t z = valid_len;
  Tensor valid = s_col.numel() == z ? s_col : slice_rows(s_col, 0, z);
  Tensor sorted = sort_descending(valid).first;

  std::int64_t n_min = round_half_up(bounds.a * static_cast<double>(z));
  std::int64_t n_max = round_half_up(bounds.b * static_cast<double>(z));
  if (n_min > n_max) n_min = n_max;  // degenerate only for tiny z

  std::vector<double> lo(static_cast<std::size_t>(z), 0.0);
  std::vector<double> hi(static_cast<std::size_t>(z), 0.0);
  for (std::int64_t i = 0; i < n_min; ++i) lo[static_cast<std::size_t>(i)] = 1.0;
  for (std::int64_t i = 0; i < n_max; ++i) hi[static_cast<std::size_t>(i)] = 1.0;
  Tensor q_min = Tensor::from({z}, lo);
  Tensor q_max = Tensor::from({z}, hi);

  Tensor below = sum_all(relu(sub(q_min, sorted)));
  Tensor above = sum_all(relu(sub(sorted, q_max)));
  return mul_scalar(add(below, above), 1.0 / static_cast<double>(z));
}

Tensor area_loss(const Tensor& m, const Tensor& n, const MaskStack& S,
                 const std::vector<int>& y, const AreaBounds& bounds) {
  if (y.size() != S.heads.size()) {
    throw std::invalid_argument("area_loss: labels do not match heads");
  }
  Tensor loss = add(area_mean(m, S.valid_len), area_mean(n, S.valid_len));
  Tensor bound_acc = Tensor::scalar(0.0);
  for (std::size_t h = 0; h < y.size(); ++h) {
    std::int64_t c = mask_column(S.heads, static_cast<int>(h), y[h]);
    bound_acc = add(bound_acc,
                    bounding_measure(col(S.values, c), S.valid_len, bounds));
  }
  bound_acc = mul_scalar(bound_acc, 1.0 / static_cast<double>(y.size()));
  return add(loss, bound_acc);
}

Tensor tv_loss(const Tensor& m, const Tensor& n, std::int64_t valid_len) {
  if (valid_len <= 0) {
    throw std::invalid_argument("tv_loss: valid_len must be positive");
  }
  if (m.numel() < valid_len || n.numel() < valid_len) {
    throw std::invalid_argument("tv_loss: mask shorter than valid_len");
  }
  if (valid_len == 1) {
    return Tensor::scalar(0.0);
  }
  const std::int64_t z = valid_len;
  auto variation = [z](const Tensor& v) {
    Tensor head = slice_rows(v, 0, z - 1);
    Tensor tail = slice_rows(v, 1, z - 1);
    return mul_scalar(sum_all(abs(sub(tail, head))),
                      1.0 / static_cast<double>(z));
  };
  return add(variation(m), variation(n));
}

LossBreakdown total_loss(const TokenSequence& x, const std::vector<int>& y,
                         const MaskStack& S, const Tensor& m, const Tensor& n,
                         const LossWeights& weights, const AreaBounds& bounds,
                         const Explanandum& model) {
  if (static_cast<std::int64_t>(x.ids.size()) != S.values.rows()) {
    throw std::invalid_argument("total_loss: sequence/mask length mismatch");
  }
  if (x.valid_len != S.valid_len) {
    throw std::invalid_argument("total_loss: valid_len mismatch");
  }
  Tensor m_comp = complement_mask(m, S.valid_len);

  LossBreakdown out;
  out.l_c = classification_loss(model.predict_probs(x, &m), y);
  out.l_e = entropy_loss(model.predict_probs(x, &m_comp));
  out.l_a = area_loss(m, n, S, y, bounds);
  out.l_tv = tv_loss(m, n, S.valid_len);
  out.total = add(add(out.l_c, mul_scalar(out.l_e, weights.lambda_e)),
                  add(mul_scalar(out.l_a, weights.lambda_a),
                      mul_scalar(out.l_tv, weights.lambda_tv)));
  return out;
}

}  // namespace seqmask
