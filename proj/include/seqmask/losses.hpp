#pragma once

#include <cstdint>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/masking.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

struct LossWeights {
  double lambda_e = 1.0;
  double lambda_a = 1.0;
  double lambda_tv = 1.0;
};

// Fractional area band for the bounding measure: masks should keep between
// a*Z and b*Z tokens near 1 and the rest near 0.
struct AreaBounds {
  double a = 0.1;
  double b = 0.5;
};

struct LossBreakdown {
  Tensor l_c;
  Tensor l_e;
  Tensor l_a;
  Tensor l_tv;
  Tensor total;
};

// Sum over heads of -log p(true class) on the masked input.
Tensor classification_loss(const std::vector<Tensor>& probs_masked,
                           const std::vector<int>& y);

// Mean over heads of (1/C_head) * sum_c p_c log p_c on the complement-masked
// input; minimized by a uniform distribution (value -log(C)/C).
Tensor entropy_loss(const std::vector<Tensor>& probs_complement);

// Mean mask value over valid positions.
Tensor area_mean(const Tensor& mask, std::int64_t valid_len);

// Penalty of the descending-sorted mask column against the prefix-one
// templates with round-half-up(a*Z) and round-half-up(b*Z) ones.
Tensor bounding_measure(const Tensor& s_col, std::int64_t valid_len,
                        const AreaBounds& bounds);

// A(m) + A(n) + mean over true-class columns of the bounding measure.
Tensor area_loss(const Tensor& m, const Tensor& n, const MaskStack& S,
                 const std::vector<int>& y, const AreaBounds& bounds);

// (1/Z) sum |m[i]-m[i+1]| + (1/Z) sum |n[i]-n[i+1]| over the valid range.
Tensor tv_loss(const Tensor& m, const Tensor& n, std::int64_t valid_len);

// Runs the frozen classifier on the target-masked and complement-masked
// input and combines all four terms. Differentiable w.r.t. S (and through
// it m and n).
LossBreakdown total_loss(const TokenSequence& x, const std::vector<int>& y,
                         const MaskStack& S, const Tensor& m, const Tensor& n,
                         const LossWeights& weights, const AreaBounds& bounds,
                         const Explanandum& model);

}  // namespace seqmask
