#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace seqmask {

using Shape = std::vector<std::int64_t>;

// One value in the computation graph. Ops allocate a fresh node for their
// output and, when gradients are being recorded, stash the parent handles
// plus a closure that pushes the adjoint back into them. The graph is
// confined to the thread that built it; leaf parameter nodes may be shared
// read-only across threads once frozen.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized during backward of a graph containing it
  bool requires_grad = false;  // leaf flag, set by the owner
  bool needs_grad = false;     // requires_grad, or depends on such a leaf
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

// Suppresses graph recording on the current thread while alive. Used for
// inference and evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_recording_enabled();

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  std::int64_t rows() const;
  std::int64_t cols() const;

  std::span<const double> values() const { return node_->values; }
  // Leaf tensors only; mutating an op output would desynchronize the graph.
  std::vector<double>& mutable_values();
  double value() const;                       // scalar tensors
  double at(std::int64_t i) const;            // flat index
  double at(std::int64_t r, std::int64_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  std::vector<double>& mutable_grad() { return node_->grad; }

  // Reverse-mode sweep from a scalar root: zero-initializes the gradients of
  // every node in the recorded subgraph, seeds the root with 1, then replays
  // the adjoints in reverse topological order.
  void backward() const;

  const std::shared_ptr<TensorNode>& ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log_clamped(const Tensor& a);  // ln(max(x, 1e-12))
Tensor rsqrt(const Tensor& a);        // 1/sqrt(x)
Tensor abs(const Tensor& a);

// ---- broadcast Hadamard / bias ----
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // a: n x c, v: {c}
Tensor mul_rowvec(const Tensor& a, const Tensor& v);  // a: n x c, v: {c}
Tensor mul_colvec(const Tensor& a, const Tensor& v);  // a: n x c, v: {n}

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // n x k @ k x m; {k} @ k x m -> {m}
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // n x k @ (m x k)^T

// ---- softmax / reductions ----
Tensor softmax_rows(const Tensor& a);  // rank-2 per row; rank-1 as one row
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Mean over the first valid_count rows of a d x c matrix.
Tensor mean_pool_valid(const Tensor& a, std::int64_t valid_count);

// ---- structure ----
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor stack_rows(std::span<const Tensor> rows);  // list of {c} -> n x c
Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor row(const Tensor& a, std::int64_t i);   // {cols}
Tensor col(const Tensor& a, std::int64_t j);   // {rows}
Tensor take(const Tensor& a, std::int64_t i);  // flat index -> scalar
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids);
Tensor repeat_column(const Tensor& mask, std::int64_t width);  // {d} -> d x width

// ---- mask-specific primitives ----
// out[i] = max over columns; gradient routed to the lowest-index argmax.
Tensor elementwise_max_reduce(std::span<const Tensor> columns);
// Stable descending sort of a vector; gradient scatters through the
// returned permutation (sorted[i] == v[perm[i]]).
std::pair<Tensor, std::vector<std::int64_t>> sort_descending(const Tensor& v);

}  // namespace seqmask
