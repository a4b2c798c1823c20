#include "seqmask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include "seqmask/kernels.hpp"

namespace seqmask {

namespace {

thread_local int g_no_grad_depth = 0;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool rank1(const TensorNode& n) { return n.shape.size() == 1; }
bool rank2(const TensorNode& n) { return n.shape.size() == 2; }

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values) {
  for (auto d : shape) require(d >= 1, "tensor dimensions must be positive");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

// Wraps an op output: attaches parents and the adjoint closure only when a
// gradient path exists and recording is enabled on this thread.
Tensor finish(std::shared_ptr<TensorNode> n,
              std::vector<std::shared_ptr<TensorNode>> parents,
              std::function<void(TensorNode&)> fn) {
  if (g_no_grad_depth == 0) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->needs_grad;
    if (needs) {
      n->needs_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(n));
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_recording_enabled() { return g_no_grad_depth == 0; }

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::int64_t numel = 1;
  for (auto d : shape) numel *= d;
  Tensor t(make_node(std::move(shape),
                     std::vector<double>(static_cast<std::size_t>(numel), value)));
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  std::int64_t numel = 1;
  for (auto d : shape) numel *= d;
  require(static_cast<std::int64_t>(values.size()) == numel,
          "tensor value count does not match shape");
  Tensor t(make_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

std::int64_t Tensor::rows() const {
  require(rank2(*node_), "rows() requires a rank-2 tensor");
  return node_->shape[0];
}

std::int64_t Tensor::cols() const {
  require(rank2(*node_), "cols() requires a rank-2 tensor");
  return node_->shape[1];
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_->parents.empty())
    throw std::logic_error("mutable_values: only leaf tensors may be edited");
  return node_->values;
}

double Tensor::value() const {
  require(node_->numel() == 1, "value() requires a scalar tensor");
  return node_->values[0];
}

double Tensor::at(std::int64_t i) const {
  require(i >= 0 && i < node_->numel(), "flat index out of range");
  return node_->values[static_cast<std::size_t>(i)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  require(rank2(*node_), "at(r, c) requires a rank-2 tensor");
  require(r >= 0 && r < node_->shape[0] && c >= 0 && c < node_->shape[1],
          "index out of range");
  return node_->values[static_cast<std::size_t>(r * node_->shape[1] + c)];
}

void Tensor::set_requires_grad(bool rg) {
  if (!node_->parents.empty())
    throw std::logic_error(
        "set_requires_grad: only leaf tensors carry the flag");
  node_->requires_grad = rg;
  node_->needs_grad = rg;
}

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::backward() const {
  if (!node_) throw std::invalid_argument("backward on an undefined tensor");
  if (node_->numel() != 1)
    throw std::invalid_argument("backward requires a scalar root");
  if (!node_->needs_grad)
    throw std::invalid_argument(
        "backward: root does not depend on any gradient-tracked tensor");

  // Iterative post-order DFS over gradient-tracked parents. state: 1 = on the
  // stack, 2 = finished; revisiting a node in state 1 would mean a cycle.
  std::vector<TensorNode*> order;
  std::unordered_map<TensorNode*, int> state;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  state[node_.get()] = 1;
  while (!stack.empty()) {
    auto [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      stack.back().second = idx + 1;
      TensorNode* p = n->parents[idx].get();
      if (!p->needs_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state.emplace(p, 1);
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw std::logic_error("backward: computation graph contains a cycle");
      }
    } else {
      state[n] = 2;
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) n->grad.assign(static_cast<std::size_t>(n->numel()), 0.0);
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          void (*bwd)(double, double, double, double&, double&)) {
  require(a.shape() == b.shape(),
          std::string(name) + ": operands must share a shape");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr(), b.ptr()}, [bwd](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.values.size(); ++i) {
      double ga = 0.0, gb = 0.0;
      bwd(pa.values[i], pb.values[i], self.grad[i], ga, gb);
      if (pa.needs_grad) pa.grad[i] += ga;
      if (pb.needs_grad) pb.grad[i] += gb;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga = g * y;
        gb = g * x;
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + s;
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[i] += self.grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr()}, [s](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[i] += self.grad[i] * s;
  });
}

namespace {

// Unary op whose gradient can be written in terms of input x and output y.
Tensor unary_op(const Tensor& a, std::vector<double> out,
                double (*dfn)(double x, double y)) {
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr()}, [dfn](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[i] += self.grad[i] * dfn(p.values[i], self.values[i]);
  });
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values().size());
  kernels::sigmoid(a.values().data(), out.data(),
                   static_cast<std::int64_t>(out.size()));
  return unary_op(a, std::move(out),
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.values().size());
  kernels::tanh(a.values().data(), out.data(),
                static_cast<std::int64_t>(out.size()));
  return unary_op(a, std::move(out),
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().size());
  kernels::relu(a.values().data(), out.data(),
                static_cast<std::int64_t>(out.size()));
  return unary_op(a, std::move(out),
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log_clamped(const Tensor& a) {
  constexpr double kFloor = 1e-12;
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = std::log(std::max(av[i], kFloor));
  return unary_op(a, std::move(out), [](double x, double) {
    return x >= kFloor ? 1.0 / x : 0.0;
  });
}

Tensor rsqrt(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    require(av[i] > 0.0, "rsqrt requires strictly positive inputs");
    out[i] = 1.0 / std::sqrt(av[i]);
  }
  return unary_op(a, std::move(out),
                  [](double, double y) { return -0.5 * y * y * y; });
}

Tensor abs(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::abs(av[i]);
  // Subgradient 0 at the kink.
  return unary_op(a, std::move(out), [](double x, double) {
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  });
}

// ---------------------------------------------------------------------------
// Broadcast ops
// ---------------------------------------------------------------------------

namespace {

void check_rowvec(const Tensor& a, const Tensor& v, const char* name) {
  require(rank2(*a.ptr()), std::string(name) + ": matrix must be rank-2");
  require(rank1(*v.ptr()) && v.shape()[0] == a.cols(),
          std::string(name) + ": vector length must equal matrix columns");
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  check_rowvec(a, v, "add_rowvec");
  const std::int64_t n = a.rows(), c = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] += v.at(j);
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr(), v.ptr()}, [n, c](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pv = *self.parents[1];
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double g = self.grad[i * c + j];
        if (pa.needs_grad) pa.grad[i * c + j] += g;
        if (pv.needs_grad) pv.grad[j] += g;
      }
  });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  check_rowvec(a, v, "mul_rowvec");
  const std::int64_t n = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = a.at(i, j) * v.at(j);
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr(), v.ptr()}, [n, c](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pv = *self.parents[1];
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double g = self.grad[i * c + j];
        if (pa.needs_grad) pa.grad[i * c + j] += g * pv.values[j];
        if (pv.needs_grad) pv.grad[j] += g * pa.values[i * c + j];
      }
  });
}

Tensor mul_colvec(const Tensor& a, const Tensor& v) {
  require(rank2(*a.ptr()), "mul_colvec: matrix must be rank-2");
  require(rank1(*v.ptr()) && v.shape()[0] == a.rows(),
          "mul_colvec: vector length must equal matrix rows");
  const std::int64_t n = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = a.at(i, j) * v.at(i);
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr(), v.ptr()}, [n, c](TensorNode& self) {
    auto& pa = *self.parents[0];
    auto& pv = *self.parents[1];
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double g = self.grad[i * c + j];
        if (pa.needs_grad) pa.grad[i * c + j] += g * pv.values[i];
        if (pv.needs_grad) pv.grad[i] += g * pa.values[i * c + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(rank2(*b.ptr()), "matmul: right operand must be rank-2");
  const bool vec = rank1(*a.ptr());
  const std::int64_t n = vec ? 1 : a.rows();
  const std::int64_t k = vec ? a.shape()[0] : a.cols();
  require(b.rows() == k, "matmul: inner dimensions must match");
  const std::int64_t m = b.cols();
  std::vector<double> out(static_cast<std::size_t>(n * m));
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), n, k, m);
  auto node = make_node(vec ? Shape{m} : Shape{n, m}, std::move(out));
  return finish(std::move(node), {a.ptr(), b.ptr()},
                [n, k, m](TensorNode& self) {
                  auto& pa = *self.parents[0];
                  auto& pb = *self.parents[1];
                  if (pa.needs_grad)
                    kernels::matmul_nt(self.grad.data(), pb.values.data(),
                                       pa.grad.data(), n, m, k, true);
                  if (pb.needs_grad)
                    kernels::matmul_tn(pa.values.data(), self.grad.data(),
                                       pb.grad.data(), n, k, m, true);
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(rank2(*a.ptr()) && rank2(*b.ptr()),
          "matmul_nt: operands must be rank-2");
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions must match");
  const std::int64_t n = a.rows(), k = a.cols(), m = b.rows();
  std::vector<double> out(static_cast<std::size_t>(n * m));
  kernels::matmul_nt(a.values().data(), b.values().data(), out.data(), n, k, m);
  auto node = make_node({n, m}, std::move(out));
  return finish(std::move(node), {a.ptr(), b.ptr()},
                [n, k, m](TensorNode& self) {
                  auto& pa = *self.parents[0];
                  auto& pb = *self.parents[1];
                  if (pa.needs_grad)
                    kernels::matmul_nn(self.grad.data(), pb.values.data(),
                                       pa.grad.data(), n, m, k, true);
                  if (pb.needs_grad)
                    kernels::matmul_tn(self.grad.data(), pa.values.data(),
                                       pb.grad.data(), n, m, k, true);
                });
}

// ---------------------------------------------------------------------------
// Softmax and reductions
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  const bool vec = rank1(*a.ptr());
  const std::int64_t rows = vec ? 1 : a.rows();
  const std::int64_t cols = vec ? a.shape()[0] : a.cols();
  std::vector<double> out(a.values().size());
  kernels::softmax_rows(a.values().data(), out.data(), rows, cols);
  auto node = make_node(a.shape(), std::move(out));
  return finish(std::move(node), {a.ptr()}, [rows, cols](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::int64_t j = 0; j < cols; ++j)
        p.grad[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto node = make_node({1}, {s});
  return finish(std::move(node), {a.ptr()}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto node = make_node({1}, {s * inv});
  return finish(std::move(node), {a.ptr()}, [inv](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (auto& g : p.grad) g += self.grad[0] * inv;
  });
}

Tensor mean_pool_valid(const Tensor& a, std::int64_t valid_count) {
  require(rank2(*a.ptr()), "mean_pool_valid: input must be rank-2");
  require(valid_count >= 1 && valid_count <= a.rows(),
          "mean_pool_valid: valid_count out of range");
  const std::int64_t c = a.cols();
  const double inv = 1.0 / static_cast<double>(valid_count);
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < valid_count; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j] += a.at(i, j);
  for (auto& v : out) v *= inv;
  auto node = make_node({c}, std::move(out));
  return finish(std::move(node), {a.ptr()},
                [valid_count, c, inv](TensorNode& self) {
                  auto& p = *self.parents[0];
                  if (!p.needs_grad) return;
                  for (std::int64_t i = 0; i < valid_count; ++i)
                    for (std::int64_t j = 0; j < c; ++j)
                      p.grad[i * c + j] += self.grad[j] * inv;
                });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: needs at least one part");
  const bool vec = rank1(*parts[0].ptr());
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::int64_t total = 0;
  const std::int64_t c = vec ? 1 : parts[0].cols();
  for (const auto& p : parts) {
    if (vec)
      require(rank1(*p.ptr()), "concat_rows: mixed ranks");
    else
      require(rank2(*p.ptr()) && p.cols() == c,
              "concat_rows: parts must share a column count");
    total += p.shape()[0];
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.ptr());
  }
  auto node =
      make_node(vec ? Shape{total} : Shape{total, c}, std::move(out));
  return finish(std::move(node), std::move(parents), [](TensorNode& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      auto& p = *pp;
      const std::size_t n = p.values.size();
      if (p.needs_grad)
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += self.grad[off + i];
      off += n;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: needs at least one part");
  const std::int64_t n = parts[0].rows();
  std::int64_t total_c = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    require(rank2(*p.ptr()) && p.rows() == n,
            "concat_cols: parts must share a row count");
    widths.push_back(p.cols());
    total_c += p.cols();
    parents.push_back(p.ptr());
  }
  std::vector<double> out(static_cast<std::size_t>(n * total_c));
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t c = p.cols();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j)
        out[i * total_c + off + j] = p.at(i, j);
    off += c;
  }
  auto node = make_node({n, total_c}, std::move(out));
  return finish(std::move(node), std::move(parents),
                [n, total_c, widths](TensorNode& self) {
                  std::int64_t off = 0;
                  for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                    auto& p = *self.parents[pi];
                    const std::int64_t c = widths[pi];
                    if (p.needs_grad)
                      for (std::int64_t i = 0; i < n; ++i)
                        for (std::int64_t j = 0; j < c; ++j)
                          p.grad[i * c + j] += self.grad[i * total_c + off + j];
                    off += c;
                  }
                });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: needs at least one row");
  const std::int64_t c = rows[0].shape()[0];
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& r : rows) {
    require(rank1(*r.ptr()) && r.shape()[0] == c,
            "stack_rows: rows must be vectors with a shared length");
    out.insert(out.end(), r.values().begin(), r.values().end());
    parents.push_back(r.ptr());
  }
  auto node =
      make_node({static_cast<std::int64_t>(rows.size()), c}, std::move(out));
  return finish(std::move(node), std::move(parents), [c](TensorNode& self) {
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      auto& p = *self.parents[pi];
      if (!p.needs_grad) continue;
      for (std::int64_t j = 0; j < c; ++j)
        p.grad[j] += self.grad[pi * static_cast<std::size_t>(c) + j];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count) {
  const std::int64_t n = a.shape()[0];
  require(count >= 1 && start >= 0 && start + count <= n,
          "slice_rows: range out of bounds");
  const std::int64_t c = rank1(*a.ptr()) ? 1 : a.cols();
  const auto av = a.values();
  std::vector<double> out(av.begin() + start * c,
                          av.begin() + (start + count) * c);
  auto node = make_node(
      rank1(*a.ptr()) ? Shape{count} : Shape{count, c}, std::move(out));
  return finish(std::move(node), {a.ptr()}, [start, c](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[static_cast<std::size_t>(start * c) + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count) {
  require(rank2(*a.ptr()), "slice_cols: input must be rank-2");
  const std::int64_t n = a.rows(), c = a.cols();
  require(count >= 1 && start >= 0 && start + count <= c,
          "slice_cols: range out of bounds");
  std::vector<double> out(static_cast<std::size_t>(n * count));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < count; ++j)
      out[i * count + j] = a.at(i, start + j);
  auto node = make_node({n, count}, std::move(out));
  return finish(std::move(node), {a.ptr()},
                [n, c, start, count](TensorNode& self) {
                  auto& p = *self.parents[0];
                  if (!p.needs_grad) return;
                  for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < count; ++j)
                      p.grad[i * c + start + j] += self.grad[i * count + j];
                });
}

Tensor row(const Tensor& a, std::int64_t i) {
  require(rank2(*a.ptr()), "row: input must be rank-2");
  require(i >= 0 && i < a.rows(), "row: index out of range");
  const std::int64_t c = a.cols();
  const auto av = a.values();
  std::vector<double> out(av.begin() + i * c, av.begin() + (i + 1) * c);
  auto node = make_node({c}, std::move(out));
  return finish(std::move(node), {a.ptr()}, [i, c](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::int64_t j = 0; j < c; ++j)
      p.grad[i * c + j] += self.grad[static_cast<std::size_t>(j)];
  });
}

Tensor col(const Tensor& a, std::int64_t j) {
  require(rank2(*a.ptr()), "col: input must be rank-2");
  require(j >= 0 && j < a.cols(), "col: index out of range");
  const std::int64_t n = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.at(i, j);
  auto node = make_node({n}, std::move(out));
  return finish(std::move(node), {a.ptr()}, [n, c, j](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::int64_t i = 0; i < n; ++i)
      p.grad[i * c + j] += self.grad[static_cast<std::size_t>(i)];
  });
}

Tensor take(const Tensor& a, std::int64_t i) {
  require(i >= 0 && i < a.numel(), "take: index out of range");
  auto node = make_node({1}, {a.values()[static_cast<std::size_t>(i)]});
  return finish(std::move(node), {a.ptr()}, [i](TensorNode& self) {
    auto& p = *self.parents[0];
    if (p.needs_grad) p.grad[static_cast<std::size_t>(i)] += self.grad[0];
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids) {
  require(rank2(*table.ptr()), "gather_rows: table must be rank-2");
  require(!ids.empty(), "gather_rows: needs at least one id");
  const std::int64_t v = table.rows(), h = table.cols();
  std::vector<double> out;
  out.reserve(ids.size() * static_cast<std::size_t>(h));
  for (auto id : ids) {
    require(id >= 0 && id < v, "gather_rows: id out of range");
    const auto tv = table.values();
    out.insert(out.end(), tv.begin() + id * h, tv.begin() + (id + 1) * h);
  }
  auto node = make_node({static_cast<std::int64_t>(ids.size()), h},
                        std::move(out));
  return finish(std::move(node), {table.ptr()}, [ids, h](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::int64_t j = 0; j < h; ++j)
        p.grad[ids[r] * h + j] += self.grad[r * static_cast<std::size_t>(h) + j];
  });
}

Tensor repeat_column(const Tensor& mask, std::int64_t width) {
  require(rank1(*mask.ptr()), "repeat_column: input must be a vector");
  require(width >= 1, "repeat_column: width must be positive");
  const std::int64_t d = mask.shape()[0];
  std::vector<double> out(static_cast<std::size_t>(d * width));
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < width; ++j) out[i * width + j] = mask.at(i);
  auto node = make_node({d, width}, std::move(out));
  return finish(std::move(node), {mask.ptr()}, [d, width](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::int64_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < width; ++j) s += self.grad[i * width + j];
      p.grad[static_cast<std::size_t>(i)] += s;
    }
  });
}

// ---------------------------------------------------------------------------
// Mask primitives
// ---------------------------------------------------------------------------

Tensor elementwise_max_reduce(std::span<const Tensor> columns) {
  require(!columns.empty(), "elementwise_max_reduce: needs at least one input");
  const std::int64_t d = columns[0].shape()[0];
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& c : columns) {
    require(rank1(*c.ptr()) && c.shape()[0] == d,
            "elementwise_max_reduce: inputs must be vectors of equal length");
    parents.push_back(c.ptr());
  }
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<std::size_t> argmax(static_cast<std::size_t>(d), 0);
  for (std::int64_t i = 0; i < d; ++i) {
    double best = columns[0].at(i);
    std::size_t best_k = 0;
    for (std::size_t k = 1; k < columns.size(); ++k) {
      const double v = columns[k].at(i);
      if (v > best) {  // strict: ties keep the lowest column index
        best = v;
        best_k = k;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
    argmax[static_cast<std::size_t>(i)] = best_k;
  }
  auto node = make_node({d}, std::move(out));
  return finish(std::move(node), std::move(parents),
                [argmax](TensorNode& self) {
                  for (std::size_t i = 0; i < self.values.size(); ++i) {
                    auto& p = *self.parents[argmax[i]];
                    if (p.needs_grad) p.grad[i] += self.grad[i];
                  }
                });
}

std::pair<Tensor, std::vector<std::int64_t>> sort_descending(const Tensor& v) {
  require(rank1(*v.ptr()), "sort_descending: input must be a vector");
  const std::int64_t d = v.shape()[0];
  std::vector<std::int64_t> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  const auto vals = v.values();
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::int64_t x, std::int64_t y) {
                     return vals[static_cast<std::size_t>(x)] >
                            vals[static_cast<std::size_t>(y)];
                   });
  std::vector<double> out(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < d; ++i)
    out[static_cast<std::size_t>(i)] = vals[static_cast<std::size_t>(perm[i])];
  auto node = make_node({d}, std::move(out));
  Tensor sorted = finish(std::move(node), {v.ptr()}, [perm](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (std::size_t i = 0; i < self.values.size(); ++i)
      p.grad[static_cast<std::size_t>(perm[i])] += self.grad[i];
  });
  return {std::move(sorted), std::move(perm)};
}

}  // namespace seqmask
