// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "avj/errors.hpp"

namespace avj {

namespace {

thread_local bool g_grad_enabled = true;

using ImplPtr = std::shared_ptr<TensorImpl>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_2d(const Tensor& t, const char* op) {
  require(t.defined() && t.ndim() == 2, std::string(op) + ": expected a 2-D tensor, got " +
                                            (t.defined() ? shape_str(t.shape()) : "undefined"));
}

void check_finite(const std::vector<float>& v, const char* op) {
  for (float x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

// Builds an op output; records a node when any input carries gradient.
Tensor make_result(const char* op, Shape shape, std::vector<float> values,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(TensorImpl&)> backward_fn) {
  check_finite(values, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    impl->requires_grad = true;
    impl->node = std::make_unique<GradNode>();
    for (const Tensor* t : inputs) impl->node->inputs.push_back(t->impl_ptr());
    impl->node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

// C = A[m,k] * B[k,n] (accumulating into C when acc).
void mm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    const float* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const float* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) row[j] += av * bp[j];
    }
    float* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = static_cast<float>(acc ? ci[j] + row[j] : row[j]);
  }
}

// C = A[m,k] * B[n,k]^T
void mm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const float* bj = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(ai[p]) * bj[p];
      float& dst = c[static_cast<std::size_t>(i) * n + j];
      dst = static_cast<float>(acc ? dst + s : s);
    }
  }
}

// C = A[r,m]^T * B[r,n]
void mm_tn(const float* a, const float* b, float* c, int r, int m, int n, bool acc) {
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int p = 0; p < m; ++p) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int i = 0; i < r; ++i) {
      const double av = a[static_cast<std::size_t>(i) * m + p];
      const float* bi = b + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) row[j] += av * bi[j];
    }
    float* cp = c + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) cp[j] = static_cast<float>(acc ? cp[j] + row[j] : row[j]);
  }
}

bool wants_grad(const ImplPtr& p) { return p->requires_grad; }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<float>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  for (int d : shape) require(d >= 1, "tensor dimensions must be positive: " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  check_finite(impl->data, "full");
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  for (int d : shape) require(d >= 1, "tensor dimensions must be positive: " + shape_str(shape));
  require(shape_numel(shape) == values.size(),
          "value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  check_finite(values, "from");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::ndim() const { return static_cast<int>(impl_->shape.size()); }
std::size_t Tensor::numel() const { return impl_->data.size(); }

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= ndim()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::span<const float> Tensor::data() const { return impl_->data; }
std::span<float> Tensor::mutable_data() { return impl_->data; }

float Tensor::at(int r, int c) const {
  return impl_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

float Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) impl_->grad_buffer();
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }
std::span<float> Tensor::mutable_grad() { return impl_->grad_buffer(); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  seen.insert(loss.impl());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      TensorImpl* child = node->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.impl()->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && !t->grad.empty()) t->node->backward(*t);
  }
  for (TensorImpl* t : order) {
    if (t->node) {
      t->node.reset();
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [ap, bp, m, k, n](TensorImpl& o) {
    if (wants_grad(ap)) mm_nt(o.grad.data(), bp->data.data(), ap->grad_buffer().data(), m, n, k, true);
    if (wants_grad(bp)) mm_tn(ap->data.data(), o.grad.data(), bp->grad_buffer().data(), m, k, n, true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, "matmul_nt: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  mm_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("matmul_nt", {m, n}, std::move(out), {&a, &b}, [ap, bp, m, k, n](TensorImpl& o) {
    if (wants_grad(ap)) mm_nn(o.grad.data(), bp->data.data(), ap->grad_buffer().data(), m, n, k, true);
    if (wants_grad(bp)) mm_tn(o.grad.data(), ap->data.data(), bp->grad_buffer().data(), m, n, k, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<float> out(a.numel());
  const auto src = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
  ImplPtr ap = a.impl_ptr();
  return make_result("transpose", {n, m}, std::move(out), {&a}, [ap, m, n](TensorImpl& o) {
    auto& g = ap->grad_buffer();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(i) * n + j] += o.grad[static_cast<std::size_t>(j) * m + i];
  });
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("add", a.shape(), std::move(out), {&a, &b}, [ap, bp](TensorImpl& o) {
    for (const ImplPtr& p : {ap, bp}) {
      if (!wants_grad(p)) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("sub", a.shape(), std::move(out), {&a, &b}, [ap, bp](TensorImpl& o) {
    if (wants_grad(ap)) {
      auto& g = ap->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants_grad(bp)) {
      auto& g = bp->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<float> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("mul", a.shape(), std::move(out), {&a, &b}, [ap, bp](TensorImpl& o) {
    if (wants_grad(ap)) {
      auto& g = ap->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bp->data[i];
    }
    if (wants_grad(bp)) {
      auto& g = bp->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ap->data[i];
    }
  });
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  ImplPtr ap = a.impl_ptr();
  return make_result("scale", a.shape(), std::move(out), {&a}, [ap, s](TensorImpl& o) {
    auto& g = ap->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_2d(a, "add_row");
  const int m = a.rows(), n = a.cols();
  require(row.numel() == static_cast<std::size_t>(n),
          "add_row: row " + shape_str(row.shape()) + " does not broadcast over " + shape_str(a.shape()));
  std::vector<float> out(a.numel());
  const auto x = a.data(), r = row.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = x[static_cast<std::size_t>(i) * n + j] + r[j];
  ImplPtr ap = a.impl_ptr(), rp = row.impl_ptr();
  return make_result("add_row", a.shape(), std::move(out), {&a, &row}, [ap, rp, m, n](TensorImpl& o) {
    if (wants_grad(ap)) {
      auto& g = ap->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants_grad(rp)) {
      std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) acc[j] += o.grad[static_cast<std::size_t>(i) * n + j];
      auto& g = rp->grad_buffer();
      for (int j = 0; j < n; ++j) g[j] += static_cast<float>(acc[j]);
    }
  });
}

Tensor silu(const Tensor& a) {
  std::vector<float> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / (1.0f + std::exp(-x[i]));
  ImplPtr ap = a.impl_ptr();
  return make_result("silu", a.shape(), std::move(out), {&a}, [ap](TensorImpl& o) {
    auto& g = ap->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float x = ap->data[i];
      const float sg = 1.0f / (1.0f + std::exp(-x));
      g[i] += o.grad[i] * sg * (1.0f + x * (1.0f - sg));
    }
  });
}

Tensor square(const Tensor& a) {
  std::vector<float> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
  ImplPtr ap = a.impl_ptr();
  return make_result("square", a.shape(), std::move(out), {&a}, [ap](TensorImpl& o) {
    auto& g = ap->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * ap->data[i] * o.grad[i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int nd = x.ndim();
  if (axis < 0 || axis >= nd) throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(x.dim(d));
  for (int d = axis + 1; d < nd; ++d) inner *= static_cast<std::size_t>(x.dim(d));
  const std::size_t len = static_cast<std::size_t>(x.dim(axis));
  const auto in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      float mx = in[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, in[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(static_cast<double>(in[base + k * inner]) - mx);
        out[base + k * inner] = static_cast<float>(e);
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = static_cast<float>(out[base + k * inner] / total);
    }
  }
  ImplPtr xp = x.impl_ptr();
  return make_result("softmax", x.shape(), std::move(out), {&x}, [xp, outer, inner, len](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = a * len * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += static_cast<double>(o.grad[base + k * inner]) * o.data[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += static_cast<float>(o.data[idx] * (o.grad[idx] - dot));
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require_2d(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  require(gain.numel() == static_cast<std::size_t>(n) && bias.numel() == static_cast<std::size_t>(n),
          "layer_norm: affine parameters must have " + std::to_string(n) + " elements");
  const auto in = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<float> out(in.size());
  auto xhat = std::make_shared<std::vector<float>>(in.size());
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const float* row = in.data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = static_cast<float>(is);
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      (*xhat)[idx] = static_cast<float>((row[j] - mu) * is);
      out[idx] = (*xhat)[idx] * gv[j] + bv[j];
    }
  }
  ImplPtr xp = x.impl_ptr(), gp = gain.impl_ptr(), bp = bias.impl_ptr();
  return make_result("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
                     [xp, gp, bp, xhat, inv_std, m, n](TensorImpl& o) {
    if (wants_grad(gp) || wants_grad(bp)) {
      std::vector<double> dg(static_cast<std::size_t>(n), 0.0), db(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          dg[j] += static_cast<double>(o.grad[idx]) * (*xhat)[idx];
          db[j] += o.grad[idx];
        }
      if (wants_grad(gp)) {
        auto& g = gp->grad_buffer();
        for (int j = 0; j < n; ++j) g[j] += static_cast<float>(dg[j]);
      }
      if (wants_grad(bp)) {
        auto& g = bp->grad_buffer();
        for (int j = 0; j < n; ++j) g[j] += static_cast<float>(db[j]);
      }
    }
    if (wants_grad(xp)) {
      auto& g = xp->grad_buffer();
      for (int i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double d = static_cast<double>(o.grad[idx]) * gp->data[j];
          mean_d += d;
          mean_dx += d * (*xhat)[idx];
        }
        mean_d /= n;
        mean_dx /= n;
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double d = static_cast<double>(o.grad[idx]) * gp->data[j];
          g[idx] += static_cast<float>((*inv_std)[i] * (d - mean_d - (*xhat)[idx] * mean_dx));
        }
      }
    }
  });
}

Tensor interp_time(const Tensor& x, int target_len) {
  require_2d(x, "interp_time");
  require(target_len >= 1, "interp_time: target length must be >= 1");
  const int src = x.rows(), c = x.cols();
  if (src == target_len) {
    std::vector<float> out(x.data().begin(), x.data().end());
    ImplPtr xp = x.impl_ptr();
    return make_result("interp_time", x.shape(), std::move(out), {&x}, [xp](TensorImpl& o) {
      auto& g = xp->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
  }
  struct Tap {
    int lo, hi;
    float w;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(target_len));
  for (int i = 0; i < target_len; ++i) {
    if (src == 1 || target_len == 1) {
      (*taps)[i] = {0, 0, 0.0f};
      continue;
    }
    const double pos = static_cast<double>(i) * (src - 1) / (target_len - 1);
    const int lo = std::min(static_cast<int>(std::floor(pos)), src - 1);
    const int hi = std::min(lo + 1, src - 1);
    (*taps)[i] = {lo, hi, static_cast<float>(pos - lo)};
  }
  const auto in = x.data();
  std::vector<float> out(static_cast<std::size_t>(target_len) * c);
  for (int i = 0; i < target_len; ++i) {
    const Tap t = (*taps)[i];
    for (int j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i) * c + j] =
          (1.0f - t.w) * in[static_cast<std::size_t>(t.lo) * c + j] + t.w * in[static_cast<std::size_t>(t.hi) * c + j];
    }
  }
  ImplPtr xp = x.impl_ptr();
  return make_result("interp_time", {target_len, c}, std::move(out), {&x}, [xp, taps, target_len, c](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    for (int i = 0; i < target_len; ++i) {
      const Tap t = (*taps)[i];
      for (int j = 0; j < c; ++j) {
        const float go = o.grad[static_cast<std::size_t>(i) * c + j];
        g[static_cast<std::size_t>(t.lo) * c + j] += (1.0f - t.w) * go;
        g[static_cast<std::size_t>(t.hi) * c + j] += t.w * go;
      }
    }
  });
}

Tensor temporal_context(const Tensor& x, int radius) {
  require_2d(x, "temporal_context");
  require(radius >= 0, "temporal_context: radius must be >= 0");
  const int f = x.rows(), c = x.cols(), width = 2 * radius + 1;
  const auto in = x.data();
  std::vector<float> out(static_cast<std::size_t>(f) * c * width, 0.0f);
  for (int i = 0; i < f; ++i)
    for (int k = 0; k < width; ++k) {
      const int s = i + k - radius;
      if (s < 0 || s >= f) continue;
      std::copy_n(in.data() + static_cast<std::size_t>(s) * c, c,
                  out.data() + (static_cast<std::size_t>(i) * width + k) * c);
    }
  ImplPtr xp = x.impl_ptr();
  return make_result("temporal_context", {f, c * width}, std::move(out), {&x}, [xp, f, c, width, radius](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    for (int i = 0; i < f; ++i)
      for (int k = 0; k < width; ++k) {
        const int s = i + k - radius;
        if (s < 0 || s >= f) continue;
        const float* src = o.grad.data() + (static_cast<std::size_t>(i) * width + k) * c;
        float* dst = g.data() + static_cast<std::size_t>(s) * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  require(a.rows() == b.rows(), "concat_cols: row counts differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.rows(), na = a.cols(), nb = b.cols();
  std::vector<float> out(static_cast<std::size_t>(m) * (na + nb));
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + static_cast<std::size_t>(i) * na, na, out.data() + static_cast<std::size_t>(i) * (na + nb));
    std::copy_n(b.data().data() + static_cast<std::size_t>(i) * nb, nb, out.data() + static_cast<std::size_t>(i) * (na + nb) + na);
  }
  ImplPtr ap = a.impl_ptr(), bp = b.impl_ptr();
  return make_result("concat_cols", {m, na + nb}, std::move(out), {&a, &b}, [ap, bp, m, na, nb](TensorImpl& o) {
    const int n = na + nb;
    if (wants_grad(ap)) {
      auto& g = ap->grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < na; ++j) g[static_cast<std::size_t>(i) * na + j] += o.grad[static_cast<std::size_t>(i) * n + j];
    }
    if (wants_grad(bp)) {
      auto& g = bp->grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nb; ++j) g[static_cast<std::size_t>(i) * nb + j] += o.grad[static_cast<std::size_t>(i) * n + na + j];
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_2d(x, "mean_rows");
  const int m = x.rows(), n = x.cols();
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  const auto in = x.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) acc[j] += in[static_cast<std::size_t>(i) * n + j];
  std::vector<float> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j] / m);
  ImplPtr xp = x.impl_ptr();
  return make_result("mean_rows", {1, n}, std::move(out), {&x}, [xp, m, n](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    const float inv = 1.0f / static_cast<float>(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(i) * n + j] += o.grad[j] * inv;
  });
}

Tensor embedding_row(const Tensor& table, int index) {
  require_2d(table, "embedding_row");
  if (index < 0 || index >= table.rows()) {
    throw ContractError("embedding_row: index " + std::to_string(index) + " outside table of " + std::to_string(table.rows()) + " rows");
  }
  const int n = table.cols();
  std::vector<float> out(table.data().begin() + static_cast<std::ptrdiff_t>(index) * n,
                         table.data().begin() + static_cast<std::ptrdiff_t>(index + 1) * n);
  ImplPtr tp = table.impl_ptr();
  return make_result("embedding_row", {1, n}, std::move(out), {&table}, [tp, index, n](TensorImpl& o) {
    auto& g = tp->grad_buffer();
    for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(index) * n + j] += o.grad[j];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  ImplPtr xp = x.impl_ptr();
  return make_result("sum", {1}, {static_cast<float>(s)}, {&x}, [xp](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    for (float& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  ImplPtr xp = x.impl_ptr();
  return make_result("mean", {1}, {static_cast<float>(s / n)}, {&x}, [xp, n](TensorImpl& o) {
    auto& g = xp->grad_buffer();
    const float d = static_cast<float>(o.grad[0] / n);
    for (float& v : g) v += d;
  });
}

}  // namespace avj
