// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Dense float tensors with a dynamically recorded reverse-mode gradient graph.
//
// Values are float32, reductions accumulate in double. A Tensor is a shared
// handle: copies alias the same storage. Every op that receives at least one
// input with requires_grad() records a node on its output; backward() walks
// the record in reverse topological order and releases it afterwards, so one
// record corresponds to one training step.
//
// Most ops here are 2-D and treat axis 0 as time (frames) and axis 1 as
// channels, which is all the denoisers need.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace avj {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int ndim() const;
  std::size_t numel() const;
  // 2-D helpers.
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }

  std::span<const float> data() const;
  // Mutable access is meant for leaves (parameters, inputs) outside any record.
  std::span<float> mutable_data();
  float at(int r, int c) const;
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  // Same values, no gradient history, fresh storage.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct GradNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into inputs' grads.
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::unique_ptr<GradNode> node;

  std::vector<float>& grad_buffer();
};

// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss, then releases the record. loss must hold exactly one element.
void backward(const Tensor& loss);

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);        // [m,k]x[n,k]^T
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
// a [m,n] + row [1,n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);

// Max-subtracted softmax along axis (any rank).
Tensor softmax(const Tensor& x, int axis);

// Row-wise layer norm over the last axis with affine gain/bias [1,n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// Linear interpolation along axis 0, align-corners: out[0]=x[0],
// out[F-1]=x[tau-1]. tau==1 repeats the single row.
Tensor interp_time(const Tensor& x, int target_len);

// [F,C] -> [F, C*(2r+1)]: row f holds x[f-r..f+r] with zero padding.
Tensor temporal_context(const Tensor& x, int radius);

Tensor concat_cols(const Tensor& a, const Tensor& b);
// [m,n] -> [1,n] column means.
Tensor mean_rows(const Tensor& x);
// Row lookup from an embedding table [k,n] -> [1,n].
Tensor embedding_row(const Tensor& table, int index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace avj
