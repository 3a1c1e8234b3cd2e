// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "avj/rng.hpp"
#include "avj/tensor.hpp"

namespace avj {

struct NamedParam {
  std::string name;
  Tensor value;
  // Core parameters belong to a branch backbone and can be frozen; the rest
  // are connectors, inject blocks and conditioning added on top.
  bool core = false;
};

class ParamSet {
 public:
  // Returns a handle sharing storage with the stored parameter.
  Tensor add(std::string name, Tensor value, bool core);
  std::vector<NamedParam>& items() { return items_; }
  const std::vector<NamedParam>& items() const { return items_; }
  Tensor* find(const std::string& name);
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<NamedParam> items_;
};

enum class Init { scaled, zero, identity };

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [1, out]
  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
};

// Weight ~ N(0, gain^2 / in) or zeros; bias zeros.
Linear make_linear(ParamSet& params, const std::string& name, int in, int out, Rng& rng, bool core,
                   Init init = Init::scaled, float gain = 1.0f);

struct Norm {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

Norm make_norm(ParamSet& params, const std::string& name, int width, bool core);

// Single-head scaled dot-product attention over rows.
struct Attention {
  Linear query, key, value, out;
  int width = 0;
  Tensor operator()(const Tensor& queries, const Tensor& keys_values) const;
};

Attention make_attention(ParamSet& params, const std::string& name, int width, int kv_width, Rng& rng, bool core,
                         Init out_init);

struct FeedForward {
  Linear up, down;
  Tensor operator()(const Tensor& x) const { return down(silu(up(x))); }
};

FeedForward make_feed_forward(ParamSet& params, const std::string& name, int width, int hidden, Rng& rng, bool core,
                              Init out_init);

// Adam with bias correction. Moments live here keyed by parameter order.
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const ParamSet& params, Options options);

  // Applies one update to every parameter for which skip(param) is false.
  template <typename Skip>
  void step(ParamSet& params, Skip skip);
  void step(ParamSet& params) {
    step(params, [](const NamedParam&) { return false; });
  }

  long long steps() const { return steps_; }
  void set_steps(long long s) { steps_ = s; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const Options& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  void update(std::size_t index, NamedParam& p);

  Options options_;
  long long steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

template <typename Skip>
void Adam::step(ParamSet& params, Skip skip) {
  ++steps_;
  auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!skip(items[i])) update(i, items[i]);
  }
}

}  // namespace avj
