// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/nn.hpp"

#include <cmath>

#include "avj/errors.hpp"

namespace avj {

Tensor ParamSet::add(std::string name, Tensor value, bool core) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  items_.push_back({std::move(name), std::move(value), core});
  return items_.back().value;
}

Tensor* ParamSet::find(const std::string& name) {
  for (auto& p : items_) {
    if (p.name == name) return &p.value;
  }
  return nullptr;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : items_) p.value.zero_grad();
}

Linear make_linear(ParamSet& params, const std::string& name, int in, int out, Rng& rng, bool core, Init init,
                   float gain) {
  Tensor w = Tensor::zeros({in, out});
  if (init == Init::scaled) {
    const double sd = gain / std::sqrt(static_cast<double>(in));
    for (float& v : w.mutable_data()) v = static_cast<float>(rng.normal() * sd);
  }
  if (init == Init::identity) {
    if (in != out) throw ContractError("make_linear: identity init needs in == out for '" + name + "'");
    for (int i = 0; i < in; ++i) w.mutable_data()[static_cast<std::size_t>(i) * out + i] = 1.0f;
  }
  Linear lin;
  lin.weight = params.add(name + ".weight", w, core);
  lin.bias = params.add(name + ".bias", Tensor::zeros({1, out}), core);
  return lin;
}

Norm make_norm(ParamSet& params, const std::string& name, int width, bool core) {
  Norm n;
  n.gain = params.add(name + ".gain", Tensor::full({1, width}, 1.0f), core);
  n.bias = params.add(name + ".bias", Tensor::zeros({1, width}), core);
  return n;
}

Tensor Attention::operator()(const Tensor& queries, const Tensor& keys_values) const {
  const Tensor q = query(queries);
  const Tensor k = key(keys_values);
  const Tensor v = value(keys_values);
  const Tensor scores = scale(matmul_nt(q, k), 1.0f / std::sqrt(static_cast<float>(width)));
  return out(matmul(softmax(scores, 1), v));
}

Attention make_attention(ParamSet& params, const std::string& name, int width, int kv_width, Rng& rng, bool core,
                         Init out_init) {
  Attention a;
  a.width = width;
  a.query = make_linear(params, name + ".q", width, width, rng, core);
  a.key = make_linear(params, name + ".k", kv_width, width, rng, core);
  a.value = make_linear(params, name + ".v", kv_width, width, rng, core);
  a.out = make_linear(params, name + ".o", width, width, rng, core, out_init, 0.5f);
  return a;
}

FeedForward make_feed_forward(ParamSet& params, const std::string& name, int width, int hidden, Rng& rng, bool core,
                              Init out_init) {
  FeedForward f;
  f.up = make_linear(params, name + ".up", width, hidden, rng, core);
  f.down = make_linear(params, name + ".down", hidden, width, rng, core, out_init, 0.5f);
  return f;
}

Adam::Adam(const ParamSet& params, Options options) : options_(options) {
  for (const auto& p : params.items()) {
    m_.push_back(Tensor::zeros(p.value.shape()));
    v_.push_back(Tensor::zeros(p.value.shape()));
  }
}

void Adam::update(std::size_t index, NamedParam& p) {
  if (index >= m_.size()) throw ContractError("Adam: optimizer state does not cover parameter '" + p.name + "'");
  auto w = p.value.mutable_data();
  const auto g = p.value.grad();
  if (g.empty()) return;
  auto m = m_[index].mutable_data();
  auto v = v_[index].mutable_data();
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
    v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] = static_cast<float>(w[i] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
  }
  for (float x : w) {
    if (!std::isfinite(x)) throw NumericError("Adam: parameter '" + p.name + "' became non-finite");
  }
}

}  // namespace avj
