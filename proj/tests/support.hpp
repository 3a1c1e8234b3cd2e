// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Shared test helpers: central finite-difference gradient checks and small
// tensor utilities.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "avj/nn.hpp"
#include "avj/rng.hpp"
#include "avj/tensor.hpp"

namespace avj::testing {

struct GradReport {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||numeric||, floor)
  double numeric_norm = 0.0;
  std::size_t checked = 0;
};

// Compares the recorded gradient of <w, f()> for a fixed random w against
// central differences. Only coordinates listed in `coords` (pairs of leaf
// index and element index) are probed; an empty list probes every element.
// The projection is evaluated in double from f()'s float outputs.
inline GradReport check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> leaves, Rng& rng,
                                  double eps = 1e-3,
                                  std::vector<std::pair<std::size_t, std::size_t>> coords = {}) {
  for (Tensor& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  Tensor y = f();
  Tensor w = rng.randn(y.shape());
  backward(sum(mul(y, w)));

  auto project = [&]() {
    NoGradGuard guard;
    const Tensor out = f();
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += static_cast<double>(out.data()[i]) * w.data()[i];
    return s;
  };

  if (coords.empty()) {
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      for (std::size_t e = 0; e < leaves[li].numel(); ++e) coords.emplace_back(li, e);
    }
  }
  double diff2 = 0.0, num2 = 0.0, an2 = 0.0;
  for (auto [li, e] : coords) {
    auto d = leaves[li].mutable_data();
    const float orig = d[e];
    d[e] = static_cast<float>(orig + eps);
    const double hi = project();
    d[e] = static_cast<float>(orig - eps);
    const double lo = project();
    d[e] = orig;
    // Use the step actually representable in float.
    const double step = static_cast<double>(static_cast<float>(orig + eps)) - static_cast<float>(orig - eps);
    const double numeric = (hi - lo) / step;
    const double analytic = leaves[li].has_grad() ? leaves[li].grad()[e] : 0.0;
    diff2 += (numeric - analytic) * (numeric - analytic);
    num2 += numeric * numeric;
    an2 += analytic * analytic;
  }
  GradReport r;
  r.checked = coords.size();
  r.numeric_norm = std::sqrt(num2);
  r.rel_error = std::sqrt(diff2) / std::max({std::sqrt(num2), std::sqrt(an2), 1e-6});
  return r;
}

// Random coordinate sample across leaves, at most `per_leaf` per leaf.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_coords(const std::vector<Tensor>& leaves,
                                                                      std::size_t per_leaf, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::size_t n = leaves[li].numel();
    if (n <= per_leaf) {
      for (std::size_t e = 0; e < n; ++e) out.emplace_back(li, e);
    } else {
      for (std::size_t k = 0; k < per_leaf; ++k) {
        out.emplace_back(li, static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
      }
    }
  }
  return out;
}

// Overwrites every parameter with N(0, sd^2) so zero-initialized output
// projections do not hide gradient paths.
inline void randomize(ParamSet& params, Rng& rng, double sd = 0.3) {
  for (auto& p : params.items()) {
    for (float& v : p.value.mutable_data()) v = static_cast<float>(rng.normal() * sd);
  }
}

inline std::vector<Tensor> values_of(const ParamSet& params) {
  std::vector<Tensor> out;
  for (const auto& p : params.items()) out.push_back(p.value);
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(), [](float x, float y) {
           return std::memcmp(&x, &y, sizeof(float)) == 0;
         });
}

}  // namespace avj::testing
