// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/diffusion.hpp"

#include <cmath>

#include "avj/errors.hpp"

namespace avj {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_step(int t, int lo, const Schedule& sched, const char* op) {
  if (t < lo || t > sched.t_max()) {
    throw ContractError(std::string(op) + ": timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(sched.t_max()) + "]");
  }
}

}  // namespace

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  require_step(t, 0, sched, "q_sample");
  const double ab = sched.alpha_bar(t);
  return add(scale(x0, static_cast<float>(std::sqrt(ab))), scale(eps, static_cast<float>(std::sqrt(1.0 - ab))));
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched) {
  require_same_shape(x_t, eps_hat, "predict_x0");
  require_step(t, 1, sched, "predict_x0");
  const double ab = sched.alpha_bar(t);
  return scale(sub(x_t, scale(eps_hat, static_cast<float>(std::sqrt(1.0 - ab)))), static_cast<float>(1.0 / std::sqrt(ab)));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev, const Schedule& sched) {
  if (!(t_prev >= 0 && t_prev < t)) {
    throw ContractError("ddim_step: requires 0 <= t_prev < t, got t=" + std::to_string(t) + " t_prev=" + std::to_string(t_prev));
  }
  const Tensor x0_hat = predict_x0(x_t, eps_hat, t, sched);
  const double ab_prev = sched.alpha_bar(t_prev);
  return add(scale(x0_hat, static_cast<float>(std::sqrt(ab_prev))), scale(eps_hat, static_cast<float>(std::sqrt(1.0 - ab_prev))));
}

double ddpm_sigma2(const Schedule& sched, int t) {
  require_step(t, 1, sched, "ddpm_sigma2");
  return (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * sched.beta(t);
}

Tensor ddpm_mean(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched) {
  require_same_shape(x_t, eps_hat, "ddpm_step");
  require_step(t, 1, sched, "ddpm_step");
  const double beta = sched.beta(t);
  const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  return scale(sub(x_t, scale(eps_hat, static_cast<float>(coef))), static_cast<float>(1.0 / std::sqrt(1.0 - beta)));
}

Tensor ddpm_step(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched, Rng& rng) {
  Tensor mu = ddpm_mean(x_t, eps_hat, t, sched);
  if (t == 1) return mu;
  const Tensor z = rng.randn(x_t.shape());
  return add(mu, scale(z, static_cast<float>(std::sqrt(ddpm_sigma2(sched, t)))));
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float w) {
  require_same_shape(eps_cond, eps_uncond, "cfg_combine");
  return add(eps_uncond, scale(sub(eps_cond, eps_uncond), w));
}

Tensor noise_loss(const Tensor& eps_hat, const Tensor& eps) {
  require_same_shape(eps_hat, eps, "noise_loss");
  return mean(square(sub(eps_hat, eps)));
}

}  // namespace avj
