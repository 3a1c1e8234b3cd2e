// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Single-modality diffusion primitives. All tensor arguments are built from
// recorded ops, so gradients flow through them when inputs require it.

#pragma once

#include "avj/rng.hpp"
#include "avj/schedule.hpp"
#include "avj/tensor.hpp"

namespace avj {

enum class Modality { video, audio };

struct NoisyState {
  Tensor x;
  int t = 0;
  Modality modality = Modality::video;
};

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for 0 <= t <= T_max (t=0 returns x0).
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& sched);

// (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t); t >= 1.
Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched);

// Deterministic DDIM move from t to t_prev (0 <= t_prev < t).
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev, const Schedule& sched);

// Posterior variance (1 - abar_{t-1}) / (1 - abar_t) * beta_t.
double ddpm_sigma2(const Schedule& sched, int t);
// Ancestral step x_t -> x_{t-1}; no noise is added at t == 1.
Tensor ddpm_step(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched, Rng& rng);
// Mean of the ancestral step.
Tensor ddpm_mean(const Tensor& x_t, const Tensor& eps_hat, int t, const Schedule& sched);

// eps_uncond + w (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float w);

// Mean over all elements of (eps_hat - eps)^2.
Tensor noise_loss(const Tensor& eps_hat, const Tensor& eps);

}  // namespace avj
