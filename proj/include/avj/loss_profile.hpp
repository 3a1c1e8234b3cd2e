// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "avj/jointmodel.hpp"
#include "avj/rng.hpp"
#include "avj/schedule.hpp"

namespace avj {

// Global timesteps of an n_bins profile: evenly spaced over [0, T] including
// both ends, with the t = 0 bin moved to t = 1.
std::vector<int> profile_bins(int t_global, int n_bins);

// Per-modality noise-prediction MSE at the local steps each bin maps to,
// averaged over samples_per_bin random (sample, noise) draws and divided by
// the first bin's value. The model sees the true label and no self-conditioning.
LossProfile profile_loss(const JointDenoiser& model, std::span<const Sample> dataset, const TimestepMap& map, int n_bins,
                         int samples_per_bin, Rng& rng);

}  // namespace avj
