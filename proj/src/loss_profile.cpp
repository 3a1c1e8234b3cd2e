// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/loss_profile.hpp"

#include <algorithm>
#include <cmath>

#include "avj/errors.hpp"

namespace avj {

std::vector<int> profile_bins(int t_global, int n_bins) {
  if (n_bins < 2) throw ConfigError("profile: n_bins must be >= 2");
  if (t_global < 1) throw ConfigError("profile: T must be >= 1");
  std::vector<int> bins;
  for (int k = 0; k < n_bins; ++k) {
    const double t = static_cast<double>(k) * t_global / (n_bins - 1);
    bins.push_back(std::max(1, static_cast<int>(std::round(t))));
  }
  return bins;
}

LossProfile profile_loss(const JointDenoiser& model, std::span<const Sample> dataset, const TimestepMap& map, int n_bins,
                         int samples_per_bin, Rng& rng) {
  map.validate();
  if (dataset.empty()) throw DataError("profile: dataset is empty");
  if (samples_per_bin < 1) throw DataError("profile: samples_per_bin must be >= 1");
  const Schedule& sv = model.video_schedule();
  const Schedule& sa = model.audio_schedule();
  if (map.T_v > sv.t_max() || map.T_a > sa.t_max()) throw ContractError("profile: timestep map exceeds the model's schedules");

  NoGradGuard no_grad;
  LossProfile prof;
  prof.bins = profile_bins(map.T, n_bins);
  for (int t : prof.bins) {
    const LocalSteps local = map_timesteps(map, t);
    const int t_v = std::max(1, local.video);
    const int t_a = std::max(1, local.audio);
    double sum_v = 0.0, sum_a = 0.0;
    for (int i = 0; i < samples_per_bin; ++i) {
      const Sample& s = dataset[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1))];
      const Tensor eps_v = rng.randn(s.video.shape());
      const Tensor eps_a = rng.randn(s.audio.shape());
      JointInput in;
      in.x_v = q_sample(s.video, t_v, eps_v, sv);
      in.x_a = q_sample(s.audio, t_a, eps_a, sa);
      in.t_v = t_v;
      in.t_a = t_a;
      in.label = s.label;
      const NoisePair pred = model.predict_noise(in);
      sum_v += noise_loss(pred.video, eps_v).item();
      sum_a += noise_loss(pred.audio, eps_a).item();
    }
    prof.loss_v.push_back(sum_v / samples_per_bin);
    prof.loss_a.push_back(sum_a / samples_per_bin);
  }
  const double v0 = prof.loss_v.front(), a0 = prof.loss_a.front();
  if (!(v0 > 0.0) || !(a0 > 0.0)) throw NumericError("profile: first-bin loss is zero; cannot normalize");
  for (double& v : prof.loss_v) v /= v0;
  for (double& a : prof.loss_a) a /= a0;
  return prof;
}

}  // namespace avj
