// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace avj {

enum class ScheduleKind { linear, scaled_linear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::linear;
  int t_max = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
};

// Per-modality noise schedule. Timesteps are 1-based; alpha_bar(0) == 1 so
// the last reverse step and "clean data" are both well defined.
class Schedule {
 public:
  explicit Schedule(const ScheduleConfig& config);

  const ScheduleConfig& config() const { return config_; }
  int t_max() const { return config_.t_max; }
  double beta(int t) const;
  double alpha_bar(int t) const;
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  // alpha_bar(t_max) < 0.05; construction only warns when this fails.
  bool terminal_is_near_gaussian() const { return alpha_bars_.back() < 0.05; }

 private:
  ScheduleConfig config_;
  std::vector<double> betas_;       // betas_[t-1] == beta_t
  std::vector<double> alpha_bars_;  // alpha_bars_[t-1] == prod_{s<=t}(1 - beta_s)
};

Schedule build_schedule(ScheduleKind kind, int t_max, double beta_start, double beta_end);

// Global -> local timestep map. gamma == 1 with T == T_v == T_a is the identity.
struct TimestepMap {
  int T = 25;
  int T_v = 1000;
  int T_a = 1000;
  double gamma = 1.5;

  void validate() const;
};

struct LocalSteps {
  int video = 0;
  int audio = 0;
  friend bool operator==(const LocalSteps&, const LocalSteps&) = default;
};

// Pre-rounding values T_v (t/T)^sqrt(gamma) and T_a (t/T)^(1/sqrt(gamma)).
std::pair<double, double> map_timesteps_unrounded(const TimestepMap& map, int t);

// Rounded half away from zero and clamped to [0, T_v] x [0, T_a].
LocalSteps map_timesteps(const TimestepMap& map, int t);

// Normalized per-modality loss curves over global timesteps.
struct LossProfile {
  std::vector<int> bins;
  std::vector<double> loss_v;
  std::vector<double> loss_a;

  // Mean absolute gap between the two normalized curves.
  double curve_distance() const;
  std::string to_csv() const;
};

}  // namespace avj
