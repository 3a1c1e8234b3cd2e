// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "avj/errors.hpp"

namespace avj {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "scaled_linear") return ScheduleKind::scaled_linear;
  throw ConfigError("unknown schedule kind '" + name + "' (expected linear or scaled_linear)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "scaled_linear";
}

Schedule::Schedule(const ScheduleConfig& config) : config_(config) {
  if (config.t_max < 1) throw ConfigError("schedule T_max must be >= 1");
  if (!(config.beta_start > 0.0 && config.beta_start <= config.beta_end && config.beta_end < 1.0)) {
    throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  const int n = config.t_max;
  betas_.resize(static_cast<std::size_t>(n));
  alpha_bars_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    if (config.kind == ScheduleKind::linear) {
      betas_[i] = config.beta_start + (config.beta_end - config.beta_start) * frac;
    } else {
      const double r = std::sqrt(config.beta_start) + (std::sqrt(config.beta_end) - std::sqrt(config.beta_start)) * frac;
      betas_[i] = r * r;
    }
  }
  double prod = 1.0;
  for (int i = 0; i < n; ++i) {
    prod *= 1.0 - betas_[i];
    alpha_bars_[i] = prod;
  }
  if (!terminal_is_near_gaussian()) {
    std::clog << "warning: schedule alpha_bar(T_max) = " << alpha_bars_.back()
              << " >= 0.05; terminal marginal is far from Gaussian\n";
  }
}

double Schedule::beta(int t) const {
  if (t < 1 || t > t_max()) throw ContractError("beta: timestep " + std::to_string(t) + " outside [1, " + std::to_string(t_max()) + "]");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double Schedule::alpha_bar(int t) const {
  if (t < 0 || t > t_max()) throw ContractError("alpha_bar: timestep " + std::to_string(t) + " outside [0, " + std::to_string(t_max()) + "]");
  return t == 0 ? 1.0 : alpha_bars_[static_cast<std::size_t>(t - 1)];
}

Schedule build_schedule(ScheduleKind kind, int t_max, double beta_start, double beta_end) {
  return Schedule(ScheduleConfig{kind, t_max, beta_start, beta_end});
}

void TimestepMap::validate() const {
  if (T < 1 || T_v < 1 || T_a < 1) throw ConfigError("timestep map requires T, T_v, T_a >= 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("timestep map requires gamma > 0");
}

std::pair<double, double> map_timesteps_unrounded(const TimestepMap& map, int t) {
  map.validate();
  if (t < 0 || t > map.T) throw ContractError("map_timesteps: t=" + std::to_string(t) + " outside [0, " + std::to_string(map.T) + "]");
  const double u = static_cast<double>(t) / map.T;
  const double root = std::sqrt(map.gamma);
  return {map.T_v * std::pow(u, root), map.T_a * std::pow(u, 1.0 / root)};
}

LocalSteps map_timesteps(const TimestepMap& map, int t) {
  const auto [mv, ma] = map_timesteps_unrounded(map, t);
  const auto clamp_round = [](double v, int hi) { return std::clamp(static_cast<int>(std::round(v)), 0, hi); };
  return {clamp_round(mv, map.T_v), clamp_round(ma, map.T_a)};
}

double LossProfile::curve_distance() const {
  if (loss_v.empty() || loss_v.size() != loss_a.size()) throw DataError("loss profile curves are empty or unequal");
  double acc = 0.0;
  for (std::size_t i = 0; i < loss_v.size(); ++i) acc += std::abs(loss_v[i] - loss_a[i]);
  return acc / static_cast<double>(loss_v.size());
}

std::string LossProfile::to_csv() const {
  std::ostringstream os;
  os << "t,loss_v,loss_a\n" << std::setprecision(9);
  for (std::size_t i = 0; i < bins.size(); ++i) os << bins[i] << ',' << loss_v[i] << ',' << loss_a[i] << '\n';
  return os.str();
}

}  // namespace avj
