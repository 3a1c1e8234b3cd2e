// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration shared by every command. JSON, strict: each field listed
// below must be present, unknown keys are rejected, and errors name the
// offending field by its dotted path (e.g. "train.lr").

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "avj/datagen.hpp"
#include "avj/jointmodel.hpp"
#include "avj/schedule.hpp"

namespace avj {

inline constexpr int kConfigVersion = 1;

struct DataSection {
  int n_samples = 512;
  int n_frames = 16;
  int video_dim = 8;
  int audio_frames = 64;
  int audio_dim = 8;
  int n_events = 3;
  double jitter = 0.0;
  int n_classes = 4;
};

struct ModelSection {
  int hidden_dim = 32;
  int n_layers = 2;
  int n_inject_sites = 4;
  InjectMode inject_mode = InjectMode::cmc_pe;
  int time_features = 16;
  int connector_radius = 1;
  double self_cond_clip = 5.0;
};

struct TrainSection {
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 50;
  int save_every = 10;
  int freeze_cores_after = -1;
  double self_cond_prob = 0.5;
  double label_dropout = 0.1;
  bool resume = false;
};

struct ProfileSection {
  // Global step count of the profile's x-axis. The default puts the first
  // bin at local step ~1 for every gamma, so normalization is comparable.
  int T = 1000;
  int n_bins = 11;
  int samples_per_bin = 64;
};

struct MetricsSection {
  int window = 1;
  double threshold_ratio = 0.5;
};

struct PathsSection {
  std::string dataset = "data/train.avjd";
  std::string checkpoint = "runs/model.avjc";
  std::string loss_csv = "runs/loss.csv";
  std::string out_dir = "runs/samples";
  std::string profile_csv = "runs/profile.csv";
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataSection data;
  ModelSection model;
  ScheduleConfig video_schedule{ScheduleKind::scaled_linear, 1000, 8.5e-4, 1.2e-2};
  ScheduleConfig audio_schedule{ScheduleKind::linear, 1000, 1.5e-3, 1.95e-2};
  TimestepMap timesteps;
  TrainSection train;
  Guidance guidance;
  int generate_samples = 64;
  ProfileSection profile;
  MetricsSection metrics;
  PathsSection paths;

  // Cross-field checks; throws ConfigError naming the field.
  void validate() const;

  PairSpec pair_spec() const;
  ModelConfig model_config() const;
  TrainOptions train_options() const;

  // Independent streams per purpose, all derived from `seed`.
  std::uint64_t data_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t generate_seed() const;
  std::uint64_t profile_seed() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace avj
