// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/config.hpp"

#include <cmath>
#include <set>
#include <type_traits>

#include "avj/errors.hpp"

namespace avj {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + where() + "' must be an object");
  }

  Section child(const std::string& key) {
    return Section(field(key), qualify(key));
  }

  template <typename T>
  T get(const std::string& key) {
    const json& v = field(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("field '" + qualify(key) + "' has the wrong type (got " + v.dump() + ")");
    }
  }

  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  // Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown field '" + qualify(it.key()) + "'");
    }
  }

 private:
  const json& field(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing field '" + qualify(key) + "'");
    seen_.insert(key);
    return j_.at(key);
  }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ScheduleConfig read_schedule(Section s) {
  ScheduleConfig c;
  const auto kind = s.get<std::string>("kind");
  try {
    c.kind = parse_schedule_kind(kind);
  } catch (const ConfigError& e) {
    throw ConfigError("field '" + s.qualify("kind") + "': " + e.what());
  }
  c.t_max = s.get<int>("T_max");
  c.beta_start = s.get<double>("beta_start");
  c.beta_end = s.get<double>("beta_end");
  s.finish();
  return c;
}

json schedule_json(const ScheduleConfig& c) {
  return {{"kind", to_string(c.kind)}, {"T_max", c.t_max}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError("field '" + field + "' " + rule);
}

}  // namespace

RunConfig parse_config(const json& j) {
  Section root(j, "");
  const int version = root.get<int>("version");
  if (version != kConfigVersion) {
    throw ConfigError("field 'version' is " + std::to_string(version) + ", expected " + std::to_string(kConfigVersion));
  }
  RunConfig c;
  c.seed = root.get<std::uint64_t>("seed");

  {
    Section s = root.child("data");
    c.data.n_samples = s.get<int>("n_samples");
    c.data.n_frames = s.get<int>("n_frames");
    c.data.video_dim = s.get<int>("video_dim");
    c.data.audio_frames = s.get<int>("audio_frames");
    c.data.audio_dim = s.get<int>("audio_dim");
    c.data.n_events = s.get<int>("n_events");
    c.data.jitter = s.get<double>("jitter");
    c.data.n_classes = s.get<int>("n_classes");
    s.finish();
  }
  {
    Section s = root.child("model");
    c.model.hidden_dim = s.get<int>("hidden_dim");
    c.model.n_layers = s.get<int>("n_layers");
    c.model.n_inject_sites = s.get<int>("n_inject_sites");
    const auto mode = s.get<std::string>("inject_mode");
    try {
      c.model.inject_mode = parse_inject_mode(mode);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("field 'model.inject_mode': ") + e.what());
    }
    c.model.time_features = s.get<int>("time_features");
    c.model.connector_radius = s.get<int>("connector_radius");
    c.model.self_cond_clip = s.get<double>("self_cond_clip");
    s.finish();
  }
  {
    Section s = root.child("schedules");
    c.video_schedule = read_schedule(s.child("video"));
    c.audio_schedule = read_schedule(s.child("audio"));
    s.finish();
  }
  {
    Section s = root.child("timesteps");
    c.timesteps.T = s.get<int>("T");
    c.timesteps.T_v = s.get<int>("T_v");
    c.timesteps.T_a = s.get<int>("T_a");
    c.timesteps.gamma = s.get<double>("gamma");
    s.finish();
  }
  {
    Section s = root.child("train");
    c.train.lr = s.get<double>("lr");
    c.train.batch_size = s.get<int>("batch_size");
    c.train.epochs = s.get<int>("epochs");
    c.train.save_every = s.get<int>("save_every");
    c.train.freeze_cores_after = s.get<int>("freeze_cores_after");
    c.train.self_cond_prob = s.get<double>("self_cond_prob");
    c.train.label_dropout = s.get<double>("label_dropout");
    c.train.resume = s.get<bool>("resume");
    s.finish();
  }
  {
    Section s = root.child("guidance");
    c.guidance.w_v = static_cast<float>(s.get<double>("w_v"));
    c.guidance.w_a = static_cast<float>(s.get<double>("w_a"));
    s.finish();
  }
  {
    Section s = root.child("generate");
    c.generate_samples = s.get<int>("n_samples");
    s.finish();
  }
  {
    Section s = root.child("profile");
    c.profile.T = s.get<int>("T");
    c.profile.n_bins = s.get<int>("n_bins");
    c.profile.samples_per_bin = s.get<int>("samples_per_bin");
    s.finish();
  }
  {
    Section s = root.child("metrics");
    c.metrics.window = s.get<int>("window");
    c.metrics.threshold_ratio = s.get<double>("threshold_ratio");
    s.finish();
  }
  {
    Section s = root.child("paths");
    c.paths.dataset = s.get<std::string>("dataset");
    c.paths.checkpoint = s.get<std::string>("checkpoint");
    c.paths.loss_csv = s.get<std::string>("loss_csv");
    c.paths.out_dir = s.get<std::string>("out_dir");
    c.paths.profile_csv = s.get<std::string>("profile_csv");
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

json config_to_json(const RunConfig& c) {
  return {
      {"version", kConfigVersion},
      {"seed", c.seed},
      {"data",
       {{"n_samples", c.data.n_samples},
        {"n_frames", c.data.n_frames},
        {"video_dim", c.data.video_dim},
        {"audio_frames", c.data.audio_frames},
        {"audio_dim", c.data.audio_dim},
        {"n_events", c.data.n_events},
        {"jitter", c.data.jitter},
        {"n_classes", c.data.n_classes}}},
      {"model",
       {{"hidden_dim", c.model.hidden_dim},
        {"n_layers", c.model.n_layers},
        {"n_inject_sites", c.model.n_inject_sites},
        {"inject_mode", to_string(c.model.inject_mode)},
        {"time_features", c.model.time_features},
        {"connector_radius", c.model.connector_radius},
        {"self_cond_clip", c.model.self_cond_clip}}},
      {"schedules", {{"video", schedule_json(c.video_schedule)}, {"audio", schedule_json(c.audio_schedule)}}},
      {"timesteps", {{"T", c.timesteps.T}, {"T_v", c.timesteps.T_v}, {"T_a", c.timesteps.T_a}, {"gamma", c.timesteps.gamma}}},
      {"train",
       {{"lr", c.train.lr},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"save_every", c.train.save_every},
        {"freeze_cores_after", c.train.freeze_cores_after},
        {"self_cond_prob", c.train.self_cond_prob},
        {"label_dropout", c.train.label_dropout},
        {"resume", c.train.resume}}},
      {"guidance", {{"w_v", c.guidance.w_v}, {"w_a", c.guidance.w_a}}},
      {"generate", {{"n_samples", c.generate_samples}}},
      {"profile", {{"T", c.profile.T}, {"n_bins", c.profile.n_bins}, {"samples_per_bin", c.profile.samples_per_bin}}},
      {"metrics", {{"window", c.metrics.window}, {"threshold_ratio", c.metrics.threshold_ratio}}},
      {"paths",
       {{"dataset", c.paths.dataset},
        {"checkpoint", c.paths.checkpoint},
        {"loss_csv", c.paths.loss_csv},
        {"out_dir", c.paths.out_dir},
        {"profile_csv", c.paths.profile_csv}}},
  };
}

void RunConfig::validate() const {
  require(data.n_samples >= 0, "data.n_samples", "must be >= 0");
  try {
    pair_spec().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("section 'data': ") + e.what());
  }
  require(model.hidden_dim >= 1, "model.hidden_dim", "must be >= 1");
  require(model.n_layers >= 1, "model.n_layers", "must be >= 1");
  require(model.n_inject_sites >= 1, "model.n_inject_sites", "must be >= 1");
  require(model.time_features >= 2 && model.time_features % 2 == 0, "model.time_features", "must be a positive even number");
  require(model.connector_radius >= 0, "model.connector_radius", "must be >= 0");
  require(model.self_cond_clip > 0.0, "model.self_cond_clip", "must be > 0");
  try {
    Schedule v(video_schedule);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("section 'schedules.video': ") + e.what());
  }
  try {
    Schedule a(audio_schedule);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("section 'schedules.audio': ") + e.what());
  }
  require(timesteps.T >= 1, "timesteps.T", "must be >= 1");
  require(timesteps.T_v >= 1 && timesteps.T_v <= video_schedule.t_max, "timesteps.T_v",
          "must lie in [1, schedules.video.T_max]");
  require(timesteps.T_a >= 1 && timesteps.T_a <= audio_schedule.t_max, "timesteps.T_a",
          "must lie in [1, schedules.audio.T_max]");
  require(timesteps.gamma > 0.0 && std::isfinite(timesteps.gamma), "timesteps.gamma", "must be > 0");
  require(train.lr >= 0.0, "train.lr", "must be >= 0");
  require(train.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(train.epochs >= 0, "train.epochs", "must be >= 0");
  require(train.save_every >= 1, "train.save_every", "must be >= 1");
  require(train.freeze_cores_after >= -1, "train.freeze_cores_after", "must be >= -1");
  require(train.self_cond_prob >= 0.0 && train.self_cond_prob <= 1.0, "train.self_cond_prob", "must lie in [0, 1]");
  require(train.label_dropout >= 0.0 && train.label_dropout <= 1.0, "train.label_dropout", "must lie in [0, 1]");
  require(std::isfinite(guidance.w_v), "guidance.w_v", "must be finite");
  require(std::isfinite(guidance.w_a), "guidance.w_a", "must be finite");
  require(generate_samples >= 1, "generate.n_samples", "must be >= 1");
  require(profile.T >= 1, "profile.T", "must be >= 1");
  require(profile.n_bins >= 2, "profile.n_bins", "must be >= 2");
  require(profile.samples_per_bin >= 1, "profile.samples_per_bin", "must be >= 1");
  require(metrics.window >= 0, "metrics.window", "must be >= 0");
  require(metrics.threshold_ratio > 0.0 && metrics.threshold_ratio <= 1.0, "metrics.threshold_ratio", "must lie in (0, 1]");
}

PairSpec RunConfig::pair_spec() const {
  PairSpec p;
  p.n_frames = data.n_frames;
  p.video_dim = data.video_dim;
  p.audio_frames = data.audio_frames;
  p.audio_dim = data.audio_dim;
  p.n_events = data.n_events;
  p.jitter = data.jitter;
  p.n_classes = data.n_classes;
  p.seed = data_seed();
  return p;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.video = {Modality::video, data.n_frames, data.video_dim, model.hidden_dim, model.n_layers, model.n_inject_sites};
  m.audio = {Modality::audio, data.audio_frames, data.audio_dim, model.hidden_dim, model.n_layers, model.n_inject_sites};
  m.video_schedule = video_schedule;
  m.audio_schedule = audio_schedule;
  m.inject_mode = model.inject_mode;
  m.n_classes = data.n_classes;
  m.time_features = model.time_features;
  m.connector_radius = model.connector_radius;
  m.self_cond_clip = static_cast<float>(model.self_cond_clip);
  m.init_seed = init_seed();
  return m;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.lr = train.lr;
  t.batch_size = train.batch_size;
  t.epochs = train.epochs;
  t.seed = train_seed();
  t.freeze_cores_after = train.freeze_cores_after;
  t.loss.self_cond_prob = train.self_cond_prob;
  t.loss.label_dropout = train.label_dropout;
  return t;
}

std::uint64_t RunConfig::data_seed() const { return derive_seed(seed, 1); }
std::uint64_t RunConfig::init_seed() const { return derive_seed(seed, 2); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, 3); }
std::uint64_t RunConfig::generate_seed() const { return derive_seed(seed, 4); }
std::uint64_t RunConfig::profile_seed() const { return derive_seed(seed, 5); }

}  // namespace avj
