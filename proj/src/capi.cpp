// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avjoint.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include "avj/commands.hpp"
#include "avj/errors.hpp"
#include "avj/serialize.hpp"

struct avj_model {
  avj::JointModel model;
};

namespace {

thread_local std::string g_last_error;

avj_status fail(avj_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps exceptions from the core to status codes.
template <typename F>
avj_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return AVJ_OK;
  } catch (const avj::IncompatibleError& e) {
    return fail(AVJ_ERR_INCOMPATIBLE, e.what());
  } catch (const avj::NumericError& e) {
    return fail(AVJ_ERR_NUMERIC, e.what());
  } catch (const avj::Error& e) {
    return fail(AVJ_ERR_VALIDATION, e.what());
  } catch (const std::exception& e) {
    return fail(AVJ_ERR_INTERNAL, std::string("internal error: ") + e.what());
  } catch (...) {
    return fail(AVJ_ERR_INTERNAL, "internal error: unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* name) {
  if (p == nullptr) throw avj::ContractError(std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* avj_version(void) { return "0.1.0"; }

const char* avj_last_error(void) { return g_last_error.c_str(); }

void avj_free_string(char* s) { std::free(s); }

avj_status avj_config_check(const char* config_json, char** normalized_json) {
  return guarded([&] {
    need(config_json, "config_json");
    const avj::RunConfig c = avj::parse_config_text(config_json);
    if (normalized_json != nullptr) *normalized_json = dup_string(avj::config_to_json(c).dump(2));
  });
}

avj_status avj_run(const char* command, const char* config_json, const char* arg, int verbose, char** result_json) {
  return guarded([&] {
    need(command, "command");
    need(config_json, "config_json");
    const avj::RunConfig c = avj::parse_config_text(config_json);
    std::ostream* log = verbose ? &std::cerr : nullptr;
    const std::string cmd = command;
    nlohmann::json result;
    if (cmd == "make-data") {
      result = avj::cmd_make_data(c, log);
    } else if (cmd == "train") {
      result = avj::cmd_train(c, log);
    } else if (cmd == "generate") {
      result = avj::cmd_generate(c, log);
    } else if (cmd == "profile-loss") {
      result = avj::cmd_profile_loss(c, log);
    } else if (cmd == "eval") {
      need(arg, "samples path");
      result = avj::cmd_eval(c, arg, log);
    } else {
      throw avj::ContractError("unknown command '" + cmd + "'");
    }
    if (result_json != nullptr) *result_json = dup_string(result.dump(2));
  });
}

avj_status avj_model_load(const char* checkpoint_path, avj_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    *out = nullptr;
    const auto ck = avj::load_checkpoint(checkpoint_path);
    *out = new avj_model{avj::model_from_checkpoint(ck)};
  });
}

void avj_model_free(avj_model* model) { delete model; }

avj_status avj_model_get_info(const avj_model* model, avj_model_info* info) {
  return guarded([&] {
    need(model, "model");
    need(info, "info");
    const auto& c = model->model.config();
    *info = {c.video.frames, c.video.dim, c.audio.frames, c.audio.dim, c.n_classes,
             c.video_schedule.t_max, c.audio_schedule.t_max, model->model.parameter_count()};
  });
}

avj_status avj_model_generate(const avj_model* model, double gamma, int t_steps, int label, float w_v, float w_a,
                              uint64_t seed, float* video, size_t video_len, float* audio, size_t audio_len) {
  return guarded([&] {
    need(model, "model");
    need(video, "video");
    need(audio, "audio");
    const auto& c = model->model.config();
    if (video_len != static_cast<size_t>(c.video.frames) * c.video.dim ||
        audio_len != static_cast<size_t>(c.audio.frames) * c.audio.dim) {
      throw avj::DimensionError("output buffers do not match the model's latent sizes");
    }
    if (label < 0 || label > c.n_classes) throw avj::ContractError("label out of range");
    avj::TimestepMap map{t_steps, c.video_schedule.t_max, c.audio_schedule.t_max, gamma};
    avj::Rng rng(seed);
    const avj::Generation g = avj::joint_generate(model->model, map, label, {w_v, w_a}, rng, t_steps);
    std::memcpy(video, g.video.data().data(), video_len * sizeof(float));
    std::memcpy(audio, g.audio.data().data(), audio_len * sizeof(float));
  });
}

avj_status avj_map_timesteps(int t_global, int t_video, int t_audio, double gamma, int t, int* video_step,
                             int* audio_step) {
  return guarded([&] {
    need(video_step, "video_step");
    need(audio_step, "audio_step");
    const avj::LocalSteps s = avj::map_timesteps({t_global, t_video, t_audio, gamma}, t);
    *video_step = s.video;
    *audio_step = s.audio;
  });
}

avj_status avj_av_align(const int* audio_peaks, size_t n_audio, const int* video_peaks, size_t n_video, int window,
                        double scores[4]) {
  return guarded([&] {
    if (n_audio > 0) need(audio_peaks, "audio_peaks");
    if (n_video > 0) need(video_peaks, "video_peaks");
    need(scores, "scores");
    avj::PeakSet a{std::vector<int>(audio_peaks, audio_peaks + n_audio), avj::PeakSource::audio};
    avj::PeakSet v{std::vector<int>(video_peaks, video_peaks + n_video), avj::PeakSource::video};
    const avj::AlignReport r = avj::av_align(a, v, window);
    scores[0] = r.p;
    scores[1] = r.r;
    scores[2] = r.score_modified;
    scores[3] = r.score_official;
  });
}

}  // extern "C"
