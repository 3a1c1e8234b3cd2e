/* Copyright 2026 The avjoint Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the avjoint library. Every fallible call returns an
 * avj_status; on failure avj_last_error() describes the problem (the string
 * is owned by the library and valid until the next call on the same thread).
 * Strings returned through char** outputs must be released with
 * avj_free_string.
 */
#ifndef AVJOINT_H_
#define AVJOINT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AVJ_API __declspec(dllexport)
#else
#define AVJ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum avj_status {
  AVJ_OK = 0,
  AVJ_ERR_INTERNAL = 1,
  AVJ_ERR_VALIDATION = 2,   /* bad config, bad argument, missing input file */
  AVJ_ERR_INCOMPATIBLE = 3, /* artifact version or shape mismatch */
  AVJ_ERR_NUMERIC = 4       /* non-finite loss or parameters */
} avj_status;

AVJ_API const char* avj_version(void);
AVJ_API const char* avj_last_error(void);
AVJ_API void avj_free_string(char* s);

/* Validates a run config (JSON text). On success *normalized_json, if not
 * NULL, receives the config re-serialized with every field. */
AVJ_API avj_status avj_config_check(const char* config_json, char** normalized_json);

/* Runs one command: "make-data", "train", "generate", "profile-loss" or
 * "eval". `arg` is the samples path for "eval" and ignored otherwise. The
 * JSON summary goes to *result_json. Progress lines are written to stderr
 * when `verbose` is nonzero. */
AVJ_API avj_status avj_run(const char* command, const char* config_json, const char* arg, int verbose,
                           char** result_json);

/* ---- models ---------------------------------------------------------- */

typedef struct avj_model avj_model;

typedef struct avj_model_info {
  int video_frames;
  int video_dim;
  int audio_frames;
  int audio_dim;
  int n_classes;
  int video_t_max;
  int audio_t_max;
  size_t parameter_count;
} avj_model_info;

AVJ_API avj_status avj_model_load(const char* checkpoint_path, avj_model** out);
AVJ_API void avj_model_free(avj_model* model);
AVJ_API avj_status avj_model_get_info(const avj_model* model, avj_model_info* info);

/* Generates one pair into caller buffers of exactly video_frames*video_dim
 * and audio_frames*audio_dim floats (row-major). */
AVJ_API avj_status avj_model_generate(const avj_model* model, double gamma, int t_steps, int label, float w_v, float w_a,
                                      uint64_t seed, float* video, size_t video_len, float* audio, size_t audio_len);

/* ---- utilities ------------------------------------------------------- */

AVJ_API avj_status avj_map_timesteps(int t_global, int t_video, int t_audio, double gamma, int t, int* video_step,
                                     int* audio_step);

/* scores[0..3] = {p, r, score_modified, score_official}. */
AVJ_API avj_status avj_av_align(const int* audio_peaks, size_t n_audio, const int* video_peaks, size_t n_video,
                                int window, double scores[4]);

#ifdef __cplusplus
}
#endif

#endif /* AVJOINT_H_ */
