// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic paired latents with hit-like events. Video carries a short motion
// impulse at each event frame (sharp jump, label-dependent decay, per-event
// channel profile); audio carries an exponentially decaying onset envelope at
// audio frame frames_per_video_frame * event (+ jitter). Both are standardized
// per channel over time.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avj/jointmodel.hpp"

namespace avj {

struct PairSpec {
  int n_frames = 16;
  int video_dim = 8;
  int audio_frames = 64;
  int audio_dim = 8;
  int n_events = 3;
  double jitter = 0.0;  // max audio misalignment, in video frames
  int label = 0;
  int n_classes = 4;
  std::uint64_t seed = 0;

  int audio_per_video() const { return audio_frames / n_frames; }
  void validate() const;
};

// Events never sit closer than this many video frames.
inline constexpr int kMinEventSpacing = 3;

Sample make_pair(const PairSpec& spec);

// Sample i uses seed derive_seed(template.seed, i) and label i % n_classes.
std::vector<Sample> make_samples(const PairSpec& spec_template, int n_samples);

// Zero-mean, unit-variance per column; columns with std < 1e-8 are only centered.
void standardize_columns(Tensor& x);

}  // namespace avj
