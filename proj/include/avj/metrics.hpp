// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "avj/tensor.hpp"

namespace avj {

enum class PeakSource { audio, video };

// Event times on the video frame grid, strictly increasing.
struct PeakSet {
  std::vector<int> times;
  PeakSource source = PeakSource::video;
};

struct AlignReport {
  double p = 0.0;
  double r = 0.0;
  double score_modified = 0.0;
  double score_official = 0.0;
};

// Peaks of the audio onset strength (positive temporal difference summed over
// channels) above `threshold`, mapped to video frames by integer division.
PeakSet detect_onsets(const Tensor& x_a, int audio_per_video, double threshold);
// Same with threshold = ratio * max onset strength.
PeakSet detect_onsets_relative(const Tensor& x_a, int audio_per_video, double ratio = 0.5);

// Peaks of ||x_v[f] - x_v[f-1]|| (frame-difference motion proxy) above threshold.
PeakSet detect_motion_peaks(const Tensor& x_v, double threshold);
PeakSet detect_motion_peaks_relative(const Tensor& x_v, double ratio = 0.5);

// Onset strength / motion energy signals used by the detectors.
std::vector<double> onset_strength(const Tensor& x_a);
std::vector<double> motion_energy(const Tensor& x_v);
// Indices i with s[i] > threshold, s[i] > s[i-1] and s[i] >= s[i+1].
std::vector<int> pick_peaks(std::span<const double> signal, double threshold);

// c / (|A| + |V| - c), c = #{a : some v within window}. Can exceed 1 under
// one-to-many matching. Both sets empty -> 0.
double av_align_official(const PeakSet& a, const PeakSet& v, int window);

// p = matched fraction of A, r = matched fraction of V, score = pr/(p+r-pr).
// An empty side contributes p (or r) = 0, so any empty set scores 0.
AlignReport av_align_modified(const PeakSet& a, const PeakSet& v, int window);

// Both variants in one report.
AlignReport av_align(const PeakSet& a, const PeakSet& v, int window);

// Frechet distance between diagonal Gaussian fits of flattened samples:
// sum_i (mu_a - mu_b)^2 + (sd_a - sd_b)^2.
double moment_distance(std::span<const Tensor> samples_a, std::span<const Tensor> samples_b);

}  // namespace avj
