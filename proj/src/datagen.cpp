// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avj/errors.hpp"

namespace avj {

void PairSpec::validate() const {
  if (n_frames < 1 || video_dim < 1 || audio_frames < 1 || audio_dim < 1) {
    throw ConfigError("pair spec: frame counts and dims must be >= 1");
  }
  if (audio_frames % n_frames != 0) throw ConfigError("pair spec: audio_frames must be a multiple of n_frames");
  if (n_events < 0 || n_events > n_frames) throw ConfigError("pair spec: n_events must lie in [0, n_frames]");
  // Events live on frames 1..F-1 (frame 0 has no predecessor to move from).
  const int capacity = n_frames <= 1 ? 0 : (n_frames - 2) / kMinEventSpacing + 1;
  if (n_events > capacity) {
    throw ConfigError("pair spec: cannot place " + std::to_string(n_events) + " events " + std::to_string(kMinEventSpacing) +
                      " frames apart in " + std::to_string(n_frames) + " frames");
  }
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ConfigError("pair spec: jitter must be >= 0");
  if (n_classes < 1 || label < 0 || label >= n_classes) throw ConfigError("pair spec: label must lie in [0, n_classes)");
}

void standardize_columns(Tensor& x) {
  const int rows = x.rows(), cols = x.cols();
  auto d = x.mutable_data();
  for (int c = 0; c < cols; ++c) {
    double mu = 0.0;
    for (int r = 0; r < rows; ++r) mu += d[static_cast<std::size_t>(r) * cols + c];
    mu /= rows;
    double var = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double v = d[static_cast<std::size_t>(r) * cols + c] - mu;
      var += v * v;
    }
    const double sd = std::sqrt(var / rows);
    for (int r = 0; r < rows; ++r) {
      float& v = d[static_cast<std::size_t>(r) * cols + c];
      v = static_cast<float>(sd < 1e-8 ? v - mu : (v - mu) / sd);
    }
  }
}

namespace {

std::vector<int> place_events(const PairSpec& spec, Rng& rng) {
  std::vector<int> candidates(static_cast<std::size_t>(std::max(0, spec.n_frames - 1)));
  std::iota(candidates.begin(), candidates.end(), 1);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (std::size_t i = candidates.size(); i > 1; --i) {
      std::swap(candidates[i - 1], candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
    std::vector<int> chosen;
    for (int c : candidates) {
      if (static_cast<int>(chosen.size()) == spec.n_events) break;
      const bool clear = std::all_of(chosen.begin(), chosen.end(), [c](int e) { return std::abs(c - e) >= kMinEventSpacing; });
      if (clear) chosen.push_back(c);
    }
    if (static_cast<int>(chosen.size()) == spec.n_events) {
      std::sort(chosen.begin(), chosen.end());
      return chosen;
    }
  }
  throw ConfigError("pair spec: event placement failed");
}

}  // namespace

Sample make_pair(const PairSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Sample s;
  s.label = spec.label;
  s.event_times = place_events(spec, rng);

  const int f = spec.n_frames, dv = spec.video_dim, ta = spec.audio_frames, da = spec.audio_dim;
  const int ratio = spec.audio_per_video();
  const double class_pos = spec.n_classes == 1 ? 0.0 : static_cast<double>(spec.label) / (spec.n_classes - 1);
  const double video_decay = 0.3 + 0.3 * class_pos;   // per video frame
  const double audio_tau = 2.0 + 6.0 * class_pos;     // audio frames
  constexpr double kPreRamp = 0.15;

  std::vector<float> video(static_cast<std::size_t>(f) * dv, 0.0f);
  std::vector<float> audio(static_cast<std::size_t>(ta) * da, 0.0f);
  for (int e : s.event_times) {
    const double amp = 0.7 + 0.3 * rng.uniform();
    const double center = rng.uniform() * dv;
    const double jitter = spec.jitter > 0.0 ? (2.0 * rng.uniform() - 1.0) * spec.jitter : 0.0;
    for (int fr = 0; fr < f; ++fr) {
      const int k = fr - e;
      double shape = 0.0;
      if (k == -1) shape = kPreRamp;
      if (k >= 0) shape = std::pow(video_decay, k);
      if (shape == 0.0) continue;
      for (int d = 0; d < dv; ++d) {
        const double dist = d - center;
        const double profile = 0.6 + 0.4 * std::exp(-dist * dist / 4.0);
        video[static_cast<std::size_t>(fr) * dv + d] += static_cast<float>(amp * shape * profile);
      }
    }
    const int onset = std::clamp(e * ratio + static_cast<int>(std::lround(jitter * ratio)), 0, ta - 1);
    for (int j = onset; j < ta; ++j) {
      const double env = amp * std::exp(-(j - onset) / audio_tau);
      for (int d = 0; d < da; ++d) {
        const double band = 0.5 + 0.5 * std::cos(3.14159265358979 * (d + 0.5) * (1.0 + spec.label) / (2.0 * da));
        audio[static_cast<std::size_t>(j) * da + d] += static_cast<float>(env * (0.2 + band));
      }
    }
  }
  s.video = Tensor::from({f, dv}, std::move(video));
  s.audio = Tensor::from({ta, da}, std::move(audio));
  standardize_columns(s.video);
  standardize_columns(s.audio);
  return s;
}

std::vector<Sample> make_samples(const PairSpec& spec_template, int n_samples) {
  spec_template.validate();
  if (n_samples < 0) throw ConfigError("n_samples must be >= 0");
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    PairSpec spec = spec_template;
    spec.seed = derive_seed(spec_template.seed, static_cast<std::uint64_t>(i));
    spec.label = i % spec_template.n_classes;
    out.push_back(make_pair(spec));
  }
  return out;
}

}  // namespace avj
