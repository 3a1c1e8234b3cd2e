// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "avj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "avj/errors.hpp"

namespace avj {

std::vector<int> pick_peaks(std::span<const double> s, double threshold) {
  std::vector<int> out;
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s[i] > threshold)) continue;
    if (i > 0 && !(s[i] > s[i - 1])) continue;
    if (i + 1 < n && !(s[i] >= s[i + 1])) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<double> onset_strength(const Tensor& x_a) {
  if (x_a.ndim() != 2) throw DimensionError("onset_strength: expected [frames, channels], got " + shape_str(x_a.shape()));
  const int n = x_a.rows(), c = x_a.cols();
  std::vector<double> flux(static_cast<std::size_t>(n), 0.0);
  for (int j = 1; j < n; ++j) {
    double s = 0.0;
    for (int d = 0; d < c; ++d) s += std::max(0.0, static_cast<double>(x_a.at(j, d)) - x_a.at(j - 1, d));
    flux[j] = s;
  }
  return flux;
}

std::vector<double> motion_energy(const Tensor& x_v) {
  if (x_v.ndim() != 2) throw DimensionError("motion_energy: expected [frames, channels], got " + shape_str(x_v.shape()));
  const int n = x_v.rows(), c = x_v.cols();
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  for (int f = 1; f < n; ++f) {
    double s = 0.0;
    for (int d = 0; d < c; ++d) {
      const double diff = static_cast<double>(x_v.at(f, d)) - x_v.at(f - 1, d);
      s += diff * diff;
    }
    e[f] = std::sqrt(s);
  }
  return e;
}

namespace {

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

}  // namespace

PeakSet detect_onsets(const Tensor& x_a, int audio_per_video, double threshold) {
  if (audio_per_video < 1) throw ContractError("detect_onsets: audio frames per video frame must be >= 1");
  const auto flux = onset_strength(x_a);
  PeakSet out{{}, PeakSource::audio};
  for (int j : pick_peaks(flux, threshold)) {
    const int frame = j / audio_per_video;
    if (out.times.empty() || out.times.back() != frame) out.times.push_back(frame);
  }
  return out;
}

PeakSet detect_onsets_relative(const Tensor& x_a, int audio_per_video, double ratio) {
  return detect_onsets(x_a, audio_per_video, ratio * max_of(onset_strength(x_a)));
}

PeakSet detect_motion_peaks(const Tensor& x_v, double threshold) {
  const auto energy = motion_energy(x_v);
  return PeakSet{pick_peaks(energy, threshold), PeakSource::video};
}

PeakSet detect_motion_peaks_relative(const Tensor& x_v, double ratio) {
  return detect_motion_peaks(x_v, ratio * max_of(motion_energy(x_v)));
}

namespace {

bool has_match(int t, const std::vector<int>& others, int window) {
  return std::any_of(others.begin(), others.end(), [&](int o) { return std::abs(t - o) <= window; });
}

int count_matched(const std::vector<int>& from, const std::vector<int>& to, int window) {
  return static_cast<int>(std::count_if(from.begin(), from.end(), [&](int t) { return has_match(t, to, window); }));
}

void check_window(int window) {
  if (window < 0) throw ContractError("av_align: window must be >= 0");
}

}  // namespace

double av_align_official(const PeakSet& a, const PeakSet& v, int window) {
  check_window(window);
  const int c = count_matched(a.times, v.times, window);
  const int denom = static_cast<int>(a.times.size() + v.times.size()) - c;
  return denom == 0 ? 0.0 : static_cast<double>(c) / denom;
}

AlignReport av_align_modified(const PeakSet& a, const PeakSet& v, int window) {
  check_window(window);
  AlignReport rep;
  const long na = static_cast<long>(a.times.size()), nv = static_cast<long>(v.times.size());
  if (na == 0 || nv == 0) return rep;
  const long ca = count_matched(a.times, v.times, window);
  const long cv = count_matched(v.times, a.times, window);
  rep.p = static_cast<double>(ca) / na;
  rep.r = static_cast<double>(cv) / nv;
  // pr / (p + r - pr) with p = ca/na, r = cv/nv, cleared of denominators so
  // the score is one correctly rounded division.
  const long num = ca * cv;
  const long den = ca * nv + cv * na - ca * cv;
  rep.score_modified = den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  return rep;
}

AlignReport av_align(const PeakSet& a, const PeakSet& v, int window) {
  AlignReport rep = av_align_modified(a, v, window);
  rep.score_official = av_align_official(a, v, window);
  return rep;
}

double moment_distance(std::span<const Tensor> samples_a, std::span<const Tensor> samples_b) {
  if (samples_a.empty() || samples_b.empty()) throw DataError("moment_distance: empty sample set");
  const std::size_t n = samples_a.front().numel();
  const Shape& shape = samples_a.front().shape();
  for (auto set : {samples_a, samples_b}) {
    for (const Tensor& t : set) {
      if (t.shape() != shape) throw DimensionError("moment_distance: samples must share shape " + shape_str(shape));
    }
  }
  auto moments = [n](std::span<const Tensor> set) {
    std::vector<double> mu(n, 0.0), var(n, 0.0);
    for (const Tensor& t : set) {
      const auto d = t.data();
      for (std::size_t i = 0; i < n; ++i) mu[i] += d[i];
    }
    for (double& m : mu) m /= static_cast<double>(set.size());
    for (const Tensor& t : set) {
      const auto d = t.data();
      for (std::size_t i = 0; i < n; ++i) var[i] += (d[i] - mu[i]) * (d[i] - mu[i]);
    }
    for (double& v : var) v /= static_cast<double>(set.size());
    return std::make_pair(mu, var);
  };
  const auto [mu_a, var_a] = moments(samples_a);
  const auto [mu_b, var_b] = moments(samples_b);
  double dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dm = mu_a[i] - mu_b[i];
    const double ds = std::sqrt(var_a[i]) - std::sqrt(var_b[i]);
    dist += dm * dm + ds * ds;
  }
  return dist;
}

}  // namespace avj
