// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "avj/tensor.hpp"

namespace avj {

// Seeded stream. The engine is std::mt19937_64, whose output sequence is fixed
// by the standard; the uniform, integer and Gaussian transforms are written out
// here so results do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();

  Tensor randn(Shape shape);
  void fill_normal(std::span<float> out);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Decorrelated child seed for stream `index` of `seed` (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace avj
