// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "avj/rng.hpp"

using namespace avj;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs |= x != c.normal();
  }
  CHECK(differs);
}

TEST_CASE("normal sampler moments at n = 1e6 within 3 sigma") {
  Rng rng(7);
  const int n = 1000000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(n));
  // Var of the sample variance of a standard normal is 2/n.
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_int covers its range evenly") {
  Rng rng(11);
  const int k = 10, n = 100000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto v = rng.uniform_int(3, 3 + k - 1);
    REQUIRE(v >= 3);
    REQUIRE(v <= 3 + k - 1);
    ++counts[static_cast<std::size_t>(v - 3)];
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(n) / k;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 21.67);  // chi-square, 9 dof, p = 0.01
}

TEST_CASE("uniform stays in [0, 1)") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("derived seeds are distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(5, i));
  CHECK(seen.size() == 10000);
  CHECK(derive_seed(5, 0) != derive_seed(6, 0));
}
