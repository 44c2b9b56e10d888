// Copyright 2026 The ppcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace ppcount {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hashes a master seed and a path of stream ids into an independent seed.
// Used to give every (grid point, mechanism, trial) its own substream so
// results do not depend on evaluation order or thread count.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// 64-bit seeded generator threaded explicitly through all sampling code.
// The draw helpers below are written out (rather than using <random>
// distributions) so outputs are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // Inverse-CDF draw from an (approximately) normalized pmf. Mass lost to
  // rounding falls on the last positive entry.
  std::size_t categorical(std::span<const double> pmf) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      if (pmf[i] <= 0.0) continue;
      last_positive = i;
      acc += pmf[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

  // Laplace(0, scale) by inversion.
  double laplace(double scale) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    u -= 0.5;
    const double magnitude = -scale * std::log1p(-2.0 * std::fabs(u));
    return u < 0 ? -magnitude : magnitude;
  }

  Rng substream(std::uint64_t stream) const { return Rng(derive_seed(seed_, {stream})); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ppcount
