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

#include <algorithm>
#include <cmath>

#include "ppcount/errors.hpp"

namespace ppcount {

// Binary entropy in bits, 0 log 0 := 0.
inline double binary_entropy(double p) {
  internal::require(p >= -1e-12 && p <= 1.0 + 1e-12, "binary_entropy needs p in [0,1]");
  p = std::clamp(p, 0.0, 1.0);
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Lower branch of the inverse: the unique p in [0, 1/2] with h(p) = t.
// Inputs within 1e-9 of [0, 1] are clamped; anything further out is rejected.
inline double inverse_binary_entropy(double t) {
  constexpr double kClamp = 1e-9;
  internal::require(t >= -kClamp && t <= 1.0 + kClamp,
                    "inverse_binary_entropy needs t in [0,1]");
  t = std::clamp(t, 0.0, 1.0);
  if (t == 0.0) return 0.0;
  if (t == 1.0) return 0.5;
  double lo = 0.0;
  double hi = 0.5;
  // h is increasing on [0, 1/2]; 200 halvings exhaust double precision.
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (binary_entropy(mid) < t) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace ppcount
