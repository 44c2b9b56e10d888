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

// Differential-privacy baselines: randomized response on the per-user bit,
// Laplace noise on the aggregate count, and the inverse searches that find
// the budget matching a given error.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "ppcount/errors.hpp"
#include "ppcount/random.hpp"

namespace ppcount {

inline constexpr double kMinEpsilon = 1e-3;
inline constexpr double kMaxEpsilon = 50.0;
inline constexpr double kEpsilonTolerance = 1e-6;

inline void check_epsilon(double epsilon) {
  internal::require(std::isfinite(epsilon) && epsilon >= 0.0, "epsilon must be a finite value >= 0");
}

// P(Y != A) = 1 / (e^eps + 1).
inline double rr_error_prob(double epsilon) {
  check_epsilon(epsilon);
  return 1.0 / (std::exp(epsilon) + 1.0);
}

inline int randomized_response(int a, double epsilon, Rng& rng) {
  internal::require(a == 0 || a == 1, "randomized response needs a bit");
  return rng.bernoulli(rr_error_prob(epsilon)) ? 1 - a : a;
}

// Unbiased-estimator MSE of a randomized-response count over N users.
inline double ldp_count_mse(std::size_t users, double epsilon) {
  check_epsilon(epsilon);
  internal::require(epsilon > 0.0, "LDP count MSE diverges at epsilon = 0");
  const double e = std::exp(epsilon);
  return static_cast<double>(users) * e * (e + 1.0) / ((e - 1.0) * (e - 1.0));
}

// Count plus Laplace(1/eps) noise; sensitivity of a count is 1.
inline double laplace_count_release(double a, double epsilon, Rng& rng) {
  check_epsilon(epsilon);
  internal::require(epsilon > 0.0, "Laplace mechanism needs epsilon > 0");
  return a + rng.laplace(1.0 / epsilon);
}

// E|noise| of the Laplace mechanism.
inline double laplace_expected_error(double epsilon) {
  check_epsilon(epsilon);
  internal::require(epsilon > 0.0, "Laplace mechanism needs epsilon > 0");
  return 1.0 / epsilon;
}

// Bisection for the eps in [kMinEpsilon, kMaxEpsilon] with
// error(eps) = target for a strictly decreasing error function.
inline double bisect_epsilon(const std::function<double(double)>& error, double target,
                             const std::string& what) {
  internal::require(std::isfinite(target), what + " target must be finite");
  internal::require(target > 0.0, what + " target must be positive");
  double lo = kMinEpsilon;
  double hi = kMaxEpsilon;
  if (target >= error(lo)) return lo;
  if (target < error(hi)) {
    throw ValidationError(what + " target " + std::to_string(target) +
                          " is unattainable for epsilon <= " + std::to_string(kMaxEpsilon));
  }
  while (hi - lo > kEpsilonTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (error(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Budget at which the Laplace mechanism's expected absolute error equals
// `target`. The Laplace error does not depend on the number of users.
inline double epsilon_for_target_error(double target_eae, std::size_t /*users*/ = 0) {
  return bisect_epsilon(laplace_expected_error, target_eae, "Laplace EAE");
}

// Budget at which randomized response errs with probability `target`.
// Any target of at least 1/2 is met without privacy loss.
inline double epsilon_for_rr_error(double target_pe) {
  internal::require(target_pe > 0.0, "randomized response target must be positive");
  if (target_pe >= 0.5) return 0.0;
  return bisect_epsilon(rr_error_prob, target_pe, "randomized response error");
}

inline double epsilon_for_ldp_mse(double target_mse, std::size_t users) {
  internal::require(users >= 1, "LDP MSE needs at least one user");
  return bisect_epsilon([users](double e) { return ldp_count_mse(users, e); }, target_mse,
                        "LDP MSE");
}

}  // namespace ppcount
