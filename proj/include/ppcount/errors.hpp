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

#include <stdexcept>
#include <string>

namespace ppcount {

// Bad input: malformed loci, dimension mismatch, invalid probabilities.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Conditioning on an event of probability zero.
class ZeroProbabilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// An exact enumeration would exceed the configured support limit. Callers
// should fall back to the sampling / empirical path.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Absolute tolerance for every sum-to-one check in the library.
inline constexpr double kSumTolerance = 1e-10;

namespace internal {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace internal
}  // namespace ppcount
