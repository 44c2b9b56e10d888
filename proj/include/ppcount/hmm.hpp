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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ppcount/errors.hpp"
#include "ppcount/random.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {

// Copy-with-switching generator over a reference panel.
//
// Each output row starts on a uniformly chosen reference row. At every later
// locus the current row is kept with probability `switch_keep_prob` and
// otherwise replaced by a uniformly chosen different row; the switch
// persists for the following loci. The symbol at the locus is copied from
// the current row and then, with probability `substitution_prob`, replaced
// by a uniform draw from the alphabet.
struct HmmGeneratorConfig {
  Dataset reference;
  double switch_keep_prob = 0.5;
  double substitution_prob = 0.01;
  std::uint64_t seed = 0;
  int alphabet_size = 4;

  void validate() const {
    internal::require(!reference.empty(), "reference dataset is empty");
    const std::size_t width = reference.front().size();
    internal::require(width >= 1, "reference rows must be non-empty");
    for (const auto& row : reference) {
      internal::require(row.size() == width, "reference rows differ in length");
      for (Symbol s : row.values) internal::require(s < alphabet_size, "reference symbol outside alphabet");
    }
    internal::require(switch_keep_prob >= 0.0 && switch_keep_prob <= 1.0, "pi must be in [0,1]");
    internal::require(substitution_prob >= 0.0 && substitution_prob <= 1.0, "theta must be in [0,1]");
    internal::require(reference.size() >= 2 || switch_keep_prob >= 1.0,
                      "a single-row reference has no switch target; use pi = 1");
  }
};

inline Dataset hmm_generate(const HmmGeneratorConfig& config, std::size_t count) {
  config.validate();
  internal::require(count >= 1, "must generate at least one sequence");
  Rng rng(config.seed);
  const std::size_t rows = config.reference.size();
  const std::size_t width = config.reference.front().size();
  const auto c = static_cast<std::size_t>(config.alphabet_size);

  Dataset out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Sequence seq;
    seq.values.resize(width);
    std::size_t row = rng.uniform_index(rows);
    for (std::size_t j = 0; j < width; ++j) {
      if (j > 0 && !rng.bernoulli(config.switch_keep_prob)) {
        // uniform over the other rows
        std::size_t other = rng.uniform_index(rows - 1);
        row = other >= row ? other + 1 : other;
      }
      Symbol s = config.reference[row].values[j];
      if (rng.bernoulli(config.substitution_prob)) s = static_cast<Symbol>(rng.uniform_index(c));
      seq.values[j] = s;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// Rows of i.i.d. uniform symbols, used as a synthetic reference panel.
inline Dataset uniform_dataset(std::size_t rows, int length, int alphabet_size, Rng& rng) {
  internal::require(rows >= 1 && length >= 1, "uniform dataset needs positive dimensions");
  Dataset out(rows);
  for (auto& seq : out) {
    seq.values.resize(static_cast<std::size_t>(length));
    for (auto& v : seq.values) v = static_cast<Symbol>(rng.uniform_index(static_cast<std::size_t>(alphabet_size)));
  }
  return out;
}

}  // namespace ppcount
