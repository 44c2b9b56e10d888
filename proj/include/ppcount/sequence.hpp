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
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppcount/errors.hpp"

namespace ppcount {

using Symbol = std::uint8_t;

// Ordered set of single-character symbols. Symbol i is encoded as index i.
class Alphabet {
 public:
  Alphabet() : Alphabet("ATGC") {}

  explicit Alphabet(std::string symbols) : symbols_(std::move(symbols)) {
    internal::require(symbols_.size() >= 2, "alphabet needs at least 2 symbols");
    internal::require(symbols_.size() <= 64, "alphabet too large");
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      internal::require(symbols_.find(symbols_[i], i + 1) == std::string::npos,
                        std::string("duplicate alphabet symbol '") + symbols_[i] + "'");
    }
  }

  static Alphabet dna() { return Alphabet("ATGC"); }

  int size() const { return static_cast<int>(symbols_.size()); }
  char symbol(Symbol s) const { return symbols_.at(s); }
  const std::string& symbols() const { return symbols_; }

  std::optional<Symbol> index_of(char c) const {
    const auto pos = symbols_.find(c);
    if (pos == std::string::npos) return std::nullopt;
    return static_cast<Symbol>(pos);
  }

  std::vector<Symbol> parse(std::string_view text) const {
    std::vector<Symbol> out;
    out.reserve(text.size());
    for (char c : text) {
      auto s = index_of(c);
      internal::require(s.has_value(), std::string("symbol '") + c + "' not in alphabet " + symbols_);
      out.push_back(*s);
    }
    return out;
  }

  std::string render(std::span<const Symbol> values) const {
    std::string out;
    out.reserve(values.size());
    for (Symbol s : values) out.push_back(symbol(s));
    return out;
  }

  bool operator==(const Alphabet&) const = default;

 private:
  std::string symbols_;
};

struct Sequence {
  std::vector<Symbol> values;

  std::size_t size() const { return values.size(); }
  Symbol operator[](std::size_t i) const { return values[i]; }
  // 1-based access matching locus numbering.
  Symbol at_locus(int locus) const { return values.at(static_cast<std::size_t>(locus - 1)); }
  bool operator==(const Sequence&) const = default;
};

inline void validate_sequence(const Sequence& seq, int alphabet_size) {
  internal::require(!seq.values.empty(), "sequence must be non-empty");
  for (Symbol s : seq.values) {
    internal::require(s < alphabet_size, "sequence value outside alphabet");
  }
}

// Strictly increasing list of 1-based positions.
class LocusSet {
 public:
  LocusSet() = default;

  explicit LocusSet(std::vector<int> indices) : indices_(std::move(indices)) {
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      internal::require(indices_[i] >= 1, "loci are 1-based");
      if (i > 0) {
        internal::require(indices_[i] > indices_[i - 1],
                          "loci must be strictly increasing without duplicates");
      }
    }
  }

  // Sorts and rejects duplicates.
  static LocusSet from_unsorted(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end());
    return LocusSet(std::move(indices));
  }

  static LocusSet range(int first, int last) {
    std::vector<int> v;
    for (int i = first; i <= last; ++i) v.push_back(i);
    return LocusSet(std::move(v));
  }

  const std::vector<int>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  int operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }
  int max() const { return indices_.empty() ? 0 : indices_.back(); }

  bool contains(int locus) const {
    return std::binary_search(indices_.begin(), indices_.end(), locus);
  }

  // Position of `locus` within this set, or -1.
  int position_of(int locus) const {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), locus);
    if (it == indices_.end() || *it != locus) return -1;
    return static_cast<int>(it - indices_.begin());
  }

  bool is_subset_of(const LocusSet& other) const {
    return std::includes(other.indices_.begin(), other.indices_.end(), indices_.begin(),
                         indices_.end());
  }

  LocusSet union_with(const LocusSet& other) const {
    std::vector<int> out;
    std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(),
                   other.indices_.end(), std::back_inserter(out));
    return LocusSet(std::move(out));
  }

  LocusSet intersect(const LocusSet& other) const {
    std::vector<int> out;
    std::set_intersection(indices_.begin(), indices_.end(), other.indices_.begin(),
                          other.indices_.end(), std::back_inserter(out));
    return LocusSet(std::move(out));
  }

  LocusSet minus(const LocusSet& other) const {
    std::vector<int> out;
    std::set_difference(indices_.begin(), indices_.end(), other.indices_.begin(),
                        other.indices_.end(), std::back_inserter(out));
    return LocusSet(std::move(out));
  }

  void validate_within(int length) const {
    internal::require(max() <= length, "locus " + std::to_string(max()) +
                                           " outside sequence length " +
                                           std::to_string(length));
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(indices_[i]);
    }
    return out;
  }

  bool operator==(const LocusSet&) const = default;

 private:
  std::vector<int> indices_;
};

// Count query: loci L and reference values v_L.
struct Query {
  LocusSet loci;
  std::vector<Symbol> reference;

  Query() = default;
  Query(LocusSet l, std::vector<Symbol> v) : loci(std::move(l)), reference(std::move(v)) {
    internal::require(loci.size() == reference.size(),
                      "query reference length must equal number of loci");
  }

  // Reference value at a locus that belongs to the query.
  Symbol reference_at(int locus) const {
    const int pos = loci.position_of(locus);
    internal::require(pos >= 0, "locus not in query");
    return reference[static_cast<std::size_t>(pos)];
  }

  // Restriction of the query to a subset of its loci.
  Query restricted_to(const LocusSet& subset) const {
    std::vector<Symbol> v;
    for (int l : subset) v.push_back(reference_at(l));
    return Query(subset, std::move(v));
  }
};

// Values of `seq` at `loci`.
inline std::vector<Symbol> project(const Sequence& seq, const LocusSet& loci) {
  std::vector<Symbol> out;
  out.reserve(loci.size());
  for (int l : loci) out.push_back(seq.at_locus(l));
  return out;
}

// ---------------------------------------------------------------------------
// Mixed-radix encoding of value tuples. The first locus is most significant.

inline std::size_t tuple_count(std::size_t width, int alphabet_size) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < width; ++i) {
    if (n > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(alphabet_size)) {
      throw CapacityError("tuple space overflows");
    }
    n *= static_cast<std::size_t>(alphabet_size);
  }
  return n;
}

inline std::size_t encode_tuple(std::span<const Symbol> values, int alphabet_size) {
  std::size_t idx = 0;
  for (Symbol s : values) idx = idx * static_cast<std::size_t>(alphabet_size) + s;
  return idx;
}

inline std::vector<Symbol> decode_tuple(std::size_t idx, std::size_t width, int alphabet_size) {
  std::vector<Symbol> out(width);
  for (std::size_t i = width; i-- > 0;) {
    out[i] = static_cast<Symbol>(idx % static_cast<std::size_t>(alphabet_size));
    idx /= static_cast<std::size_t>(alphabet_size);
  }
  return out;
}

// Index of the sub-tuple of `seq` on `loci`.
inline std::size_t encode_projection(const Sequence& seq, const LocusSet& loci, int alphabet_size) {
  std::size_t idx = 0;
  for (int l : loci) idx = idx * static_cast<std::size_t>(alphabet_size) + seq.at_locus(l);
  return idx;
}

// ---------------------------------------------------------------------------
// Plain-text dataset: one sequence per line, one alphabet symbol per column.

using Dataset = std::vector<Sequence>;

inline Dataset read_dataset(std::istream& in, const Alphabet& alphabet) {
  Dataset rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Sequence seq;
    seq.values.reserve(line.size());
    for (std::size_t col = 0; col < line.size(); ++col) {
      auto s = alphabet.index_of(line[col]);
      if (!s) {
        throw ValidationError("line " + std::to_string(line_no) + ", column " +
                              std::to_string(col + 1) + ": symbol '" + line[col] +
                              "' not in alphabet " + alphabet.symbols());
      }
      seq.values.push_back(*s);
    }
    if (rows.empty()) {
      width = seq.size();
    } else if (seq.size() != width) {
      throw ValidationError("line " + std::to_string(line_no) + ": length " +
                            std::to_string(seq.size()) + " differs from " +
                            std::to_string(width));
    }
    rows.push_back(std::move(seq));
  }
  internal::require(!rows.empty(), "dataset is empty");
  return rows;
}

inline Dataset load_dataset(const std::string& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  internal::require(static_cast<bool>(in), "cannot open dataset " + path);
  return read_dataset(in, alphabet);
}

inline void write_dataset(std::ostream& out, const Dataset& rows, const Alphabet& alphabet) {
  for (const auto& row : rows) out << alphabet.render(row.values) << '\n';
}

}  // namespace ppcount
