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

// Sequence priors. Every model answers exact joint probabilities over
// arbitrary locus subsets; the Markov model eliminates unconstrained
// positions with a forward pass (O(N * C^2) per query) instead of
// enumerating C^N sequences.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ppcount/errors.hpp"
#include "ppcount/random.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {

// Tabular models and exact enumerations are capped at this many loci.
inline constexpr std::size_t kMaxTabularLoci = 12;

namespace internal {

// For every index of the tuple space over `full`, the index of its
// restriction to `sub` (sub must be a subset of full).
inline std::vector<std::uint32_t> projection_map(const LocusSet& full, const LocusSet& sub,
                                                 int alphabet_size) {
  require(sub.is_subset_of(full), "projection target is not a subset");
  const std::size_t n = tuple_count(full.size(), alphabet_size);
  require(n <= (std::size_t{1} << 31), "projection table too large");
  std::vector<std::size_t> weight(full.size(), 0);
  {
    std::size_t w = 1;
    for (std::size_t i = sub.size(); i-- > 0;) {
      weight[static_cast<std::size_t>(full.position_of(sub[i]))] = w;
      w *= static_cast<std::size_t>(alphabet_size);
    }
  }
  std::vector<std::uint32_t> out(n);
  std::vector<int> digits(full.size(), 0);
  std::size_t sub_index = 0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    out[idx] = static_cast<std::uint32_t>(sub_index);
    // odometer increment, last digit fastest
    for (std::size_t d = full.size(); d-- > 0;) {
      if (++digits[d] < alphabet_size) {
        sub_index += weight[d];
        break;
      }
      digits[d] = 0;
      sub_index -= weight[d] * static_cast<std::size_t>(alphabet_size - 1);
    }
  }
  return out;
}

inline void require_distribution(std::span<const double> pmf, const std::string& what) {
  double total = 0.0;
  for (double p : pmf) {
    require(p >= 0.0 && std::isfinite(p), what + " has a negative or non-finite entry");
    total += p;
  }
  require(std::fabs(total - 1.0) <= kSumTolerance, what + " does not sum to 1");
}

}  // namespace internal

// Dense pmf over the value tuples of a locus set.
class JointTable {
 public:
  JointTable(LocusSet loci, int alphabet_size, std::vector<double> pmf)
      : loci_(std::move(loci)), alphabet_size_(alphabet_size), pmf_(std::move(pmf)) {
    internal::require(pmf_.size() == tuple_count(loci_.size(), alphabet_size_),
                      "joint table size does not match locus set");
  }

  const LocusSet& loci() const { return loci_; }
  int alphabet_size() const { return alphabet_size_; }
  std::span<const double> pmf() const { return pmf_; }
  std::size_t size() const { return pmf_.size(); }
  double operator[](std::size_t idx) const { return pmf_[idx]; }

  double prob(std::span<const Symbol> values) const {
    internal::require(values.size() == loci_.size(), "value tuple dimension mismatch");
    return pmf_[encode_tuple(values, alphabet_size_)];
  }

  double total() const { return std::accumulate(pmf_.begin(), pmf_.end(), 0.0); }

  JointTable marginal(const LocusSet& sub) const {
    if (sub == loci_) return *this;
    const auto map = internal::projection_map(loci_, sub, alphabet_size_);
    std::vector<double> out(tuple_count(sub.size(), alphabet_size_), 0.0);
    for (std::size_t i = 0; i < pmf_.size(); ++i) out[map[i]] += pmf_[i];
    return JointTable(sub, alphabet_size_, std::move(out));
  }

  // Rearranges the table as a row-major matrix indexed by
  // (tuple over `rows`, tuple over `cols`); rows and cols partition loci().
  std::vector<double> as_matrix(const LocusSet& rows, const LocusSet& cols) const {
    internal::require(rows.intersect(cols).empty() && rows.union_with(cols) == loci_,
                      "row/column loci must partition the table loci");
    const auto row_map = internal::projection_map(loci_, rows, alphabet_size_);
    const auto col_map = internal::projection_map(loci_, cols, alphabet_size_);
    const std::size_t ncols = tuple_count(cols.size(), alphabet_size_);
    std::vector<double> out(pmf_.size(), 0.0);
    for (std::size_t i = 0; i < pmf_.size(); ++i) {
      out[static_cast<std::size_t>(row_map[i]) * ncols + col_map[i]] = pmf_[i];
    }
    return out;
  }

 private:
  LocusSet loci_;
  int alphabet_size_;
  std::vector<double> pmf_;
};

// Probability law over length-N strings. Implementations are immutable
// after construction and safe to share across threads.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual int length() const = 0;
  virtual int alphabet_size() const = 0;
  virtual JointTable joint_table(const LocusSet& loci) const = 0;
  virtual Sequence sample(Rng& rng) const = 0;
  virtual std::string describe() const = 0;

  virtual double joint_prob(const LocusSet& loci, std::span<const Symbol> values) const {
    check_event(loci, values);
    return joint_table(loci).prob(values);
  }

 protected:
  void check_event(const LocusSet& loci, std::span<const Symbol> values) const {
    internal::require(loci.size() == values.size(), "value tuple dimension mismatch");
    loci.validate_within(length());
    for (Symbol s : values) internal::require(s < alphabet_size(), "value outside alphabet");
  }
};

// First-order Markov chain with explicit initial pmf and transition matrix.
class MarkovChainModel final : public SequenceModel {
 public:
  MarkovChainModel(int length, std::vector<double> initial,
                   std::vector<std::vector<double>> transition)
      : length_(length), initial_(std::move(initial)), transition_(std::move(transition)) {
    internal::require(length_ >= 1, "sequence length must be at least 1");
    const int c = static_cast<int>(initial_.size());
    internal::require(c >= 2, "alphabet needs at least 2 symbols");
    internal::require_distribution(initial_, "initial distribution");
    internal::require(static_cast<int>(transition_.size()) == c,
                      "transition matrix must be C x C");
    for (const auto& row : transition_) {
      internal::require(static_cast<int>(row.size()) == c, "transition matrix must be C x C");
      internal::require_distribution(row, "transition row");
    }
  }

  // Diagonal phi, off-diagonal (1 - phi) / (C - 1).
  static MarkovChainModel with_stay_prob(int length, double stay_prob,
                                         std::vector<double> initial) {
    internal::require(stay_prob >= 0.0 && stay_prob <= 1.0, "stay probability must be in [0,1]");
    const std::size_t c = initial.size();
    internal::require(c >= 2, "alphabet needs at least 2 symbols");
    const double off = (1.0 - stay_prob) / static_cast<double>(c - 1);
    std::vector<std::vector<double>> t(c, std::vector<double>(c, off));
    for (std::size_t i = 0; i < c; ++i) t[i][i] = stay_prob;
    MarkovChainModel m(length, std::move(initial), std::move(t));
    m.stay_prob_ = stay_prob;
    return m;
  }

  static MarkovChainModel with_stay_prob(int length, double stay_prob, int alphabet_size = 4) {
    return with_stay_prob(length, stay_prob, uniform_pmf(alphabet_size));
  }

  // Every position independent with the given marginal.
  static MarkovChainModel iid(int length, std::vector<double> marginal) {
    std::vector<std::vector<double>> t(marginal.size(), marginal);
    return MarkovChainModel(length, marginal, std::move(t));
  }

  static std::vector<double> uniform_pmf(int alphabet_size) {
    return std::vector<double>(static_cast<std::size_t>(alphabet_size),
                               1.0 / static_cast<double>(alphabet_size));
  }

  int length() const override { return length_; }
  int alphabet_size() const override { return static_cast<int>(initial_.size()); }
  const std::vector<double>& initial() const { return initial_; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }
  std::optional<double> stay_prob() const { return stay_prob_; }

  std::string describe() const override {
    std::ostringstream os;
    if (stay_prob_) {
      os << "markov(phi=" << *stay_prob_ << ")";
    } else {
      os << "markov";
    }
    return os.str();
  }

  // Forward pass with indicator masks at constrained positions.
  double joint_prob(const LocusSet& loci, std::span<const Symbol> values) const override {
    check_event(loci, values);
    if (loci.empty()) return 1.0;
    const int c = alphabet_size();
    std::vector<double> alpha = initial_;
    std::vector<double> next(static_cast<std::size_t>(c));
    std::size_t k = 0;
    auto mask = [&](int pos) {
      if (k < loci.size() && loci[k] == pos) {
        for (int x = 0; x < c; ++x) {
          if (x != values[k]) alpha[static_cast<std::size_t>(x)] = 0.0;
        }
        ++k;
      }
    };
    mask(1);
    for (int pos = 2; pos <= loci.max(); ++pos) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int x = 0; x < c; ++x) {
        const double a = alpha[static_cast<std::size_t>(x)];
        if (a == 0.0) continue;
        const auto& row = transition_[static_cast<std::size_t>(x)];
        for (int y = 0; y < c; ++y) next[static_cast<std::size_t>(y)] += a * row[static_cast<std::size_t>(y)];
      }
      alpha.swap(next);
      mask(pos);
    }
    return std::accumulate(alpha.begin(), alpha.end(), 0.0);
  }

  // Forward pass that keeps the values at constrained positions as an
  // extra table dimension. Table layout: [assigned tuple][current state].
  JointTable joint_table(const LocusSet& loci) const override {
    loci.validate_within(length_);
    const std::size_t c = static_cast<std::size_t>(alphabet_size());
    internal::require(loci.size() <= kMaxTabularLoci + 2, "too many loci for a joint table");
    if (loci.empty()) return JointTable(loci, alphabet_size(), {1.0});

    std::size_t count = 1;
    std::vector<double> cur = initial_;
    auto expand_if_constrained = [&](int pos) {
      if (!loci.contains(pos)) return;
      std::vector<double> out(count * c * c, 0.0);
      for (std::size_t idx = 0; idx < count; ++idx) {
        for (std::size_t s = 0; s < c; ++s) out[(idx * c + s) * c + s] = cur[idx * c + s];
      }
      cur.swap(out);
      count *= c;
    };
    expand_if_constrained(1);
    std::vector<double> next;
    for (int pos = 2; pos <= loci.max(); ++pos) {
      next.assign(count * c, 0.0);
      for (std::size_t idx = 0; idx < count; ++idx) {
        const double* src = &cur[idx * c];
        double* dst = &next[idx * c];
        for (std::size_t x = 0; x < c; ++x) {
          if (src[x] == 0.0) continue;
          const auto& row = transition_[x];
          for (std::size_t y = 0; y < c; ++y) dst[y] += src[x] * row[y];
        }
      }
      cur.swap(next);
      expand_if_constrained(pos);
    }
    std::vector<double> pmf(count, 0.0);
    for (std::size_t idx = 0; idx < count; ++idx) {
      for (std::size_t s = 0; s < c; ++s) pmf[idx] += cur[idx * c + s];
    }
    return JointTable(loci, alphabet_size(), std::move(pmf));
  }

  Sequence sample(Rng& rng) const override {
    Sequence seq;
    seq.values.resize(static_cast<std::size_t>(length_));
    Symbol s = static_cast<Symbol>(rng.categorical(initial_));
    seq.values[0] = s;
    for (int pos = 1; pos < length_; ++pos) {
      s = static_cast<Symbol>(rng.categorical(transition_[s]));
      seq.values[static_cast<std::size_t>(pos)] = s;
    }
    return seq;
  }

 private:
  int length_;
  std::vector<double> initial_;
  std::vector<std::vector<double>> transition_;
  std::optional<double> stay_prob_;
};

// Explicit pmf over the value tuples of a support locus set (at most 12
// loci). Positions outside the support are not modelled: probability
// queries touching them are rejected and sampling fills them uniformly.
class TabularModel final : public SequenceModel {
 public:
  TabularModel(int length, int alphabet_size, LocusSet support,
               std::map<std::size_t, double> pmf)
      : length_(length), alphabet_size_(alphabet_size), support_(std::move(support)) {
    internal::require(length_ >= 1, "sequence length must be at least 1");
    internal::require(alphabet_size_ >= 2, "alphabet needs at least 2 symbols");
    support_.validate_within(length_);
    if (support_.size() > kMaxTabularLoci) {
      throw CapacityError("tabular model support is limited to " +
                          std::to_string(kMaxTabularLoci) + " loci");
    }
    const std::size_t n = tuple_count(support_.size(), alphabet_size_);
    double total = 0.0;
    for (const auto& [key, p] : pmf) {
      internal::require(key < n, "tabular key outside tuple space");
      internal::require(p >= 0.0 && std::isfinite(p), "tabular probability must be non-negative");
      total += p;
      if (p > 0.0) {
        keys_.push_back(key);
        probs_.push_back(p);
      }
    }
    internal::require(std::fabs(total - 1.0) <= kSumTolerance, "tabular pmf does not sum to 1");
  }

  static TabularModel from_joint(int length, const JointTable& table) {
    std::map<std::size_t, double> pmf;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table[i] > 0.0) pmf[i] = table[i];
    }
    return TabularModel(length, table.alphabet_size(), table.loci(), std::move(pmf));
  }

  // Empirical tuple frequencies on `support`. With add-one smoothing every
  // tuple gets one pseudo-count.
  static TabularModel fit(const Dataset& data, int alphabet_size, const LocusSet& support,
                          bool add_one_smoothing = false) {
    internal::require(!data.empty(), "cannot fit a model to an empty dataset");
    const int length = static_cast<int>(data.front().size());
    support.validate_within(length);
    if (support.size() > kMaxTabularLoci) {
      throw CapacityError("tabular model support is limited to " +
                          std::to_string(kMaxTabularLoci) + " loci");
    }
    std::map<std::size_t, double> counts;
    for (const auto& row : data) {
      internal::require(static_cast<int>(row.size()) == length, "dataset rows differ in length");
      counts[encode_projection(row, support, alphabet_size)] += 1.0;
    }
    double total = static_cast<double>(data.size());
    if (add_one_smoothing) {
      const std::size_t n = tuple_count(support.size(), alphabet_size);
      for (std::size_t i = 0; i < n; ++i) counts[i] += 1.0;
      total += static_cast<double>(n);
    }
    for (auto& [key, c] : counts) c /= total;
    return TabularModel(length, alphabet_size, support, std::move(counts));
  }

  int length() const override { return length_; }
  int alphabet_size() const override { return alphabet_size_; }
  const LocusSet& support() const { return support_; }
  std::string describe() const override { return "tabular(" + support_.to_string() + ")"; }

  JointTable joint_table(const LocusSet& loci) const override {
    loci.validate_within(length_);
    internal::require(loci.is_subset_of(support_),
                      "tabular model cannot answer loci outside its support " +
                          support_.to_string());
    // Sparse marginalization: only the stored tuples are visited.
    std::vector<std::size_t> weight(support_.size(), 0);
    {
      std::size_t w = 1;
      for (std::size_t i = loci.size(); i-- > 0;) {
        weight[static_cast<std::size_t>(support_.position_of(loci[i]))] = w;
        w *= static_cast<std::size_t>(alphabet_size_);
      }
    }
    std::vector<double> out(tuple_count(loci.size(), alphabet_size_), 0.0);
    for (std::size_t e = 0; e < keys_.size(); ++e) {
      std::size_t key = keys_[e];
      std::size_t sub = 0;
      for (std::size_t d = support_.size(); d-- > 0;) {
        sub += weight[d] * (key % static_cast<std::size_t>(alphabet_size_));
        key /= static_cast<std::size_t>(alphabet_size_);
      }
      out[sub] += probs_[e];
    }
    return JointTable(loci, alphabet_size_, std::move(out));
  }

  Sequence sample(Rng& rng) const override {
    Sequence seq;
    seq.values.resize(static_cast<std::size_t>(length_));
    for (auto& v : seq.values) v = static_cast<Symbol>(rng.uniform_index(static_cast<std::size_t>(alphabet_size_)));
    const auto tuple = decode_tuple(keys_[rng.categorical(probs_)], support_.size(), alphabet_size_);
    for (std::size_t i = 0; i < support_.size(); ++i) {
      seq.values[static_cast<std::size_t>(support_[i] - 1)] = tuple[i];
    }
    return seq;
  }

 private:
  int length_;
  int alphabet_size_;
  LocusSet support_;
  std::vector<std::size_t> keys_;
  std::vector<double> probs_;
};

// ---------------------------------------------------------------------------
// Operations.

inline double joint_prob(const SequenceModel& model, const LocusSet& loci,
                         std::span<const Symbol> values) {
  return model.joint_prob(loci, values);
}

// P(X_target = target_values | X_given = given_values).
inline double conditional_prob(const SequenceModel& model, const LocusSet& target_loci,
                               std::span<const Symbol> target_values, const LocusSet& given_loci,
                               std::span<const Symbol> given_values) {
  internal::require(target_loci.size() == target_values.size() &&
                        given_loci.size() == given_values.size(),
                    "value tuple dimension mismatch");
  internal::require(target_loci.intersect(given_loci).empty(),
                    "target and conditioning loci must be disjoint");
  if (target_loci.empty()) return 1.0;
  const double given = model.joint_prob(given_loci, given_values);
  if (given <= 0.0) throw ZeroProbabilityError("conditioning event has probability zero");
  const LocusSet all = target_loci.union_with(given_loci);
  std::vector<Symbol> values;
  values.reserve(all.size());
  for (int l : all) {
    const int t = target_loci.position_of(l);
    values.push_back(t >= 0 ? target_values[static_cast<std::size_t>(t)]
                            : given_values[static_cast<std::size_t>(given_loci.position_of(l))]);
  }
  return model.joint_prob(all, values) / given;
}

// Probability that the sensitive part of the query mismatches its reference,
// Pr(X_{L and S} != v_{L and S}). Zero when the query avoids S.
inline double mismatch_prob(const SequenceModel& model, const Query& query,
                            const LocusSet& sensitive) {
  const LocusSet overlap = query.loci.intersect(sensitive);
  if (overlap.empty()) return 0.0;
  const Query sub = query.restricted_to(overlap);
  return 1.0 - model.joint_prob(sub.loci, sub.reference);
}

inline Sequence sample_sequence(const SequenceModel& model, Rng& rng) { return model.sample(rng); }

}  // namespace ppcount
