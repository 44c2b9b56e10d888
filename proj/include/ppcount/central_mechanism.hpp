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

// Central release of the aggregate count A = sum_k A^(k) over K independent
// users. Given A = a and the sensitive matrix w, the server releases
//
//   Y = a              with probability R(a, w)
//   Y ~ P_A            otherwise,
//
// with R(a, w) = m(a) / P(A = a | w) and m(a) = min_w' P(A = a | w'). Then
// P(Y = y | w) = P_A(y) (1 - sum_a m(a)) + m(y), which does not depend on w.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppcount/errors.hpp"
#include "ppcount/local_mechanism.hpp"
#include "ppcount/model.hpp"
#include "ppcount/random.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {

// Default limit on K * |S| for materializing a channel over every sensitive
// matrix.
inline constexpr std::size_t kDefaultCentralCapacity = 10;
// Heterogeneous users need a 2^K search for min_w.
inline constexpr std::size_t kMaxHeterogeneousUsers = 20;

struct AggregateDistribution {
  std::vector<double> pmf;
  std::vector<double> cdf;

  std::size_t users() const { return pmf.empty() ? 0 : pmf.size() - 1; }
  double operator()(std::size_t a) const { return a < pmf.size() ? pmf[a] : 0.0; }
  double mean() const {
    double m = 0.0;
    for (std::size_t a = 0; a < pmf.size(); ++a) m += static_cast<double>(a) * pmf[a];
    return m;
  }

  static AggregateDistribution from_pmf(std::vector<double> pmf) {
    AggregateDistribution d;
    d.cdf.resize(pmf.size());
    double acc = 0.0;
    for (std::size_t a = 0; a < pmf.size(); ++a) {
      acc += pmf[a];
      d.cdf[a] = acc;
    }
    if (!d.cdf.empty()) d.cdf.back() = 1.0;
    d.pmf = std::move(pmf);
    return d;
  }
};

namespace internal {

inline std::vector<double> convolve(std::span<const double> x, std::span<const double> y) {
  std::vector<double> out(x.size() + y.size() - 1, 0.0);
  // Binomial tails underflow to exact zeros; skip them.
  std::size_t lo = 0;
  std::size_t hi = y.size();
  while (lo < hi && y[lo] == 0.0) ++lo;
  while (hi > lo && y[hi - 1] == 0.0) --hi;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t j = lo; j < hi; ++j) out[i + j] += x[i] * y[j];
  }
  return out;
}

// In-place multiplication of a count pmf by one more Bernoulli(p) user.
inline void add_bernoulli(std::vector<double>& pmf, double p) {
  pmf.push_back(0.0);
  for (std::size_t a = pmf.size() - 1; a > 0; --a) pmf[a] = pmf[a] * (1.0 - p) + pmf[a - 1] * p;
  pmf[0] *= (1.0 - p);
}

}  // namespace internal

inline std::vector<double> binomial_pmf(std::size_t n, double p) {
  internal::require(p >= 0.0 && p <= 1.0, "binomial probability must lie in [0,1]");
  std::vector<double> out(n + 1, 0.0);
  if (p == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (p == 1.0) {
    out[n] = 1.0;
    return out;
  }
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double ln = std::lgamma(static_cast<double>(n) + 1.0);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double rest = static_cast<double>(n - k);
    out[k] = std::exp(ln - std::lgamma(kk + 1.0) - std::lgamma(rest + 1.0) + kk * lp + rest * lq);
  }
  return out;
}

// Poisson-binomial law of a sum of independent Bernoulli(p_k).
inline AggregateDistribution aggregate_distribution(std::span<const double> probs) {
  std::vector<double> pmf{1.0};
  pmf.reserve(probs.size() + 1);
  for (double p : probs) {
    internal::require(p >= 0.0 && p <= 1.0, "match probabilities must lie in [0,1]");
    internal::add_bernoulli(pmf, p);
  }
  return AggregateDistribution::from_pmf(std::move(pmf));
}

// Per-user sensitive tuples x_S^(k), one row per user.
struct SensitiveMatrix {
  std::vector<std::vector<Symbol>> tuples;

  std::size_t users() const { return tuples.size(); }

  std::vector<std::size_t> indices(int alphabet_size) const {
    std::vector<std::size_t> out;
    out.reserve(tuples.size());
    for (const auto& t : tuples) out.push_back(encode_tuple(t, alphabet_size));
    return out;
  }

  static SensitiveMatrix from_indices(std::span<const std::size_t> cells, std::size_t width,
                                      int alphabet_size) {
    SensitiveMatrix m;
    for (std::size_t c : cells) m.tuples.push_back(decode_tuple(c, width, alphabet_size));
    return m;
  }
};

// One user's view of the sensitive loci: P(x_S) and q(x_S) = P(A = 1 | x_S).
struct UserPrior {
  std::vector<double> sensitive_prob;
  std::vector<double> match_given;
  double match_prob = 0.0;
  double min_match = 0.0;  // over x_S with positive probability
  double max_match = 0.0;

  static UserPrior from(const LocalPrior& prior) {
    UserPrior u;
    const std::size_t ns = prior.sensitive_count();
    u.sensitive_prob.resize(ns);
    u.match_given.resize(ns);
    u.min_match = std::numeric_limits<double>::infinity();
    u.max_match = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ns; ++s) {
      u.sensitive_prob[s] = prior.sensitive_prob(s);
      u.match_given[s] = std::clamp(prior.answer_given_sensitive(s), 0.0, 1.0);
      if (u.sensitive_prob[s] > 0.0) {
        u.min_match = std::min(u.min_match, u.match_given[s]);
        u.max_match = std::max(u.max_match, u.match_given[s]);
      }
    }
    u.match_prob = std::clamp(prior.match_prob(), 0.0, 1.0);
    return u;
  }
};

// Everything the central mechanism needs about K independent users: the
// aggregate law P_A, the per-count minimum m(a), and per-user conditional
// match probabilities for evaluating P(A = . | w) at any sensitive matrix.
class CentralModel {
 public:
  static CentralModel iid(const LocalPrior& prior, std::size_t users) {
    internal::require(users >= 1, "central mechanism needs at least one user");
    CentralModel c;
    c.users_ = users;
    c.sensitive_width_ = prior.sensitive().size();
    c.alphabet_size_ = prior.alphabet_size();
    c.priors_.push_back(UserPrior::from(prior));
    c.finish();
    return c;
  }

  static CentralModel iid(const SequenceModel& model, const Query& query,
                          const LocusSet& sensitive, std::size_t users) {
    return iid(LocalPrior::analyze(model, query, sensitive), users);
  }

  // Users with their own priors; all must share the sensitive tuple space.
  static CentralModel heterogeneous(std::vector<UserPrior> priors, std::size_t sensitive_width,
                                    int alphabet_size) {
    internal::require(!priors.empty(), "central mechanism needs at least one user");
    if (priors.size() > kMaxHeterogeneousUsers) {
      throw CapacityError("heterogeneous central model supports at most " +
                          std::to_string(kMaxHeterogeneousUsers) + " users");
    }
    const std::size_t ns = tuple_count(sensitive_width, alphabet_size);
    for (const auto& p : priors) {
      internal::require(p.sensitive_prob.size() == ns && p.match_given.size() == ns,
                        "user priors disagree on the sensitive tuple space");
    }
    CentralModel c;
    c.users_ = priors.size();
    c.sensitive_width_ = sensitive_width;
    c.alphabet_size_ = alphabet_size;
    c.priors_ = std::move(priors);
    c.finish();
    return c;
  }

  std::size_t users() const { return users_; }
  bool is_iid() const { return priors_.size() == 1; }
  std::size_t sensitive_width() const { return sensitive_width_; }
  std::size_t sensitive_count() const { return priors_.front().sensitive_prob.size(); }
  int alphabet_size() const { return alphabet_size_; }
  const UserPrior& user(std::size_t k) const { return priors_[is_iid() ? 0 : k]; }
  const AggregateDistribution& aggregate() const { return aggregate_; }
  // m(a) = min over positive-probability matrices of P(A = a | w).
  double min_conditional(std::size_t a) const { return min_conditional_[a]; }
  std::span<const double> min_conditionals() const { return min_conditional_; }

  double matrix_prob(std::span<const std::size_t> cells) const {
    check_cells(cells);
    double p = 1.0;
    for (std::size_t k = 0; k < users_; ++k) p *= user(k).sensitive_prob[cells[k]];
    return p;
  }

  // Every user's tuple has positive probability. Checked per user because
  // the product underflows for large K.
  bool reachable(std::span<const std::size_t> cells) const {
    check_cells(cells);
    for (std::size_t k = 0; k < users_; ++k) {
      if (user(k).sensitive_prob[cells[k]] <= 0.0) return false;
    }
    return true;
  }

  // P(A = . | X_S = w), computed as a product of per-user conditionals.
  std::vector<double> conditional_aggregate(std::span<const std::size_t> cells) const {
    if (!reachable(cells)) {
      throw ZeroProbabilityError("sensitive matrix has probability zero");
    }
    std::vector<double> pmf{1.0};
    pmf.reserve(users_ + 1);
    for (std::size_t k = 0; k < users_; ++k) internal::add_bernoulli(pmf, user(k).match_given[cells[k]]);
    return pmf;
  }

  // P(A = a | X_S = w) at a single count, grouping users with equal q.
  double conditional_at(std::size_t a, std::span<const std::size_t> cells) const {
    if (!reachable(cells)) {
      throw ZeroProbabilityError("sensitive matrix has probability zero");
    }
    if (a > users_) return 0.0;
    std::map<double, std::size_t> groups;
    std::size_t certain = 0;
    for (std::size_t k = 0; k < users_; ++k) {
      const double q = user(k).match_given[cells[k]];
      if (q <= 0.0) continue;
      if (q >= 1.0) {
        ++certain;
        continue;
      }
      ++groups[q];
    }
    if (a < certain) return 0.0;
    const std::size_t need = a - certain;
    if (groups.empty()) return need == 0 ? 1.0 : 0.0;
    if (groups.size() > 2) return truncated_poisson_binomial(groups, need);
    std::vector<std::pair<double, std::size_t>> g(groups.begin(), groups.end());
    std::vector<double> head{1.0};
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      head = internal::convolve(head, binomial_pmf(g[i].second, g[i].first));
    }
    const auto last = binomial_pmf(g.back().second, g.back().first);
    double total = 0.0;
    for (std::size_t i = 0; i < head.size() && i <= need; ++i) {
      const std::size_t j = need - i;
      if (j < last.size()) total += head[i] * last[j];
    }
    return total;
  }

  // R(a, w) = m(a) / P(A = a | w); 0 where P(A = a | w) = 0.
  double ratio(std::size_t a, std::span<const std::size_t> cells) const {
    const double cond = conditional_at(a, cells);
    if (cond <= 0.0) return 0.0;
    return std::min(1.0, min_conditional_[a] / cond);
  }

  void check_cells(std::span<const std::size_t> cells) const {
    internal::require(cells.size() == users_, "sensitive matrix must have one row per user");
    for (std::size_t c : cells) {
      internal::require(c < sensitive_count(), "sensitive tuple outside the alphabet");
    }
  }

 private:
  // P(sum = target) for groups of (q, count), keeping only the pmf entries
  // that can still reach the target; counts from the far end when shorter.
  static double truncated_poisson_binomial(const std::map<double, std::size_t>& groups,
                                           std::size_t target) {
    std::size_t n = 0;
    for (const auto& [q, c] : groups) n += c;
    if (target > n) return 0.0;
    const bool flip = n - target < target;
    const std::size_t t = flip ? n - target : target;
    std::vector<double> pmf(t + 1, 0.0);
    pmf[0] = 1.0;
    std::size_t seen = 0;
    for (const auto& [q0, c] : groups) {
      const double q = flip ? 1.0 - q0 : q0;
      for (std::size_t i = 0; i < c; ++i) {
        ++seen;
        for (std::size_t a = std::min(seen, t); a > 0; --a) pmf[a] = pmf[a] * (1.0 - q) + pmf[a - 1] * q;
        pmf[0] *= 1.0 - q;
      }
    }
    return pmf[t];
  }

  void finish() {
    std::vector<double> probs(users_);
    for (std::size_t k = 0; k < users_; ++k) probs[k] = user(k).match_prob;
    aggregate_ = aggregate_distribution(probs);
    min_conditional_ = is_iid() ? iid_minimum() : vertex_minimum();
    // P_A is a mixture of the conditionals, so m(a) <= P_A(a); clamp round-off.
    for (std::size_t a = 0; a <= users_; ++a) {
      min_conditional_[a] = std::min(min_conditional_[a], aggregate_.pmf[a]);
    }
  }

  // P(A = a | w) is affine in each user's q_k, so its minimum over
  // realizable matrices sits at a vertex where every q_k is either its
  // smallest or largest attainable value. For exchangeable users only the
  // number j of users at the maximum matters.
  std::vector<double> iid_minimum() const {
    const double lo = priors_.front().min_match;
    const double hi = priors_.front().max_match;
    // q constant up to round-off: A is independent of the sensitive loci.
    if (hi - lo <= 1e-12) return aggregate_.pmf;
    std::vector<double> best(users_ + 1, std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j <= users_; ++j) {
      const auto pmf = internal::convolve(binomial_pmf(j, hi), binomial_pmf(users_ - j, lo));
      for (std::size_t a = 0; a <= users_; ++a) best[a] = std::min(best[a], pmf[a]);
    }
    return best;
  }

  std::vector<double> vertex_minimum() const {
    std::vector<double> best(users_ + 1, std::numeric_limits<double>::infinity());
    const std::uint64_t vertices = std::uint64_t{1} << users_;
    for (std::uint64_t v = 0; v < vertices; ++v) {
      std::vector<double> pmf{1.0};
      for (std::size_t k = 0; k < users_; ++k) {
        const auto& u = priors_[k];
        internal::add_bernoulli(pmf, (v >> k) & 1 ? u.max_match : u.min_match);
      }
      for (std::size_t a = 0; a <= users_; ++a) best[a] = std::min(best[a], pmf[a]);
    }
    return best;
  }

  std::size_t users_ = 0;
  std::size_t sensitive_width_ = 0;
  int alphabet_size_ = 0;
  std::vector<UserPrior> priors_;
  AggregateDistribution aggregate_;
  std::vector<double> min_conditional_;
};

inline std::vector<double> conditional_aggregate(const SequenceModel& model, const Query& query,
                                                 const LocusSet& sensitive,
                                                 const SensitiveMatrix& x_s) {
  const auto central = CentralModel::iid(model, query, sensitive, x_s.users());
  for (const auto& t : x_s.tuples) {
    internal::require(t.size() == sensitive.size(), "sensitive tuple has the wrong width");
    for (Symbol s : t) internal::require(s < model.alphabet_size(), "sensitive value outside alphabet");
  }
  return central.conditional_aggregate(x_s.indices(model.alphabet_size()));
}

// Release probability P(Y = y | A = a, w) given the ratio R(a, w).
inline double central_release_prob(const AggregateDistribution& prior, std::size_t y,
                                   std::size_t a, double ratio) {
  return prior(y) * (1.0 - ratio) + (y == a ? ratio : 0.0);
}

// Channel materialized over every sensitive matrix. Matrices are indexed
// user-major with the first user most significant. Matrices whose users
// have the same conditional match probabilities share one stored row set.
class CentralChannel {
 public:
  static CentralChannel build(CentralModel model, std::size_t capacity = kDefaultCentralCapacity) {
    const std::size_t symbols = model.users() * model.sensitive_width();
    if (symbols > capacity) {
      throw CapacityError("central channel would enumerate K*|S| = " + std::to_string(symbols) +
                          " symbols (limit " + std::to_string(capacity) +
                          "); use the sampling release path instead");
    }
    CentralChannel ch;
    ch.matrix_count_ = tuple_count(symbols, model.alphabet_size());
    ch.class_of_.assign(ch.matrix_count_, kUnreachable);
    const std::size_t k_users = model.users();
    const std::size_t ns = model.sensitive_count();
    std::map<std::vector<double>, std::size_t> seen;
    std::vector<std::size_t> cells(k_users, 0);
    std::vector<double> key(k_users);
    for (std::size_t w = 0; w < ch.matrix_count_; ++w) {
      // cells = base-ns digits of w
      std::size_t rest = w;
      for (std::size_t k = k_users; k-- > 0;) {
        cells[k] = rest % ns;
        rest /= ns;
      }
      if (!model.reachable(cells)) continue;
      for (std::size_t k = 0; k < k_users; ++k) key[k] = model.user(k).match_given[cells[k]];
      if (model.is_iid()) std::sort(key.begin(), key.end());
      auto [it, inserted] = seen.emplace(key, ch.conditionals_.size());
      if (inserted) {
        auto pmf = model.conditional_aggregate(cells);
        std::vector<double> ratios(k_users + 1, 0.0);
        for (std::size_t a = 0; a <= k_users; ++a) {
          ratios[a] = pmf[a] > 0.0 ? std::min(1.0, model.min_conditional(a) / pmf[a]) : 0.0;
        }
        ch.conditionals_.push_back(std::move(pmf));
        ch.ratios_.push_back(std::move(ratios));
      }
      ch.class_of_[w] = it->second;
    }
    ch.model_ = std::move(model);
    return ch;
  }

  const CentralModel& model() const { return model_; }
  std::size_t users() const { return model_.users(); }
  std::size_t matrix_count() const { return matrix_count_; }
  bool reachable(std::size_t w) const { return class_of_.at(w) != kUnreachable; }
  // Matrices with the same per-user conditionals share a row class.
  std::size_t class_count() const { return conditionals_.size(); }
  std::size_t row_class(std::size_t w) const { return class_of_.at(w); }
  static constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

  std::size_t matrix_index(std::span<const std::size_t> cells) const {
    model_.check_cells(cells);
    std::size_t w = 0;
    for (std::size_t c : cells) w = w * model_.sensitive_count() + c;
    return w;
  }

  std::vector<std::size_t> matrix_cells(std::size_t w) const {
    std::vector<std::size_t> cells(users());
    for (std::size_t k = users(); k-- > 0;) {
      cells[k] = w % model_.sensitive_count();
      w /= model_.sensitive_count();
    }
    return cells;
  }

  // R(a, w); unreachable matrices store 0.
  double ratio(std::size_t a, std::size_t w) const {
    const std::size_t c = class_of_.at(w);
    return c == kUnreachable ? 0.0 : ratios_[c].at(a);
  }

  // P(A = . | w); empty for unreachable matrices.
  std::span<const double> conditional(std::size_t w) const {
    const std::size_t c = class_of_.at(w);
    if (c == kUnreachable) return {};
    return conditionals_[c];
  }

  double release_prob(std::size_t y, std::size_t a, std::size_t w) const {
    return central_release_prob(model_.aggregate(), y, a, ratio(a, w));
  }

  // Same channel with every ratio replaced by `r`: r = 1 releases the true
  // count, r = 0 samples from P_A. Used to contrast with the real mechanism.
  CentralChannel with_constant_ratio(double r) const {
    internal::require(r >= 0.0 && r <= 1.0, "ratio must lie in [0,1]");
    CentralChannel copy = *this;
    for (auto& row : copy.ratios_) std::fill(row.begin(), row.end(), r);
    return copy;
  }

 private:
  CentralModel model_;
  std::size_t matrix_count_ = 0;
  std::vector<std::size_t> class_of_;
  std::vector<std::vector<double>> conditionals_;
  std::vector<std::vector<double>> ratios_;
};

inline CentralChannel build_central_channel(const SequenceModel& model, const Query& query,
                                            const LocusSet& sensitive, std::size_t users,
                                            std::size_t capacity = kDefaultCentralCapacity) {
  if (users * sensitive.size() > capacity) {
    throw CapacityError("central channel would enumerate K*|S| = " +
                        std::to_string(users * sensitive.size()) + " symbols (limit " +
                        std::to_string(capacity) + "); use the sampling release path instead");
  }
  return CentralChannel::build(CentralModel::iid(model, query, sensitive, users), capacity);
}

namespace internal {

inline std::size_t release_with_ratio(const AggregateDistribution& prior, std::size_t a,
                                      double ratio, Rng& rng) {
  // Bernoulli(R) keeps a, otherwise a draw from P_A.
  if (rng.bernoulli(ratio)) return a;
  return rng.categorical(prior.pmf);
}

}  // namespace internal

inline std::size_t central_release(const CentralChannel& channel, std::size_t a,
                                   std::span<const std::size_t> cells, Rng& rng) {
  internal::require(a <= channel.users(), "count exceeds number of users");
  return internal::release_with_ratio(channel.model().aggregate(), a,
                                      channel.ratio(a, channel.matrix_index(cells)), rng);
}

// Sampling path: evaluates R(a, w) directly, no channel table.
inline std::size_t central_release(const CentralModel& model, std::size_t a,
                                   std::span<const std::size_t> cells, Rng& rng) {
  internal::require(a <= model.users(), "count exceeds number of users");
  return internal::release_with_ratio(model.aggregate(), a, model.ratio(a, cells), rng);
}

// sum_a sum_{y != a} |y - a| P_A(y) [P_A(a) - m(a)], in O(K) via prefix sums.
inline double central_expected_error(const CentralModel& model) {
  const auto& pa = model.aggregate().pmf;
  const std::size_t n = pa.size();
  std::vector<double> mass(n + 1, 0.0);
  std::vector<double> moment(n + 1, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    mass[y + 1] = mass[y] + pa[y];
    moment[y + 1] = moment[y] + static_cast<double>(y) * pa[y];
  }
  double eae = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double gap = pa[a] - model.min_conditional(a);
    if (gap <= 0.0) continue;
    const double da = static_cast<double>(a);
    const double below = da * mass[a] - moment[a];
    const double above = (moment[n] - moment[a + 1]) - da * (mass[n] - mass[a + 1]);
    eae += (below + above) * gap;
  }
  return eae;
}

inline double central_expected_error(const SequenceModel& model, const Query& query,
                                     const LocusSet& sensitive, std::size_t users) {
  return central_expected_error(CentralModel::iid(model, query, sensitive, users));
}

// Closed form stated for i.i.d. uniform users: 0 when the mismatch
// probability is at most 1/2, else 2 { sum_a a P_A(a) F_A(a) - K lambda^2 }
// with lambda = (1/C)^{|L|}. Kept for comparison with the exact double sum.
inline double uniform_iid_closed_form_eae(const AggregateDistribution& prior, double lambda,
                                          double mismatch) {
  if (mismatch <= 0.5) return 0.0;
  double s = 0.0;
  for (std::size_t a = 0; a < prior.pmf.size(); ++a) {
    s += static_cast<double>(a) * prior.pmf[a] * prior.cdf[a];
  }
  return 2.0 * (s - static_cast<double>(prior.users()) * lambda * lambda);
}

}  // namespace ppcount
