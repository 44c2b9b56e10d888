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

// Per-user perfectly private release of the match bit A = 1{X_L = v_L}.
//
// Notation used in comments: L is the query locus set, S the sensitive
// set, I = L and S (overlap), Lbar = L \ S. E = Pr(X_I != v_I) is the
// mismatch probability and m(x) = min_w P(X_Lbar = x | X_S = w), with the
// minimum taken over sensitive tuples w of positive probability.
//
// Both mechanisms release Y = 1 with probability mu(x_Lbar, x_S), chosen so
// that mu(x, s) * P(x | s) does not depend on s. That makes
// P(Y = 1 | X_S = s) constant in s, i.e. Y is independent of X_S.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ppcount/entropy.hpp"
#include "ppcount/errors.hpp"
#include "ppcount/model.hpp"
#include "ppcount/random.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {

// The prior restricted to L and S, laid out as a matrix over
// (x_Lbar, x_S). Everything the local mechanisms, their error formulas and
// the lower bound need is derived from it once.
class LocalPrior {
 public:
  static LocalPrior analyze(const SequenceModel& model, const Query& query,
                            const LocusSet& sensitive) {
    internal::require(!query.loci.empty(), "query must constrain at least one locus");
    query.loci.validate_within(model.length());
    sensitive.validate_within(model.length());
    for (Symbol s : query.reference) {
      internal::require(s < model.alphabet_size(), "query value outside alphabet");
    }
    const LocusSet all = query.loci.union_with(sensitive);
    if (all.size() > kMaxTabularLoci) {
      throw CapacityError("|L u S| = " + std::to_string(all.size()) + " exceeds the exact limit of " +
                          std::to_string(kMaxTabularLoci) + " loci");
    }
    LocalPrior p;
    p.query_ = query;
    p.sensitive_ = sensitive;
    p.lbar_ = query.loci.minus(sensitive);
    p.overlap_ = query.loci.intersect(sensitive);
    p.alphabet_size_ = model.alphabet_size();
    p.lbar_count_ = tuple_count(p.lbar_.size(), p.alphabet_size_);
    p.sensitive_count_ = tuple_count(sensitive.size(), p.alphabet_size_);
    p.joint_ = model.joint_table(all).as_matrix(p.lbar_, sensitive);
    p.derive();
    return p;
  }

  const Query& query() const { return query_; }
  const LocusSet& sensitive() const { return sensitive_; }
  const LocusSet& nonsensitive_loci() const { return lbar_; }
  const LocusSet& overlap() const { return overlap_; }
  int alphabet_size() const { return alphabet_size_; }
  std::size_t lbar_count() const { return lbar_count_; }
  std::size_t sensitive_count() const { return sensitive_count_; }

  double joint(std::size_t lbar, std::size_t s) const { return joint_[lbar * sensitive_count_ + s]; }
  double sensitive_prob(std::size_t s) const { return sensitive_marginal_[s]; }
  // P(x_Lbar | x_S); 0 when P(x_S) = 0.
  double conditional(std::size_t lbar, std::size_t s) const {
    const double ps = sensitive_marginal_[s];
    return ps > 0.0 ? joint(lbar, s) / ps : 0.0;
  }
  double min_conditional(std::size_t lbar) const { return min_conditional_[lbar]; }
  double mismatch() const { return mismatch_; }
  double match_prob() const { return match_prob_; }
  std::size_t reference_lbar() const { return reference_lbar_; }
  bool overlap_matches(std::size_t s) const { return overlap_match_[s] != 0; }
  bool answer(std::size_t lbar, std::size_t s) const {
    return lbar == reference_lbar_ && overlap_matches(s);
  }
  // P(A = 1 | X_S = s).
  double answer_given_sensitive(std::size_t s) const {
    return overlap_matches(s) ? conditional(reference_lbar_, s) : 0.0;
  }
  // P(X_Lbar = v_Lbar).
  double lbar_match_prob() const {
    double total = 0.0;
    for (std::size_t s = 0; s < sensitive_count_; ++s) total += joint(reference_lbar_, s);
    return total;
  }

  std::size_t lbar_index(const Sequence& seq) const {
    return encode_projection(seq, lbar_, alphabet_size_);
  }
  std::size_t sensitive_index(const Sequence& seq) const {
    return encode_projection(seq, sensitive_, alphabet_size_);
  }

 private:
  void derive() {
    sensitive_marginal_.assign(sensitive_count_, 0.0);
    for (std::size_t l = 0; l < lbar_count_; ++l) {
      for (std::size_t s = 0; s < sensitive_count_; ++s) sensitive_marginal_[s] += joint(l, s);
    }
    min_conditional_.assign(lbar_count_, std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < sensitive_count_; ++s) {
      if (sensitive_marginal_[s] <= 0.0) continue;
      for (std::size_t l = 0; l < lbar_count_; ++l) {
        min_conditional_[l] = std::min(min_conditional_[l], conditional(l, s));
      }
    }
    for (double& m : min_conditional_) {
      if (!std::isfinite(m)) m = 0.0;
    }

    std::vector<Symbol> lbar_ref;
    for (int l : lbar_) lbar_ref.push_back(query_.reference_at(l));
    reference_lbar_ = encode_tuple(lbar_ref, alphabet_size_);

    overlap_match_.assign(sensitive_count_, 1);
    if (!overlap_.empty()) {
      std::vector<std::size_t> positions;
      std::vector<Symbol> wanted;
      for (int l : overlap_) {
        positions.push_back(static_cast<std::size_t>(sensitive_.position_of(l)));
        wanted.push_back(query_.reference_at(l));
      }
      for (std::size_t s = 0; s < sensitive_count_; ++s) {
        const auto tuple = decode_tuple(s, sensitive_.size(), alphabet_size_);
        for (std::size_t k = 0; k < positions.size(); ++k) {
          if (tuple[positions[k]] != wanted[k]) {
            overlap_match_[s] = 0;
            break;
          }
        }
      }
    }

    double overlap_match_mass = 0.0;
    match_prob_ = 0.0;
    for (std::size_t s = 0; s < sensitive_count_; ++s) {
      if (!overlap_match_[s]) continue;
      overlap_match_mass += sensitive_marginal_[s];
      match_prob_ += joint(reference_lbar_, s);
    }
    mismatch_ = overlap_.empty() ? 0.0 : std::max(0.0, 1.0 - overlap_match_mass);
  }

  Query query_;
  LocusSet sensitive_;
  LocusSet lbar_;
  LocusSet overlap_;
  int alphabet_size_ = 0;
  std::size_t lbar_count_ = 0;
  std::size_t sensitive_count_ = 0;
  std::vector<double> joint_;
  std::vector<double> sensitive_marginal_;
  std::vector<double> min_conditional_;
  std::vector<char> overlap_match_;
  std::size_t reference_lbar_ = 0;
  double mismatch_ = 0.0;
  double match_prob_ = 0.0;
};

enum class MechanismKind { kM1, kM2, kCustom };

inline std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::kM1: return "M1";
    case MechanismKind::kM2: return "M2";
    case MechanismKind::kCustom: return "custom";
  }
  return "?";
}

// Release-probability table mu(x_Lbar, x_S) for Y = 1.
class LocalMechanism {
 public:
  LocalMechanism(MechanismKind kind, Query query, LocusSet sensitive, int alphabet_size,
                 std::vector<double> release_table, std::vector<double> ratios, double mismatch)
      : kind_(kind),
        query_(std::move(query)),
        sensitive_(std::move(sensitive)),
        lbar_(query_.loci.minus(sensitive_)),
        alphabet_size_(alphabet_size),
        lbar_count_(tuple_count(lbar_.size(), alphabet_size)),
        sensitive_count_(tuple_count(sensitive_.size(), alphabet_size)),
        table_(std::move(release_table)),
        ratios_(std::move(ratios)),
        mismatch_(mismatch) {
    internal::require(table_.size() == lbar_count_ * sensitive_count_,
                      "release table must cover every (x_Lbar, x_S) cell");
    for (double p : table_) {
      internal::require(p >= 0.0 && p <= 1.0, "release probabilities must lie in [0,1]");
    }
    if (ratios_.empty()) ratios_.assign(table_.size(), 0.0);
  }

  // A user-supplied table (e.g. loaded from a file for auditing).
  static LocalMechanism from_table(const Query& query, const LocusSet& sensitive,
                                   int alphabet_size, std::vector<double> table) {
    return LocalMechanism(MechanismKind::kCustom, query, sensitive, alphabet_size, std::move(table),
                          {}, std::numeric_limits<double>::quiet_NaN());
  }

  MechanismKind kind() const { return kind_; }
  const Query& query() const { return query_; }
  const LocusSet& sensitive() const { return sensitive_; }
  const LocusSet& nonsensitive_loci() const { return lbar_; }
  int alphabet_size() const { return alphabet_size_; }
  std::size_t lbar_count() const { return lbar_count_; }
  std::size_t sensitive_count() const { return sensitive_count_; }
  double mismatch() const { return mismatch_; }
  std::span<const double> table() const { return table_; }

  double release_prob(std::size_t lbar, std::size_t s) const {
    return table_[lbar * sensitive_count_ + s];
  }
  double ratio(std::size_t lbar, std::size_t s) const { return ratios_[lbar * sensitive_count_ + s]; }

  double release_prob(const Sequence& seq) const {
    return release_prob(encode_projection(seq, lbar_, alphabet_size_),
                        encode_projection(seq, sensitive_, alphabet_size_));
  }

  LocalMechanism with_release_prob(std::size_t lbar, std::size_t s, double p) const {
    LocalMechanism copy = *this;
    internal::require(p >= 0.0 && p <= 1.0, "release probabilities must lie in [0,1]");
    copy.table_.at(lbar * sensitive_count_ + s) = p;
    copy.kind_ = MechanismKind::kCustom;
    return copy;
  }

 private:
  MechanismKind kind_;
  Query query_;
  LocusSet sensitive_;
  LocusSet lbar_;
  int alphabet_size_;
  std::size_t lbar_count_;
  std::size_t sensitive_count_;
  std::vector<double> table_;
  std::vector<double> ratios_;
  double mismatch_;
};

// Dependence ratio R(x, s) = m(x) / P(x | s). Cells that cannot occur
// (P(s) = 0 or P(x | s) = 0) get R = 0.
inline double dependence_ratio(const LocalPrior& prior, std::size_t lbar, std::size_t s) {
  const double cond = prior.conditional(lbar, s);
  if (cond <= 0.0) return 0.0;
  return std::min(1.0, prior.min_conditional(lbar) / cond);
}

inline LocalMechanism build_mechanism(MechanismKind kind, const LocalPrior& prior) {
  internal::require(kind != MechanismKind::kCustom, "custom mechanisms are built from a table");
  const std::size_t nl = prior.lbar_count();
  const std::size_t ns = prior.sensitive_count();
  const bool low_mismatch = prior.mismatch() <= 0.5;
  std::vector<double> table(nl * ns);
  std::vector<double> ratios(nl * ns);
  for (std::size_t l = 0; l < nl; ++l) {
    const bool match_branch = l == prior.reference_lbar() && low_mismatch;
    for (std::size_t s = 0; s < ns; ++s) {
      const double r = dependence_ratio(prior, l, s);
      ratios[l * ns + s] = r;
      if (kind == MechanismKind::kM1) {
        table[l * ns + s] = match_branch ? r : 0.0;
      } else {
        table[l * ns + s] = match_branch ? 1.0 : 1.0 - r;
      }
    }
  }
  return LocalMechanism(kind, prior.query(), prior.sensitive(), prior.alphabet_size(),
                        std::move(table), std::move(ratios), prior.mismatch());
}

inline LocalMechanism build_mechanism(MechanismKind kind, const SequenceModel& model,
                                      const Query& query, const LocusSet& sensitive) {
  return build_mechanism(kind, LocalPrior::analyze(model, query, sensitive));
}

inline int release(const LocalMechanism& mech, const Sequence& seq, Rng& rng) {
  return rng.bernoulli(mech.release_prob(seq)) ? 1 : 0;
}

// A = 1{X_L = v_L}; the empty query matches every sequence.
inline int true_answer(const Query& query, const Sequence& seq) {
  for (std::size_t i = 0; i < query.loci.size(); ++i) {
    if (seq.at_locus(query.loci[i]) != query.reference[i]) return 0;
  }
  return 1;
}

enum class ErrorCase { kMismatchAtMostHalf, kMismatchAboveHalf };

struct ErrorReport {
  double p_e1 = 0.0;
  double p_e2 = 0.0;
  double best = 0.0;
  double lower_bound = 0.0;
  double mismatch = 0.0;
  double match_prob = 0.0;
  std::size_t overlap = 0;
  ErrorCase error_case = ErrorCase::kMismatchAtMostHalf;

  MechanismKind best_kind() const { return p_e1 <= p_e2 ? MechanismKind::kM1 : MechanismKind::kM2; }

  static std::string csv_header() { return "model,overlap,mismatch,p_e1,p_e2,best,lower_bound"; }

  std::string csv_row(const std::string& model) const {
    std::ostringstream os;
    os.precision(12);
    os << model << ',' << overlap << ',' << mismatch << ',' << p_e1 << ',' << p_e2 << ',' << best
       << ',' << lower_bound;
    return os.str();
  }
};

// Entropy bound on the error of any perfectly private local mechanism:
// h^-1( h(A) - min{ H(A_Lbar | A_I), H(A | X_S) } ).
inline double lower_bound(const LocalPrior& prior) {
  const double p_a = prior.match_prob();
  const double h_a = binary_entropy(std::clamp(p_a, 0.0, 1.0));

  // H(A_Lbar | A_I) from the 2x2 joint of the two indicators.
  const double p_i1 = 1.0 - prior.mismatch();
  const double p_i0 = prior.mismatch();
  const double p_lbar1_i0 = std::max(0.0, prior.lbar_match_prob() - p_a);
  double h_lbar_given_i = 0.0;
  if (p_i1 > 0.0) h_lbar_given_i += p_i1 * binary_entropy(std::clamp(p_a / p_i1, 0.0, 1.0));
  if (p_i0 > 0.0) h_lbar_given_i += p_i0 * binary_entropy(std::clamp(p_lbar1_i0 / p_i0, 0.0, 1.0));

  double h_a_given_s = 0.0;
  for (std::size_t s = 0; s < prior.sensitive_count(); ++s) {
    const double ps = prior.sensitive_prob(s);
    if (ps <= 0.0) continue;
    h_a_given_s += ps * binary_entropy(std::clamp(prior.answer_given_sensitive(s), 0.0, 1.0));
  }
  const double gap = std::max(0.0, h_a - std::min(h_lbar_given_i, h_a_given_s));
  return inverse_binary_entropy(std::min(gap, 1.0));
}

inline double lower_bound(const SequenceModel& model, const Query& query,
                          const LocusSet& sensitive) {
  return lower_bound(LocalPrior::analyze(model, query, sensitive));
}

// Closed-form per-user error probabilities of M1 and M2.
inline ErrorReport error_probabilities(const LocalPrior& prior) {
  const double p = prior.match_prob();
  const double e = prior.mismatch();
  const double m_ref = prior.min_conditional(prior.reference_lbar());
  double m_other = 0.0;
  for (std::size_t l = 0; l < prior.lbar_count(); ++l) {
    if (l != prior.reference_lbar()) m_other += prior.min_conditional(l);
  }
  ErrorReport r;
  r.mismatch = e;
  r.match_prob = p;
  r.overlap = prior.overlap().size();
  if (e <= 0.5) {
    r.error_case = ErrorCase::kMismatchAtMostHalf;
    r.p_e1 = p + (2.0 * e - 1.0) * m_ref;
    r.p_e2 = 1.0 - p - m_other;
  } else {
    r.error_case = ErrorCase::kMismatchAboveHalf;
    r.p_e1 = p;
    r.p_e2 = 1.0 - p - m_other - (2.0 * e - 1.0) * m_ref;
  }
  r.best = std::min(r.p_e1, r.p_e2);
  r.lower_bound = lower_bound(prior);
  return r;
}

inline ErrorReport error_probabilities(const SequenceModel& model, const Query& query,
                                       const LocusSet& sensitive) {
  return error_probabilities(LocalPrior::analyze(model, query, sensitive));
}

// K * min(P_e1, P_e2) for K i.i.d. users.
inline double aggregate_eae_iid(const ErrorReport& report, std::size_t users) {
  return static_cast<double>(users) * report.best;
}

inline double aggregate_eae_iid(const SequenceModel& model, const Query& query,
                                const LocusSet& sensitive, std::size_t users) {
  if (users == 0) return 0.0;
  return aggregate_eae_iid(error_probabilities(model, query, sensitive), users);
}

// Per-user (P(Y=1, A=0), P(Y=0, A=1)) of a mechanism, by enumeration of
// every (x_Lbar, x_S) cell.
struct ErrorSplit {
  double false_positive = 0.0;
  double false_negative = 0.0;
  double total() const { return false_positive + false_negative; }
};

inline ErrorSplit error_split(const LocalMechanism& mech, const LocalPrior& prior) {
  internal::require(mech.lbar_count() == prior.lbar_count() &&
                        mech.sensitive_count() == prior.sensitive_count(),
                    "mechanism and prior describe different cells");
  ErrorSplit out;
  for (std::size_t l = 0; l < prior.lbar_count(); ++l) {
    for (std::size_t s = 0; s < prior.sensitive_count(); ++s) {
      const double w = prior.joint(l, s);
      if (w <= 0.0) continue;
      const double mu = mech.release_prob(l, s);
      if (prior.answer(l, s)) {
        out.false_negative += w * (1.0 - mu);
      } else {
        out.false_positive += w * mu;
      }
    }
  }
  return out;
}

// Exact E|sum_k (Y_k - A_k)| for K i.i.d. users: the per-user difference
// takes values -1, 0, +1 and the K-fold convolution is done explicitly.
inline double local_eae_exact(const ErrorSplit& split, std::size_t users) {
  if (users == 0) return 0.0;
  const double up = split.false_positive;
  const double down = split.false_negative;
  const double stay = std::max(0.0, 1.0 - up - down);
  // dist[d + users] = P(sum = d)
  std::vector<double> dist(2 * users + 1, 0.0);
  std::vector<double> next(dist.size(), 0.0);
  dist[users] = 1.0;
  for (std::size_t k = 0; k < users; ++k) {
    const std::size_t lo = users - k;
    const std::size_t hi = users + k;
    std::fill(next.begin() + static_cast<std::ptrdiff_t>(lo - 1),
              next.begin() + static_cast<std::ptrdiff_t>(hi + 2), 0.0);
    for (std::size_t i = lo; i <= hi; ++i) {
      const double p = dist[i];
      if (p == 0.0) continue;
      next[i - 1] += p * down;
      next[i] += p * stay;
      next[i + 1] += p * up;
    }
    dist.swap(next);
  }
  double eae = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    eae += std::fabs(static_cast<double>(i) - static_cast<double>(users)) * dist[i];
  }
  return eae;
}

// Release-table text format: '#' comment lines, then one
// "x_Lbar,x_S,mu" row per cell with tuples spelled in the alphabet ("-" for
// the empty tuple). Every cell must appear exactly once.
inline void write_release_table(std::ostream& out, const LocalMechanism& mech,
                                const Alphabet& alphabet) {
  internal::require(alphabet.size() == mech.alphabet_size(), "alphabet size mismatch");
  out << "# query " << mech.query().loci.to_string() << " = "
      << alphabet.render(mech.query().reference) << ", sensitive "
      << mech.sensitive().to_string() << ", mechanism " << to_string(mech.kind()) << '\n';
  out << "# lbar,sensitive,release_prob\n";
  const std::size_t wl = mech.nonsensitive_loci().size();
  const std::size_t ws = mech.sensitive().size();
  auto spell = [&](std::size_t idx, std::size_t width) {
    if (width == 0) return std::string("-");
    return alphabet.render(decode_tuple(idx, width, mech.alphabet_size()));
  };
  std::ostringstream row;
  row.precision(17);
  for (std::size_t l = 0; l < mech.lbar_count(); ++l) {
    for (std::size_t s = 0; s < mech.sensitive_count(); ++s) {
      row.str("");
      row << spell(l, wl) << ',' << spell(s, ws) << ',' << mech.release_prob(l, s);
      out << row.str() << '\n';
    }
  }
}

inline LocalMechanism read_release_table(std::istream& in, const Query& query,
                                         const LocusSet& sensitive, const Alphabet& alphabet) {
  const LocusSet lbar = query.loci.minus(sensitive);
  const int c = alphabet.size();
  const std::size_t nl = tuple_count(lbar.size(), c);
  const std::size_t ns = tuple_count(sensitive.size(), c);
  std::vector<double> table(nl * ns, 0.0);
  std::vector<char> seen(nl * ns, 0);
  auto index = [&](const std::string& text, std::size_t width, std::size_t line_no) {
    const std::string where = "table line " + std::to_string(line_no) + ": ";
    if (width == 0) {
      internal::require(text == "-", where + "expected '-' for an empty tuple");
      return std::size_t{0};
    }
    internal::require(text.size() == width,
                      where + "tuple '" + text + "' should have " + std::to_string(width) + " symbols");
    return encode_tuple(alphabet.parse(text), c);
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    const std::string where = "table line " + std::to_string(line_no) + ": ";
    internal::require(b != std::string::npos, where + "expected lbar,sensitive,release_prob");
    const std::size_t l = index(line.substr(0, a), lbar.size(), line_no);
    const std::size_t s = index(line.substr(a + 1, b - a - 1), sensitive.size(), line_no);
    double p = 0.0;
    try {
      std::size_t used = 0;
      const std::string num = line.substr(b + 1);
      p = std::stod(num, &used);
      internal::require(used == num.size(), "trailing characters");
    } catch (const std::exception&) {
      throw ValidationError(where + "release_prob is not a number");
    }
    internal::require(p >= 0.0 && p <= 1.0, where + "release_prob must lie in [0,1]");
    internal::require(!seen[l * ns + s], where + "duplicate cell");
    seen[l * ns + s] = 1;
    table[l * ns + s] = p;
  }
  for (char v : seen) internal::require(v != 0, "table does not cover every (lbar, sensitive) cell");
  return LocalMechanism::from_table(query, sensitive, c, std::move(table));
}

}  // namespace ppcount
