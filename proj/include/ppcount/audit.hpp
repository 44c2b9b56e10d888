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

// Independence audits: max over (y, x_S) of |P(Y = y | x_S) - P(Y = y)|,
// where P(Y = y) = sum_{x_S} P(x_S) P(Y = y | x_S).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ppcount/central_mechanism.hpp"
#include "ppcount/errors.hpp"
#include "ppcount/local_mechanism.hpp"
#include "ppcount/model.hpp"
#include "ppcount/random.hpp"

namespace ppcount {

inline constexpr double kExactAuditTolerance = 1e-10;
inline constexpr std::size_t kMinEmpiricalTrials = 10000;
inline constexpr std::size_t kMinStratumSamples = 30;

enum class AuditMethod { kExactEnumeration, kEmpirical };

inline std::string to_string(AuditMethod m) {
  return m == AuditMethod::kExactEnumeration ? "exact_enumeration" : "empirical";
}

struct AuditReport {
  AuditMethod method = AuditMethod::kExactEnumeration;
  double max_deviation = 0.0;
  double tolerance = kExactAuditTolerance;
  bool passed = true;
  // Output value and sensitive index (tuple or matrix) of the worst cell.
  std::size_t worst_output = 0;
  std::size_t worst_sensitive = 0;
  std::size_t cells_checked = 0;
  // Empirical audits only.
  std::size_t trials = 0;
  double max_standard_error = 0.0;
  std::vector<std::size_t> excluded_strata;

  void finalize() { passed = max_deviation <= tolerance; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = to_string(method);
    j["max_deviation"] = max_deviation;
    j["tolerance"] = tolerance;
    j["passed"] = passed;
    j["worst_cell"] = {{"output", worst_output}, {"sensitive", worst_sensitive}};
    j["cells_checked"] = cells_checked;
    if (method == AuditMethod::kEmpirical) {
      j["trials"] = trials;
      j["max_standard_error"] = max_standard_error;
      j["excluded_strata"] = excluded_strata;
    }
    return j;
  }

  static std::string csv_header() {
    return "method,max_deviation,tolerance,passed,worst_output,worst_sensitive";
  }

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << to_string(method) << ',' << max_deviation << ',' << tolerance << ','
       << (passed ? "true" : "false") << ',' << worst_output << ',' << worst_sensitive;
    return os.str();
  }
};

// Exact audit of a per-user table against the prior of `model`.
inline AuditReport audit_local(const LocalMechanism& mech, const SequenceModel& model,
                               const LocusSet& sensitive) {
  internal::require(mech.sensitive() == sensitive,
                    "mechanism was built for a different sensitive set");
  const LocalPrior prior = LocalPrior::analyze(model, mech.query(), sensitive);
  internal::require(prior.lbar_count() == mech.lbar_count(), "mechanism and model disagree");

  const std::size_t ns = prior.sensitive_count();
  std::vector<double> release_given(ns, 0.0);
  double release_total = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    if (prior.sensitive_prob(s) <= 0.0) continue;
    double p = 0.0;
    for (std::size_t l = 0; l < prior.lbar_count(); ++l) {
      p += mech.release_prob(l, s) * prior.conditional(l, s);
    }
    release_given[s] = p;
    release_total += prior.sensitive_prob(s) * p;
  }
  AuditReport r;
  for (std::size_t s = 0; s < ns; ++s) {
    if (prior.sensitive_prob(s) <= 0.0) continue;
    ++r.cells_checked;
    // Y is binary, so the deviation for Y = 0 mirrors Y = 1.
    const double dev = std::fabs(release_given[s] - release_total);
    if (dev > r.max_deviation) {
      r.max_deviation = dev;
      r.worst_output = 1;
      r.worst_sensitive = s;
    }
  }
  r.finalize();
  return r;
}

// Exact audit of a materialized central channel.
inline AuditReport audit_central(const CentralChannel& channel) {
  const auto& model = channel.model();
  const std::size_t n = model.users() + 1;

  // Output law per row class, and the probability mass of each class.
  std::vector<std::vector<double>> output(channel.class_count());
  std::vector<std::size_t> representative(channel.class_count(), 0);
  std::vector<double> class_mass(channel.class_count(), 0.0);
  std::vector<char> done(channel.class_count(), 0);
  for (std::size_t w = 0; w < channel.matrix_count(); ++w) {
    const std::size_t c = channel.row_class(w);
    if (c == CentralChannel::kUnreachable) continue;
    class_mass[c] += model.matrix_prob(channel.matrix_cells(w));
    if (done[c]) continue;
    done[c] = 1;
    representative[c] = w;
    const auto cond = channel.conditional(w);
    std::vector<double> out(n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
      double p = 0.0;
      for (std::size_t a = 0; a < n; ++a) p += channel.release_prob(y, a, w) * cond[a];
      out[y] = p;
    }
    output[c] = std::move(out);
  }
  std::vector<double> reference(n, 0.0);
  for (std::size_t c = 0; c < output.size(); ++c) {
    for (std::size_t y = 0; y < n; ++y) reference[y] += class_mass[c] * output[c][y];
  }
  AuditReport r;
  for (std::size_t c = 0; c < output.size(); ++c) {
    for (std::size_t y = 0; y < n; ++y) {
      ++r.cells_checked;
      const double dev = std::fabs(output[c][y] - reference[y]);
      if (dev > r.max_deviation) {
        r.max_deviation = dev;
        r.worst_output = y;
        r.worst_sensitive = representative[c];
      }
    }
  }
  r.finalize();
  return r;
}

inline AuditReport audit_central(const SequenceModel& model, const Query& query,
                                 const LocusSet& sensitive, std::size_t users,
                                 std::size_t capacity = kDefaultCentralCapacity) {
  return audit_central(build_central_channel(model, query, sensitive, users, capacity));
}

// Statistical audit. `draw(rng)` returns one (sensitive stratum, output)
// observation; strata with fewer than 30 samples are excluded and listed.
// Passes when the max deviation is within 4x the largest binomial standard
// error among the compared cells.
template <typename Draw>
AuditReport audit_empirical(Draw&& draw, std::size_t trials, Rng& rng) {
  if (trials < kMinEmpiricalTrials) {
    throw ValidationError("empirical audit needs at least " + std::to_string(kMinEmpiricalTrials) +
                          " trials");
  }
  std::map<std::size_t, std::map<std::size_t, std::size_t>> counts;
  std::map<std::size_t, std::size_t> stratum_size;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [stratum, y] = draw(rng);
    ++counts[stratum][y];
    ++stratum_size[stratum];
  }
  AuditReport r;
  r.method = AuditMethod::kEmpirical;
  r.trials = trials;

  std::size_t kept = 0;
  std::map<std::size_t, std::size_t> pooled;
  for (const auto& [stratum, n] : stratum_size) {
    if (n < kMinStratumSamples) {
      r.excluded_strata.push_back(stratum);
      continue;
    }
    kept += n;
    for (const auto& [y, c] : counts[stratum]) pooled[y] += c;
  }
  if (kept == 0) {
    r.tolerance = 0.0;
    r.passed = false;
    return r;
  }
  for (const auto& [stratum, n] : stratum_size) {
    if (n < kMinStratumSamples) continue;
    const auto& row = counts[stratum];
    for (const auto& [y, total_y] : pooled) {
      const double p_ref = static_cast<double>(total_y) / static_cast<double>(kept);
      const auto it = row.find(y);
      const double hits = it == row.end() ? 0.0 : static_cast<double>(it->second);
      const double p_hat = hits / static_cast<double>(n);
      const double se = std::sqrt(p_ref * (1.0 - p_ref) / static_cast<double>(n));
      ++r.cells_checked;
      r.max_standard_error = std::max(r.max_standard_error, se);
      const double dev = std::fabs(p_hat - p_ref);
      if (dev > r.max_deviation) {
        r.max_deviation = dev;
        r.worst_output = y;
        r.worst_sensitive = stratum;
      }
    }
  }
  r.tolerance = 4.0 * r.max_standard_error;
  r.finalize();
  return r;
}

// Empirical audit of any per-user release rule: sequences are drawn from
// `model` and stratified by their sensitive tuple.
template <typename Release>
AuditReport audit_empirical(Release&& release_fn, const SequenceModel& model,
                            const LocusSet& sensitive, std::size_t trials, Rng& rng) {
  sensitive.validate_within(model.length());
  const int c = model.alphabet_size();
  return audit_empirical(
      [&](Rng& g) {
        const Sequence seq = model.sample(g);
        const std::size_t y = static_cast<std::size_t>(release_fn(seq, g));
        return std::pair<std::size_t, std::size_t>(encode_projection(seq, sensitive, c), y);
      },
      trials, rng);
}

// Sampling audit of the central mechanism for instances too large to
// enumerate. Stratifies by the first user's sensitive tuple, which checks a
// necessary condition of independence from the full matrix.
inline AuditReport audit_central_empirical(const SequenceModel& model, const Query& query,
                                           const LocusSet& sensitive, std::size_t users,
                                           std::size_t trials, Rng& rng) {
  const LocalPrior prior = LocalPrior::analyze(model, query, sensitive);
  const CentralModel central = CentralModel::iid(prior, users);
  std::vector<std::size_t> cells(users);
  return audit_empirical(
      [&](Rng& g) {
        std::size_t a = 0;
        for (std::size_t k = 0; k < users; ++k) {
          const Sequence seq = model.sample(g);
          a += static_cast<std::size_t>(true_answer(query, seq));
          cells[k] = prior.sensitive_index(seq);
        }
        const std::size_t y = central_release(central, a, cells, g);
        return std::pair<std::size_t, std::size_t>(cells[0], y);
      },
      trials, rng);
}

}  // namespace ppcount
