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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "ppcount/audit.hpp"
#include "ppcount/central_mechanism.hpp"
#include "ppcount/model.hpp"

namespace ppcount {
namespace {

std::vector<Symbol> sym(const char* s) { return Alphabet::dna().parse(s); }

double choose(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

TEST(AggregateDistribution, BinomialAndPointMass) {
  const std::vector<double> p(3, 0.25);
  const auto d = aggregate_distribution(p);
  for (int a = 0; a <= 3; ++a) {
    EXPECT_NEAR(d(a), choose(3, a) * std::pow(0.25, a) * std::pow(0.75, 3 - a), 1e-15);
  }
  const auto point = aggregate_distribution(std::vector<double>{0.0, 1.0});
  EXPECT_EQ(point(0), 0.0);
  EXPECT_EQ(point(1), 1.0);
  EXPECT_EQ(point(2), 0.0);
  const auto b = binomial_pmf(40, 0.3);
  for (int a = 0; a <= 40; ++a) {
    EXPECT_NEAR(b[a], choose(40, a) * std::pow(0.3, a) * std::pow(0.7, 40 - a), 1e-13);
  }
}

TEST(AggregateDistribution, PoissonBinomialMatchesBruteForce) {
  const std::vector<double> p{0.1, 0.55, 0.9, 0.33, 0.02};
  std::vector<double> oracle(6, 0.0);
  for (int mask = 0; mask < 32; ++mask) {
    double w = 1.0;
    int a = 0;
    for (int k = 0; k < 5; ++k) {
      const bool on = (mask >> k) & 1;
      w *= on ? p[k] : 1.0 - p[k];
      a += on;
    }
    oracle[a] += w;
  }
  const auto d = aggregate_distribution(p);
  for (int a = 0; a <= 5; ++a) EXPECT_NEAR(d(a), oracle[a], 1e-12);
}

// Literal enumeration for K users over sensitive locus 1 and query locus 2
// of a chain: P(A = a | w) sums over all hidden tuples, m(a) minimizes over
// all matrices w of positive probability.
struct LiteralCentral {
  std::vector<std::vector<double>> conditional;  // [w][a]
  std::vector<double> matrix_prob;
  std::vector<double> minimum;
  std::vector<double> aggregate;
};

LiteralCentral enumerate_central(const std::vector<const MarkovChainModel*>& users, Symbol v) {
  const std::size_t k_users = users.size();
  std::size_t matrices = 1;
  for (std::size_t k = 0; k < k_users; ++k) matrices *= 4;
  LiteralCentral out;
  out.minimum.assign(k_users + 1, std::numeric_limits<double>::infinity());
  out.aggregate.assign(k_users + 1, 0.0);
  for (std::size_t w = 0; w < matrices; ++w) {
    const auto x1 = decode_tuple(w, k_users, 4);
    double pw = 1.0;
    for (std::size_t k = 0; k < k_users; ++k) {
      pw *= users[k]->joint_prob(LocusSet({1}), std::vector<Symbol>{x1[k]});
    }
    std::vector<double> cond(k_users + 1, 0.0);
    for (std::size_t hidden = 0; hidden < matrices; ++hidden) {
      const auto x2 = decode_tuple(hidden, k_users, 4);
      double p = 1.0;
      std::size_t a = 0;
      for (std::size_t k = 0; k < k_users; ++k) {
        p *= conditional_prob(*users[k], LocusSet({2}), std::vector<Symbol>{x2[k]}, LocusSet({1}),
                              std::vector<Symbol>{x1[k]});
        a += x2[k] == v;
      }
      cond[a] += p;
    }
    if (pw > 0.0) {
      for (std::size_t a = 0; a <= k_users; ++a) {
        out.minimum[a] = std::min(out.minimum[a], cond[a]);
        out.aggregate[a] += pw * cond[a];
      }
    }
    out.conditional.push_back(std::move(cond));
    out.matrix_prob.push_back(pw);
  }
  return out;
}

TEST(CentralModel, ThreeUserExampleMatchesLiteralSummation) {
  const auto chain = MarkovChainModel::with_stay_prob(2, 0.7);
  const Query q(LocusSet({2}), sym("T"));
  const LocusSet s({1});
  const auto lit = enumerate_central({&chain, &chain, &chain}, sym("T")[0]);
  const auto model = CentralModel::iid(chain, q, s, 3);
  for (std::size_t w = 0; w < lit.conditional.size(); ++w) {
    const auto cells = decode_tuple(w, 3, 4);
    const std::vector<std::size_t> idx(cells.begin(), cells.end());
    const auto cond = model.conditional_aggregate(idx);
    for (std::size_t a = 0; a <= 3; ++a) {
      EXPECT_NEAR(cond[a], lit.conditional[w][a], 1e-14);
      EXPECT_NEAR(model.conditional_at(a, idx), lit.conditional[w][a], 1e-14);
    }
    const auto sm = SensitiveMatrix::from_indices(idx, 1, 4);
    const auto via_matrix = conditional_aggregate(chain, q, s, sm);
    for (std::size_t a = 0; a <= 3; ++a) EXPECT_NEAR(via_matrix[a], lit.conditional[w][a], 1e-14);
  }
  for (std::size_t a = 0; a <= 3; ++a) {
    EXPECT_NEAR(model.min_conditional(a), lit.minimum[a], 1e-14) << "a=" << a;
    EXPECT_NEAR(model.aggregate()(a), lit.aggregate[a], 1e-14);
  }
}

TEST(CentralModel, HeterogeneousUsersMatchLiteralSummation) {
  const auto c1 = MarkovChainModel::with_stay_prob(2, 0.7);
  const auto c2 = MarkovChainModel::with_stay_prob(2, 0.4);
  const auto c3 = MarkovChainModel::with_stay_prob(2, 0.9, {0.4, 0.3, 0.2, 0.1});
  const Query q(LocusSet({2}), sym("A"));
  const LocusSet s({1});
  std::vector<UserPrior> priors;
  for (const auto* c : {&c1, &c2, &c3}) priors.push_back(UserPrior::from(LocalPrior::analyze(*c, q, s)));
  const auto model = CentralModel::heterogeneous(priors, 1, 4);
  const auto lit = enumerate_central({&c1, &c2, &c3}, sym("A")[0]);
  for (std::size_t a = 0; a <= 3; ++a) {
    EXPECT_NEAR(model.min_conditional(a), lit.minimum[a], 1e-14) << "a=" << a;
    EXPECT_NEAR(model.aggregate()(a), lit.aggregate[a], 1e-14);
  }
  for (std::size_t w = 0; w < lit.conditional.size(); ++w) {
    const auto cells = decode_tuple(w, 3, 4);
    const std::vector<std::size_t> idx(cells.begin(), cells.end());
    EXPECT_NEAR(model.matrix_prob(idx), lit.matrix_prob[w], 1e-15);
    for (std::size_t a = 0; a <= 3; ++a) {
      EXPECT_NEAR(model.conditional_at(a, idx), lit.conditional[w][a], 1e-14);
    }
  }
}

TEST(CentralModel, ExpectedErrorMatchesChannelDefinition) {
  for (double phi : {0.4, 0.7, 1.0}) {
    const auto chain = MarkovChainModel::with_stay_prob(2, phi);
    const auto lit = enumerate_central({&chain, &chain, &chain}, sym("G")[0]);
    // E|Y - A| directly from the channel P_A(y)(1 - R) + 1{y = a} R.
    double eae = 0.0;
    for (std::size_t w = 0; w < lit.conditional.size(); ++w) {
      if (lit.matrix_prob[w] <= 0.0) continue;
      for (std::size_t a = 0; a <= 3; ++a) {
        const double pa = lit.conditional[w][a];
        if (pa <= 0.0) continue;
        const double r = std::min(1.0, lit.minimum[a] / pa);
        for (std::size_t y = 0; y <= 3; ++y) {
          const double mu = lit.aggregate[y] * (1.0 - r) + (y == a ? r : 0.0);
          eae += lit.matrix_prob[w] * pa * mu * std::fabs(static_cast<double>(y) - static_cast<double>(a));
        }
      }
    }
    const double closed =
        central_expected_error(chain, Query(LocusSet({2}), sym("G")), LocusSet({1}), 3);
    EXPECT_NEAR(closed, eae, 1e-13) << "phi=" << phi;
  }
}

TEST(CentralModel, IndependentDataGivesIdentityChannel) {
  const auto iid = MarkovChainModel::with_stay_prob(6, 0.25);
  const Query q(LocusSet({4, 5}), sym("AT"));
  const auto channel = build_central_channel(iid, q, LocusSet({1, 2}), 4);
  for (std::size_t w = 0; w < channel.matrix_count(); w += 97) {
    for (std::size_t a = 0; a <= 4; ++a) {
      EXPECT_NEAR(channel.ratio(a, w), 1.0, 1e-12);
      for (std::size_t y = 0; y <= 4; ++y) {
        EXPECT_NEAR(channel.release_prob(y, a, w), y == a ? 1.0 : 0.0, 1e-12);
      }
    }
  }
  EXPECT_EQ(central_expected_error(iid, q, LocusSet({1, 2}), 50), 0.0);
}

TEST(CentralModel, UniformIidLowMismatchHasZeroError) {
  const auto iid = MarkovChainModel::with_stay_prob(8, 0.25);
  for (std::size_t k : {1u, 10u, 1000u}) {
    EXPECT_EQ(central_expected_error(iid, Query(LocusSet({5, 6}), sym("CC")), LocusSet({3, 4}), k), 0.0);
  }
}

TEST(CentralChannel, RowsSumToOneAndCapacityIsEnforced) {
  const auto m = MarkovChainModel::with_stay_prob(5, 0.6);
  const Query q(LocusSet({3, 4}), sym("AT"));
  const auto channel = build_central_channel(m, q, LocusSet({2, 3}), 3);
  for (std::size_t w = 0; w < channel.matrix_count(); w += 13) {
    for (std::size_t a = 0; a <= 3; ++a) {
      double total = 0.0;
      for (std::size_t y = 0; y <= 3; ++y) total += channel.release_prob(y, a, w);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(build_central_channel(m, q, LocusSet({2, 3}), 6), CapacityError);
}

TEST(CentralChannel, ZeroRatioSamplesFromPrior) {
  const auto m = MarkovChainModel::with_stay_prob(4, 0.7);
  const Query q(LocusSet({2}), sym("A"));
  const auto channel = build_central_channel(m, q, LocusSet({1}), 3).with_constant_ratio(0.0);
  EXPECT_LE(audit_central(channel).max_deviation, 1e-15);
  Rng rng(5);
  const int n = 1000000;
  std::vector<int> counts(4, 0);
  const std::vector<std::size_t> cells{0, 1, 2};
  for (int i = 0; i < n; ++i) ++counts[central_release(channel, 3, cells, rng)];
  const auto& pa = channel.model().aggregate();
  for (std::size_t y = 0; y <= 3; ++y) {
    const double sigma = std::sqrt(pa(y) * (1 - pa(y)) / n);
    EXPECT_LE(std::fabs(static_cast<double>(counts[y]) / n - pa(y)), 3.0 * sigma) << "y=" << y;
  }
}

TEST(CentralModel, FrozenChainWithManyUsersStaysFinite) {
  const auto frozen = MarkovChainModel::with_stay_prob(8, 1.0);
  const Query q(LocusSet({5, 6}), sym("AA"));
  const auto model = CentralModel::iid(frozen, q, LocusSet({3, 4}), 1000);
  EXPECT_TRUE(std::isfinite(central_expected_error(model)));
  std::vector<std::size_t> cells(1000, 0);  // every user AA at S
  Rng rng(1);
  EXPECT_LE(central_release(model, 1000, cells, rng), 1000u);
}

TEST(CentralRelease, SeedReproduces) {
  const auto m = MarkovChainModel::with_stay_prob(5, 0.6);
  const auto model = CentralModel::iid(m, Query(LocusSet({3}), sym("A")), LocusSet({2}), 20);
  std::vector<std::size_t> cells(20, 1);
  Rng a(8), b(8);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(central_release(model, 4, cells, a), central_release(model, 4, cells, b));
}

}  // namespace
}  // namespace ppcount
