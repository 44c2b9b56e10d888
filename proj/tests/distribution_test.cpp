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

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "ppcount/entropy.hpp"
#include "ppcount/hmm.hpp"
#include "ppcount/model.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {
namespace {

using testing::enumerate_chain;

std::vector<Symbol> sym(const char* s) { return Alphabet::dna().parse(s); }

TEST(Alphabet, ParsesAndRendersDna) {
  const Alphabet a = Alphabet::dna();
  EXPECT_EQ(a.size(), 4);
  EXPECT_EQ(a.render(a.parse("GATTACA")), "GATTACA");
  EXPECT_THROW(a.parse("ATN"), ValidationError);
  EXPECT_THROW(Alphabet("AA"), ValidationError);
}

TEST(LocusSet, RejectsUnsortedZeroAndDuplicates) {
  EXPECT_THROW(LocusSet({2, 1}), ValidationError);
  EXPECT_THROW(LocusSet({0, 1}), ValidationError);
  EXPECT_THROW(LocusSet::from_unsorted({3, 1, 3}), ValidationError);
  EXPECT_EQ(LocusSet::from_unsorted({5, 2}).to_string(), "2,5");
  const LocusSet a({1, 2, 3});
  const LocusSet b({3, 4});
  EXPECT_EQ(a.intersect(b), LocusSet({3}));
  EXPECT_EQ(a.minus(b), LocusSet({1, 2}));
  EXPECT_EQ(a.union_with(b), LocusSet({1, 2, 3, 4}));
}

TEST(Query, ReferenceLengthMustMatchLoci) {
  const Query q(LocusSet({1, 3}), sym("AG"));
  EXPECT_EQ(q.reference_at(3), sym("G")[0]);
  EXPECT_EQ(q.restricted_to(LocusSet({3})).reference, sym("G"));
  EXPECT_THROW(Query(LocusSet({1, 3}), sym("A")), ValidationError);
}

TEST(Dataset, RoundTripsAndReportsBadLines) {
  const Alphabet a = Alphabet::dna();
  std::istringstream in("ATGC\nCCGA\n");
  const Dataset d = read_dataset(in, a);
  ASSERT_EQ(d.size(), 2u);
  std::ostringstream out;
  write_dataset(out, d, a);
  EXPECT_EQ(out.str(), "ATGC\nCCGA\n");

  std::istringstream bad_symbol("ATGC\nATXC\n");
  try {
    read_dataset(bad_symbol, a);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2, column 3"), std::string::npos);
  }
  std::istringstream ragged("ATGC\nATG\n");
  EXPECT_THROW(read_dataset(ragged, a), ValidationError);
  std::istringstream empty("");
  EXPECT_THROW(read_dataset(empty, a), ValidationError);
}

TEST(MarkovJoint, WorkedValues) {
  const auto iid = MarkovChainModel::with_stay_prob(6, 0.25);
  EXPECT_NEAR(iid.joint_prob(LocusSet({1, 2}), sym("AT")), 1.0 / 16.0, 1e-15);

  const auto frozen = MarkovChainModel::with_stay_prob(6, 1.0);
  EXPECT_NEAR(frozen.joint_prob(LocusSet({1, 5}), sym("AA")), 0.25, 1e-15);
  EXPECT_EQ(frozen.joint_prob(LocusSet({1, 5}), sym("AT")), 0.0);

  // Explicit 4-state matrix-vector product for X2.
  const auto m = MarkovChainModel::with_stay_prob(6, 0.7);
  const std::vector<double> init(4, 0.25);
  double x2_a = 0.0;
  for (int i = 0; i < 4; ++i) x2_a += init[i] * (i == 0 ? 0.7 : 0.1);
  EXPECT_NEAR(m.joint_prob(LocusSet({2}), sym("A")), x2_a, 1e-15);
  EXPECT_NEAR(x2_a, 0.25, 1e-15);
}

TEST(MarkovJoint, MatchesFullEnumerationOnRandomChains) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int length = 5;
    const auto chain = testing::random_chain(length, 3, rng);
    const auto all = enumerate_chain(chain.initial, chain.transition, length);
    const auto loci_vec = testing::random_loci(1 + static_cast<int>(rng.uniform_index(4)), length, rng);
    const LocusSet loci(loci_vec);
    const JointTable table = chain.model.joint_table(loci);
    std::vector<double> oracle(table.size(), 0.0);
    for (const auto& w : all) oracle[encode_projection(w.seq, loci, 3)] += w.prob;
    double total = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      EXPECT_NEAR(table[i], oracle[i], 1e-13);
      total += table[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
  }
}

TEST(MarkovJoint, UniformStayOneOverCIsIid) {
  const auto m = MarkovChainModel::with_stay_prob(8, 0.25);
  const LocusSet loci({1, 3, 4, 8});
  const JointTable t = m.joint_table(loci);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t[i], 1.0 / 256.0, 1e-15);
}

TEST(Conditional, WorkedValuesAndProductIdentity) {
  const auto m = MarkovChainModel::with_stay_prob(6, 0.7);
  EXPECT_NEAR(conditional_prob(m, LocusSet({2}), sym("A"), LocusSet({1}), sym("A")), 0.7, 1e-15);
  EXPECT_NEAR(conditional_prob(m, LocusSet({2}), sym("A"), LocusSet({1}), sym("T")), 0.1, 1e-15);
  EXPECT_EQ(conditional_prob(m, LocusSet(), {}, LocusSet({1}), sym("T")), 1.0);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto chain = testing::random_chain(6, 4, rng);
    const auto target = std::vector<int>{1 + static_cast<int>(rng.uniform_index(3))};
    const auto given = std::vector<int>{4, 6};
    std::vector<Symbol> tv{static_cast<Symbol>(rng.uniform_index(4))};
    std::vector<Symbol> gv{static_cast<Symbol>(rng.uniform_index(4)),
                           static_cast<Symbol>(rng.uniform_index(4))};
    const double cond = conditional_prob(chain.model, LocusSet(target), tv, LocusSet(given), gv);
    const LocusSet all = LocusSet(target).union_with(LocusSet(given));
    std::vector<Symbol> av{tv[0], gv[0], gv[1]};
    EXPECT_NEAR(cond * chain.model.joint_prob(LocusSet(given), gv), chain.model.joint_prob(all, av),
                1e-12);
  }
}

TEST(Conditional, ZeroProbabilityGivenIsRejected) {
  const auto frozen = MarkovChainModel::with_stay_prob(4, 1.0);
  EXPECT_THROW(conditional_prob(frozen, LocusSet({3}), sym("A"), LocusSet({1, 2}), sym("AT")),
               ZeroProbabilityError);
}

TEST(Mismatch, Values) {
  const auto iid = MarkovChainModel::with_stay_prob(8, 0.25);
  EXPECT_EQ(mismatch_prob(iid, Query(LocusSet({5, 6}), sym("AT")), LocusSet({3, 4})), 0.0);
  EXPECT_NEAR(mismatch_prob(iid, Query(LocusSet({4, 5}), sym("AT")), LocusSet({3, 4})), 0.75, 1e-15);
  EXPECT_NEAR(mismatch_prob(iid, Query(LocusSet({3, 4}), sym("AT")), LocusSet({3, 4})), 15.0 / 16.0,
              1e-15);
}

TEST(Sampling, FrozenChainIsConstantAndSeedsReproduce) {
  const auto frozen = MarkovChainModel::with_stay_prob(10, 1.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Sequence s = frozen.sample(rng);
    for (std::size_t j = 1; j < s.size(); ++j) EXPECT_EQ(s[j], s[0]);
  }
  const auto m = MarkovChainModel::with_stay_prob(10, 0.6);
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(m.sample(a), m.sample(b));
}

TEST(Sampling, FirstSymbolFollowsInitialWithinThreeSigma) {
  const std::vector<double> init{0.1, 0.2, 0.3, 0.4};
  const auto m = MarkovChainModel::with_stay_prob(3, 0.5, init);
  Rng rng(2024);
  const int n = 1000000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) ++counts[m.sample(rng)[0]];
  for (int s = 0; s < 4; ++s) {
    const double sigma = std::sqrt(init[s] * (1.0 - init[s]) / n);
    EXPECT_LE(std::fabs(static_cast<double>(counts[s]) / n - init[s]), 3.0 * sigma) << "symbol " << s;
  }
}

TEST(Tabular, FitMatchesFrequenciesAndSmoothing) {
  const Alphabet a = Alphabet::dna();
  std::istringstream in("AAT\nAAT\nACT\nGAT\n");
  const Dataset d = read_dataset(in, a);
  const auto fit = TabularModel::fit(d, 4, LocusSet({1, 2}));
  EXPECT_NEAR(fit.joint_prob(LocusSet({1, 2}), sym("AA")), 0.5, 1e-15);
  EXPECT_NEAR(fit.joint_prob(LocusSet({1}), sym("A")), 0.75, 1e-15);
  EXPECT_EQ(fit.joint_prob(LocusSet({1, 2}), sym("TT")), 0.0);
  EXPECT_THROW(fit.joint_table(LocusSet({3})), ValidationError);

  const auto smooth = TabularModel::fit(d, 4, LocusSet({1, 2}), true);
  EXPECT_NEAR(smooth.joint_prob(LocusSet({1, 2}), sym("TT")), 1.0 / 20.0, 1e-15);
  EXPECT_NEAR(smooth.joint_prob(LocusSet({1, 2}), sym("AA")), 3.0 / 20.0, 1e-15);
}

TEST(Tabular, CapacityIsEnforced) {
  const Alphabet a = Alphabet::dna();
  std::istringstream in(std::string(14, 'A') + "\n");
  const Dataset d = read_dataset(in, a);
  EXPECT_THROW(TabularModel::fit(d, 4, LocusSet::range(1, 13)), CapacityError);
}

TEST(Tabular, JointSumsToOneOnRandomSupports) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const LocusSet support(testing::random_loci(5, 8, rng));
    const auto model = testing::random_tabular(8, 4, support, rng);
    const LocusSet sub(testing::random_loci(3, 8, rng));
    if (!sub.is_subset_of(support)) continue;
    EXPECT_NEAR(model.joint_table(sub).total(), 1.0, 1e-10);
  }
}

TEST(Hmm, CopiesReferenceRowsWithoutSwitchOrNoise) {
  Rng ref_rng(1);
  HmmGeneratorConfig config;
  config.reference = uniform_dataset(5, 12, 4, ref_rng);
  config.switch_keep_prob = 1.0;
  config.substitution_prob = 0.0;
  config.seed = 17;
  const Dataset out = hmm_generate(config, 200);
  std::set<std::vector<Symbol>> rows;
  for (const auto& r : config.reference) rows.insert(r.values);
  for (const auto& s : out) EXPECT_TRUE(rows.count(s.values)) << "row not copied verbatim";
}

TEST(Hmm, SeedReproducesAndSingleRowNeedsPiOne) {
  Rng ref_rng(1);
  HmmGeneratorConfig config;
  config.reference = uniform_dataset(10, 8, 4, ref_rng);
  config.switch_keep_prob = 0.5;
  config.substitution_prob = 0.01;
  config.seed = 123;
  EXPECT_EQ(hmm_generate(config, 50), hmm_generate(config, 50));

  HmmGeneratorConfig single = config;
  single.reference.resize(1);
  EXPECT_THROW(hmm_generate(single, 1), ValidationError);
  single.switch_keep_prob = 1.0;
  EXPECT_NO_THROW(hmm_generate(single, 1));
}

TEST(Entropy, BinaryEntropyAndInverse) {
  EXPECT_EQ(binary_entropy(0.0), 0.0);
  EXPECT_EQ(binary_entropy(1.0), 0.0);
  EXPECT_NEAR(binary_entropy(0.5), 1.0, 1e-15);
  EXPECT_NEAR(inverse_binary_entropy(1.0), 0.5, 1e-15);
  EXPECT_EQ(inverse_binary_entropy(0.0), 0.0);
  EXPECT_NEAR(inverse_binary_entropy(binary_entropy(0.15)), 0.15, 1e-9);
  EXPECT_NEAR(binary_entropy(inverse_binary_entropy(0.3)), 0.3, 1e-12);
  EXPECT_THROW(inverse_binary_entropy(1.1), ValidationError);
  EXPECT_THROW(binary_entropy(-0.5), ValidationError);
}

}  // namespace
}  // namespace ppcount
