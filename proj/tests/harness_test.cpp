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
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "ppcount/harness.hpp"

namespace ppcount {
namespace {

const std::string kPlans = std::string(PPCOUNT_SOURCE_DIR) + "/plans/";

ExperimentPlan plan_from(const std::string& text) {
  std::istringstream in(text);
  return parse_plan(in);
}

std::string results_text(const PlanOutput& out) {
  std::ostringstream os;
  write_results_csv(os, out.results);
  write_audit_csv(os, out.audits);
  return os.str();
}

const ResultRow* find_row(const PlanOutput& out, const std::string& point, const std::string& mech,
                          const std::string& metric, const std::string& source,
                          const std::string& case_name = "") {
  for (const auto& r : out.results) {
    if (r.point == point && r.mechanism == mech && r.metric == metric && r.source == source &&
        (case_name.empty() || r.case_name == case_name)) {
      return &r;
    }
  }
  return nullptr;
}

const char* kSmallPlan =
    "scenario = small\n"
    "model = markov\n"
    "length = 6\n"
    "phi = 0.25,0.6\n"
    "users = 40\n"
    "trials = 30\n"
    "seed = 11\n"
    "mechanisms = M1,M2,central,RR,laplace,mask_uniform,mask_prior\n"
    "case = c1; loci = 4,3; values = TA; sensitive = 2,3\n";

TEST(PlanParsing, ReadsFieldsAndSortsQueryValues) {
  const auto plan = plan_from(kSmallPlan);
  EXPECT_EQ(plan.scenario, "small");
  ASSERT_EQ(plan.grid.size(), 2u);
  ASSERT_EQ(plan.cases.size(), 1u);
  EXPECT_EQ(plan.cases[0].query.loci, LocusSet({3, 4}));
  EXPECT_EQ(plan.cases[0].query.reference, Alphabet::dna().parse("AT"));
  EXPECT_EQ(plan.mechanisms.size(), 7u);
}

TEST(PlanParsing, GridRanges) {
  const auto g = internal::parse_grid("0.25:0.05:1.0");
  ASSERT_EQ(g.size(), 16u);
  EXPECT_EQ(g.front(), 0.25);
  EXPECT_NEAR(g.back(), 1.0, 1e-12);
  EXPECT_EQ(internal::parse_grid("0,0.1,0.5").size(), 3u);
  EXPECT_THROW(internal::parse_grid("1:0.1:0"), ValidationError);
  EXPECT_THROW(internal::parse_grid("0:0:1"), ValidationError);
}

TEST(PlanParsing, ErrorsNameTheLine) {
  const auto expect_line = [](const std::string& text, const std::string& line) {
    try {
      plan_from(text);
      FAIL() << "accepted: " << text;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
    }
  };
  expect_line("model = markov\nphi = 0.5\nbogus = 1\n", "plan line 3");
  expect_line("model = markov\nphi 0.5\n", "plan line 2");
  expect_line("phi = 0.5\nb = 0.1\n", "plan line 2");
  expect_line("phi = 0.5\nusers = -4\n", "plan line 2");
  expect_line("phi = 0.5\ncase = x; loci = 3,4; values = A\n", "plan line 2");
  expect_line("phi = 0.5\nlength = 5\ncase = x; loci = 9; values = A\n", "");
  EXPECT_THROW(load_plan(kPlans + "missing.plan"), ValidationError);
}

TEST(RunPlan, ByteIdenticalAcrossRuns) {
  const auto plan = plan_from(kSmallPlan);
  EXPECT_EQ(results_text(run_plan(plan)), results_text(run_plan(plan)));
  auto other = plan;
  other.seed = 12;
  EXPECT_NE(results_text(run_plan(plan)), results_text(run_plan(other)));
}

TEST(RunPlan, IndependentPointHasZeroError) {
  auto plan = load_plan(kPlans + "fig3a.plan");
  plan.grid = {0.25};
  plan.trials = 50;
  const auto out = run_plan(plan);
  for (const char* m : {"M1", "M2", "central", "mask_uniform", "mask_prior"}) {
    const auto* mc = find_row(out, "phi=0.25", m, "EAE", "monte_carlo");
    ASSERT_NE(mc, nullptr) << m;
    EXPECT_EQ(mc->value, 0.0) << m;
  }
  for (const char* m : {"M1", "M2", "central"}) {
    const auto* cf = find_row(out, "phi=0.25", m, "EAE", "closed_form");
    ASSERT_NE(cf, nullptr) << m;
    EXPECT_EQ(cf->value, 0.0) << m;
  }
  for (const auto& a : out.audits) {
    if (a.passed) {
      EXPECT_TRUE(*a.passed) << a.mechanism;
    }
  }
}

TEST(RunPlan, IndependentTransitionsGiveZeroErrorInFig5) {
  auto plan = load_plan(kPlans + "fig5.plan");
  plan.grid = {0.25};
  plan.trials = 20;
  plan.overlap.reset();
  const auto out = run_plan(plan);
  for (const char* m : {"M1", "M2", "central"}) {
    const auto* cf = find_row(out, "b=0.25", m, "EAE", "closed_form");
    ASSERT_NE(cf, nullptr) << m;
    EXPECT_LE(cf->value, 1e-12) << m;
  }
}

// Central error and the best local error grow with the number of query
// loci that are also sensitive.
TEST(RunPlan, ErrorIsNondecreasingInOverlap) {
  auto plan = load_plan(kPlans + "fig5.plan");
  plan.trials = 1;
  const auto out = overlap_sweep(plan);
  std::map<std::size_t, double> central, best_local;
  for (const auto& r : out.results) {
    if (r.metric != "EAE" || r.source != "closed_form") continue;
    if (r.mechanism == "central") {
      central[r.overlap] = r.value;
    } else if (r.mechanism == "M1" || r.mechanism == "M2") {
      auto it = best_local.find(r.overlap);
      best_local[r.overlap] = it == best_local.end() ? r.value : std::min(it->second, r.value);
    }
  }
  for (const auto* series : {&central, &best_local}) {
    ASSERT_GE(series->size(), 2u);
    double prev = -1.0;
    for (const auto& [o, v] : *series) {
      EXPECT_GE(v, prev - 1e-12) << (series == &central ? "central" : "local") << " overlap " << o;
      prev = v;
    }
  }
}

// Best per-user error over M1 and M2 for each (case, theta), in pi order:
// stronger haplotype persistence should not make the best local error drop.
TEST(RunPlan, BestLocalErrorNondecreasingInSwitchPersistence) {
  auto plan = load_plan(kPlans + "fig6.plan");
  plan.trials = 1;
  plan.mechanisms = {"M1", "M2"};
  const auto out = run_plan(plan);
  for (const auto& c : plan.cases) {
    for (double theta : plan.theta) {
      double prev = -1.0;
      for (double pi : plan.pi) {
        const std::string point = "pi=" + format_double(pi) + ";theta=" + format_double(theta);
        const auto* r1 = find_row(out, point, "M1", "per_user_Pe", "closed_form", c.name);
        const auto* r2 = find_row(out, point, "M2", "per_user_Pe", "closed_form", c.name);
        ASSERT_NE(r1, nullptr);
        ASSERT_NE(r2, nullptr);
        const double best = std::min(r1->value, r2->value);
        EXPECT_GE(best, prev) << c.name << " " << point;
        prev = best;
      }
    }
  }
}

TEST(MaskBaseline, EmptySensitiveSetReturnsTruth) {
  Rng data_rng(2);
  const auto data = uniform_dataset(500, 6, 4, data_rng);
  const Query q(LocusSet({2, 5}), Alphabet::dna().parse("GC"));
  Rng rng(3);
  for (auto mode : {MaskMode::kUniform, MaskMode::kPrior}) {
    const auto out = mask_and_sample_baseline(data, q, LocusSet(), mode, rng);
    for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(out[i], true_answer(q, data[i]));
  }
}

TEST(MaskBaseline, FullyMaskedUniformMatchesAtRate) {
  Rng data_rng(4);
  const auto data = uniform_dataset(1, 6, 4, data_rng);
  const Dataset many(200000, data[0]);
  const Query q(LocusSet({2, 5}), Alphabet::dna().parse("GC"));
  Rng rng(5);
  const auto out = mask_and_sample_baseline(many, q, LocusSet({2, 5}), MaskMode::kUniform, rng);
  double hits = 0;
  for (int v : out) hits += v;
  const double p = 1.0 / 16.0;
  const double n = static_cast<double>(many.size());
  EXPECT_LE(std::fabs(hits / n - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(DpFrontierMatch, MapsMetricsAndCaps) {
  const auto make = [](const std::string& metric, double v) {
    ResultRow r;
    r.mechanism = "X";
    r.metric = metric;
    r.source = "closed_form";
    r.value = v;
    return r;
  };
  const auto out = dp_frontier_match(
      {make("per_user_Pe", 0.5), make("EAE", 0.5), make("EAE", 0.0), make("per_user_Pe", 1e-30),
       make("MSE", ldp_count_mse(100, 2.0))},
      100);
  ASSERT_EQ(out.size(), 5u);
  for (const auto& r : out) EXPECT_EQ(r.metric, "epsilon_matched");
  EXPECT_EQ(out[0].value, 0.0);
  EXPECT_NEAR(out[1].value, 2.0, 1e-6);
  EXPECT_EQ(out[2].value, kMaxEpsilon);
  EXPECT_EQ(out[2].source, "capped");
  EXPECT_EQ(out[3].source, "capped");
  EXPECT_NEAR(out[4].value, 2.0, 1e-6);
  EXPECT_EQ(out[4].source, "closed_form");
  EXPECT_THROW(dp_frontier_match({make("EAE", -1.0)}, 100), ValidationError);
}

TEST(RunPlan, StandardErrorShrinksWithTrials) {
  auto plan = plan_from(kSmallPlan);
  plan.grid = {0.6};
  plan.mechanisms = {"M1"};
  plan.trials = 200;
  const auto small = run_plan(plan);
  plan.trials = 3200;
  const auto large = run_plan(plan);
  const auto* a = find_row(small, "phi=0.6", "M1", "EAE", "monte_carlo");
  const auto* b = find_row(large, "phi=0.6", "M1", "EAE", "monte_carlo");
  ASSERT_TRUE(a && b);
  const double ratio = a->std_error / b->std_error;
  EXPECT_GT(ratio, 4.0 * 0.8);
  EXPECT_LT(ratio, 4.0 * 1.2);
}

TEST(RunPlan, MonteCarloAgreesWithClosedForms) {
  auto plan = plan_from(kSmallPlan);
  plan.trials = 3000;
  const auto out = run_plan(plan);
  std::size_t compared = 0;
  for (const auto& cf : out.results) {
    if (cf.source != "closed_form" || cf.metric == "lower_bound" || cf.metric == "epsilon_matched") {
      continue;
    }
    const auto* mc = find_row(out, cf.point, cf.mechanism, cf.metric, "monte_carlo", cf.case_name);
    ASSERT_NE(mc, nullptr);
    ++compared;
    EXPECT_LE(std::fabs(mc->value - cf.value), 4.0 * mc->std_error + 1e-12)
        << cf.point << " " << cf.mechanism << " " << cf.metric;
  }
  EXPECT_GT(compared, 20u);
}

}  // namespace
}  // namespace ppcount
