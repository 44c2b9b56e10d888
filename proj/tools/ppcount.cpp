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

// ppcount command-line front end. Every subcommand parses flags, calls the
// library and prints what it returns.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppcount/audit.hpp"
#include "ppcount/central_mechanism.hpp"
#include "ppcount/dp_baselines.hpp"
#include "ppcount/errors.hpp"
#include "ppcount/harness.hpp"
#include "ppcount/hmm.hpp"
#include "ppcount/local_mechanism.hpp"
#include "ppcount/model.hpp"
#include "ppcount/sequence.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitCapacity = 2;
constexpr int kExitAuditFailure = 3;

using namespace ppcount;

// Flags shared by every subcommand that needs a prior.
struct ModelFlags {
  std::string alphabet = "ATGC";
  int length = 10;
  std::optional<double> phi;
  std::optional<double> b;
  std::string initial;
  std::string data;
  bool smoothing = false;

  void add(CLI::App* cmd, bool with_data) {
    cmd->add_option("--alphabet", alphabet, "Symbols in index order")->capture_default_str();
    cmd->add_option("--length", length, "Sequence length N (Markov prior)")->capture_default_str();
    auto* p = cmd->add_option("--phi", phi, "Markov stay probability");
    cmd->add_option("--b", b, "Markov off-diagonal transition probability")->excludes(p);
    cmd->add_option("--initial", initial, "Initial distribution, comma separated (default uniform)");
    if (with_data) {
      cmd->add_option("--data", data, "Dataset whose tuple frequencies form the prior");
      cmd->add_flag("--smoothing", smoothing, "Add-one smoothing for the empirical prior");
    }
  }

  bool has_markov() const { return phi.has_value() || b.has_value(); }

  std::unique_ptr<SequenceModel> markov(const Alphabet& a) const {
    const int c = a.size();
    const double stay = phi ? *phi : 1.0 - static_cast<double>(c - 1) * *b;
    std::vector<double> init = initial.empty() ? MarkovChainModel::uniform_pmf(c)
                                               : internal::parse_grid(initial);
    return std::make_unique<MarkovChainModel>(MarkovChainModel::with_stay_prob(length, stay, init));
  }

  // Markov flags win; otherwise the prior is fitted to --data over `support`.
  std::unique_ptr<SequenceModel> build(const Alphabet& a, const LocusSet& support,
                                       const Dataset* dataset) const {
    if (has_markov()) return markov(a);
    internal::require(dataset != nullptr, "give --phi/--b for a Markov prior or --data to fit one");
    return std::make_unique<TabularModel>(TabularModel::fit(*dataset, a.size(), support, smoothing));
  }
};

struct QueryFlags {
  std::string loci;
  std::string values;
  std::string sensitive;

  void add(CLI::App* cmd) {
    cmd->add_option("--loci", loci, "Queried loci, 1-based, comma separated")->required();
    cmd->add_option("--values", values, "Reference values, one symbol per locus")->required();
    cmd->add_option("--sensitive", sensitive, "Sensitive loci, 1-based, comma separated")->required();
  }

  Query query(const Alphabet& a) const {
    const auto raw = internal::parse_int_list(loci);
    internal::require(raw.size() == values.size(), "--values needs one symbol per locus in --loci");
    const auto symbols = a.parse(values);
    std::vector<std::pair<int, Symbol>> pairs;
    for (std::size_t i = 0; i < raw.size(); ++i) pairs.emplace_back(raw[i], symbols[i]);
    std::sort(pairs.begin(), pairs.end());
    std::vector<int> idx;
    std::vector<Symbol> ref;
    for (const auto& [l, s] : pairs) {
      idx.push_back(l);
      ref.push_back(s);
    }
    return Query(LocusSet(std::move(idx)), std::move(ref));
  }

  LocusSet sensitive_set() const {
    return LocusSet::from_unsorted(internal::parse_int_list(sensitive));
  }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

MechanismKind parse_kind(const std::string& name) {
  if (name == "M1") return MechanismKind::kM1;
  if (name == "M2") return MechanismKind::kM2;
  throw ValidationError("mechanism must be M1 or M2");
}

void open_output(std::ofstream& out, const std::string& path, bool force) {
  internal::require(force || !std::filesystem::exists(path),
                    path + " exists; pass --force to overwrite");
  out.open(path, std::ios::binary);
  internal::require(static_cast<bool>(out), "cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perfectly private count queries over sequence datasets"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize a dataset");
  ModelFlags gen_model;
  std::string gen_kind = "markov";
  std::size_t gen_users = 1000;
  std::string gen_out;
  bool gen_force = false;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_reference = "uniform";
  std::size_t gen_reference_rows = 100;
  double gen_pi = 0.5;
  double gen_theta = 0.01;
  gen->add_option("--model", gen_kind, "markov | hmm")
      ->check(CLI::IsMember({"markov", "hmm"}))
      ->capture_default_str();
  gen_model.add(gen, false);
  gen->add_option("--users", gen_users, "Number of sequences K")->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_flag("--force", gen_force, "Overwrite an existing output file");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--reference", gen_reference, "hmm: reference dataset path or 'uniform'");
  gen->add_option("--reference-rows", gen_reference_rows, "hmm: rows of a uniform reference");
  gen->add_option("--pi", gen_pi, "hmm: probability of staying on the current row");
  gen->add_option("--theta", gen_theta, "hmm: per-symbol substitution probability");

  // answer-local / answer-central
  auto* ans_local = app.add_subcommand("answer-local", "Release each user's match bit");
  auto* ans_central = app.add_subcommand("answer-central", "Release the aggregate count");
  ModelFlags ans_model;
  QueryFlags ans_query;
  std::string ans_mechanism = "M1";
  std::optional<std::uint64_t> ans_seed;
  std::string ans_out;
  bool ans_force = false;
  for (auto* cmd : {ans_local, ans_central}) {
    ans_model.add(cmd, true);
    ans_query.add(cmd);
    cmd->add_option("--seed", ans_seed, "Random seed");
  }
  ans_local->add_option("--mechanism", ans_mechanism, "M1 | M2")->capture_default_str();
  ans_local->add_option("--out", ans_out, "Write the per-user released bits here");
  ans_local->add_flag("--force", ans_force, "Overwrite an existing output file");
  std::string ans_users_data;
  for (auto* cmd : {ans_local, ans_central}) {
    cmd->add_option("--users-data", ans_users_data, "Dataset of users to answer (default --data)");
  }

  // error / lower-bound
  auto* err = app.add_subcommand("error", "Exact per-user error probabilities of M1 and M2");
  auto* lb = app.add_subcommand("lower-bound", "Entropy lower bound on the per-user error");
  ModelFlags err_model;
  QueryFlags err_query;
  std::size_t err_users = 0;
  for (auto* cmd : {err, lb}) {
    err_model.add(cmd, true);
    err_query.add(cmd);
  }
  err->add_option("--users", err_users, "Also print the aggregate EAE of the central mechanism");

  // audit
  auto* aud = app.add_subcommand("audit", "Certify independence of the release from X_S");
  ModelFlags aud_model;
  QueryFlags aud_query;
  std::string aud_mechanism = "M1";
  std::string aud_table;
  std::string aud_dump;
  bool aud_empirical = false;
  std::size_t aud_trials = kMinEmpiricalTrials;
  std::size_t aud_users = 3;
  std::size_t aud_capacity = kDefaultCentralCapacity;
  bool aud_json = false;
  std::optional<std::uint64_t> aud_seed;
  aud_model.add(aud, true);
  aud_query.add(aud);
  aud->add_option("--mechanism", aud_mechanism, "M1 | M2 | central")->capture_default_str();
  aud->add_option("--table", aud_table, "Audit a user-supplied release table instead");
  aud->add_option("--dump-table", aud_dump, "Write the built-in M1/M2 table to this path");
  aud->add_flag("--empirical", aud_empirical, "Audit by sampling instead of enumeration");
  aud->add_option("--trials", aud_trials, "Empirical trials")->capture_default_str();
  aud->add_option("--users", aud_users, "central: number of users K")->capture_default_str();
  aud->add_option("--capacity", aud_capacity, "central: max K*|S| to enumerate")
      ->capture_default_str();
  aud->add_flag("--json", aud_json, "Print the report as JSON");
  aud->add_option("--seed", aud_seed, "Random seed for --empirical");

  // run-plan
  auto* run = app.add_subcommand("run-plan", "Run an experiment plan");
  std::string run_plan_path;
  std::string run_out = ".";
  std::optional<std::size_t> run_trials;
  std::optional<std::size_t> run_users;
  run->add_option("--plan", run_plan_path, "Plan file")->required();
  run->add_option("--out-dir", run_out, "Directory for results.csv and audit.csv")
      ->capture_default_str();
  run->add_option("--trials", run_trials, "Override the plan's trial count");
  run->add_option("--users", run_users, "Override the plan's user count");

  // dp-match
  auto* dp = app.add_subcommand("dp-match", "Privacy budget of a DP baseline at a target error");
  std::string dp_metric;
  double dp_target = 0.0;
  std::size_t dp_users = 1000;
  dp->add_option("--metric", dp_metric, "rr_pe | laplace_eae | ldp_mse")
      ->required()
      ->check(CLI::IsMember({"rr_pe", "laplace_eae", "ldp_mse"}));
  dp->add_option("--target", dp_target, "Target error")->required();
  dp->add_option("--users", dp_users, "ldp_mse: number of users")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) {
      const Alphabet alphabet(gen_model.alphabet);
      Dataset rows;
      const std::uint64_t seed = resolve_seed(gen_seed);
      if (gen_kind == "markov") {
        internal::require(gen_model.has_markov(), "markov generation needs --phi or --b");
        const auto model = gen_model.markov(alphabet);
        Rng rng(seed);
        rows.reserve(gen_users);
        for (std::size_t k = 0; k < gen_users; ++k) rows.push_back(model->sample(rng));
      } else {
        HmmGeneratorConfig config;
        if (gen_reference == "uniform") {
          Rng ref_rng(derive_seed(seed, {0x7265666572656e63ULL}));
          config.reference =
              uniform_dataset(gen_reference_rows, gen_model.length, alphabet.size(), ref_rng);
        } else {
          config.reference = load_dataset(gen_reference, alphabet);
        }
        config.switch_keep_prob = gen_pi;
        config.substitution_prob = gen_theta;
        config.seed = seed;
        config.alphabet_size = alphabet.size();
        rows = hmm_generate(config, gen_users);
      }
      std::ofstream out;
      open_output(out, gen_out, gen_force);
      write_dataset(out, rows, alphabet);
      return kExitOk;
    }

    if (*ans_local || *ans_central) {
      const Alphabet alphabet(ans_model.alphabet);
      const Query q = ans_query.query(alphabet);
      const LocusSet s = ans_query.sensitive_set();
      std::optional<Dataset> fit_data;
      if (!ans_model.data.empty()) fit_data = load_dataset(ans_model.data, alphabet);
      const std::string users_path = ans_users_data.empty() ? ans_model.data : ans_users_data;
      internal::require(!users_path.empty(), "give --users-data or --data with the users to answer");
      const Dataset users = users_path == ans_model.data && fit_data ? *fit_data
                                                                     : load_dataset(users_path, alphabet);
      const auto model =
          ans_model.build(alphabet, q.loci.union_with(s), fit_data ? &*fit_data : nullptr);
      const LocalPrior prior = LocalPrior::analyze(*model, q, s);
      Rng rng(resolve_seed(ans_seed));
      std::size_t truth = 0;
      for (const auto& row : users) truth += static_cast<std::size_t>(true_answer(q, row));

      if (*ans_local) {
        const LocalMechanism mech = build_mechanism(parse_kind(ans_mechanism), prior);
        std::vector<int> bits;
        bits.reserve(users.size());
        std::size_t released = 0;
        for (const auto& row : users) {
          bits.push_back(release(mech, row, rng));
          released += static_cast<std::size_t>(bits.back());
        }
        if (!ans_out.empty()) {
          std::ofstream out;
          open_output(out, ans_out, ans_force);
          for (int y : bits) out << y << '\n';
        }
        std::cout << "mechanism,users,true_count,released_count\n"
                  << to_string(mech.kind()) << ',' << users.size() << ',' << truth << ','
                  << released << '\n';
      } else {
        const CentralModel central = CentralModel::iid(prior, users.size());
        std::vector<std::size_t> cells;
        cells.reserve(users.size());
        for (const auto& row : users) cells.push_back(prior.sensitive_index(row));
        const std::size_t y = central_release(central, truth, cells, rng);
        std::cout << "users,true_count,released_count\n"
                  << users.size() << ',' << truth << ',' << y << '\n';
      }
      return kExitOk;
    }

    if (*err || *lb) {
      const Alphabet alphabet(err_model.alphabet);
      const Query q = err_query.query(alphabet);
      const LocusSet s = err_query.sensitive_set();
      std::optional<Dataset> data;
      if (!err_model.data.empty()) data = load_dataset(err_model.data, alphabet);
      const auto model = err_model.build(alphabet, q.loci.union_with(s), data ? &*data : nullptr);
      const LocalPrior prior = LocalPrior::analyze(*model, q, s);
      if (*lb) {
        std::cout << "lower_bound\n" << format_double(lower_bound(prior)) << '\n';
        return kExitOk;
      }
      const ErrorReport report = error_probabilities(prior);
      std::cout << ErrorReport::csv_header() << '\n' << report.csv_row(model->describe()) << '\n';
      if (err_users > 0) {
        std::cout << "users,central_eae\n"
                  << err_users << ','
                  << format_double(central_expected_error(CentralModel::iid(prior, err_users)))
                  << '\n';
      }
      return kExitOk;
    }

    if (*aud) {
      const Alphabet alphabet(aud_model.alphabet);
      const Query q = aud_query.query(alphabet);
      const LocusSet s = aud_query.sensitive_set();
      std::optional<Dataset> data;
      if (!aud_model.data.empty()) data = load_dataset(aud_model.data, alphabet);
      const auto model = aud_model.build(alphabet, q.loci.union_with(s), data ? &*data : nullptr);
      AuditReport report;
      if (aud_mechanism == "central") {
        internal::require(aud_table.empty(), "--table applies to local mechanisms");
        if (aud_empirical) {
          Rng rng(resolve_seed(aud_seed));
          report = audit_central_empirical(*model, q, s, aud_users, aud_trials, rng);
        } else {
          try {
            report = audit_central(*model, q, s, aud_users, aud_capacity);
          } catch (const CapacityError& e) {
            throw CapacityError(std::string(e.what()) + "; rerun with --empirical to audit by sampling");
          }
        }
      } else {
        LocalMechanism mech =
            aud_table.empty() ? build_mechanism(parse_kind(aud_mechanism), *model, q, s)
                              : [&] {
                                  std::ifstream in(aud_table);
                                  internal::require(static_cast<bool>(in), "cannot open " + aud_table);
                                  return read_release_table(in, q, s, alphabet);
                                }();
        if (!aud_dump.empty()) {
          std::ofstream out(aud_dump, std::ios::binary);
          internal::require(static_cast<bool>(out), "cannot write " + aud_dump);
          write_release_table(out, mech, alphabet);
        }
        if (aud_empirical) {
          Rng rng(resolve_seed(aud_seed));
          report = audit_empirical(
              [&mech](const Sequence& seq, Rng& g) { return release(mech, seq, g); }, *model, s,
              aud_trials, rng);
        } else {
          report = audit_local(mech, *model, s);
        }
      }
      if (aud_json) {
        std::cout << report.to_json().dump(2) << '\n';
      } else {
        std::cout << AuditReport::csv_header() << '\n' << report.csv_row() << '\n';
      }
      return report.passed ? kExitOk : kExitAuditFailure;
    }

    if (*run) {
      ExperimentPlan plan = load_plan(run_plan_path);
      if (run_trials) plan.trials = *run_trials;
      if (run_users) plan.users = *run_users;
      plan.validate();
      const PlanOutput out = run_plan(plan);
      std::filesystem::create_directories(run_out);
      write_plan_output(out, run_out);
      std::cerr << "wrote " << (std::filesystem::path(run_out) / "results.csv").string() << " and "
                << (std::filesystem::path(run_out) / "audit.csv").string() << '\n';
      return kExitOk;
    }

    if (*dp) {
      double eps = 0.0;
      if (dp_metric == "rr_pe") {
        eps = epsilon_for_rr_error(dp_target);
      } else if (dp_metric == "laplace_eae") {
        eps = epsilon_for_target_error(dp_target);
      } else {
        eps = epsilon_for_ldp_mse(dp_target, dp_users);
      }
      std::cout << "metric,target,epsilon\n"
                << dp_metric << ',' << format_double(dp_target) << ',' << format_double(eps) << '\n';
      return kExitOk;
    }
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCapacity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
