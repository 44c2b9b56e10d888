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

// Experiment plans: parameter sweeps over Markov or copy-with-switching
// priors, Monte Carlo error estimates for every mechanism, exact overlays
// where a closed form exists, DP budget matching, and CSV output.
//
// Randomness is split into substreams keyed by (case, point, trial, stream)
// so a plan and seed fully determine every output byte. Within one trial
// all mechanisms see the same users.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ppcount/audit.hpp"
#include "ppcount/central_mechanism.hpp"
#include "ppcount/dp_baselines.hpp"
#include "ppcount/errors.hpp"
#include "ppcount/hmm.hpp"
#include "ppcount/local_mechanism.hpp"
#include "ppcount/model.hpp"
#include "ppcount/random.hpp"
#include "ppcount/sequence.hpp"

namespace ppcount {

// ---------------------------------------------------------------------------
// Mask-and-sample baseline: the sensitive symbols are replaced by fresh
// draws and the query is answered on the altered sequence.

enum class MaskMode { kUniform, kPrior };

// `sensitive_prior` is a pmf over tuples on `sensitive`; it is required in
// prior mode and ignored in uniform mode.
inline std::vector<int> mask_and_sample_baseline(const Dataset& data, const Query& query,
                                                 const LocusSet& sensitive, MaskMode mode,
                                                 Rng& rng, std::span<const double> sensitive_prior,
                                                 int alphabet_size) {
  const std::size_t ns = tuple_count(sensitive.size(), alphabet_size);
  if (mode == MaskMode::kPrior) {
    internal::require(sensitive_prior.size() == ns, "prior over the sensitive loci has the wrong size");
  }
  // Positions of the query loci inside the sensitive set (-1 if not sensitive).
  std::vector<int> where(query.loci.size());
  for (std::size_t i = 0; i < query.loci.size(); ++i) where[i] = sensitive.position_of(query.loci[i]);
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<Symbol> draw(sensitive.size());
  for (const auto& row : data) {
    if (mode == MaskMode::kPrior) {
      draw = decode_tuple(rng.categorical(sensitive_prior), sensitive.size(), alphabet_size);
    } else {
      for (auto& v : draw) v = static_cast<Symbol>(rng.uniform_index(static_cast<std::size_t>(alphabet_size)));
    }
    int match = 1;
    for (std::size_t i = 0; i < query.loci.size() && match; ++i) {
      const Symbol s = where[i] >= 0 ? draw[static_cast<std::size_t>(where[i])] : row.at_locus(query.loci[i]);
      if (s != query.reference[i]) match = 0;
    }
    out.push_back(match);
  }
  return out;
}

// Prior mode with the prior estimated from tuple frequencies in `data`.
inline std::vector<int> mask_and_sample_baseline(const Dataset& data, const Query& query,
                                                 const LocusSet& sensitive, MaskMode mode,
                                                 Rng& rng, int alphabet_size = 4) {
  internal::require(!data.empty(), "dataset is empty");
  std::vector<double> prior;
  if (mode == MaskMode::kPrior && !sensitive.empty()) {
    const auto fitted = TabularModel::fit(data, alphabet_size, sensitive);
    const auto table = fitted.joint_table(sensitive);
    prior.assign(table.pmf().begin(), table.pmf().end());
  } else if (mode == MaskMode::kPrior) {
    prior = {1.0};
  }
  return mask_and_sample_baseline(data, query, sensitive, mode, rng, prior, alphabet_size);
}

// ---------------------------------------------------------------------------
// Plan.

struct StudyCase {
  std::string name;
  Query query;
  LocusSet sensitive;
};

// Sensitive sets {first..last} for each `last`, against a fixed query,
// evaluated at a single grid value.
struct OverlapSchedule {
  Query query;
  int sensitive_first = 1;
  std::vector<int> sensitive_last;
  double at = 0.0;
};

inline const std::vector<std::string>& known_mechanisms() {
  static const std::vector<std::string> names = {"M1",      "M2",           "central",   "RR",
                                                 "laplace", "mask_uniform", "mask_prior"};
  return names;
}

struct ExperimentPlan {
  std::string scenario = "plan";
  Alphabet alphabet;
  std::string model = "markov";    // markov | hmm
  std::string grid_param = "phi";  // markov: phi | b
  std::vector<double> grid;
  std::vector<double> initial;  // empty: uniform
  std::vector<double> pi;
  std::vector<double> theta;
  std::string reference = "uniform";  // hmm: "uniform" or a dataset path
  std::size_t reference_rows = 100;
  int length = 10;
  std::size_t users = 1000;
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  std::vector<std::string> mechanisms = {"M1", "M2", "central"};
  std::vector<StudyCase> cases;
  std::optional<OverlapSchedule> overlap;
  double dp_epsilon = 1.0;
  bool smoothing = false;
  std::filesystem::path base_dir;  // for relative reference paths

  bool is_hmm() const { return model == "hmm"; }

  void validate() const {
    internal::require(model == "markov" || model == "hmm", "model must be markov or hmm");
    internal::require(length >= 1, "length must be positive");
    internal::require(users >= 1, "users must be at least 1");
    internal::require(trials >= 1, "trials must be at least 1");
    internal::require(!cases.empty() || overlap.has_value(), "plan defines no cases");
    internal::require(!mechanisms.empty(), "plan lists no mechanisms");
    for (const auto& m : mechanisms) {
      const auto& k = known_mechanisms();
      internal::require(std::find(k.begin(), k.end(), m) != k.end(), "unknown mechanism '" + m + "'");
    }
    internal::require(dp_epsilon > 0.0 && std::isfinite(dp_epsilon), "dp_epsilon must be positive");
    if (is_hmm()) {
      internal::require(!pi.empty() && !theta.empty(), "hmm plans need pi and theta grids");
      for (double p : pi) internal::require(p >= 0.0 && p <= 1.0, "pi must lie in [0,1]");
      for (double t : theta) internal::require(t >= 0.0 && t <= 1.0, "theta must lie in [0,1]");
      internal::require(reference_rows >= 1, "reference_rows must be positive");
    } else {
      internal::require(grid_param == "phi" || grid_param == "b", "markov grid must be phi or b");
      internal::require(!grid.empty() || overlap.has_value(), "markov plans need a phi or b grid");
      for (double g : grid) check_grid_value(g);
      if (overlap) check_grid_value(overlap->at);
      if (!initial.empty()) {
        internal::require(static_cast<int>(initial.size()) == alphabet.size(),
                          "initial distribution must have one entry per symbol");
        internal::require_distribution(initial, "initial distribution");
      }
    }
    for (const auto& c : cases) {
      internal::require(!c.query.loci.empty(), "case " + c.name + " has an empty query");
      c.query.loci.validate_within(length);
      c.sensitive.validate_within(length);
    }
    if (overlap) {
      overlap->query.loci.validate_within(length);
      internal::require(!overlap->sensitive_last.empty(), "overlap sweep needs sensitive_last values");
      for (int last : overlap->sensitive_last) {
        internal::require(last >= overlap->sensitive_first && last <= length,
                          "overlap sweep sensitive range outside the sequence");
      }
    }
  }

  // Stay probability for a grid value.
  double stay_prob(double g) const {
    return grid_param == "b" ? 1.0 - static_cast<double>(alphabet.size() - 1) * g : g;
  }

 private:
  void check_grid_value(double g) const {
    if (grid_param == "b") {
      internal::require(g >= 0.0 && g <= 1.0 / static_cast<double>(alphabet.size() - 1) + 1e-12,
                        "b must lie in [0, 1/(C-1)]");
    } else {
      internal::require(g >= 0.0 && g <= 1.0, "phi must lie in [0,1]");
    }
  }
};

namespace internal {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError("not a number: '" + s + "'");
  }
  require(pos == s.size() && std::isfinite(v), "not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError("not an integer: '" + s + "'");
  }
  require(pos == s.size(), "not an integer: '" + s + "'");
  return v;
}

inline std::size_t parse_count(const std::string& s) {
  const long long v = parse_int(s);
  require(v >= 0, "expected a non-negative integer: '" + s + "'");
  return static_cast<std::size_t>(v);
}

// "a,b,c" or "start:step:stop" (inclusive), or a mix separated by commas.
inline std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    require(!item.empty(), "empty grid entry in '" + s + "'");
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(parse_double(parts[0]));
      continue;
    }
    require(parts.size() == 3, "ranges are written start:step:stop");
    const double start = parse_double(parts[0]);
    const double step = parse_double(parts[1]);
    const double stop = parse_double(parts[2]);
    require(step > 0.0 && stop >= start, "range needs step > 0 and stop >= start");
    const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
    require(n < 100000, "range too long");
    for (long long i = 0; i <= n; ++i) {
      // Round to 12 decimals so 0.1 + 0.05 k prints cleanly.
      out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
  }
  require(!out.empty(), "empty grid");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_grid(s)) {
    require(v == std::floor(v), "expected integers in '" + s + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline LocusSet parse_loci(const std::string& s) {
  if (trim(s).empty()) return LocusSet();
  return LocusSet::from_unsorted(parse_int_list(s));
}

// "name; loci=5,6; sensitive=3,4; values=AT"
inline std::map<std::string, std::string> parse_fields(const std::string& s,
                                                        std::string* head = nullptr) {
  std::map<std::string, std::string> out;
  const auto parts = split(s, ';');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      require(i == 0 && head != nullptr, "expected key=value in '" + parts[i] + "'");
      *head = parts[i];
      continue;
    }
    out[trim(parts[i].substr(0, eq))] = trim(parts[i].substr(eq + 1));
  }
  return out;
}

}  // namespace internal

// Plan file: `key = value` lines, `#` comments. See docs/formats.md.
inline ExperimentPlan parse_plan(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using namespace internal;
  ExperimentPlan plan;
  plan.base_dir = base_dir;
  std::vector<std::pair<std::size_t, std::string>> case_lines;
  std::optional<std::pair<std::size_t, std::string>> overlap_line;
  std::string initial_text;
  std::string line;
  std::size_t line_no = 0;
  bool grid_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("plan line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "scenario") {
        require(!value.empty() && value.find(',') == std::string::npos,
                "scenario must be non-empty without commas");
        plan.scenario = value;
      } else if (key == "alphabet") {
        plan.alphabet = Alphabet(value);
      } else if (key == "model") {
        plan.model = value;
      } else if (key == "phi" || key == "b") {
        require(!grid_seen, "only one of phi / b may be given");
        grid_seen = true;
        plan.grid_param = key;
        plan.grid = parse_grid(value);
      } else if (key == "initial") {
        initial_text = value;
      } else if (key == "pi") {
        plan.pi = parse_grid(value);
      } else if (key == "theta") {
        plan.theta = parse_grid(value);
      } else if (key == "reference") {
        plan.reference = value;
      } else if (key == "reference_rows") {
        plan.reference_rows = parse_count(value);
      } else if (key == "length") {
        plan.length = static_cast<int>(parse_int(value));
      } else if (key == "users") {
        plan.users = parse_count(value);
      } else if (key == "trials") {
        plan.trials = parse_count(value);
      } else if (key == "seed") {
        plan.seed = static_cast<std::uint64_t>(parse_count(value));
      } else if (key == "mechanisms") {
        plan.mechanisms = split(value, ',');
      } else if (key == "case") {
        case_lines.emplace_back(line_no, value);
      } else if (key == "overlap_sweep") {
        overlap_line = std::make_pair(line_no, value);
      } else if (key == "dp_epsilon") {
        plan.dp_epsilon = parse_double(value);
      } else if (key == "smoothing") {
        require(value == "on" || value == "off", "smoothing must be on or off");
        plan.smoothing = value == "on";
      } else {
        throw ValidationError("unknown key '" + key + "'");
      }
    } catch (const ValidationError& e) {
      throw ValidationError("plan line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  const auto parse_query = [&](const std::map<std::string, std::string>& f) {
    require(f.count("loci") && f.count("values"), "query needs loci= and values=");
    const LocusSet loci = parse_loci(f.at("loci"));
    // values are listed in the order the loci were written; sort them with the loci
    std::vector<int> raw = parse_int_list(f.at("loci"));
    const auto symbols = plan.alphabet.parse(f.at("values"));
    require(symbols.size() == raw.size(), "values must have one symbol per locus");
    std::vector<Symbol> sorted(symbols.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      sorted[static_cast<std::size_t>(loci.position_of(raw[i]))] = symbols[i];
    }
    return Query(loci, sorted);
  };

  for (const auto& [no, text] : case_lines) {
    try {
      std::string name;
      const auto f = parse_fields(text, &name);
      require(!name.empty() && name.find(',') == std::string::npos,
              "case needs a name without commas");
      StudyCase c{name, parse_query(f), parse_loci(f.count("sensitive") ? f.at("sensitive") : "")};
      plan.cases.push_back(std::move(c));
    } catch (const ValidationError& e) {
      throw ValidationError("plan line " + std::to_string(no) + ": " + e.what());
    }
  }
  if (overlap_line) {
    try {
      const auto f = parse_fields(overlap_line->second);
      OverlapSchedule o;
      o.query = parse_query(f);
      o.sensitive_first = f.count("sensitive_first") ? static_cast<int>(parse_int(f.at("sensitive_first"))) : 1;
      require(f.count("sensitive_last"), "overlap_sweep needs sensitive_last=");
      o.sensitive_last = parse_int_list(f.at("sensitive_last"));
      require(f.count("at"), "overlap_sweep needs at=<grid value>");
      o.at = parse_double(f.at("at"));
      plan.overlap = o;
    } catch (const ValidationError& e) {
      throw ValidationError("plan line " + std::to_string(overlap_line->first) + ": " + e.what());
    }
  }
  if (!initial_text.empty() && initial_text != "uniform") {
    plan.initial = parse_grid(initial_text);
  }
  plan.validate();
  return plan;
}

inline ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  internal::require(static_cast<bool>(in), "cannot open plan " + path);
  return parse_plan(in, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Results.

struct ResultRow {
  std::string scenario;
  std::string case_name;
  std::size_t overlap = 0;
  std::string point;
  std::string mechanism;
  std::string metric;  // per_user_Pe | EAE | MSE | lower_bound | epsilon_matched
  std::string source;  // closed_form | monte_carlo | capped
  double value = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

struct AuditRow {
  std::string scenario;
  std::string case_name;
  std::string point;
  std::string mechanism;
  std::string method;  // exact_enumeration | skipped
  std::optional<double> max_deviation;
  std::optional<bool> passed;
};

struct PlanOutput {
  std::vector<ResultRow> results;
  std::vector<AuditRow> audits;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "scenario,case,overlap,point,mechanism,metric,source,value,std_error,trials\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.case_name << ',' << r.overlap << ',' << r.point << ','
        << r.mechanism << ',' << r.metric << ',' << r.source << ',' << format_double(r.value) << ','
        << format_double(r.std_error) << ',' << r.trials << '\n';
  }
}

inline void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows) {
  out << "scenario,case,point,mechanism,method,max_deviation,passed\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.case_name << ',' << r.point << ',' << r.mechanism << ','
        << r.method << ',' << (r.max_deviation ? format_double(*r.max_deviation) : "") << ','
        << (r.passed ? (*r.passed ? "true" : "false") : "") << '\n';
  }
}

// Budget at which a DP baseline matches each error row:
// per_user_Pe -> randomized response, EAE -> Laplace, MSE -> LDP count.
// Targets too small for eps <= 50 (including exact zero) yield a row with
// value 50 and source "capped", meaning the budget is at least that large.
inline std::vector<ResultRow> dp_frontier_match(const std::vector<ResultRow>& targets,
                                                std::size_t users) {
  std::vector<ResultRow> out;
  for (const auto& t : targets) {
    ResultRow r = t;
    r.metric = "epsilon_matched";
    r.std_error = 0.0;
    const auto match = [&]() -> double {
      if (t.metric == "per_user_Pe") return epsilon_for_rr_error(t.value);
      if (t.metric == "EAE") return epsilon_for_target_error(t.value, users);
      if (t.metric == "MSE") return epsilon_for_ldp_mse(t.value, users);
      throw ValidationError("cannot match a DP budget to metric " + t.metric);
    };
    const bool too_small = t.metric == "per_user_Pe"   ? t.value < rr_error_prob(kMaxEpsilon)
                           : t.metric == "EAE"         ? t.value < laplace_expected_error(kMaxEpsilon)
                           : t.metric == "MSE"         ? t.value < ldp_count_mse(users, kMaxEpsilon)
                                                       : false;
    if (t.value <= 0.0 || too_small) {
      internal::require(t.value >= 0.0, "error targets must be non-negative");
      r.value = kMaxEpsilon;
      r.source = "capped";
    } else {
      r.value = match();
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace internal {

// Running mean and standard error over trials.
struct Accumulator {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

inline std::size_t mechanism_stream(const std::string& name) {
  const auto& k = known_mechanisms();
  return static_cast<std::size_t>(std::find(k.begin(), k.end(), name) - k.begin()) + 1;
}

inline bool is_local(const std::string& m) {
  return m == "M1" || m == "M2" || m == "RR" || m == "mask_uniform" || m == "mask_prior";
}

struct PointContext {
  std::string point;
  std::uint64_t point_index = 0;
  const SequenceModel* model = nullptr;
  // Fixed users (hmm); empty means fresh users per trial drawn from model.
  const Dataset* data = nullptr;
  bool exact_overlays = true;     // closed forms are expectations of the MC
  bool aggregate_overlays = true;  // same, for aggregate metrics
};

inline double mse_from_split(const ErrorSplit& s, std::size_t users) {
  const double k = static_cast<double>(users);
  const double mean = s.false_positive - s.false_negative;
  const double second = s.false_positive + s.false_negative;
  return k * (second - mean * mean) + k * k * mean * mean;
}

inline void run_point(const ExperimentPlan& plan, const StudyCase& c, std::uint64_t case_index,
                      const PointContext& ctx, PlanOutput& out) {
  const LocalPrior prior = LocalPrior::analyze(*ctx.model, c.query, c.sensitive);
  const ErrorReport report = error_probabilities(prior);
  const std::size_t overlap = prior.overlap().size();
  const std::size_t k_users = ctx.data ? ctx.data->size() : plan.users;
  const int alphabet = ctx.model->alphabet_size();
  const auto has = [&](const std::string& m) {
    return std::find(plan.mechanisms.begin(), plan.mechanisms.end(), m) != plan.mechanisms.end();
  };

  std::optional<LocalMechanism> m1, m2;
  if (has("M1")) m1 = build_mechanism(MechanismKind::kM1, prior);
  if (has("M2")) m2 = build_mechanism(MechanismKind::kM2, prior);
  std::optional<CentralModel> central;
  if (has("central")) central = CentralModel::iid(prior, k_users);
  std::vector<double> sensitive_prior(prior.sensitive_count());
  for (std::size_t s = 0; s < sensitive_prior.size(); ++s) sensitive_prior[s] = prior.sensitive_prob(s);

  const auto row = [&](const std::string& mech, const std::string& metric,
                       const std::string& source, double value, double se, std::size_t trials) {
    out.results.push_back(
        ResultRow{plan.scenario, c.name, overlap, ctx.point, mech, metric, source, value, se, trials});
  };

  // Exact audits of the local tables; the central channel only fits when
  // K * |S| is small.
  for (const auto* mech : {m1 ? &*m1 : nullptr, m2 ? &*m2 : nullptr}) {
    if (!mech) continue;
    const auto rep = audit_local(*mech, *ctx.model, c.sensitive);
    out.audits.push_back(AuditRow{plan.scenario, c.name, ctx.point, to_string(mech->kind()),
                                  to_string(rep.method), rep.max_deviation, rep.passed});
  }
  if (central) {
    if (k_users * c.sensitive.size() <= kDefaultCentralCapacity) {
      const auto rep = audit_central(CentralChannel::build(*central));
      out.audits.push_back(AuditRow{plan.scenario, c.name, ctx.point, "central",
                                    to_string(rep.method), rep.max_deviation, rep.passed});
    } else {
      out.audits.push_back(AuditRow{plan.scenario, c.name, ctx.point, "central", "skipped", {}, {}});
    }
  }

  // Monte Carlo.
  struct Stats {
    Accumulator pe, eae, mse;
  };
  std::map<std::string, Stats> stats;
  std::vector<Sequence> fresh;
  std::vector<int> truth(k_users);
  std::vector<std::size_t> lbar_idx(k_users), sens_idx(k_users);
  for (std::uint64_t t = 0; t < plan.trials; ++t) {
    const Dataset* users = ctx.data;
    if (!users) {
      Rng data_rng(derive_seed(plan.seed, {case_index, ctx.point_index, t, 0}));
      fresh.resize(k_users);
      for (auto& s : fresh) s = ctx.model->sample(data_rng);
      users = &fresh;
    }
    std::size_t a = 0;
    for (std::size_t k = 0; k < k_users; ++k) {
      const Sequence& seq = (*users)[k];
      truth[k] = true_answer(c.query, seq);
      a += static_cast<std::size_t>(truth[k]);
      lbar_idx[k] = prior.lbar_index(seq);
      sens_idx[k] = prior.sensitive_index(seq);
    }
    for (const auto& name : plan.mechanisms) {
      Rng rng(derive_seed(plan.seed, {case_index, ctx.point_index, t, mechanism_stream(name)}));
      Stats& st = stats[name];
      if (name == "central") {
        const std::size_t y = central_release(*central, a, sens_idx, rng);
        const double d = static_cast<double>(y) - static_cast<double>(a);
        st.eae.add(std::fabs(d));
        st.mse.add(d * d);
        continue;
      }
      if (name == "laplace") {
        const double d = laplace_count_release(static_cast<double>(a), plan.dp_epsilon, rng) -
                         static_cast<double>(a);
        st.eae.add(std::fabs(d));
        st.mse.add(d * d);
        continue;
      }
      std::vector<int> released(k_users);
      if (name == "M1" || name == "M2") {
        const LocalMechanism& mech = name == "M1" ? *m1 : *m2;
        for (std::size_t k = 0; k < k_users; ++k) {
          released[k] = rng.bernoulli(mech.release_prob(lbar_idx[k], sens_idx[k])) ? 1 : 0;
        }
      } else if (name == "RR") {
        for (std::size_t k = 0; k < k_users; ++k) {
          released[k] = randomized_response(truth[k], plan.dp_epsilon, rng);
        }
      } else {
        released = mask_and_sample_baseline(
            *users, c.query, c.sensitive, name == "mask_prior" ? MaskMode::kPrior : MaskMode::kUniform,
            rng, sensitive_prior, alphabet);
      }
      long long diff = 0;
      std::size_t wrong = 0;
      for (std::size_t k = 0; k < k_users; ++k) {
        diff += released[k] - truth[k];
        wrong += released[k] != truth[k] ? 1 : 0;
      }
      const double d = static_cast<double>(diff);
      st.pe.add(static_cast<double>(wrong) / static_cast<double>(k_users));
      st.eae.add(std::fabs(d));
      st.mse.add(d * d);
    }
  }

  // Rows: closed forms first, then Monte Carlo, per mechanism.
  std::vector<ResultRow> match_targets;
  for (const auto& name : plan.mechanisms) {
    const Stats& st = stats[name];
    const std::size_t n = plan.trials;
    std::optional<double> pe_cf, eae_cf, mse_cf;
    if (name == "M1" || name == "M2") {
      const LocalMechanism& mech = name == "M1" ? *m1 : *m2;
      const ErrorSplit split = error_split(mech, prior);
      if (ctx.exact_overlays) pe_cf = name == "M1" ? report.p_e1 : report.p_e2;
      if (ctx.aggregate_overlays) {
        eae_cf = local_eae_exact(split, k_users);
        mse_cf = mse_from_split(split, k_users);
      }
    } else if (name == "RR") {
      const double f = rr_error_prob(plan.dp_epsilon);
      pe_cf = f;
      if (ctx.aggregate_overlays) {
        const ErrorSplit split{(1.0 - prior.match_prob()) * f, prior.match_prob() * f};
        eae_cf = local_eae_exact(split, k_users);
        mse_cf = mse_from_split(split, k_users);
      }
    } else if (name == "laplace") {
      eae_cf = laplace_expected_error(plan.dp_epsilon);
      mse_cf = 2.0 / (plan.dp_epsilon * plan.dp_epsilon);
    } else if (name == "central" && ctx.aggregate_overlays) {
      eae_cf = central_expected_error(*central);
    }
    const std::string label =
        name == "RR" || name == "laplace" ? name + "[eps=" + format_double(plan.dp_epsilon) + "]" : name;
    if (is_local(name)) {
      if (pe_cf) row(label, "per_user_Pe", "closed_form", *pe_cf, 0.0, 0);
      row(label, "per_user_Pe", "monte_carlo", st.pe.mean, st.pe.std_error(), n);
    }
    if (eae_cf) row(label, "EAE", "closed_form", *eae_cf, 0.0, 0);
    row(label, "EAE", "monte_carlo", st.eae.mean, st.eae.std_error(), n);
    if (mse_cf) row(label, "MSE", "closed_form", *mse_cf, 0.0, 0);
    row(label, "MSE", "monte_carlo", st.mse.mean, st.mse.std_error(), n);

    if (name == "M1" || name == "M2") {
      ResultRow target{plan.scenario, c.name, overlap, ctx.point, name, "per_user_Pe",
                       pe_cf ? "closed_form" : "monte_carlo", pe_cf ? *pe_cf : st.pe.mean, 0.0,
                       pe_cf ? 0 : n};
      match_targets.push_back(target);
    } else if (name == "central") {
      ResultRow target{plan.scenario, c.name, overlap, ctx.point, name, "EAE",
                       eae_cf ? "closed_form" : "monte_carlo", eae_cf ? *eae_cf : st.eae.mean, 0.0,
                       eae_cf ? 0 : n};
      match_targets.push_back(target);
    }
  }
  row("bound", "lower_bound", "closed_form", report.lower_bound, 0.0, 0);
  for (auto& r : dp_frontier_match(match_targets, k_users)) out.results.push_back(std::move(r));
}

inline std::string point_label(const std::string& name, double v) {
  return name + "=" + format_double(v);
}

inline Dataset load_reference(const ExperimentPlan& plan) {
  if (plan.reference == "uniform") {
    Rng rng(derive_seed(plan.seed, {0x7265666572656e63ULL}));
    return uniform_dataset(plan.reference_rows, plan.length, plan.alphabet.size(), rng);
  }
  std::filesystem::path p(plan.reference);
  if (p.is_relative() && !plan.base_dir.empty()) p = plan.base_dir / p;
  Dataset ref = load_dataset(p.string(), plan.alphabet);
  internal::require(static_cast<int>(ref.front().size()) == plan.length,
                    "reference rows must have the plan's length");
  return ref;
}

inline void run_markov_case(const ExperimentPlan& plan, const StudyCase& c,
                            std::uint64_t case_index, const std::vector<double>& grid,
                            PlanOutput& out) {
  const std::vector<double> init =
      plan.initial.empty() ? MarkovChainModel::uniform_pmf(plan.alphabet.size()) : plan.initial;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto model = MarkovChainModel::with_stay_prob(plan.length, plan.stay_prob(grid[p]), init);
    PointContext ctx;
    ctx.point = point_label(plan.grid_param, grid[p]);
    ctx.point_index = p;
    ctx.model = &model;
    run_point(plan, c, case_index, ctx, out);
  }
}

inline void run_hmm_case(const ExperimentPlan& plan, const StudyCase& c, std::uint64_t case_index,
                         const Dataset& reference, PlanOutput& out) {
  std::uint64_t p = 0;
  for (double theta : plan.theta) {
    for (double pi : plan.pi) {
      HmmGeneratorConfig cfg;
      cfg.reference = reference;
      cfg.switch_keep_prob = pi;
      cfg.substitution_prob = theta;
      cfg.alphabet_size = plan.alphabet.size();
      // The dataset depends only on the grid point, so every case sees the
      // same users.
      cfg.seed = derive_seed(plan.seed, {0x686d6dULL, p});
      const Dataset data = hmm_generate(cfg, plan.users);
      const auto fitted = TabularModel::fit(data, plan.alphabet.size(),
                                            c.query.loci.union_with(c.sensitive), plan.smoothing);
      PointContext ctx;
      ctx.point = "pi=" + format_double(pi) + ";theta=" + format_double(theta);
      ctx.point_index = p;
      ctx.model = &fitted;
      ctx.data = &data;
      // Frequencies of the fixed users are the prior, so per-user closed
      // forms are exact expectations of the trial average. Aggregate ones
      // describe fresh users and are omitted.
      ctx.exact_overlays = !plan.smoothing;
      ctx.aggregate_overlays = false;
      run_point(plan, c, case_index, ctx, out);
      ++p;
    }
  }
}

inline std::vector<StudyCase> overlap_cases(const ExperimentPlan& plan) {
  std::vector<StudyCase> out;
  if (!plan.overlap) return out;
  for (int last : plan.overlap->sensitive_last) {
    StudyCase c;
    c.query = plan.overlap->query;
    c.sensitive = LocusSet::range(plan.overlap->sensitive_first, last);
    c.name = "overlap_S" + std::to_string(plan.overlap->sensitive_first) + "-" + std::to_string(last);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace internal

// Rows for the overlap schedule only, at its single grid value.
inline PlanOutput overlap_sweep(const ExperimentPlan& plan) {
  plan.validate();
  internal::require(plan.overlap.has_value(), "plan has no overlap_sweep");
  PlanOutput out;
  const auto cases = internal::overlap_cases(plan);
  if (plan.is_hmm()) {
    const Dataset reference = internal::load_reference(plan);
    for (std::size_t i = 0; i < cases.size(); ++i) {
      internal::run_hmm_case(plan, cases[i], plan.cases.size() + i, reference, out);
    }
  } else {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      internal::run_markov_case(plan, cases[i], plan.cases.size() + i, {plan.overlap->at}, out);
    }
  }
  return out;
}

inline PlanOutput run_plan(const ExperimentPlan& plan) {
  plan.validate();
  PlanOutput out;
  if (plan.is_hmm()) {
    const Dataset reference = internal::load_reference(plan);
    for (std::size_t i = 0; i < plan.cases.size(); ++i) {
      internal::run_hmm_case(plan, plan.cases[i], i, reference, out);
    }
  } else {
    for (std::size_t i = 0; i < plan.cases.size(); ++i) {
      internal::run_markov_case(plan, plan.cases[i], i, plan.grid, out);
    }
  }
  if (plan.overlap) {
    PlanOutput sweep = overlap_sweep(plan);
    out.results.insert(out.results.end(), sweep.results.begin(), sweep.results.end());
    out.audits.insert(out.audits.end(), sweep.audits.begin(), sweep.audits.end());
  }
  return out;
}

inline void write_plan_output(const PlanOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream results(dir / "results.csv", std::ios::binary);
  internal::require(static_cast<bool>(results), "cannot write " + (dir / "results.csv").string());
  write_results_csv(results, out.results);
  std::ofstream audits(dir / "audit.csv", std::ios::binary);
  internal::require(static_cast<bool>(audits), "cannot write " + (dir / "audit.csv").string());
  write_audit_csv(audits, out.audits);
}

}  // namespace ppcount
