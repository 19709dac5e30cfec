#pragma once

// Command-line front door: estimate, simulate, wtp, recover, summarize.
// Exit codes: 0 success, 1 model/convergence failure (result still written),
// 2 input error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evacmix/dataset.hpp"
#include "evacmix/draws.hpp"
#include "evacmix/errors.hpp"
#include "evacmix/estimate.hpp"
#include "evacmix/kernel.hpp"
#include "evacmix/model_spec.hpp"
#include "evacmix/result_io.hpp"
#include "evacmix/simulate.hpp"
#include "evacmix/wtp.hpp"

namespace evacmix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModel = 1;
inline constexpr int kExitInput = 2;

struct EstimateArgs {
  std::string data, spec, out, schema, start = "two-stage";
  std::size_t draws = 1000, burn_in = 10, max_iterations = 500;
  std::vector<unsigned> primes;
  std::uint64_t seed = 0;
  bool shuffle = false, fd_check = false, verbose = false;
  unsigned threads = 0;
  double gradient_tolerance = 1e-6;
};

struct SimulateArgs {
  std::string spec, truth, out, truth_out;
  std::size_t n = 586;
  std::uint64_t seed = 0;
};

struct WtpArgs {
  std::string result, scenario, out;
  std::uint64_t seed = 0;
};

struct RecoverArgs {
  std::string spec, truth, out;
  std::size_t n = 586, draws = 500;
  std::uint64_t seed = 0;
  double tolerance = 2.0;
  unsigned threads = 0;
  bool verbose = false;
};

struct SummarizeArgs {
  std::string data, schema;
};

namespace detail {

inline ColumnMapping mapping_for(const std::string& schema_path) {
  if (schema_path.empty()) return evac::column_mapping();
  std::ifstream in(schema_path);
  if (!in) throw SchemaError("cannot open schema '" + schema_path + "'");
  try {
    return ColumnMapping::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(schema_path + ": " + e.what());
  }
}

inline ModelSpec checked_spec(const std::string& path, const ChoiceDataset* d) {
  ModelSpec m = load_model_spec(path);
  if (d) {
    const auto v = validate_spec(m, *d);
    if (!v.empty()) {
      std::string msg = path + ": spec does not match the data";
      for (const auto& x : v) msg += "\n  " + x.rule + ": " + x.detail;
      throw SpecError(msg);
    }
  }
  return m;
}

inline OptimizerConfig optimizer_config(std::size_t max_it, double gtol, unsigned threads, bool fd_check, bool verbose,
                                        std::ostream& err) {
  OptimizerConfig cfg;
  cfg.max_iterations = max_it;
  cfg.gradient_tolerance = gtol;
  cfg.threads = threads ? threads : default_thread_count();
  cfg.fd_check = fd_check;
  if (verbose)
    cfg.on_iteration = [&err](std::size_t it, double f, double g) {
      char line[120];
      std::snprintf(line, sizeof line, "iter %4zu  LL %.6f  |g| %.3e\n", it, -f, g);
      err << line << std::flush;
    };
  return cfg;
}

}  // namespace detail

inline int run_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  const ChoiceDataset d = load_long_table(a.data, detail::mapping_for(a.schema));
  const ModelSpec m = detail::checked_spec(a.spec, &d);
  DrawPlan plan = draw_plan_for(m, a.draws, a.burn_in);
  if (!a.primes.empty()) plan.primes = a.primes;
  if (a.shuffle) plan.shuffle_seed = a.seed;
  plan.validate();
  const auto cfg = detail::optimizer_config(a.max_iterations, a.gradient_tolerance, a.threads, a.fd_check, a.verbose, err);
  ParameterVector start;
  if (a.start == "spec")
    start = m.initial_values();
  else
    start = default_start(d, m, cfg);
  const EstimationResult r = maximize(d, m, plan, cfg, start);
  write_text_file(a.out, dump_json(to_json(r)));
  char line[200];
  std::snprintf(line, sizeof line, "LL %.4f  null %.4f  adj. rho-sq %.4f  K %zu  %s after %zu iterations (%s)\n",
                r.ll_final, r.ll_null, r.adjusted_rho_sq, r.estimates.size(), r.converged ? "converged" : "NOT converged",
                r.iterations, r.message.c_str());
  out << line;
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  return r.converged ? kExitOk : kExitModel;
}

inline int run_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
  const ModelSpec m = detail::checked_spec(a.spec, nullptr);
  const TrueParameters truth = truth_from_json(read_json_file(a.truth), m, a.seed);
  const SyntheticDesign design = generate_design(a.n, a.seed);
  const ChoiceDataset d = simulate_choices(design, truth);
  save_long_table(d, a.out);
  const std::string truth_out = a.truth_out.empty() ? a.out + ".truth.json" : a.truth_out;
  write_text_file(truth_out, dump_json(truth_to_json(truth)));
  out << "wrote " << d.individuals.size() << " individuals, " << d.n_observations() << " tasks to " << a.out << '\n';
  return kExitOk;
}

inline int run_wtp(const WtpArgs& a, std::ostream& out, std::ostream&) {
  EstimationResult r = load_result(a.result);
  if (!std::isfinite(r.ll_null) && r.n_outcomes > 0) {
    // Not stored: equal-shares null over the spec's alternatives, all assumed available.
    std::set<std::string> alts{r.spec.reference_alternative};
    for (const auto& t : r.spec.terms) alts.insert(t.applies_to.begin(), t.applies_to.end());
    const std::vector<std::size_t> counts(r.n_outcomes, alts.size());
    r.ll_null = fit_statistics(r.ll_final, r.estimates.size(), counts).ll_null;
    if (!std::isfinite(r.adjusted_rho_sq)) r.adjusted_rho_sq = fit_statistics(r.ll_final, r.estimates.size(), counts).adjusted_rho_sq;
  }
  std::vector<FloodThreat> threats;
  if (!a.scenario.empty()) threats.push_back(flood_threat_from_string(a.scenario));
  const WtpReport rep = build_wtp_report(r, threats, evac::units(), a.seed);
  print_wtp_report(rep, out);
  if (std::isfinite(r.ll_final)) {
    char line[160];
    std::snprintf(line, sizeof line, "\nFit: LL %.2f  null LL %.2f  adj. rho-sq %.4f  outcomes %zu\n", r.ll_final,
                  r.ll_null, r.adjusted_rho_sq, r.n_outcomes);
    out << line;
  }
  std::ostringstream csv;
  write_wtp_csv(rep, csv);
  write_text_file(a.out, csv.str());
  return kExitOk;
}

inline int run_recover(const RecoverArgs& a, std::ostream& out, std::ostream& err) {
  const ModelSpec m = detail::checked_spec(a.spec, nullptr);
  const TrueParameters truth = truth_from_json(read_json_file(a.truth), m, a.seed);
  const ChoiceDataset d = simulate_choices(generate_design(a.n, a.seed), truth);
  const auto cfg = detail::optimizer_config(500, 1e-6, a.threads, false, a.verbose, err);
  const EstimationResult r = maximize(d, m, draw_plan_for(m, a.draws), cfg, default_start(d, m, cfg));
  if (!a.out.empty()) write_text_file(a.out, dump_json(to_json(r)));
  const RecoveryReport rep = compare_recovery(r, truth, a.tolerance);
  print_recovery(rep, out);
  return r.converged ? kExitOk : kExitModel;
}

inline int run_summarize(const SummarizeArgs& a, std::ostream& out, std::ostream&) {
  const ChoiceDataset d = load_long_table(a.data, detail::mapping_for(a.schema));
  char line[200];
  std::snprintf(line, sizeof line, "%zu individuals, %zu tasks, %zu alternatives\n", d.individuals.size(),
                d.n_observations(), d.n_alternatives());
  out << line;
  std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %12s\n", "attribute", "min", "max", "mean", "sd");
  out << line;
  for (const auto& s : summarize_attributes(d)) {
    std::snprintf(line, sizeof line, "%-16s %12.4f %12.4f %12.4f %12.4f\n", s.name.c_str(), s.min, s.max, s.mean, s.sd);
    out << line;
  }
  return kExitOk;
}

/// Parses argv and dispatches. Never throws; errors go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Panel mixed logit estimation in preference and willingness-to-pay space"};
  app.require_subcommand(1);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate a model by simulated maximum likelihood");
  est->add_option("--data", ea.data, "Long-format choice data (CSV)")->required();
  est->add_option("--spec", ea.spec, "Model specification file")->required();
  est->add_option("--out", ea.out, "Result JSON to write")->required();
  est->add_option("--draws", ea.draws, "Halton draws per individual")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--burn-in", ea.burn_in, "Leading Halton points discarded")->capture_default_str();
  est->add_option("--halton-primes", ea.primes, "Halton bases, one per random parameter")->delimiter(',');
  est->add_option("--seed", ea.seed, "Seed (used only with --shuffle-draws)")->capture_default_str();
  est->add_flag("--shuffle-draws", ea.shuffle, "Permute each individual's draws with --seed");
  est->add_option("--schema", ea.schema, "Column mapping JSON (default: bundled evacuation schema)");
  est->add_option("--threads", ea.threads, "Worker threads (0 = hardware)")->capture_default_str();
  est->add_option("--start", ea.start, "Start values: two-stage or spec")
      ->capture_default_str()
      ->check(CLI::IsMember({"two-stage", "spec"}));
  est->add_option("--max-iterations", ea.max_iterations, "BFGS iteration cap")->capture_default_str();
  est->add_option("--gradient-tolerance", ea.gradient_tolerance, "Infinity-norm gradient tolerance")->capture_default_str();
  est->add_flag("--fd-check", ea.fd_check, "Compare the analytic score with finite differences at the start");
  est->add_flag("-v,--verbose", ea.verbose, "Print optimizer progress to stderr");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a synthetic dataset at known parameters");
  sim->add_option("--spec", sa.spec, "Model specification file")->required();
  sim->add_option("--truth", sa.truth, "JSON with 'parameters' or 'estimates'")->required();
  sim->add_option("--n", sa.n, "Number of individuals")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--seed", sa.seed, "Seed for design and choices")->capture_default_str();
  sim->add_option("--out", sa.out, "CSV to write")->required();
  sim->add_option("--truth-out", sa.truth_out, "Truth JSON to write (default: <out>.truth.json)");

  WtpArgs wa;
  auto* wtp = app.add_subcommand("wtp", "Money-value report from an estimation result");
  wtp->add_option("--result", wa.result, "Result JSON")->required();
  wtp->add_option("--scenario", wa.scenario, "Flood threat: low, moderate or extreme (default: all)")
      ->check(CLI::IsMember({"low", "moderate", "extreme"}));
  wtp->add_option("--out", wa.out, "CSV to write")->required();
  wtp->add_option("--seed", wa.seed, "Seed for preference-space ratio simulation")->capture_default_str();

  RecoverArgs ra;
  auto* rec = app.add_subcommand("recover", "Simulate at known parameters, re-estimate, compare");
  rec->add_option("--spec", ra.spec, "Model specification file")->required();
  rec->add_option("--truth", ra.truth, "JSON with 'parameters' or 'estimates'")->required();
  rec->add_option("--n", ra.n, "Number of individuals")->capture_default_str()->check(CLI::PositiveNumber);
  rec->add_option("--draws", ra.draws, "Halton draws per individual")->capture_default_str()->check(CLI::PositiveNumber);
  rec->add_option("--seed", ra.seed, "Simulation seed")->capture_default_str();
  rec->add_option("--tolerance", ra.tolerance, "Robust SEs counted as recovered")->capture_default_str();
  rec->add_option("--out", ra.out, "Optional result JSON");
  rec->add_option("--threads", ra.threads, "Worker threads (0 = hardware)")->capture_default_str();
  rec->add_flag("-v,--verbose", ra.verbose, "Print optimizer progress to stderr");

  SummarizeArgs ua;
  auto* sum = app.add_subcommand("summarize", "Attribute summary (min, max, mean, sd)");
  sum->add_option("--data", ua.data, "Long-format choice data (CSV)")->required();
  sum->add_option("--schema", ua.schema, "Column mapping JSON (default: bundled evacuation schema)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*est) return run_estimate(ea, out, err);
    if (*sim) return run_simulate(sa, out, err);
    if (*wtp) return run_wtp(wa, out, err);
    if (*rec) return run_recover(ra, out, err);
    if (*sum) return run_summarize(ua, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kExitModel;
  } catch (const EvaluationError& e) {
    err << "evaluation failed: " << e.what() << '\n';
    return kExitModel;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace evacmix::cli
