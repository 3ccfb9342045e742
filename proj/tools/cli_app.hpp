#pragma once

// Command-line front end: fit, reject, simulate, evaluate, diagnose.
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "camt/camt.hpp"

namespace camt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

struct FitFlags {
  std::string input;
  std::string output;
  std::string gamma = "auto";
  std::optional<double> fixed_k;
  bool no_standardize = false;
  bool float32 = false;
  bool single_start = false;
  bool accelerate = false;
  std::uint64_t seed = 1;
  int bootstrap = 100;
  int max_iter = 200;
  double tol = 1e-6;
  int irls_max_iter = 25;
  double irls_tol = 1e-8;
  double box = 15.0;
  double k_min = 0.001;
  double k_max = 0.999;
  double alpha = 0.05;
  double eps1 = 0.01;
  double eps2 = 0.99;
  double epsilon = 1e-10;
};

struct SimFlags {
  std::string config;
  std::string setup = "S0";
  std::size_t m = 10000;
  double eta0 = 2.5;
  double kd = 1.0;
  double ks = 2.4;
  int ks_level = 0;
  bool complete_null = false;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;
};

struct EvalFlags {
  std::vector<double> alpha_grid = {0.05};
  std::size_t reps = 1000;
  std::vector<std::string> methods = {"camt", "bonferroni", "holm", "weighted_bonferroni", "oracle"};
  std::string output;
  std::string json;
};

struct DiagnoseFlags {
  std::string output;
  std::size_t perturb = 50;
  bool fixed_init = false;
  std::vector<double> u_gammas;
};

// ============================================================================
// HELPERS
// ============================================================================

inline void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_decision) {
  cmd->add_option("--input,-i", f.input, "Table of id, pvalue and covariates (TSV or CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--gamma", f.gamma, "Censoring level in (0,1), or 'auto' for the Storey bootstrap");
  cmd->add_option("--fixed-k", f.fixed_k, "Hold the beta-alternative exponent k fixed");
  cmd->add_flag("--no-standardize", f.no_standardize, "Use covariates as given (default: median/IQR)");
  cmd->add_flag("--float32", f.float32, "Store covariates in single precision");
  cmd->add_option("--seed", f.seed, "Seed for the bootstrap");
  cmd->add_option("--bootstrap", f.bootstrap, "Bootstrap resamples for choosing gamma")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--single-start", f.single_start, "Run EM only from the small-p initializer");
  cmd->add_flag("--accelerate", f.accelerate, "SQUAREM-accelerated EM (default: plain EM)");
  cmd->add_option("--max-iter", f.max_iter, "Maximum EM iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--irls-max-iter", f.irls_max_iter, "Newton iterations per M step")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--irls-tol", f.irls_tol, "Gradient-norm tolerance of the M step")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--box", f.box, "Coefficient bound B (beta in [-B,B])")->check(CLI::PositiveNumber);
  cmd->add_option("--k-min", f.k_min, "Lower bound for k");
  cmd->add_option("--k-max", f.k_max, "Upper bound for k");
  cmd->add_option("--eps1", f.eps1, "Lower winsorization bound for pi_hat");
  cmd->add_option("--eps2", f.eps2, "Upper winsorization bound for pi_hat");
  if (with_decision) {
    cmd->add_option("--alpha", f.alpha, "Target FWER level");
    cmd->add_option("--epsilon", f.epsilon, "Floor for tau");
  }
}

inline PipelineOptions pipeline_options(const FitFlags& f) {
  PipelineOptions opts;
  if (f.gamma != "auto") {
    try {
      std::size_t used = 0;
      opts.gamma = std::stod(f.gamma, &used);
      if (used != f.gamma.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("--gamma must be 'auto' or a number in (0,1)");
    }
    if (!(*opts.gamma > 0.0 && *opts.gamma < 1.0)) {
      throw std::invalid_argument("--gamma must lie in (0,1)");
    }
  }
  opts.n_boot = f.bootstrap;
  opts.seed = f.seed;
  opts.em.max_iterations = f.max_iter;
  opts.em.tol = f.tol;
  opts.em.fixed_k = f.fixed_k;
  opts.em.irls_max_iter = f.irls_max_iter;
  opts.em.irls_tol = f.irls_tol;
  opts.em.accelerate = f.accelerate;
  opts.multi_start = !f.single_start;
  opts.bounds = {f.box, f.k_min, f.k_max};
  opts.eps = {f.eps1, f.eps2, f.epsilon};
  opts.bounds.validate();
  opts.em.validate(opts.bounds);
  opts.eps.validate();
  if (!(f.alpha > 0.0 && f.alpha < 1.0)) throw std::invalid_argument("--alpha must lie in (0,1)");
  return opts;
}

inline nlohmann::json flags_to_json(const FitFlags& f) {
  nlohmann::json j = {{"input", f.input},         {"gamma", f.gamma},
                      {"standardize", !f.no_standardize},
                      {"float32", f.float32},     {"seed", f.seed},
                      {"single_start", f.single_start},
                      {"accelerate", f.accelerate},
                      {"bootstrap", f.bootstrap}, {"max_iter", f.max_iter},
                      {"tol", f.tol},             {"irls_max_iter", f.irls_max_iter},
                      {"irls_tol", f.irls_tol},   {"box", f.box},
                      {"k_min", f.k_min},         {"k_max", f.k_max},
                      {"alpha", f.alpha},         {"eps1", f.eps1},
                      {"eps2", f.eps2},           {"epsilon", f.epsilon},
                      {"threads", thread_count()}};
  j["fixed_k"] = f.fixed_k ? nlohmann::json(*f.fixed_k) : nlohmann::json(nullptr);
  return j;
}

inline void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

template <class Real>
struct PreparedTable {
  BasicHypothesisTable<Real> table;
  std::vector<std::string> names;
  std::optional<Standardization> standardization;
  std::vector<std::string> warnings;
};

template <class Real>
PreparedTable<Real> prepare_table(const FitFlags& f) {
  auto read = read_table<Real>(f.input);
  PreparedTable<Real> out{std::move(read.table), std::move(read.covariate_names), std::nullopt,
                          std::move(read.warnings)};
  // Constant user covariates duplicate the intercept.
  const std::size_t c = out.table.cols();
  for (std::size_t j = 1; j < c; ++j) {
    bool constant = true;
    const Real first = out.table.row(0)[j];
    for (std::size_t i = 1; i < out.table.m() && constant; ++i) constant = out.table.row(i)[j] == first;
    if (constant) {
      out.warnings.push_back("covariate '" + out.names[j - 1] +
                             "' is constant and collinear with the intercept; the beta update "
                             "falls back to ridge regularisation");
    }
  }
  if (!f.no_standardize) out.standardization = standardize_covariates(out.table);
  return out;
}

inline nlohmann::json standardization_json(const std::optional<Standardization>& s,
                                           const std::vector<std::string>& names) {
  if (!s) return nullptr;
  return {{"covariates", names}, {"center", s->center}, {"scale", s->scale}};
}

inline nlohmann::json camt_fit_json(const CamtFit& r) {
  nlohmann::json j = fit_to_json(r.fit);
  j["storey"] = {{"pi_s", r.storey.pi_s},
                 {"lambda_grid", r.storey.lambda_grid},
                 {"pi_lambda", r.storey.pi_lambda},
                 {"mse", r.storey.mse}};
  j["init"] = {{"beta0", r.init.beta0}, {"k0", r.init.k0},           {"u", r.init.u},
               {"n_small", r.init.n_small}, {"pi_s", r.init.pi_s}, {"neutral", r.init.neutral}};
  j["start"] = r.start;
  j["start_loglik"] = {{"small_p", r.start_loglik_small_p},
                       {"storey", std::isnan(r.start_loglik_storey) ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(r.start_loglik_storey)}};
  j["em_maps"] = r.fit.em_maps;
  j["n_censored"] = count_censored(r.censored);
  j["eps1"] = r.fit.eps1;
  j["eps2"] = r.fit.eps2;
  return j;
}

// ============================================================================
// COMMANDS
// ============================================================================

template <class Real>
int run_fit(const FitFlags& f) {
  const auto opts = pipeline_options(f);
  auto prepared = prepare_table<Real>(f);
  print_warnings(prepared.warnings);
  const CamtFit result = fit_camt(prepared.table, opts);
  print_warnings(result.fit.warnings);
  nlohmann::json doc = {{"software", "camt"},
                        {"version", kVersion},
                        {"command", "fit"},
                        {"options", flags_to_json(f)},
                        {"m", prepared.table.m()},
                        {"d", prepared.table.d()},
                        {"standardization", standardization_json(prepared.standardization, prepared.names)},
                        {"fit", camt_fit_json(result)}};
  write_json(f.output, doc);
  std::cout << "fit: m=" << prepared.table.m() << " gamma=" << result.gamma
            << " k=" << result.fit.params.k << " iterations=" << result.fit.iterations
            << (result.fit.converged ? "" : " (not converged)") << '\n';
  return kExitOk;
}

template <class Real>
int run_reject(const FitFlags& f) {
  const auto opts = pipeline_options(f);
  auto prepared = prepare_table<Real>(f);
  print_warnings(prepared.warnings);
  const CamtFit result = fit_camt(prepared.table, opts);
  print_warnings(result.fit.warnings);
  const DecisionSet decisions = decide(prepared.table, result.fit, f.alpha, opts.eps);
  print_warnings(decisions.warnings);
  nlohmann::json extra = {{"command", "reject"},
                          {"options", flags_to_json(f)},
                          {"seed", f.seed},
                          {"standardization", standardization_json(prepared.standardization, prepared.names)},
                          {"fit", camt_fit_json(result)}};
  write_decisions(f.output, prepared.table, result.fit, decisions, extra);
  std::cout << "reject: " << decisions.n_rejected << " of " << prepared.table.m()
            << " hypotheses at alpha=" << f.alpha << '\n';
  return kExitOk;
}

inline void add_sim_flags(CLI::App* cmd, SimFlags& s) {
  cmd->add_option("--config", s.config, "Key-value file with simulation settings")
      ->check(CLI::ExistingFile);
  cmd->add_option("--setup", s.setup, "S0, S1, S2.1, S2.2, S2.3 or S2.4");
  cmd->add_option("--m", s.m, "Number of hypotheses")->check(CLI::PositiveNumber);
  cmd->add_option("--eta0", s.eta0, "Baseline log-odds of being null");
  cmd->add_option("--kd", s.kd, "Covariate informativeness");
  cmd->add_option("--ks", s.ks, "Signal strength");
  cmd->add_option("--ks-level", s.ks_level, "Signal strength label 1..6 on [2, 2.8]")
      ->check(CLI::Range(1, 6));
  cmd->add_flag("--null", s.complete_null, "Complete null: no signals");
  cmd->add_option("--seed", s.seed, "Simulation seed");
}

inline SimulationConfig simulation_config(const SimFlags& flags, const CLI::App* cmd) {
  SimulationConfig c;
  SimFlags s = flags;
  if (!s.config.empty()) {
    // The file supplies defaults; explicit flags win.
    const auto kv = read_key_values(s.config);
    auto given = [&](const char* opt) { return cmd->count(opt) > 0; };
    for (const auto& [key, value] : kv) {
      try {
        if (key == "setup" && !given("--setup")) s.setup = value;
        else if (key == "m" && !given("--m")) s.m = std::stoull(value);
        else if (key == "eta0" && !given("--eta0")) s.eta0 = std::stod(value);
        else if (key == "kd" && !given("--kd")) s.kd = std::stod(value);
        else if (key == "ks" && !given("--ks")) s.ks = std::stod(value);
        else if (key == "ks_level" && !given("--ks-level")) s.ks_level = std::stoi(value);
        else if (key == "null" && !given("--null")) s.complete_null = value == "true" || value == "1";
        else if (key == "seed" && !given("--seed")) s.seed = std::stoull(value);
        else if (key != "setup" && key != "m" && key != "eta0" && key != "kd" && key != "ks" &&
                 key != "ks_level" && key != "null" && key != "seed") {
          throw ParseError("unknown key '" + key + "' in " + s.config);
        }
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception&) {
        throw ParseError("invalid value '" + value + "' for key '" + key + "'");
      }
    }
  }
  apply_setup(c, s.setup);
  c.m = s.m;
  c.eta0 = s.eta0;
  c.kd = s.kd;
  c.ks = s.ks_level > 0 ? signal_strength_level(s.ks_level) : s.ks;
  c.complete_null = s.complete_null;
  c.seed = s.seed;
  c.validate();
  return c;
}

inline nlohmann::json sim_json(const SimulationConfig& c, const std::string& setup) {
  return {{"setup", setup}, {"m", c.m},   {"eta0", c.eta0}, {"kd", c.kd},
          {"ks", c.ks},     {"null", c.complete_null},      {"seed", c.seed}};
}

inline int run_simulate(const SimFlags& s, const CLI::App* cmd, const std::string& output) {
  const SimulationConfig c = simulation_config(s, cmd);
  const auto study = simulate(c, s.replicate);
  write_table(output, study.table, {"x1"}, &study.truth);
  nlohmann::json doc = sim_json(c, s.setup);
  doc["replicate"] = s.replicate;
  doc["version"] = kVersion;
  write_json(sidecar_path(output), doc);
  std::size_t m1 = 0;
  for (auto h : study.truth) m1 += h;
  std::cout << "simulate: m=" << c.m << " alternatives=" << m1 << '\n';
  return kExitOk;
}

inline int run_evaluate(const SimFlags& s, const CLI::App* cmd, const EvalFlags& e,
                        const FitFlags& f) {
  ExperimentConfig config;
  config.sim = simulation_config(s, cmd);
  config.alpha_grid = e.alpha_grid;
  config.n_rep = e.reps;
  config.methods.clear();
  for (const auto& name : e.methods) config.methods.push_back(parse_method(name));
  config.camt = pipeline_options(f);
  const auto result = run_experiment(config);
  print_warnings(result.errors);

  std::ostringstream table;
  table << "setup\tmethod\talpha\tn_rep\tn_failed\tfwer\tfwer_lo\tfwer_hi\ttpr\ttpr_se\tmean_rejections\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.summaries) {
    table << s.setup << '\t' << r.method << '\t' << format_double(r.alpha) << '\t' << r.n_rep << '\t'
          << r.n_failed << '\t' << format_double(r.fwer_hat) << '\t' << format_double(r.fwer_ci.lo)
          << '\t' << format_double(r.fwer_ci.hi) << '\t' << format_double(r.tpr_hat) << '\t'
          << format_double(r.tpr_se) << '\t' << format_double(r.mean_rejections) << '\n';
    rows.push_back({{"method", r.method},     {"alpha", r.alpha},       {"n_rep", r.n_rep},
                    {"n_failed", r.n_failed}, {"fwer", r.fwer_hat},     {"fwer_ci", {r.fwer_ci.lo, r.fwer_ci.hi}},
                    {"tpr", r.tpr_hat},       {"tpr_se", r.tpr_se},     {"mean_rejections", r.mean_rejections}});
  }
  if (e.output.empty()) {
    std::cout << table.str();
  } else {
    StagedFile file(e.output);
    file.stream() << table.str();
    file.commit();
  }
  if (!e.json.empty()) {
    nlohmann::json doc = {{"version", kVersion},
                          {"simulation", sim_json(config.sim, s.setup)},
                          {"reps", e.reps},
                          {"options", flags_to_json(f)},
                          {"summaries", rows},
                          {"errors", result.errors}};
    write_json(e.json, doc);
  }
  return kExitOk;
}

template <class Real>
int run_diagnose(const FitFlags& f, const DiagnoseFlags& d) {
  nlohmann::json doc = {{"version", kVersion}, {"command", "diagnose"}};
  if (!f.input.empty()) {
    const auto opts = pipeline_options(f);
    auto prepared = prepare_table<Real>(f);
    print_warnings(prepared.warnings);
    double gamma = 0.0;
    if (opts.gamma) {
      gamma = *opts.gamma;
    } else {
      gamma = storey_pi0_and_gamma(prepared.table.pvalues(), opts.lambda_grid, opts.n_boot, opts.seed).gamma;
    }
    PerturbationOptions popts;
    popts.alpha = f.alpha;
    popts.pipeline = opts;
    popts.recompute_init = !d.fixed_init;
    const auto idx = sample_indices(prepared.table.m(), d.perturb, f.seed);
    const auto res = perturbation_diagnostic(prepared.table, gamma, popts, idx);
    nlohmann::json entries = nlohmann::json::array();
    std::size_t failed = 0;
    for (std::size_t i = 0; i < res.indices.size(); ++i) {
      failed += res.failed[i];
      entries.push_back({{"id", prepared.table.id(res.indices[i])},
                         {"difference", res.failed[i] ? nlohmann::json(nullptr)
                                                      : nlohmann::json(res.difference[i])}});
    }
    const double median = res.median();
    doc["options"] = flags_to_json(f);
    doc["perturbation"] = {{"gamma", gamma},
                           {"sampled", res.indices.size()},
                           {"failed", failed},
                           {"median", std::isnan(median) ? nlohmann::json(nullptr) : nlohmann::json(median)},
                           {"entries", entries}};
    std::cout << "perturbation: median |t(p->0) - t(p->1)| = " << median << " over "
              << res.indices.size() - failed << " indices\n";
  }
  std::vector<double> gammas = d.u_gammas;
  if (gammas.empty()) {
    for (int i = 1; i <= 19; ++i) gammas.push_back(0.05 * i);
  }
  nlohmann::json u_rows = nlohmann::json::array();
  for (double g : gammas) {
    const auto best = u_min_over_k(g);
    u_rows.push_back({{"gamma", g}, {"k_min", best.k}, {"u_min", best.u}});
    std::cout << "u: gamma=" << g << " argmin_k=" << best.k << " min_u=" << best.u << '\n';
  }
  doc["u_gamma_k"] = u_rows;
  if (!d.output.empty()) write_json(d.output, doc);
  return kExitOk;
}

// ============================================================================
// DISPATCH
// ============================================================================

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Covariate-adaptive family-wise error rate control"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores; env CAMT_THREADS)")
      ->check(CLI::NonNegativeNumber);

  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Fit the mixture model and write the fit as JSON");
  add_fit_flags(fit, fit_flags, false);
  fit->add_option("--output,-o", fit_flags.output, "Output JSON")->required();

  FitFlags reject_flags;
  auto* reject = app.add_subcommand("reject", "Fit and write per-hypothesis decisions (TSV + JSON)");
  add_fit_flags(reject, reject_flags, true);
  reject->add_option("--output,-o", reject_flags.output, "Output TSV")->required();

  SimFlags sim_flags;
  std::string sim_output;
  auto* sim = app.add_subcommand("simulate", "Simulate one study with its truth column");
  add_sim_flags(sim, sim_flags);
  sim->add_option("--replicate", sim_flags.replicate, "Replicate stream index");
  sim->add_option("--output,-o", sim_output, "Output TSV")->required();

  SimFlags eval_sim;
  EvalFlags eval_flags;
  FitFlags eval_fit;
  auto* eval = app.add_subcommand("evaluate", "Replicated FWER/TPR comparison of all methods");
  add_sim_flags(eval, eval_sim);
  eval->add_option("--alpha-grid", eval_flags.alpha_grid, "Comma-separated FWER levels")->delimiter(',');
  eval->add_option("--reps", eval_flags.reps, "Replicates")->check(CLI::PositiveNumber);
  eval->add_option("--methods", eval_flags.methods, "Comma-separated methods")->delimiter(',');
  eval->add_option("--gamma", eval_fit.gamma, "Censoring level or 'auto'");
  eval->add_option("--bootstrap", eval_fit.bootstrap, "Bootstrap resamples for gamma")
      ->check(CLI::PositiveNumber);
  eval->add_option("--eps1", eval_fit.eps1, "Lower winsorization bound");
  eval->add_option("--eps2", eval_fit.eps2, "Upper winsorization bound");
  eval->add_option("--epsilon", eval_fit.epsilon, "Floor for tau");
  eval->add_option("--output,-o", eval_flags.output, "Long-format TSV (default: stdout)");
  eval->add_option("--json", eval_flags.json, "Also write the summaries as JSON");

  FitFlags diag_fit;
  DiagnoseFlags diag_flags;
  auto* diag = app.add_subcommand("diagnose", "Perturbation stability and u(gamma,k) reports");
  diag->add_option("--input,-i", diag_fit.input, "Table for the perturbation diagnostic")
      ->check(CLI::ExistingFile);
  diag->add_option("--gamma", diag_fit.gamma, "Censoring level or 'auto'");
  diag->add_option("--alpha", diag_fit.alpha, "Target FWER level");
  diag->add_option("--seed", diag_fit.seed, "Seed for index sampling and the bootstrap");
  diag->add_flag("--no-standardize", diag_fit.no_standardize, "Use covariates as given");
  diag->add_option("--perturb", diag_flags.perturb, "Number of sampled indices");
  diag->add_flag("--fixed-init", diag_flags.fixed_init, "Reuse the unperturbed initializer");
  diag->add_option("--u-gamma", diag_flags.u_gammas, "Comma-separated gamma values for u(gamma,k)")
      ->delimiter(',');
  diag->add_option("--output,-o", diag_flags.output, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitValidation;
  }

  try {
    if (app.count("--threads") > 0) set_thread_count(static_cast<std::size_t>(threads));
    if (*fit) return fit_flags.float32 ? run_fit<float>(fit_flags) : run_fit<double>(fit_flags);
    if (*reject) {
      return reject_flags.float32 ? run_reject<float>(reject_flags) : run_reject<double>(reject_flags);
    }
    if (*sim) return run_simulate(sim_flags, sim, sim_output);
    if (*eval) return run_evaluate(eval_sim, eval, eval_flags, eval_fit);
    if (*diag) return run_diagnose<double>(diag_fit, diag_flags);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace camt::cli
