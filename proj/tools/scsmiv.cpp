// scsmiv: estimate, test and simulate from the command line.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "scsmiv/analysis.hpp"
#include "scsmiv/dataset_io.hpp"
#include "scsmiv/error.hpp"
#include "scsmiv/report_io.hpp"

namespace {

using namespace scsmiv;

struct AnalysisFlags {
  std::string data;
  std::string treatment;
  std::optional<double> pz;
  std::string iv;
  std::size_t boot = 1000;
  std::uint64_t seed = 1;
  std::string weights = "at_risk";
  std::string variance = "full";
  std::string out;
  std::optional<double> tau;
  std::vector<double> eval_times;
  std::size_t threads = 0;
};

void add_analysis_flags(CLI::App* cmd, AnalysisFlags& f) {
  cmd->add_option("--data", f.data, "Subjects CSV (id,time,status,z[,covariates])")->required();
  cmd->add_option("--treatment", f.treatment, "Treatment changes CSV (id,change_time,value)");
  cmd->add_option("--pz", f.pz, "Known randomization probability P(Z=1)");
  cmd->add_option("--iv", f.iv, "Instrument model")->check(CLI::IsMember({"known", "empirical_mean", "logistic"}));
  cmd->add_option("--boot", f.boot, "Multiplier resamples for the sup tests (0 skips tests)")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Resampling seed")->capture_default_str();
  cmd->add_option("--weights", f.weights, "Constant-effect weight")
      ->check(CLI::IsMember({"at_risk", "at_risk_treated", "uniform"}))
      ->capture_default_str();
  cmd->add_option("--variance", f.variance, "Influence kernel")
      ->check(CLI::IsMember({"full", "simplified"}))
      ->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--tau", f.tau, "End of study (default: largest observed time)");
  cmd->add_option("--eval-times", f.eval_times, "Times at which to report B(t)");
  cmd->add_option("--threads", f.threads, "Worker threads (default: SCSMIV_THREADS or all cores)");
}

AnalysisConfig to_config(const AnalysisFlags& f, bool estimation_outputs) {
  AnalysisConfig cfg;
  cfg.subjects_path = f.data;
  if (!f.treatment.empty()) cfg.treatment_path = f.treatment;
  cfg.pz = f.pz;
  if (!f.iv.empty()) cfg.iv_mode = parse_iv_mode(f.iv);
  cfg.n_resamples = f.boot;
  cfg.seed = f.seed;
  cfg.weight_spec = parse_weight_spec(f.weights);
  cfg.variance_mode = parse_variance_mode(f.variance);
  if (!f.out.empty()) cfg.output_dir = f.out;
  cfg.tau = f.tau;
  cfg.eval_times = f.eval_times;
  cfg.threads = f.threads;
  cfg.estimation_outputs = estimation_outputs;
  return cfg;
}

void print_tests(const AnalysisReport& r) {
  if (!r.causal_null) {
    std::printf("tests skipped (--boot 0)\n");
    return;
  }
  std::printf("causal null      sup = %.6g  p = %.4f  (%zu resamples)\n", r.causal_null->statistic,
              r.causal_null->p_value, r.causal_null->n_resamples);
  std::printf("constant effect  sup = %.6g  p = %.4f  (%zu resamples)\n", r.constant_effect->statistic,
              r.constant_effect->p_value, r.constant_effect->n_resamples);
}

void print_estimates(const AnalysisReport& r) {
  const auto& s = r.summary;
  std::printf("subjects %zu, events %zu, switchers %zu (%zu from treated, %zu from untreated), tau %.6g\n",
              s.subjects, s.events, s.switchers, s.switched_from_treated, s.switched_from_untreated, s.tau);
  std::printf("beta = %.6g  se = %.6g  95%% CI (%.6g, %.6g)  p = %.4f\n", r.beta, r.beta_ci.se, r.beta_ci.lower,
              r.beta_ci.upper, r.beta_p_value);
  for (const auto& p : r.at_eval_times) {
    std::printf("B(%g) = %.6g  se = %.6g  95%% CI (%.6g, %.6g)\n", p.time, p.estimate, p.se, p.lower, p.upper);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrumental-variable estimation for structural cumulative survival models"};
  app.set_version_flag("--version", std::string(scsmiv::library_version()));
  app.require_subcommand(1);

  AnalysisFlags est;
  auto* estimate = app.add_subcommand("estimate", "Estimate B(t), beta, standard errors and tests");
  add_analysis_flags(estimate, est);

  AnalysisFlags tst;
  auto* test = app.add_subcommand("test", "Causal-null and constant-effect tests only");
  add_analysis_flags(test, tst);

  std::string config_path;
  std::optional<std::size_t> n;
  std::optional<std::size_t> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> boot;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> export_replicate;
  std::string sim_variance;
  std::string sim_weights;
  std::string sim_out = ".";
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the estimator");
  simulate->add_option("--config", config_path, "SimConfig JSON file");
  simulate->add_option("--n", n, "Subjects per replicate");
  simulate->add_option("--replicates", replicates, "Number of replicates");
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--boot", boot, "Multiplier resamples per replicate (0 skips tests)");
  simulate->add_option("--threads", threads, "Worker threads");
  simulate->add_option("--variance", sim_variance, "Influence kernel")->check(CLI::IsMember({"full", "simplified"}));
  simulate->add_option("--weights", sim_weights, "Constant-effect weight")
      ->check(CLI::IsMember({"at_risk", "at_risk_treated", "uniform"}));
  simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();
  simulate->add_option("--export-replicate", export_replicate, "Also write replicate k as a CSV pair");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : scsmiv::exit_code_for(scsmiv::ErrorCategory::Validation);
  }

  try {
    if (*estimate) {
      const auto report = scsmiv::run_analysis(to_config(est, true));
      print_estimates(report);
      print_tests(report);
    } else if (*test) {
      print_tests(scsmiv::run_analysis(to_config(tst, false)));
    } else if (*simulate) {
      scsmiv::SimConfig cfg;
      if (!config_path.empty()) cfg = scsmiv::sim_config_from_json(scsmiv::read_text_file(config_path));
      if (n) cfg.n = *n;
      if (replicates) cfg.replicates = *replicates;
      if (seed) cfg.seed = *seed;
      if (boot) cfg.n_resamples = *boot;
      if (threads) cfg.threads = *threads;
      if (!sim_variance.empty()) cfg.variance = scsmiv::parse_variance_mode(sim_variance);
      if (!sim_weights.empty()) cfg.weights = scsmiv::parse_weight_spec(sim_weights);
      const auto out = scsmiv::run_simulation_command(cfg, sim_out, export_replicate);
      std::cout << scsmiv::table1_csv(out.report);
      const auto& r = out.report;
      std::printf("used %zu of %zu replicates (%zu singular denominator), switch rate %.4f, censoring %.4f\n", r.used,
                  r.replicates, r.singular_count, r.switch_rate, r.censor_rate);
      if (r.null_rejection) {
        std::printf("rejection at %.2f: causal null %.4f, constant effect %.4f\n", cfg.test_level, *r.null_rejection,
                    *r.gof_rejection);
      }
      for (const auto& p : out.written) std::printf("wrote %s\n", p.string().c_str());
    }
  } catch (const scsmiv::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(scsmiv::to_string(e.code())).c_str(), e.message().c_str());
    return scsmiv::exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
