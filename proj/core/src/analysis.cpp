#include "scsmiv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <system_error>

#include "scsmiv/dataset_io.hpp"
#include "scsmiv/error.hpp"
#include "scsmiv/report_io.hpp"

namespace scsmiv {

namespace {

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.message());
  }
}

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, "invalid analysis config: " + what); }

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::Io, "cannot create output directory '" + dir.string() + "'");
  }
}

}  // namespace

IvSpec AnalysisConfig::iv_spec() const {
  const IvMode mode = iv_mode ? *iv_mode : pz ? IvMode::KnownProbability : IvMode::EmpiricalMean;
  switch (mode) {
    case IvMode::KnownProbability:
      if (!pz) invalid("iv mode 'known' needs a randomization probability");
      return IvSpec::known(*pz);
    case IvMode::EmpiricalMean:
      return IvSpec::empirical_mean();
    case IvMode::LogisticRegression:
      return IvSpec::logistic();
  }
  return IvSpec::empirical_mean();
}

void AnalysisConfig::validate() const {
  if (pz && !(*pz > 0.0 && *pz < 1.0)) invalid("pz must lie in (0, 1)");
  if (tau && !(*tau > 0.0 && std::isfinite(*tau))) invalid("tau must be positive");
  for (double t : eval_times) {
    if (!(t >= 0.0) || !std::isfinite(t)) invalid("eval times must be finite and nonnegative");
  }
  (void)iv_spec();
}

DatasetSummary summarize_dataset(const EventTable& table) {
  DatasetSummary s;
  s.subjects = table.subject_count();
  s.distinct_event_times = table.time_count();
  s.tau = table.tau();
  for (const auto& r : table.subjects()) {
    s.events += r.status ? 1 : 0;
    s.assigned_treated += r.z == 1.0 ? 1 : 0;
    if (r.path.switch_count() == 0) continue;
    ++s.switchers;
    (r.path.changes().front().value == 1 ? s.switched_from_treated : s.switched_from_untreated) += 1;
  }
  return s;
}

AnalysisReport analyze(std::vector<SubjectRecord> records, const AnalysisConfig& cfg) {
  cfg.validate();
  AnalysisReport report;
  report.version = std::string(library_version());
  report.config = cfg;

  records = stage("validate", [&] { return validate_subjects(std::move(records)); });
  const EventTable table = stage("event table", [&] { return build_event_table(std::move(records), cfg.tau); });
  report.summary = summarize_dataset(table);
  const IvModel iv = stage("instrument model", [&] { return fit_iv_model(table.subjects(), cfg.iv_spec()); });
  report.iv_mode = iv.mode;
  report.iv_theta.assign(iv.theta.data(), iv.theta.data() + iv.theta.size());

  report.effect = stage("estimation", [&] { return estimate_cumulative_effect(table, iv); });
  const ConstantEffect beta =
      stage("constant effect", [&] { return estimate_constant_effect(report.effect, table, cfg.weight_spec); });
  report.beta = beta.beta;

  InfluenceOptions io;
  io.mode = cfg.variance_mode;
  InfluenceMatrix infl = stage("influence", [&] { return influence_functions(table, iv, report.effect, io); });
  attach_constant_effect(infl, beta);
  report.includes_theta_correction = infl.includes_theta_correction;
  report.solve_residual = infl.solve_residual;
  report.curve = variance_curve(infl, report.effect);
  report.beta_ci = constant_effect_se(infl, beta);
  if (report.beta_ci.se > 0.0) {
    report.beta_p_value = std::erfc(std::abs(report.beta / report.beta_ci.se) / std::sqrt(2.0));
  } else {
    report.beta_p_value = report.beta == 0.0 ? 1.0 : 0.0;
  }

  for (double t : cfg.eval_times) {
    PointEstimate p;
    p.time = t;
    p.estimate = report.effect.value(t);
    const auto idx = static_cast<std::size_t>(
        std::upper_bound(report.effect.times.begin(), report.effect.times.end(), t) - report.effect.times.begin());
    p.se = idx == 0 ? 0.0 : report.curve.se[idx - 1];
    p.lower = p.estimate - kNormalQuantile975 * p.se;
    p.upper = p.estimate + kNormalQuantile975 * p.se;
    report.at_eval_times.push_back(p);
  }

  if (cfg.n_resamples > 0) {
    ResampleOptions ro;
    ro.threads = cfg.threads;
    ro.keep_paths = cfg.keep_paths;
    SupTests tests = stage("tests", [&] { return run_sup_tests(infl, report.effect, beta, cfg.n_resamples, cfg.seed, ro); });
    report.causal_null = std::move(tests.causal_null);
    report.constant_effect = std::move(tests.constant_effect);
  }
  return report;
}

AnalysisReport run_analysis(const AnalysisConfig& cfg) {
  cfg.validate();
  auto records = stage("parse", [&] { return parse_dataset(cfg.subjects_path, cfg.treatment_path); });
  AnalysisReport report = analyze(std::move(records), cfg);
  report.timestamp = utc_timestamp();
  if (cfg.output_dir) {
    const auto& dir = *cfg.output_dir;
    ensure_directory(dir);
    write_text_file(dir / "report.json", report_to_json(report));
    if (cfg.estimation_outputs) write_text_file(dir / "bands.csv", bands_csv(report));
    write_text_file(dir / "testprocess.csv", testprocess_csv(report));
  }
  return report;
}

SimulationOutputs run_simulation_command(const SimConfig& cfg, const std::filesystem::path& output_dir,
                                         std::optional<std::size_t> export_replicate) {
  cfg.validate();
  ensure_directory(output_dir);
  SimulationOutputs out;
  out.report = run_monte_carlo(cfg);

  const auto table1 = output_dir / "table1.csv";
  const auto json = output_dir / "simulation.json";
  write_text_file(table1, table1_csv(out.report));
  write_text_file(json, monte_carlo_to_json(out.report));
  out.written = {table1, json};

  if (export_replicate) {
    SimConfig fixed = cfg;
    fixed.censoring_rate = out.report.censoring_rate;
    const auto records = simulate_trial(fixed, *export_replicate);
    const std::string stem = "replicate_" + std::to_string(*export_replicate);
    const auto subjects = output_dir / (stem + "_subjects.csv");
    const auto treatment = output_dir / (stem + "_treatment.csv");
    write_dataset(records, subjects, treatment);
    out.written.push_back(subjects);
    out.written.push_back(treatment);
  }
  return out;
}

}  // namespace scsmiv
