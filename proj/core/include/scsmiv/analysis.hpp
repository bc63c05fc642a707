#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scsmiv/data_model.hpp"
#include "scsmiv/estimator.hpp"
#include "scsmiv/inference.hpp"
#include "scsmiv/iv_center.hpp"
#include "scsmiv/simulator.hpp"

namespace scsmiv {

struct AnalysisConfig {
  std::filesystem::path subjects_path;
  std::optional<std::filesystem::path> treatment_path;
  /// Known randomization probability; selects KnownProbability unless iv_mode says otherwise.
  std::optional<double> pz;
  std::optional<IvMode> iv_mode;
  WeightSpec weight_spec = WeightSpec::AtRisk;
  std::size_t n_resamples = 1000;
  std::uint64_t seed = 1;
  VarianceMode variance_mode = VarianceMode::Full;
  std::optional<std::filesystem::path> output_dir;
  std::vector<double> eval_times;
  std::optional<double> tau;
  std::size_t keep_paths = 20;
  std::size_t threads = 0;
  /// false for the `test` subcommand: bands.csv is not written.
  bool estimation_outputs = true;

  IvSpec iv_spec() const;
  void validate() const;
};

struct DatasetSummary {
  std::size_t subjects = 0;
  std::size_t events = 0;
  std::size_t distinct_event_times = 0;
  std::size_t switchers = 0;
  std::size_t switched_from_treated = 0;    // initial D = 1, later 0
  std::size_t switched_from_untreated = 0;  // initial D = 0, later 1
  std::size_t assigned_treated = 0;          // z = 1
  double tau = 0.0;
};

struct PointEstimate {
  double time = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct AnalysisReport {
  std::string version;
  std::string timestamp;
  AnalysisConfig config;
  DatasetSummary summary;
  IvMode iv_mode = IvMode::EmpiricalMean;
  std::vector<double> iv_theta;
  CumulativeEffect effect;
  VarianceCurve curve;
  double beta = 0.0;
  ConstantEffectInference beta_ci;
  double beta_p_value = 1.0;  // two-sided Wald test of beta = 0
  std::vector<PointEstimate> at_eval_times;
  bool includes_theta_correction = false;
  double solve_residual = 0.0;
  /// Empty when n_resamples = 0 ("tests skipped").
  std::optional<TestReport> causal_null;
  std::optional<TestReport> constant_effect;
  std::string sup_statistic = "raw";
};

/// validate -> event table -> IV model -> B, beta -> influence -> SEs -> tests.
AnalysisReport analyze(std::vector<SubjectRecord> records, const AnalysisConfig& cfg);

/// parse_dataset, analyze and, when cfg.output_dir is set, write report.json,
/// bands.csv and testprocess.csv. Errors carry the failing stage in the message.
AnalysisReport run_analysis(const AnalysisConfig& cfg);

struct SimulationOutputs {
  MonteCarloReport report;
  std::vector<std::filesystem::path> written;
};

/// Runs the Monte Carlo study and writes table1.csv and simulation.json into
/// `output_dir`; with `export_replicate` also the replicate's CSV pair.
SimulationOutputs run_simulation_command(const SimConfig& cfg, const std::filesystem::path& output_dir,
                                         std::optional<std::size_t> export_replicate = std::nullopt);

DatasetSummary summarize_dataset(const EventTable& table);

}  // namespace scsmiv
