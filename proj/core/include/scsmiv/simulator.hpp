#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "scsmiv/data_model.hpp"
#include "scsmiv/estimator.hpp"
#include "scsmiv/inference.hpp"
#include "scsmiv/iv_center.hpp"

namespace scsmiv {

/// P(W > t | Z, U) = exp(-(base + u1 U1) t - z Z).
struct SwitchRates {
  double base = 0.05;
  double u1 = 0.1;
  double z = 0.1;
};

/// Event hazard base + treatment d(t) + z Z + u2 U2.
struct EventRates {
  double base = 0.25;
  double treatment = 0.1;
  double z = 0.0;
  double u2 = 0.15;
};

struct SimConfig {
  std::size_t n = 1600;
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  double grid_step = 0.1;
  std::array<double, 2> u_mean{1.5, 1.5};
  std::array<std::array<double, 2>, 2> u_cov{{{0.25, -1.0 / 6.0}, {-1.0 / 6.0, 0.25}}};
  double randomization_probability = 0.5;
  SwitchRates switch_rates{};
  EventRates event_rates{};
  /// Overall censoring fraction (administrative plus random) to calibrate for.
  double censoring_target = 0.22;
  /// Exponential censoring rate; calibrated from censoring_target when empty.
  std::optional<double> censoring_rate;
  std::size_t calibration_cohort = 100000;
  /// End of study: follow-up is administratively censored here.
  double tau = 3.0;
  std::vector<double> eval_times{1.0, 2.0, 3.0};
  IvSpec iv = IvSpec::known(0.5);
  WeightSpec weights = WeightSpec::AtRisk;
  VarianceMode variance = VarianceMode::Full;
  /// Multiplier resamples per replicate for the two sup tests (0 = no tests).
  std::size_t n_resamples = 0;
  double test_level = 0.05;
  std::size_t threads = 0;

  /// Throws Error(InvalidConfig) naming the first offending field.
  void validate() const;
};

/// Latent draws behind one simulated subject, kept for generator diagnostics.
struct SimulatedSubject {
  SubjectRecord record;
  std::array<double, 2> u{};
  double switch_time = 0.0;  // on the grid; +inf when the subject never switches
  double event_time = 0.0;   // uncensored T~
};

/// Exact piecewise-exponential inversion: the time at which the cumulative
/// hazard, rate h1 before `change` and h2 after, reaches `target`.
double invert_two_piece_hazard(double target, double h1, double h2, double change) noexcept;

/// Exponential censoring rate with overall censoring = cfg.censoring_target on
/// a pilot cohort of cfg.calibration_cohort subjects (bisection).
double calibrate_censoring(const SimConfig& cfg);

/// cfg.censoring_rate if set, else calibrate_censoring(cfg).
double resolved_censoring_rate(const SimConfig& cfg);

std::vector<SimulatedSubject> simulate_cohort(const SimConfig& cfg, std::size_t n, std::uint64_t stream,
                                              double censoring_rate);

/// Replicate r of the trial; deterministic in (cfg.seed, r).
std::vector<SubjectRecord> simulate_trial(const SimConfig& cfg, std::size_t replicate);

/// B_D(t) = 0.1 t, or the configured treatment coefficient times t.
double true_cumulative_effect(double t) noexcept;
double true_cumulative_effect(const SimConfig& cfg, double t) noexcept;

struct MonteCarloSummary {
  double time = 0.0;  // NaN for the constant-effect row
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double see = 0.0;       // Monte Carlo SD of the estimates
  double sd = 0.0;        // mean estimated SE
  double coverage = 0.0;  // percent of 95% intervals covering the truth
};

/// Per-replicate outcome, stored by replicate index.
struct ReplicateResult {
  bool ok = false;
  std::string failure;
  std::vector<double> estimates;  // B(t) at eval_times
  std::vector<double> se;
  double beta = 0.0;
  double beta_se = 0.0;
  double null_p = 1.0;
  double gof_p = 1.0;
  double switch_rate = 0.0;
  double censor_rate = 0.0;
  double residual_ratio = 0.0;  // max_k |estimating equation| / n
  double residual_relative = 0.0;  // max_k |estimating equation| / its cancellation scale
  double solve_residual = 0.0;
};

struct MonteCarloReport {
  SimConfig config;
  double censoring_rate = 0.0;
  std::vector<MonteCarloSummary> times;
  MonteCarloSummary beta;
  std::size_t replicates = 0;
  std::size_t used = 0;
  std::size_t singular_count = 0;
  std::size_t failure_count = 0;
  /// With one usable replicate the Monte Carlo SD is undefined and reported as 0.
  bool see_undefined = false;
  double switch_rate = 0.0;
  double censor_rate = 0.0;
  double max_residual_ratio = 0.0;
  double max_residual_relative = 0.0;
  /// Usable replicates whose residual exceeds 1e-10 n.
  std::size_t residual_violations = 0;
  double max_solve_residual = 0.0;
  std::optional<double> null_rejection;
  std::optional<double> gof_rejection;
  std::vector<ReplicateResult> per_replicate;
};

/// Estimates on one replicate; estimation errors are caught and recorded.
ReplicateResult run_replicate(const SimConfig& cfg, std::size_t replicate);

MonteCarloReport run_monte_carlo(const SimConfig& cfg);

/// Aggregation only; independent of the order in which `results` were produced.
MonteCarloReport summarize_replicates(const SimConfig& cfg, double censoring_rate,
                                      std::vector<ReplicateResult> results);

/// Stratified check that S(t | always treated) / S(t | never treated) tracks
/// exp(-treatment t) on an uncensored cohort, within U2-quantile strata.
struct ConsistencyPoint {
  double time = 0.0;
  double log_ratio = 0.0;  // pooled across strata
  double expected = 0.0;   // -treatment * t
  double se = 0.0;
  bool within_tolerance = false;
};

std::vector<ConsistencyPoint> check_generator_consistency(const SimConfig& cfg, std::size_t cohort,
                                                          std::size_t strata, std::vector<double> times,
                                                          double z_tolerance = 3.0);

}  // namespace scsmiv
