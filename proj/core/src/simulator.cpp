#include "scsmiv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "scsmiv/error.hpp"
#include "scsmiv/parallel.hpp"

namespace scsmiv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream domains, so trial, calibration, test and cohort draws never overlap.
constexpr std::uint64_t kTrialDomain = 1;
constexpr std::uint64_t kCalibrationDomain = 2;
constexpr std::uint64_t kTestDomain = 3;
constexpr std::uint64_t kCohortDomain = 4;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double rate) {
  const double e = -std::log1p(-uniform01(rng));
  return rate > 0.0 ? e / rate : kInf;
}

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, "invalid simulation config: " + what); }

std::vector<SimulatedSubject> draw_cohort(const SimConfig& cfg, std::size_t n, std::uint64_t stream_key,
                                          double censoring_rate, bool censor) {
  std::mt19937_64 rng(stream_key);
  std::normal_distribution<double> normal;
  const double l11 = std::sqrt(cfg.u_cov[0][0]);
  const double l21 = cfg.u_cov[1][0] / l11;
  const double l22 = std::sqrt(cfg.u_cov[1][1] - l21 * l21);
  const auto& sw = cfg.switch_rates;
  const auto& ev = cfg.event_rates;
  const double step = cfg.grid_step;

  std::vector<SimulatedSubject> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    SimulatedSubject& s = out[i];
    const double n1 = normal(rng);
    const double n2 = normal(rng);
    s.u = {cfg.u_mean[0] + l11 * n1, cfg.u_mean[1] + l21 * n1 + l22 * n2};
    const int z = uniform01(rng) < cfg.randomization_probability ? 1 : 0;

    // Switch law exp(-(base + u1 U1) t - z Z): an atom of mass 1 - exp(-z Z)
    // at the first grid point, exponential otherwise; rounded up to the grid.
    const bool atom = uniform01(rng) < 1.0 - std::exp(-sw.z * z);
    const double w = exponential(rng, std::max(sw.base + sw.u1 * s.u[0], 0.0));
    s.switch_time = atom ? step : std::isfinite(w) ? std::max(step, std::ceil(w / step) * step) : kInf;

    const double base = ev.base + ev.z * z + ev.u2 * s.u[1];
    const double h1 = std::max(base + ev.treatment * z, 0.0);
    const double h2 = std::max(base + ev.treatment * (1 - z), 0.0);
    s.event_time = invert_two_piece_hazard(-std::log1p(-uniform01(rng)), h1, h2, s.switch_time);

    const double c = std::min(exponential(rng, censoring_rate), cfg.tau);
    SubjectRecord& r = s.record;
    r.id = std::to_string(i + 1);
    r.z = z;
    if (censor) {
      r.status = s.event_time <= c ? 1 : 0;
      r.time = std::min(s.event_time, c);
    } else {
      r.status = std::isfinite(s.event_time) ? 1 : 0;
      r.time = std::isfinite(s.event_time) ? s.event_time : cfg.tau;
    }
    r.path = s.switch_time < r.time ? TreatmentPath::switching(z, s.switch_time) : TreatmentPath::constant(z);
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (n < 2) invalid("n must be at least 2");
  if (!(grid_step > 0.0) || !std::isfinite(grid_step)) invalid("grid_step must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) invalid("tau must be positive");
  const double a = u_cov[0][0];
  const double b = u_cov[0][1];
  const double d = u_cov[1][1];
  if (b != u_cov[1][0]) invalid("u_cov must be symmetric");
  if (!(a > 0.0) || !(a * d - b * b > 0.0)) invalid("u_cov must be positive definite");
  if (!std::isfinite(u_mean[0]) || !std::isfinite(u_mean[1])) invalid("u_mean must be finite");
  if (!(randomization_probability > 0.0 && randomization_probability < 1.0)) {
    invalid("randomization_probability must lie in (0, 1)");
  }
  for (double r : {switch_rates.base, switch_rates.u1, switch_rates.z, event_rates.base, event_rates.treatment,
                   event_rates.z, event_rates.u2}) {
    if (!(r >= 0.0) || !std::isfinite(r)) invalid("rates must be finite and nonnegative");
  }
  if (!(censoring_target >= 0.0 && censoring_target < 1.0)) invalid("censoring_target must lie in [0, 1)");
  if (censoring_rate && !(*censoring_rate >= 0.0)) invalid("censoring_rate must be nonnegative");
  if (!censoring_rate && calibration_cohort < 100) invalid("calibration_cohort too small");
  for (double t : eval_times) {
    if (!(t >= 0.0) || !std::isfinite(t)) invalid("eval_times must be finite and nonnegative");
  }
  if (iv.mode == IvMode::KnownProbability && !(iv.probability > 0.0 && iv.probability < 1.0)) {
    invalid("iv probability must lie in (0, 1)");
  }
  if (!(test_level > 0.0 && test_level < 1.0)) invalid("test_level must lie in (0, 1)");
}

double invert_two_piece_hazard(double target, double h1, double h2, double change) noexcept {
  const double first = h1 * change;
  if (target <= first || !std::isfinite(change)) return h1 > 0.0 ? target / h1 : kInf;
  return h2 > 0.0 ? change + (target - first) / h2 : kInf;
}

double calibrate_censoring(const SimConfig& cfg) {
  const auto pilot = draw_cohort(cfg, cfg.calibration_cohort, stream_seed(cfg.seed, 0, kCalibrationDomain), 0.0,
                                 false);
  std::vector<double> event_times;
  for (const auto& s : pilot) {
    if (s.event_time <= cfg.tau) event_times.push_back(s.event_time);
  }
  const auto total = static_cast<double>(pilot.size());
  // Expected overall censoring at rate r: P(T~ > tau) + E[1(T~ <= tau)(1 - exp(-r T~))].
  auto censored = [&](double r) {
    double kept = 0.0;
    for (double t : event_times) kept += std::exp(-r * t);
    return 1.0 - kept / total;
  };
  const double target = cfg.censoring_target;
  if (censored(0.0) >= target) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (censored(hi) < target) {
    hi *= 2.0;
    if (hi > 1e6) throw Error(ErrorCode::InvalidConfig, "censoring target unreachable");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censored(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double resolved_censoring_rate(const SimConfig& cfg) {
  return cfg.censoring_rate ? *cfg.censoring_rate : calibrate_censoring(cfg);
}

std::vector<SimulatedSubject> simulate_cohort(const SimConfig& cfg, std::size_t n, std::uint64_t stream,
                                              double censoring_rate) {
  return draw_cohort(cfg, n, stream_seed(cfg.seed, stream, kCohortDomain), censoring_rate, true);
}

std::vector<SubjectRecord> simulate_trial(const SimConfig& cfg, std::size_t replicate) {
  cfg.validate();
  const double rate = resolved_censoring_rate(cfg);
  auto cohort = draw_cohort(cfg, cfg.n, stream_seed(cfg.seed, replicate, kTrialDomain), rate, true);
  std::vector<SubjectRecord> out;
  out.reserve(cohort.size());
  for (auto& s : cohort) out.push_back(std::move(s.record));
  return out;
}

double true_cumulative_effect(double t) noexcept { return 0.1 * t; }

double true_cumulative_effect(const SimConfig& cfg, double t) noexcept { return cfg.event_rates.treatment * t; }

namespace {

ReplicateResult estimate_replicate(const SimConfig& cfg, std::size_t replicate, double rate) {
  ReplicateResult out;
  auto cohort = draw_cohort(cfg, cfg.n, stream_seed(cfg.seed, replicate, kTrialDomain), rate, true);
  std::vector<SubjectRecord> records;
  records.reserve(cohort.size());
  std::size_t switched = 0;
  std::size_t censored = 0;
  for (auto& s : cohort) {
    switched += s.switch_time < s.record.time ? 1 : 0;
    censored += s.record.status ? 0 : 1;
    records.push_back(std::move(s.record));
  }
  const auto n = static_cast<double>(records.size());
  out.switch_rate = static_cast<double>(switched) / n;
  out.censor_rate = static_cast<double>(censored) / n;

  try {
    const EventTable table = build_event_table(std::move(records), cfg.tau);
    const IvModel iv = fit_iv_model(table.subjects(), cfg.iv);
    const auto zc = center_instruments(iv, table.subjects());
    const CumulativeEffect effect = estimate_cumulative_effect(table, zc);
    const ConstantEffect beta = estimate_constant_effect(effect, table, cfg.weights);

    std::vector<double> scale;
    const auto residual = estimating_equation_residual(table, zc, effect, &scale);
    double worst = 0.0;
    for (std::size_t k = 0; k < residual.size(); ++k) {
      worst = std::max(worst, std::abs(residual[k]));
      if (scale[k] > 0.0) out.residual_relative = std::max(out.residual_relative, std::abs(residual[k]) / scale[k]);
    }
    out.residual_ratio = worst / n;

    InfluenceOptions io;
    io.mode = cfg.variance;
    const InfluenceMatrix infl = influence_functions(table, iv, effect, io);
    out.solve_residual = infl.solve_residual;
    const VarianceCurve curve = variance_curve(infl, effect);
    for (double t : cfg.eval_times) {
      const auto idx = static_cast<std::size_t>(std::upper_bound(effect.times.begin(), effect.times.end(), t) -
                                                effect.times.begin());
      out.estimates.push_back(effect.value(t));
      out.se.push_back(idx == 0 ? 0.0 : curve.se[idx - 1]);
    }
    out.beta = beta.beta;
    out.beta_se = constant_effect_se(infl, beta).se;

    if (cfg.n_resamples > 0) {
      ResampleOptions ro;
      ro.threads = 1;
      const SupTests tests =
          run_sup_tests(infl, effect, beta, cfg.n_resamples, stream_seed(cfg.seed, replicate, kTestDomain), ro);
      out.null_p = tests.causal_null.p_value;
      out.gof_p = tests.constant_effect.p_value;
    }

    bool finite = std::isfinite(out.beta) && std::isfinite(out.beta_se);
    for (std::size_t j = 0; j < out.estimates.size(); ++j) {
      finite = finite && std::isfinite(out.estimates[j]) && std::isfinite(out.se[j]);
    }
    if (!finite) {
      out.failure = "NonFiniteEstimate";
      return out;
    }
    out.ok = true;
  } catch (const SingularDenominatorError&) {
    out.failure = to_string(ErrorCode::SingularDenominator);
  } catch (const Error& e) {
    out.failure = to_string(e.code());
  }
  return out;
}

MonteCarloSummary summarize(const std::vector<double>& est, const std::vector<double>& se, double truth,
                            double time) {
  MonteCarloSummary s;
  s.time = time;
  s.truth = truth;
  const auto m = static_cast<double>(est.size());
  if (est.empty()) return s;
  s.mean_estimate = std::accumulate(est.begin(), est.end(), 0.0) / m;
  s.bias = s.mean_estimate - truth;
  if (est.size() > 1) {
    double ss = 0.0;
    for (double v : est) ss += (v - s.mean_estimate) * (v - s.mean_estimate);
    s.see = std::sqrt(ss / (m - 1.0));
  }
  s.sd = std::accumulate(se.begin(), se.end(), 0.0) / m;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < est.size(); ++r) {
    hits += std::abs(est[r] - truth) <= kNormalQuantile975 * se[r] ? 1 : 0;
  }
  s.coverage = 100.0 * static_cast<double>(hits) / m;
  return s;
}

}  // namespace

ReplicateResult run_replicate(const SimConfig& cfg, std::size_t replicate) {
  cfg.validate();
  return estimate_replicate(cfg, replicate, resolved_censoring_rate(cfg));
}

MonteCarloReport summarize_replicates(const SimConfig& cfg, double censoring_rate,
                                      std::vector<ReplicateResult> results) {
  MonteCarloReport report;
  report.config = cfg;
  report.censoring_rate = censoring_rate;
  report.replicates = results.size();

  const std::size_t T = cfg.eval_times.size();
  std::vector<std::vector<double>> est(T);
  std::vector<std::vector<double>> se(T);
  std::vector<double> beta;
  std::vector<double> beta_se;
  std::size_t null_reject = 0;
  std::size_t gof_reject = 0;
  double switch_sum = 0.0;
  double censor_sum = 0.0;
  for (const auto& r : results) {
    switch_sum += r.switch_rate;
    censor_sum += r.censor_rate;
    if (!r.ok) {
      ++report.failure_count;
      if (r.failure == to_string(ErrorCode::SingularDenominator)) ++report.singular_count;
      continue;
    }
    ++report.used;
    report.max_residual_ratio = std::max(report.max_residual_ratio, r.residual_ratio);
    report.max_residual_relative = std::max(report.max_residual_relative, r.residual_relative);
    report.residual_violations += r.residual_ratio > 1e-10 ? 1 : 0;
    report.max_solve_residual = std::max(report.max_solve_residual, r.solve_residual);
    for (std::size_t j = 0; j < T; ++j) {
      est[j].push_back(r.estimates[j]);
      se[j].push_back(r.se[j]);
    }
    beta.push_back(r.beta);
    beta_se.push_back(r.beta_se);
    null_reject += r.null_p <= cfg.test_level ? 1 : 0;
    gof_reject += r.gof_p <= cfg.test_level ? 1 : 0;
  }
  if (!results.empty()) {
    report.switch_rate = switch_sum / static_cast<double>(results.size());
    report.censor_rate = censor_sum / static_cast<double>(results.size());
  }
  for (std::size_t j = 0; j < T; ++j) {
    const double t = cfg.eval_times[j];
    report.times.push_back(summarize(est[j], se[j], true_cumulative_effect(cfg, t), t));
  }
  report.beta = summarize(beta, beta_se, cfg.event_rates.treatment, std::numeric_limits<double>::quiet_NaN());
  report.see_undefined = report.used < 2;
  if (cfg.n_resamples > 0 && report.used > 0) {
    report.null_rejection = static_cast<double>(null_reject) / static_cast<double>(report.used);
    report.gof_rejection = static_cast<double>(gof_reject) / static_cast<double>(report.used);
  }
  report.per_replicate = std::move(results);
  return report;
}

MonteCarloReport run_monte_carlo(const SimConfig& cfg) {
  cfg.validate();
  const double rate = resolved_censoring_rate(cfg);
  std::vector<ReplicateResult> results(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) { results[r] = estimate_replicate(cfg, r, rate); });
  return summarize_replicates(cfg, rate, std::move(results));
}

std::vector<ConsistencyPoint> check_generator_consistency(const SimConfig& cfg, std::size_t cohort,
                                                          std::size_t strata, std::vector<double> times,
                                                          double z_tolerance) {
  cfg.validate();
  if (strata == 0) invalid("strata must be positive");
  const auto subjects = draw_cohort(cfg, cohort, stream_seed(cfg.seed, 0, kCohortDomain), 0.0, false);

  std::vector<double> u2;
  u2.reserve(subjects.size());
  for (const auto& s : subjects) u2.push_back(s.u[1]);
  std::vector<double> sorted = u2;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t b = 1; b < strata; ++b) cuts.push_back(sorted[b * sorted.size() / strata]);
  auto stratum = [&](double v) {
    return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
  };

  std::vector<ConsistencyPoint> out;
  for (double t : times) {
    // Per stratum: subjects on a fixed regime through t (arm 1 = treated, arm 0 = untreated).
    std::vector<std::array<double, 2>> at_start(strata, {0.0, 0.0});
    std::vector<std::array<double, 2>> alive(strata, {0.0, 0.0});
    for (const auto& s : subjects) {
      if (s.switch_time <= t) continue;
      const auto b = stratum(s.u[1]);
      const int arm = s.record.z;
      at_start[b][arm] += 1.0;
      alive[b][arm] += s.event_time > t ? 1.0 : 0.0;
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t b = 0; b < strata; ++b) {
      const double n1 = at_start[b][1];
      const double n0 = at_start[b][0];
      if (alive[b][1] == 0.0 || alive[b][0] == 0.0) continue;
      const double s1 = alive[b][1] / n1;
      const double s0 = alive[b][0] / n0;
      const double var = (1.0 - s1) / (n1 * s1) + (1.0 - s0) / (n0 * s0);
      if (!(var > 0.0)) continue;
      num += (std::log(s1) - std::log(s0)) / var;
      den += 1.0 / var;
    }
    ConsistencyPoint p;
    p.time = t;
    p.expected = -(cfg.event_rates.treatment + cfg.event_rates.z) * t;
    if (den > 0.0) {
      p.log_ratio = num / den;
      p.se = std::sqrt(1.0 / den);
      p.within_tolerance = std::abs(p.log_ratio - p.expected) <= z_tolerance * p.se;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace scsmiv
