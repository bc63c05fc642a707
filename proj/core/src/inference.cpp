#include "scsmiv/inference.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "scsmiv/error.hpp"
#include "scsmiv/parallel.hpp"

namespace scsmiv {

namespace {

struct Run {
  std::size_t begin;
  std::size_t end;
};

// Grid ranges [begin, end) on which the subject's treatment indicator is 1,
// restricted to its at-risk grid.
std::vector<std::vector<Run>> treatment_runs(const EventTable& table, bool left_limit) {
  const std::size_t n = table.subject_count();
  std::vector<std::vector<Run>> runs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t stop = table.risk_end(i);
    std::size_t k = 0;
    while (k < stop) {
      auto on = [&](std::size_t kk) { return left_limit ? table.treated_before(i, kk) : table.treated(i, kk); };
      if (!on(k)) {
        ++k;
        continue;
      }
      const std::size_t begin = k;
      while (k < stop && on(k)) ++k;
      runs[i].push_back({begin, k});
    }
  }
  return runs;
}

// Solves the lower-triangular system column-wise for every subject; returns
// increments dV (K x n).
Eigen::MatrixXd solve_increments(const Eigen::MatrixXd& system, const Eigen::MatrixXd& rhs, double& residual) {
  Eigen::MatrixXd x = system.triangularView<Eigen::Lower>().solve(rhs);

  Eigen::VectorXd probe(rhs.cols());
  for (Eigen::Index i = 0; i < probe.size(); ++i) {
    probe(i) = ((static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL) >> 63) ? 1.0 : -1.0;
  }
  const Eigen::VectorXd xp = x * probe;
  const Eigen::VectorXd rp = rhs * probe;
  const Eigen::VectorXd r = system.triangularView<Eigen::Lower>() * xp - rp;
  const double scale = system.cwiseAbs().rowwise().sum().maxCoeff() * xp.cwiseAbs().maxCoeff() +
                       rp.cwiseAbs().maxCoeff();
  residual = scale > 0.0 ? r.cwiseAbs().maxCoeff() / scale : 0.0;
  if (!x.allFinite()) throw Error(ErrorCode::SingularSystem, "triangular influence system produced non-finite values");
  return x;
}

}  // namespace

InfluenceMatrix influence_functions(const EventTable& table, const IvModel& iv, const CumulativeEffect& effect,
                                    const InfluenceOptions& opts) {
  const std::size_t n = table.subject_count();
  const std::size_t K = table.time_count();
  if (effect.size() != K) throw Error(ErrorCode::InvalidConfig, "effect and event table grids differ");
  const auto zc = center_instruments(iv, table.subjects());
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool simplified = opts.mode == VarianceMode::Simplified;
  const auto runs = treatment_runs(table, simplified);

  // Row k of `rhs` holds Z_j^c exp(E_j) [dN_j - Y_j D_j dB_k] for every subject,
  // rescaled by exp(-max E) like the matching row of `system`.
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  std::vector<double> exponent(n, 0.0);
  std::vector<double> diff(K + 1, 0.0);

  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double jump = effect.jumps[k];
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (table.at_risk(j, k)) shift = std::max(shift, exponent[j]);
    }
    const auto treated = table.treated_row(k);
    double denominator = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!table.at_risk(j, k)) continue;
      const double w = zc[j] * std::exp(exponent[j] - shift);
      const double dn = table.has_event(j, k) ? 1.0 : 0.0;
      const double d = treated[j] ? 1.0 : 0.0;
      const double u = w * (dn - d * jump);
      rhs(kk, static_cast<Eigen::Index>(j)) = u;
      denominator += w * d;

      const double c = simplified ? w * dn : u;
      if (c == 0.0) continue;
      for (const Run& run : runs[j]) {
        const std::size_t end = std::min(run.end, k);
        if (run.begin >= end) break;
        diff[run.begin] += c;
        diff[end] -= c;
      }
    }
    system(kk, kk) = denominator * inv_n;
    double acc = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      acc += diff[l];
      diff[l] = 0.0;
      system(kk, static_cast<Eigen::Index>(l)) = -acc * inv_n;
    }
    diff[k] = 0.0;

    for (std::size_t j = 0; j < n; ++j) {
      if (treated[j]) exponent[j] += jump;
    }
  }

  InfluenceMatrix out;
  out.grid = effect.times;
  Eigen::MatrixXd increments = solve_increments(system, rhs, out.solve_residual);
  for (Eigen::Index k = 1; k < increments.rows(); ++k) increments.row(k) += increments.row(k - 1);
  out.eps = increments.transpose();

  if (opts.theta_correction && iv.has_estimated_theta()) {
    const Eigen::VectorXd& theta = iv.theta;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      const double h = opts.fd_relative_step * (1.0 + std::abs(theta(p)));
      Eigen::VectorXd up = theta;
      Eigen::VectorXd down = theta;
      up(p) += h;
      down(p) -= h;
      const auto b_up = estimate_cumulative_effect(table, iv.with_theta(up), opts.estimator);
      const auto b_down = estimate_cumulative_effect(table, iv.with_theta(down), opts.estimator);
      Eigen::RowVectorXd derivative(static_cast<Eigen::Index>(K));
      for (std::size_t k = 0; k < K; ++k) {
        derivative(static_cast<Eigen::Index>(k)) = (b_up.cumulative[k] - b_down.cumulative[k]) / (2.0 * h);
      }
      out.eps.noalias() += iv.theta_influence.col(p) * derivative;
    }
    out.includes_theta_correction = true;
  }
  return out;
}

VarianceCurve variance_curve(const InfluenceMatrix& infl, const CumulativeEffect& effect) {
  const auto n = static_cast<double>(infl.subject_count());
  VarianceCurve out;
  out.times = infl.grid;
  const Eigen::VectorXd second_moment = infl.eps.colwise().squaredNorm().transpose() / n;
  for (Eigen::Index k = 0; k < infl.time_count(); ++k) {
    const double v = second_moment(k);
    const double se = std::sqrt(v / n);
    const double b = effect.cumulative[static_cast<std::size_t>(k)];
    out.variance.push_back(v);
    out.se.push_back(se);
    out.lower.push_back(b - kNormalQuantile975 * se);
    out.upper.push_back(b + kNormalQuantile975 * se);
  }
  return out;
}

Eigen::VectorXd constant_effect_influence(const InfluenceMatrix& infl, std::span<const double> weights) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(infl.subject_count());
  const auto K = std::min<Eigen::Index>(infl.time_count(), static_cast<Eigen::Index>(weights.size()));
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w = weights[static_cast<std::size_t>(k)];
    if (k == 0) {
      out += w * infl.eps.col(0);
    } else {
      out += w * (infl.eps.col(k) - infl.eps.col(k - 1));
    }
  }
  return out;
}

void attach_constant_effect(InfluenceMatrix& infl, const ConstantEffect& beta) {
  infl.eps_beta = constant_effect_influence(infl, beta.weights);
}

ConstantEffectInference constant_effect_se(const InfluenceMatrix& infl, const ConstantEffect& beta) {
  const Eigen::VectorXd eps_beta = constant_effect_influence(infl, beta.weights);
  ConstantEffectInference out;
  out.se = eps_beta.norm() / static_cast<double>(infl.subject_count());
  out.lower = beta.beta - kNormalQuantile975 * out.se;
  out.upper = beta.beta + kNormalQuantile975 * out.se;
  return out;
}

namespace {

constexpr std::size_t kChunk = 64;

struct ResampleResult {
  std::vector<double> sups;
  std::vector<double> drift_sups;
  Eigen::MatrixXd kept;
  Eigen::MatrixXd drift_kept;
};

// Multiplier resampling of an n x K process matrix. When `drift` is given, a
// second process (process - drift t^T) is resampled with the same draws.
// Work is split into fixed chunks of kChunk draws, so every chunk product is
// computed identically no matter which worker runs it.
ResampleResult resample_process(const Eigen::MatrixXd& process, const Eigen::VectorXd* drift,
                                std::span<const double> grid, std::size_t n_resamples, std::uint64_t seed,
                                std::size_t threads, std::size_t keep) {
  const Eigen::Index n = process.rows();
  const Eigen::Index K = process.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  keep = std::min(keep, n_resamples);
  Eigen::RowVectorXd t(K);
  for (Eigen::Index k = 0; k < K; ++k) t(k) = grid[static_cast<std::size_t>(k)];

  ResampleResult out;
  out.sups.assign(n_resamples, 0.0);
  out.kept = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(keep), K);
  if (drift) {
    out.drift_sups.assign(n_resamples, 0.0);
    out.drift_kept = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(keep), K);
  }
  const std::size_t chunks = (n_resamples + kChunk - 1) / kChunk;

  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    const auto rows = static_cast<Eigen::Index>(std::min(kChunk, n_resamples - first));
    Eigen::MatrixXd xi(rows, n);
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::mt19937_64 rng(stream_seed(seed, first + static_cast<std::size_t>(r)));
      std::normal_distribution<double> normal;
      for (Eigen::Index i = 0; i < n; ++i) xi(r, i) = normal(rng);
    }
    Eigen::MatrixXd paths = xi * process;
    paths *= scale;
    auto record = [&](const Eigen::MatrixXd& m, std::vector<double>& sups, Eigen::MatrixXd& kept) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t b = first + static_cast<std::size_t>(r);
        sups[b] = K > 0 ? m.row(r).cwiseAbs().maxCoeff() : 0.0;
        if (b < keep) kept.row(static_cast<Eigen::Index>(b)) = m.row(r);
      }
    };
    record(paths, out.sups, out.kept);
    if (drift) {
      const Eigen::VectorXd shift = (xi * *drift) * scale;
      paths.noalias() -= shift * t;
      record(paths, out.drift_sups, out.drift_kept);
    }
  });
  return out;
}

TestReport finish_test(std::vector<double> observed, const std::vector<double>& sups, Eigen::MatrixXd kept,
                       std::size_t n_resamples) {
  TestReport report;
  report.n_resamples = n_resamples;
  for (double v : observed) report.statistic = std::max(report.statistic, std::abs(v));
  std::size_t exceed = 0;
  for (double s : sups) exceed += s >= report.statistic ? 1 : 0;
  report.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_resamples);
  report.observed_path = std::move(observed);
  report.resampled_paths = std::move(kept);
  return report;
}

std::vector<double> null_path(const InfluenceMatrix& infl, const CumulativeEffect& effect) {
  const double root_n = std::sqrt(static_cast<double>(infl.subject_count()));
  std::vector<double> observed;
  observed.reserve(effect.size());
  for (double b : effect.cumulative) observed.push_back(root_n * b);
  return observed;
}

std::vector<double> constant_path(const InfluenceMatrix& infl, const CumulativeEffect& effect,
                                  const ConstantEffect& beta) {
  const double root_n = std::sqrt(static_cast<double>(infl.subject_count()));
  std::vector<double> observed;
  observed.reserve(effect.size());
  for (std::size_t k = 0; k < effect.size(); ++k) {
    observed.push_back(root_n * (effect.cumulative[k] - beta.value(effect.times[k])));
  }
  return observed;
}

}  // namespace

Eigen::MatrixXd multiplier_resample(const InfluenceMatrix& infl, std::size_t n_resamples, std::uint64_t seed,
                                    std::size_t threads) {
  return resample_process(infl.eps, nullptr, infl.grid, n_resamples, seed, threads, n_resamples).kept;
}

TestReport test_causal_null(const InfluenceMatrix& infl, const CumulativeEffect& effect, std::size_t n_resamples,
                            std::uint64_t seed, const ResampleOptions& opts) {
  auto r = resample_process(infl.eps, nullptr, infl.grid, n_resamples, seed, opts.threads, opts.keep_paths);
  return finish_test(null_path(infl, effect), r.sups, std::move(r.kept), n_resamples);
}

TestReport test_constant_effect(const InfluenceMatrix& infl, const CumulativeEffect& effect,
                                const ConstantEffect& beta, std::size_t n_resamples, std::uint64_t seed,
                                const ResampleOptions& opts) {
  const Eigen::VectorXd eps_beta = constant_effect_influence(infl, beta.weights);
  Eigen::MatrixXd centered = infl.eps;
  for (Eigen::Index k = 0; k < centered.cols(); ++k) {
    centered.col(k) -= infl.grid[static_cast<std::size_t>(k)] * eps_beta;
  }
  auto r = resample_process(centered, nullptr, infl.grid, n_resamples, seed, opts.threads, opts.keep_paths);
  return finish_test(constant_path(infl, effect, beta), r.sups, std::move(r.kept), n_resamples);
}

SupTests run_sup_tests(const InfluenceMatrix& infl, const CumulativeEffect& effect, const ConstantEffect& beta,
                       std::size_t n_resamples, std::uint64_t seed, const ResampleOptions& opts) {
  const Eigen::VectorXd eps_beta = constant_effect_influence(infl, beta.weights);
  auto r = resample_process(infl.eps, &eps_beta, infl.grid, n_resamples, seed, opts.threads, opts.keep_paths);
  SupTests out;
  out.causal_null = finish_test(null_path(infl, effect), r.sups, std::move(r.kept), n_resamples);
  out.constant_effect =
      finish_test(constant_path(infl, effect, beta), r.drift_sups, std::move(r.drift_kept), n_resamples);
  return out;
}

}  // namespace scsmiv
