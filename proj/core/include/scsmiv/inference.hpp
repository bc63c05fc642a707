#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "scsmiv/data_model.hpp"
#include "scsmiv/estimator.hpp"
#include "scsmiv/iv_center.hpp"

namespace scsmiv {

/// Kernel of the linearized recursion.
///  Full: exact derivative of each jump with respect to earlier jumps, i.e.
///    numerator and denominator terms with D_j(t_l).
///  Simplified: only the event (dN) term with D_j(t_l-), as in the
///    matrix form of the Volterra system.
enum class VarianceMode { Full, Simplified };

struct InfluenceOptions {
  VarianceMode mode = VarianceMode::Full;
  /// Add (dB/dtheta) eps^theta when theta was estimated.
  bool theta_correction = true;
  /// Central difference step h = step * (1 + |theta_p|).
  double fd_relative_step = 1e-4;
  EstimatorOptions estimator{};
};

struct InfluenceMatrix {
  std::vector<double> grid;
  Eigen::MatrixXd eps;       // n x K, eps(i, k) = eps_i(t_k)
  Eigen::VectorXd eps_beta;  // filled by attach_constant_effect
  bool includes_theta_correction = false;
  /// Normwise backward error of the triangular solve, probed with a fixed
  /// +-1 combination of right-hand sides.
  double solve_residual = 0.0;

  Eigen::Index subject_count() const noexcept { return eps.rows(); }
  Eigen::Index time_count() const noexcept { return eps.cols(); }
};

InfluenceMatrix influence_functions(const EventTable& table, const IvModel& iv, const CumulativeEffect& effect,
                                    const InfluenceOptions& opts = {});

struct VarianceCurve {
  std::vector<double> times;
  std::vector<double> variance;  // n^{-1} sum_i eps_i(t)^2
  std::vector<double> se;        // sqrt(variance / n)
  std::vector<double> lower;
  std::vector<double> upper;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

VarianceCurve variance_curve(const InfluenceMatrix& infl, const CumulativeEffect& effect);

/// eps_i^beta = sum_k w(t_k) (eps_i(t_k) - eps_i(t_{k-1})).
Eigen::VectorXd constant_effect_influence(const InfluenceMatrix& infl, std::span<const double> weights);

/// Stores constant_effect_influence(infl, beta.weights) in infl.eps_beta.
void attach_constant_effect(InfluenceMatrix& infl, const ConstantEffect& beta);

struct ConstantEffectInference {
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

ConstantEffectInference constant_effect_se(const InfluenceMatrix& infl, const ConstantEffect& beta);

struct ResampleOptions {
  std::size_t threads = 0;     // 0 = default_thread_count()
  std::size_t keep_paths = 0;  // leading resampled paths to retain
};

/// R x K matrix of G*_b(t_k) = n^{-1/2} sum_i xi_ib eps_i(t_k), xi ~ N(0, 1).
/// Stream b is seeded from (seed, b); output is independent of thread count.
Eigen::MatrixXd multiplier_resample(const InfluenceMatrix& infl, std::size_t n_resamples, std::uint64_t seed,
                                    std::size_t threads = 0);

struct TestReport {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_resamples = 0;
  std::vector<double> observed_path;     // sqrt(n) (B(t_k) - null fit)
  Eigen::MatrixXd resampled_paths;       // keep_paths x K
};

/// H0: B(t) = 0 for all t. Statistic sup_k |sqrt(n) B(t_k)|.
TestReport test_causal_null(const InfluenceMatrix& infl, const CumulativeEffect& effect, std::size_t n_resamples,
                            std::uint64_t seed, const ResampleOptions& opts = {});

/// H0: B(t) = beta t. Statistic sup_k |sqrt(n) (B(t_k) - beta t_k)|, resampled
/// with eps_i(t_k) - t_k eps_i^beta.
TestReport test_constant_effect(const InfluenceMatrix& infl, const CumulativeEffect& effect,
                                const ConstantEffect& beta, std::size_t n_resamples, std::uint64_t seed,
                                const ResampleOptions& opts = {});

struct SupTests {
  TestReport causal_null;
  TestReport constant_effect;
};

/// Both tests from one set of multiplier draws (the constant-effect process is
/// the causal-null process minus t_k times sum_i xi_i eps_i^beta). Reports agree
/// with the standalone functions for the same seed up to rounding.
SupTests run_sup_tests(const InfluenceMatrix& infl, const CumulativeEffect& effect, const ConstantEffect& beta,
                       std::size_t n_resamples, std::uint64_t seed, const ResampleOptions& opts = {});

}  // namespace scsmiv
