#pragma once

#include <span>
#include <vector>

#include "scsmiv/data_model.hpp"
#include "scsmiv/iv_center.hpp"

namespace scsmiv {

/// Step-function estimate of the cumulative causal hazards difference B_D(t).
struct CumulativeEffect {
  std::vector<double> times;       // jump locations (event grid)
  std::vector<double> jumps;       // dB(t_k)
  std::vector<double> cumulative;  // B(t_k)
  double tau = 0.0;

  std::size_t size() const noexcept { return times.size(); }
  /// B(t) = sum of jumps at or before t; B(0) = 0 unless an event sits at 0.
  double value(double t) const noexcept;
  static CumulativeEffect from_jumps(std::vector<double> times, std::vector<double> jumps, double tau);
};

struct EstimatorOptions {
  /// SingularDenominator when |A(t)| < floor * max_i |Z_i^c|.
  double denominator_floor = 1e-8;
};

/// Forward recursion over the event grid: at t_k the jump is the ratio of
/// sum_{events} Z^c exp(E) to sum_{at risk} Z^c exp(E) D(t_k), where E is each
/// subject's running sum of D(t_l) dB(t_l) over earlier grid times.
CumulativeEffect estimate_cumulative_effect(const EventTable& table, const IvModel& iv,
                                            const EstimatorOptions& opts = {});
CumulativeEffect estimate_cumulative_effect(const EventTable& table, std::span<const double> centered_z,
                                            const EstimatorOptions& opts = {});

/// Empirical estimating function per grid time:
/// sum_i Z_i^c exp(int_0^{t-} D_i dB) [dN_i(t) - Y_i(t) D_i(t) dB(t)].
std::vector<double> estimating_equation_residual(const EventTable& table, const IvModel& iv,
                                                 const CumulativeEffect& effect);
/// With `scale`, also returns sum_i |Z_i^c exp(...)| (dN_i + D_i |dB|) per grid
/// time, the magnitude the sum cancels from.
std::vector<double> estimating_equation_residual(const EventTable& table, std::span<const double> centered_z,
                                                 const CumulativeEffect& effect,
                                                 std::vector<double>* scale = nullptr);

/// Choice of R_i(t) in w~(t) = sum_i R_i(t).
enum class WeightSpec { AtRisk, AtRiskTreated, Uniform };

struct ConstantEffect {
  double beta = 0.0;
  WeightSpec weight_spec = WeightSpec::AtRisk;
  std::vector<double> weights;  // normalized w(t_k)

  double value(double t) const noexcept { return beta * t; }
};

/// w(t_k) = w~(t_k) / int_0^tau w~(s) ds. Throws ZeroWeight if all vanish.
std::vector<double> constant_effect_weights(const EventTable& table, WeightSpec spec);

ConstantEffect estimate_constant_effect(const CumulativeEffect& effect, const EventTable& table,
                                        WeightSpec spec = WeightSpec::AtRisk);

}  // namespace scsmiv
