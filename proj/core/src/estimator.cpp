#include "scsmiv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scsmiv/error.hpp"

namespace scsmiv {

double CumulativeEffect::value(double t) const noexcept {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

CumulativeEffect CumulativeEffect::from_jumps(std::vector<double> times, std::vector<double> jumps, double tau) {
  CumulativeEffect out;
  out.times = std::move(times);
  out.jumps = std::move(jumps);
  out.tau = tau;
  out.cumulative.resize(out.jumps.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < out.jumps.size(); ++k) out.cumulative[k] = acc += out.jumps[k];
  return out;
}

CumulativeEffect estimate_cumulative_effect(const EventTable& table, const IvModel& iv, const EstimatorOptions& opts) {
  const auto zc = center_instruments(iv, table.subjects());
  return estimate_cumulative_effect(table, zc, opts);
}

CumulativeEffect estimate_cumulative_effect(const EventTable& table, std::span<const double> zc,
                                            const EstimatorOptions& opts) {
  const std::size_t n = table.subject_count();
  const std::size_t K = table.time_count();
  const auto times = table.event_times();

  double zc_max = 0.0;
  for (double v : zc) zc_max = std::max(zc_max, std::abs(v));
  const double floor = opts.denominator_floor * zc_max;

  // Exponents are kept in log space; each step rescales by the largest one.
  std::vector<double> exponent(n, 0.0);
  std::vector<double> jumps(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (table.at_risk(j, k)) shift = std::max(shift, exponent[j]);
    }
    const auto treated = table.treated_row(k);
    double numerator = 0.0;
    double denominator = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!table.at_risk(j, k)) continue;
      const double w = zc[j] * std::exp(exponent[j] - shift);
      if (table.has_event(j, k)) numerator += w;
      if (treated[j]) denominator += w;
    }
    const double a = denominator * std::exp(shift) / static_cast<double>(n);
    if (!(std::abs(a) >= floor) || !std::isfinite(a) || denominator == 0.0) {
      throw SingularDenominatorError(times[k], a);
    }
    jumps[k] = numerator / denominator;
    for (std::size_t j = 0; j < n; ++j) {
      if (treated[j]) exponent[j] += jumps[k];
    }
  }
  return CumulativeEffect::from_jumps({times.begin(), times.end()}, std::move(jumps), table.tau());
}

std::vector<double> estimating_equation_residual(const EventTable& table, const IvModel& iv,
                                                 const CumulativeEffect& effect) {
  const auto zc = center_instruments(iv, table.subjects());
  return estimating_equation_residual(table, zc, effect);
}

std::vector<double> estimating_equation_residual(const EventTable& table, std::span<const double> zc,
                                                 const CumulativeEffect& effect, std::vector<double>* scale) {
  const std::size_t n = table.subject_count();
  const std::size_t K = table.time_count();
  const auto times = table.event_times();
  std::vector<double> residual(K, 0.0);
  std::vector<double> exponent(n, 0.0);
  if (scale) scale->assign(K, 0.0);

  // The effect may live on a different grid; read its jump at each table time.
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < K; ++k) {
    while (cursor < effect.size() && effect.times[cursor] < times[k]) ++cursor;
    const double jump = (cursor < effect.size() && effect.times[cursor] == times[k]) ? effect.jumps[cursor] : 0.0;
    double sum = 0.0;
    double magnitude = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!table.at_risk(j, k)) continue;
      const double dn = table.has_event(j, k) ? 1.0 : 0.0;
      const double d = table.treated(j, k) ? 1.0 : 0.0;
      const double weight = zc[j] * std::exp(exponent[j]);
      sum += weight * (dn - d * jump);
      magnitude += std::abs(weight) * (dn + d * std::abs(jump));
    }
    residual[k] = sum;
    if (scale) (*scale)[k] = magnitude;
    for (std::size_t j = 0; j < n; ++j) {
      if (table.treated(j, k)) exponent[j] += jump;
    }
  }
  return residual;
}

std::vector<double> constant_effect_weights(const EventTable& table, WeightSpec spec) {
  const std::size_t n = table.subject_count();
  const std::size_t K = table.time_count();
  const double tau = table.tau();
  std::vector<double> raw(K, 0.0);
  double integral = 0.0;

  switch (spec) {
    case WeightSpec::AtRisk:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < table.risk_end(i); ++k) raw[k] += 1.0;
        integral += std::min(table.subjects()[i].time, tau);
      }
      break;
    case WeightSpec::AtRiskTreated:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < table.risk_end(i); ++k) raw[k] += table.treated(i, k) ? 1.0 : 0.0;
        // Time on treatment over [0, min(T_i, tau)].
        const auto& subject = table.subjects()[i];
        const double end = std::min(subject.time, tau);
        const auto& ch = subject.path.changes();
        for (std::size_t c = 0; c < ch.size(); ++c) {
          if (ch[c].value != 1 || ch[c].time >= end) continue;
          const double stop = c + 1 < ch.size() ? std::min(ch[c + 1].time, end) : end;
          integral += stop - ch[c].time;
        }
      }
      break;
    case WeightSpec::Uniform:
      std::fill(raw.begin(), raw.end(), 1.0);
      integral = tau;
      break;
  }

  if (!(integral > 0.0) || std::all_of(raw.begin(), raw.end(), [](double v) { return v == 0.0; })) {
    throw Error(ErrorCode::ZeroWeight, "constant-effect weight vanishes on every event time");
  }
  for (double& w : raw) w /= integral;
  return raw;
}

ConstantEffect estimate_constant_effect(const CumulativeEffect& effect, const EventTable& table, WeightSpec spec) {
  ConstantEffect out;
  out.weight_spec = spec;
  out.weights = constant_effect_weights(table, spec);
  for (std::size_t k = 0; k < out.weights.size() && k < effect.jumps.size(); ++k) {
    out.beta += out.weights[k] * effect.jumps[k];
  }
  return out;
}

}  // namespace scsmiv
