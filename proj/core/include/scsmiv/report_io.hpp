#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "scsmiv/analysis.hpp"
#include "scsmiv/simulator.hpp"

namespace scsmiv {

std::string_view library_version() noexcept;

std::string_view to_string(WeightSpec spec) noexcept;
std::string_view to_string(VarianceMode mode) noexcept;
std::string_view to_string(IvMode mode) noexcept;
/// Throw Error(InvalidConfig) on unknown names.
WeightSpec parse_weight_spec(std::string_view name);
VarianceMode parse_variance_mode(std::string_view name);
IvMode parse_iv_mode(std::string_view name);

/// Pretty-printed JSON with a trailing newline.
std::string report_to_json(const AnalysisReport& report);
AnalysisReport report_from_json(std::string_view text);

/// Strict: unknown keys and wrong types are InvalidConfig errors. Missing keys keep defaults.
SimConfig sim_config_from_json(std::string_view text, SimConfig base = {});
std::string sim_config_to_json(const SimConfig& cfg);

std::string monte_carlo_to_json(const MonteCarloReport& report);
/// Columns: n, quantity, t, truth, bias, see, sd, coverage.
std::string table1_csv(const MonteCarloReport& report);

/// Columns: t, bhat, se, lo95, hi95, const_fit.
std::string bands_csv(const AnalysisReport& report);
/// Columns: t, observed, path_1..path_m (causal-null process, m <= keep_paths).
std::string testprocess_csv(const AnalysisReport& report);

/// ISO-8601 UTC time of the call.
std::string utc_timestamp();

}  // namespace scsmiv
