#include "scsmiv/report_io.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>

#include <json.hpp>

#include "scsmiv/dataset_io.hpp"
#include "scsmiv/error.hpp"

#ifndef SCSMIV_VERSION
#define SCSMIV_VERSION "0.0.0"
#endif

namespace scsmiv {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

// NaN has no JSON representation; it is written as null and read back as NaN.
ordered_json number(double v) { return std::isfinite(v) || std::isinf(v) ? ordered_json(v) : ordered_json(nullptr); }

double read_number(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

ordered_json numbers(const std::vector<double>& v) {
  ordered_json a = ordered_json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::vector<double> read_numbers(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(read_number(x));
  return out;
}

template <class T>
ordered_json optional_value(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json test_json(const TestReport& t) {
  ordered_json paths = ordered_json::array();
  for (Eigen::Index r = 0; r < t.resampled_paths.rows(); ++r) {
    std::vector<double> row(t.resampled_paths.cols());
    for (Eigen::Index k = 0; k < t.resampled_paths.cols(); ++k) row[static_cast<std::size_t>(k)] = t.resampled_paths(r, k);
    paths.push_back(numbers(row));
  }
  return {{"statistic", number(t.statistic)},
          {"p_value", number(t.p_value)},
          {"n_resamples", t.n_resamples},
          {"observed_path", numbers(t.observed_path)},
          {"resampled_paths", paths}};
}

TestReport read_test(const json& j) {
  TestReport t;
  t.statistic = read_number(j.at("statistic"));
  t.p_value = read_number(j.at("p_value"));
  t.n_resamples = j.at("n_resamples").get<std::size_t>();
  t.observed_path = read_numbers(j.at("observed_path"));
  const auto& paths = j.at("resampled_paths");
  const auto rows = static_cast<Eigen::Index>(paths.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(paths.front().size()) : Eigen::Index{0};
  t.resampled_paths.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = read_numbers(paths[static_cast<std::size_t>(r)]);
    for (Eigen::Index k = 0; k < cols; ++k) t.resampled_paths(r, k) = row.at(static_cast<std::size_t>(k));
  }
  return t;
}

}  // namespace

std::string_view library_version() noexcept { return SCSMIV_VERSION; }

std::string_view to_string(WeightSpec spec) noexcept {
  switch (spec) {
    case WeightSpec::AtRisk: return "at_risk";
    case WeightSpec::AtRiskTreated: return "at_risk_treated";
    case WeightSpec::Uniform: return "uniform";
  }
  return "at_risk";
}

std::string_view to_string(VarianceMode mode) noexcept {
  return mode == VarianceMode::Full ? "full" : "simplified";
}

std::string_view to_string(IvMode mode) noexcept {
  switch (mode) {
    case IvMode::KnownProbability: return "known";
    case IvMode::EmpiricalMean: return "empirical_mean";
    case IvMode::LogisticRegression: return "logistic";
  }
  return "empirical_mean";
}

WeightSpec parse_weight_spec(std::string_view name) {
  for (auto s : {WeightSpec::AtRisk, WeightSpec::AtRiskTreated, WeightSpec::Uniform}) {
    if (to_string(s) == name) return s;
  }
  config_error("unknown weight specification '" + std::string(name) + "'");
}

VarianceMode parse_variance_mode(std::string_view name) {
  for (auto m : {VarianceMode::Full, VarianceMode::Simplified}) {
    if (to_string(m) == name) return m;
  }
  config_error("unknown variance mode '" + std::string(name) + "'");
}

IvMode parse_iv_mode(std::string_view name) {
  for (auto m : {IvMode::KnownProbability, IvMode::EmpiricalMean, IvMode::LogisticRegression}) {
    if (to_string(m) == name) return m;
  }
  config_error("unknown instrument mode '" + std::string(name) + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string report_to_json(const AnalysisReport& r) {
  const auto& c = r.config;
  ordered_json j;
  j["version"] = r.version;
  j["timestamp"] = r.timestamp;
  j["config"] = {
      {"subjects_path", c.subjects_path.string()},
      {"treatment_path", c.treatment_path ? ordered_json(c.treatment_path->string()) : ordered_json(nullptr)},
      {"pz", optional_value(c.pz)},
      {"iv_mode", c.iv_mode ? ordered_json(std::string(to_string(*c.iv_mode))) : ordered_json(nullptr)},
      {"weights", std::string(to_string(c.weight_spec))},
      {"n_resamples", c.n_resamples},
      {"seed", c.seed},
      {"variance", std::string(to_string(c.variance_mode))},
      {"output_dir", c.output_dir ? ordered_json(c.output_dir->string()) : ordered_json(nullptr)},
      {"eval_times", numbers(c.eval_times)},
      {"tau", optional_value(c.tau)},
      {"keep_paths", c.keep_paths},
      {"threads", c.threads},
      {"estimation_outputs", c.estimation_outputs},
  };
  const auto& s = r.summary;
  j["dataset"] = {{"subjects", s.subjects},
                  {"events", s.events},
                  {"distinct_event_times", s.distinct_event_times},
                  {"switchers", s.switchers},
                  {"switched_from_treated", s.switched_from_treated},
                  {"switched_from_untreated", s.switched_from_untreated},
                  {"assigned_treated", s.assigned_treated},
                  {"tau", number(s.tau)}};
  j["instrument"] = {{"mode", std::string(to_string(r.iv_mode))}, {"theta", numbers(r.iv_theta)}};
  j["cumulative_effect"] = {{"tau", number(r.effect.tau)},
                            {"times", numbers(r.effect.times)},
                            {"jumps", numbers(r.effect.jumps)},
                            {"cumulative", numbers(r.effect.cumulative)},
                            {"variance", numbers(r.curve.variance)},
                            {"se", numbers(r.curve.se)},
                            {"lower95", numbers(r.curve.lower)},
                            {"upper95", numbers(r.curve.upper)}};
  ordered_json eval = ordered_json::array();
  for (const auto& p : r.at_eval_times) {
    eval.push_back({{"t", number(p.time)},
                    {"estimate", number(p.estimate)},
                    {"se", number(p.se)},
                    {"lower95", number(p.lower)},
                    {"upper95", number(p.upper)}});
  }
  j["eval"] = eval;
  j["constant_effect"] = {{"beta", number(r.beta)},
                          {"se", number(r.beta_ci.se)},
                          {"lower95", number(r.beta_ci.lower)},
                          {"upper95", number(r.beta_ci.upper)},
                          {"p_value", number(r.beta_p_value)}};
  j["variance"] = {{"mode", std::string(to_string(c.variance_mode))},
                   {"includes_theta_correction", r.includes_theta_correction},
                   {"solve_residual", number(r.solve_residual)}};
  ordered_json tests;
  tests["skipped"] = !r.causal_null.has_value();
  if (!r.causal_null) tests["note"] = "tests skipped: n_resamples = 0";
  tests["sup_statistic"] = r.sup_statistic;
  tests["causal_null"] = r.causal_null ? test_json(*r.causal_null) : ordered_json(nullptr);
  tests["constant_effect"] = r.constant_effect ? test_json(*r.constant_effect) : ordered_json(nullptr);
  j["tests"] = tests;
  return j.dump(2) + "\n";
}

AnalysisReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    AnalysisReport r;
    r.version = j.at("version").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    const auto& c = j.at("config");
    auto& cfg = r.config;
    cfg.subjects_path = c.at("subjects_path").get<std::string>();
    if (!c.at("treatment_path").is_null()) cfg.treatment_path = c.at("treatment_path").get<std::string>();
    if (!c.at("pz").is_null()) cfg.pz = c.at("pz").get<double>();
    if (!c.at("iv_mode").is_null()) cfg.iv_mode = parse_iv_mode(c.at("iv_mode").get<std::string>());
    cfg.weight_spec = parse_weight_spec(c.at("weights").get<std::string>());
    cfg.n_resamples = c.at("n_resamples").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.variance_mode = parse_variance_mode(c.at("variance").get<std::string>());
    if (!c.at("output_dir").is_null()) cfg.output_dir = c.at("output_dir").get<std::string>();
    cfg.eval_times = read_numbers(c.at("eval_times"));
    if (!c.at("tau").is_null()) cfg.tau = c.at("tau").get<double>();
    cfg.keep_paths = c.at("keep_paths").get<std::size_t>();
    cfg.threads = c.at("threads").get<std::size_t>();
    cfg.estimation_outputs = c.at("estimation_outputs").get<bool>();

    const auto& d = j.at("dataset");
    auto& s = r.summary;
    s.subjects = d.at("subjects").get<std::size_t>();
    s.events = d.at("events").get<std::size_t>();
    s.distinct_event_times = d.at("distinct_event_times").get<std::size_t>();
    s.switchers = d.at("switchers").get<std::size_t>();
    s.switched_from_treated = d.at("switched_from_treated").get<std::size_t>();
    s.switched_from_untreated = d.at("switched_from_untreated").get<std::size_t>();
    s.assigned_treated = d.at("assigned_treated").get<std::size_t>();
    s.tau = read_number(d.at("tau"));

    r.iv_mode = parse_iv_mode(j.at("instrument").at("mode").get<std::string>());
    r.iv_theta = read_numbers(j.at("instrument").at("theta"));

    const auto& e = j.at("cumulative_effect");
    r.effect.tau = read_number(e.at("tau"));
    r.effect.times = read_numbers(e.at("times"));
    r.effect.jumps = read_numbers(e.at("jumps"));
    r.effect.cumulative = read_numbers(e.at("cumulative"));
    r.curve.times = r.effect.times;
    r.curve.variance = read_numbers(e.at("variance"));
    r.curve.se = read_numbers(e.at("se"));
    r.curve.lower = read_numbers(e.at("lower95"));
    r.curve.upper = read_numbers(e.at("upper95"));

    for (const auto& p : j.at("eval")) {
      r.at_eval_times.push_back({read_number(p.at("t")), read_number(p.at("estimate")), read_number(p.at("se")),
                                 read_number(p.at("lower95")), read_number(p.at("upper95"))});
    }
    const auto& b = j.at("constant_effect");
    r.beta = read_number(b.at("beta"));
    r.beta_ci = {read_number(b.at("se")), read_number(b.at("lower95")), read_number(b.at("upper95"))};
    r.beta_p_value = read_number(b.at("p_value"));

    const auto& v = j.at("variance");
    r.includes_theta_correction = v.at("includes_theta_correction").get<bool>();
    r.solve_residual = read_number(v.at("solve_residual"));

    const auto& t = j.at("tests");
    r.sup_statistic = t.at("sup_statistic").get<std::string>();
    if (!t.at("causal_null").is_null()) r.causal_null = read_test(t.at("causal_null"));
    if (!t.at("constant_effect").is_null()) r.constant_effect = read_test(t.at("constant_effect"));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report JSON: ") + e.what());
  }
}

SimConfig sim_config_from_json(std::string_view text, SimConfig cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("config JSON must be an object");

  auto pair = [](const json& v) {
    if (!v.is_array() || v.size() != 2) config_error("expected an array of two numbers");
    return std::array<double, 2>{v[0].get<double>(), v[1].get<double>()};
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n") cfg.n = v.get<std::size_t>();
      else if (key == "replicates") cfg.replicates = v.get<std::size_t>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "grid_step") cfg.grid_step = v.get<double>();
      else if (key == "u_mean") cfg.u_mean = pair(v);
      else if (key == "u_cov") {
        if (!v.is_array() || v.size() != 2) config_error("u_cov must be a 2 x 2 array");
        cfg.u_cov = {pair(v[0]), pair(v[1])};
      } else if (key == "randomization_probability") cfg.randomization_probability = v.get<double>();
      else if (key == "switch_rates") {
        for (const auto& [k, x] : v.items()) {
          if (k == "base") cfg.switch_rates.base = x.get<double>();
          else if (k == "u1") cfg.switch_rates.u1 = x.get<double>();
          else if (k == "z") cfg.switch_rates.z = x.get<double>();
          else config_error("unknown key switch_rates." + k);
        }
      } else if (key == "event_rates") {
        for (const auto& [k, x] : v.items()) {
          if (k == "base") cfg.event_rates.base = x.get<double>();
          else if (k == "treatment") cfg.event_rates.treatment = x.get<double>();
          else if (k == "z") cfg.event_rates.z = x.get<double>();
          else if (k == "u2") cfg.event_rates.u2 = x.get<double>();
          else config_error("unknown key event_rates." + k);
        }
      } else if (key == "censoring_target") cfg.censoring_target = v.get<double>();
      else if (key == "censoring_rate") {
        cfg.censoring_rate = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "calibration_cohort") cfg.calibration_cohort = v.get<std::size_t>();
      else if (key == "tau") cfg.tau = v.get<double>();
      else if (key == "eval_times") cfg.eval_times = v.get<std::vector<double>>();
      else if (key == "iv") {
        if (v.is_string()) {
          cfg.iv.mode = parse_iv_mode(v.get<std::string>());
        } else {
          for (const auto& [k, x] : v.items()) {
            if (k == "mode") cfg.iv.mode = parse_iv_mode(x.get<std::string>());
            else if (k == "probability") cfg.iv.probability = x.get<double>();
            else config_error("unknown key iv." + k);
          }
        }
      } else if (key == "weights") cfg.weights = parse_weight_spec(v.get<std::string>());
      else if (key == "variance") cfg.variance = parse_variance_mode(v.get<std::string>());
      else if (key == "n_resamples") cfg.n_resamples = v.get<std::size_t>();
      else if (key == "test_level") cfg.test_level = v.get<double>();
      else if (key == "threads") cfg.threads = v.get<std::size_t>();
      else config_error("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    config_error(std::string("config JSON: ") + e.what());
  }
  return cfg;
}

namespace {

ordered_json sim_config_json(const SimConfig& c) {
  return {{"n", c.n},
          {"replicates", c.replicates},
          {"seed", c.seed},
          {"grid_step", c.grid_step},
          {"u_mean", {c.u_mean[0], c.u_mean[1]}},
          {"u_cov", {{c.u_cov[0][0], c.u_cov[0][1]}, {c.u_cov[1][0], c.u_cov[1][1]}}},
          {"randomization_probability", c.randomization_probability},
          {"switch_rates", {{"base", c.switch_rates.base}, {"u1", c.switch_rates.u1}, {"z", c.switch_rates.z}}},
          {"event_rates",
           {{"base", c.event_rates.base},
            {"treatment", c.event_rates.treatment},
            {"z", c.event_rates.z},
            {"u2", c.event_rates.u2}}},
          {"censoring_target", c.censoring_target},
          {"censoring_rate", optional_value(c.censoring_rate)},
          {"calibration_cohort", c.calibration_cohort},
          {"tau", c.tau},
          {"eval_times", numbers(c.eval_times)},
          {"iv", {{"mode", std::string(to_string(c.iv.mode))}, {"probability", c.iv.probability}}},
          {"weights", std::string(to_string(c.weights))},
          {"variance", std::string(to_string(c.variance))},
          {"n_resamples", c.n_resamples},
          {"test_level", c.test_level},
          {"threads", c.threads}};
}

ordered_json summary_json(const std::string& quantity, const MonteCarloSummary& s) {
  return {{"quantity", quantity},
          {"t", number(s.time)},
          {"truth", number(s.truth)},
          {"mean", number(s.mean_estimate)},
          {"bias", number(s.bias)},
          {"see", number(s.see)},
          {"sd", number(s.sd)},
          {"coverage", number(s.coverage)}};
}

std::string quantity_name(double t) { return "B(" + format_double(t) + ")"; }

}  // namespace

std::string sim_config_to_json(const SimConfig& cfg) { return sim_config_json(cfg).dump(2) + "\n"; }

std::string monte_carlo_to_json(const MonteCarloReport& r) {
  ordered_json j;
  j["version"] = std::string(library_version());
  j["timestamp"] = utc_timestamp();
  j["config"] = sim_config_json(r.config);
  j["censoring_rate"] = number(r.censoring_rate);
  ordered_json rows = ordered_json::array();
  for (const auto& s : r.times) rows.push_back(summary_json(quantity_name(s.time), s));
  rows.push_back(summary_json("beta", r.beta));
  j["table"] = rows;
  j["see_undefined"] = r.see_undefined;
  j["diagnostics"] = {{"replicates", r.replicates},
                      {"used", r.used},
                      {"failures", r.failure_count},
                      {"singular_denominator", r.singular_count},
                      {"switch_rate", number(r.switch_rate)},
                      {"censor_rate", number(r.censor_rate)},
                      {"max_residual_ratio", number(r.max_residual_ratio)},
                      {"max_residual_relative", number(r.max_residual_relative)},
                      {"residual_violations", r.residual_violations},
                      {"max_solve_residual", number(r.max_solve_residual)}};
  if (r.null_rejection) {
    j["tests"] = {{"n_resamples", r.config.n_resamples},
                  {"level", r.config.test_level},
                  {"sup_statistic", "raw"},
                  {"causal_null_rejection", number(*r.null_rejection)},
                  {"constant_effect_rejection", number(*r.gof_rejection)}};
  } else {
    j["tests"] = {{"skipped", true}};
  }
  j["notes"] = {
      "switch times are rounded up to the next grid point",
      "the instrument term of the switch law is an immediate switch at the first grid point with probability "
      "1 - exp(-z_rate Z)",
      "follow-up ends at tau; exponential censoring is calibrated so that overall censoring matches the target",
      "replicates whose estimator hit a vanishing denominator are excluded from the table and counted"};
  ordered_json reps = ordered_json::array();
  for (const auto& p : r.per_replicate) {
    reps.push_back({{"ok", p.ok},
                    {"failure", p.failure},
                    {"estimates", numbers(p.estimates)},
                    {"se", numbers(p.se)},
                    {"beta", number(p.beta)},
                    {"beta_se", number(p.beta_se)},
                    {"null_p", number(p.null_p)},
                    {"gof_p", number(p.gof_p)},
                    {"switch_rate", number(p.switch_rate)},
                    {"censor_rate", number(p.censor_rate)},
                    {"residual_ratio", number(p.residual_ratio)}});
  }
  j["replicates"] = reps;
  return j.dump(2) + "\n";
}

std::string table1_csv(const MonteCarloReport& r) {
  std::string out = "n,quantity,t,truth,bias,see,sd,coverage\n";
  auto row = [&](const std::string& quantity, const MonteCarloSummary& s, bool with_time) {
    out += std::to_string(r.config.n) + ',' + quantity + ',' + (with_time ? format_double(s.time) : "") + ',' +
           format_double(s.truth) + ',' + format_double(s.bias) + ',' + format_double(s.see) + ',' +
           format_double(s.sd) + ',' + format_double(s.coverage) + '\n';
  };
  for (const auto& s : r.times) row(quantity_name(s.time), s, true);
  row("beta", r.beta, false);
  return out;
}

std::string bands_csv(const AnalysisReport& r) {
  std::string out = "t,bhat,se,lo95,hi95,const_fit\n";
  for (std::size_t k = 0; k < r.effect.size(); ++k) {
    const double t = r.effect.times[k];
    out += format_double(t) + ',' + format_double(r.effect.cumulative[k]) + ',' + format_double(r.curve.se[k]) +
           ',' + format_double(r.curve.lower[k]) + ',' + format_double(r.curve.upper[k]) + ',' +
           format_double(r.beta * t) + '\n';
  }
  return out;
}

std::string testprocess_csv(const AnalysisReport& r) {
  const Eigen::MatrixXd empty;
  const Eigen::MatrixXd& paths = r.causal_null ? r.causal_null->resampled_paths : empty;
  std::string out = "t,observed";
  for (Eigen::Index p = 0; p < paths.rows(); ++p) out += ",path_" + std::to_string(p + 1);
  out += '\n';
  const double root_n = std::sqrt(static_cast<double>(r.summary.subjects));
  for (std::size_t k = 0; k < r.effect.size(); ++k) {
    const double observed = r.causal_null ? r.causal_null->observed_path[k] : root_n * r.effect.cumulative[k];
    out += format_double(r.effect.times[k]) + ',' + format_double(observed);
    for (Eigen::Index p = 0; p < paths.rows(); ++p) {
      out += ',' + format_double(paths(p, static_cast<Eigen::Index>(k)));
    }
    out += '\n';
  }
  return out;
}

}  // namespace scsmiv
