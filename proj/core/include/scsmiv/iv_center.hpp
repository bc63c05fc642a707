#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "scsmiv/data_model.hpp"

namespace scsmiv {

enum class IvMode { KnownProbability, EmpiricalMean, LogisticRegression };

/// How E(Z | L) is obtained.
struct IvSpec {
  IvMode mode = IvMode::EmpiricalMean;
  double probability = 0.5;  // KnownProbability only

  static IvSpec known(double p) { return {IvMode::KnownProbability, p}; }
  static IvSpec empirical_mean() { return {IvMode::EmpiricalMean, 0.5}; }
  static IvSpec logistic() { return {IvMode::LogisticRegression, 0.5}; }
};

/// Fitted instrument model. `theta_influence` is n x dim(theta) with
/// sqrt(n)(theta_hat - theta) = n^{-1/2} sum_i theta_influence.row(i) + o_p(1).
struct IvModel {
  IvMode mode = IvMode::EmpiricalMean;
  Eigen::VectorXd theta;
  Eigen::MatrixXd theta_influence;

  /// E(Z | L = covariates; theta).
  double conditional_mean(std::span<const double> covariates) const;
  /// Same model evaluated at another parameter value (finite differences).
  IvModel with_theta(const Eigen::VectorXd& other) const;
  bool has_estimated_theta() const noexcept { return mode != IvMode::KnownProbability; }
};

struct LogisticOptions {
  double gradient_tolerance = 1e-10;
  int max_iterations = 100;
};

IvModel fit_iv_model(std::span<const SubjectRecord> records, const IvSpec& spec, const LogisticOptions& opts = {});

/// Z^c = z - E(Z | L; theta_hat).
double center_instrument(const IvModel& model, const SubjectRecord& record);
std::vector<double> center_instruments(const IvModel& model, std::span<const SubjectRecord> records);

}  // namespace scsmiv
