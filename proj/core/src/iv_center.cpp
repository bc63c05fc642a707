#include "scsmiv/iv_center.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "scsmiv/error.hpp"

namespace scsmiv {

namespace {

double logistic(double eta) {
  return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

// log(1 + e^eta) without overflow.
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

Eigen::MatrixXd design_matrix(std::span<const SubjectRecord> records) {
  const auto p = records.front().covariates.size();
  Eigen::MatrixXd x(records.size(), p + 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].covariates.size() != p) {
      throw Error(ErrorCode::MissingCovariates,
                  "subject " + records[i].id + " has " + std::to_string(records[i].covariates.size()) +
                      " covariates, expected " + std::to_string(p));
    }
    x(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) x(i, j + 1) = records[i].covariates[j];
  }
  return x;
}

IvModel fit_logistic(std::span<const SubjectRecord> records, const LogisticOptions& opts) {
  if (records.front().covariates.empty()) {
    throw Error(ErrorCode::MissingCovariates, "logistic instrument model requires covariates for every subject");
  }
  const Eigen::MatrixXd x = design_matrix(records);
  const auto n = static_cast<double>(records.size());
  Eigen::VectorXd z(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) z(i) = records[i].z;

  auto neg_loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    double value = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) value += softplus(eta(i)) - z(i) * eta(i);
    return value / n;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd mu(x.rows());
  Eigen::MatrixXd info;
  bool converged = false;
  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu(i) = logistic(eta(i));
    const Eigen::VectorXd score = x.transpose() * (z - mu) / n;
    const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    info = x.transpose() * w.asDiagonal() * x / n;
    if (score.norm() <= opts.gradient_tolerance) {
      converged = true;
      break;
    }
    if (iter == opts.max_iterations) break;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd step = ldlt.solve(score);

    // Halve the Newton step until the likelihood does not get worse.
    const double current = neg_loglik(beta);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    while (neg_loglik(candidate) > current + 1e-15 * std::abs(current) && scale > 1e-10) {
      scale *= 0.5;
      candidate = beta + scale * step;
    }
    beta = candidate;
  }
  if (!converged || !beta.allFinite()) {
    throw Error(ErrorCode::NonConvergence, "logistic instrument model did not converge in " +
                                               std::to_string(opts.max_iterations) + " Newton iterations");
  }
  // Under separation the score vanishes while the coefficients run off and the
  // information collapses; that is not a usable fit.
  const double design_scale = 1.0 + (x.transpose() * x / n).trace();
  const double min_info = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(info, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (!(min_info > 1e-10 * design_scale)) {
    throw Error(ErrorCode::NonConvergence, "logistic instrument model is separated (information matrix singular)");
  }

  IvModel model;
  model.mode = IvMode::LogisticRegression;
  model.theta = beta;
  // eps_i = I^{-1} x_i (z_i - mu_i)
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  const Eigen::MatrixXd scores = (x.array().colwise() * (z - mu).array()).matrix();
  model.theta_influence = ldlt.solve(scores.transpose()).transpose();
  return model;
}

}  // namespace

double IvModel::conditional_mean(std::span<const double> covariates) const {
  switch (mode) {
    case IvMode::KnownProbability:
    case IvMode::EmpiricalMean:
      return theta(0);
    case IvMode::LogisticRegression: {
      double eta = theta(0);
      const auto p = std::min<Eigen::Index>(static_cast<Eigen::Index>(covariates.size()), theta.size() - 1);
      for (Eigen::Index j = 0; j < p; ++j) eta += theta(j + 1) * covariates[static_cast<std::size_t>(j)];
      return logistic(eta);
    }
  }
  return theta(0);
}

IvModel IvModel::with_theta(const Eigen::VectorXd& other) const {
  IvModel copy = *this;
  copy.theta = other;
  return copy;
}

IvModel fit_iv_model(std::span<const SubjectRecord> records, const IvSpec& spec, const LogisticOptions& opts) {
  if (records.empty()) throw Error(ErrorCode::InvalidConfig, "no subjects");
  bool varies = false;
  for (const auto& r : records) varies = varies || r.z != records.front().z;
  if (!varies) throw Error(ErrorCode::DegenerateInstrument, "instrument z is constant across subjects");

  const auto n = static_cast<Eigen::Index>(records.size());
  IvModel model;
  model.mode = spec.mode;
  switch (spec.mode) {
    case IvMode::KnownProbability:
      if (!(spec.probability > 0.0 && spec.probability < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "randomization probability must lie in (0, 1)");
      }
      model.theta = Eigen::VectorXd::Constant(1, spec.probability);
      model.theta_influence = Eigen::MatrixXd::Zero(n, 1);
      return model;
    case IvMode::EmpiricalMean: {
      double mean = 0.0;
      for (const auto& r : records) mean += r.z;
      mean /= static_cast<double>(n);
      model.theta = Eigen::VectorXd::Constant(1, mean);
      model.theta_influence.resize(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) model.theta_influence(i, 0) = records[static_cast<std::size_t>(i)].z - mean;
      return model;
    }
    case IvMode::LogisticRegression:
      return fit_logistic(records, opts);
  }
  return model;
}

double center_instrument(const IvModel& model, const SubjectRecord& record) {
  return record.z - model.conditional_mean(record.covariates);
}

std::vector<double> center_instruments(const IvModel& model, std::span<const SubjectRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(center_instrument(model, r));
  return out;
}

}  // namespace scsmiv
