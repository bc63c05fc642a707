#include <doctest.h>

#include <random>

#include "scsmiv/error.hpp"
#include "scsmiv/iv_center.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace scsmiv;
using scsmiv::testing::subject;

namespace {

std::vector<SubjectRecord> with_z(std::vector<double> z) {
  std::vector<SubjectRecord> out;
  for (std::size_t i = 0; i < z.size(); ++i) out.push_back(subject(std::to_string(i), 1.0, true, z[i]));
  return out;
}

}  // namespace

TEST_CASE("known probability") {
  const auto records = with_z({1, 0, 1});
  const auto m = fit_iv_model(records, IvSpec::known(0.5));
  CHECK(m.theta(0) == 0.5);
  CHECK(m.theta_influence.cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(m.has_estimated_theta());
  CHECK(center_instrument(m, records[0]) == 0.5);
  CHECK(center_instrument(m, records[1]) == -0.5);
  CHECK_THROWS_AS(fit_iv_model(records, IvSpec::known(1.0)), Error);
}

TEST_CASE("empirical mean") {
  const auto records = with_z({1, 0, 1, 0});
  const auto m = fit_iv_model(records, IvSpec::empirical_mean());
  CHECK(m.theta(0) == 0.5);
  REQUIRE(m.theta_influence.rows() == 4);
  CHECK(m.theta_influence(0, 0) == 0.5);
  CHECK(m.theta_influence(1, 0) == -0.5);
  CHECK(m.theta_influence(2, 0) == 0.5);
  CHECK(m.theta_influence(3, 0) == -0.5);

  const auto skew = with_z({1, 1, 0, 1, 0, 1, 1});
  const auto ms = fit_iv_model(skew, IvSpec::empirical_mean());
  double sum = 0.0;
  for (double v : center_instruments(ms, skew)) sum += v;
  CHECK(std::abs(sum) < 1e-14);
  CHECK(std::abs(ms.theta_influence.sum()) < 1e-14);
}

TEST_CASE("degenerate instrument") {
  for (auto spec : {IvSpec::known(0.5), IvSpec::empirical_mean(), IvSpec::logistic()}) {
    try {
      fit_iv_model(with_z({1, 1, 1}), spec);
      FAIL("expected DegenerateInstrument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateInstrument);
    }
  }
}

TEST_CASE("logistic with zero coefficients centers at one half") {
  IvModel m;
  m.mode = IvMode::LogisticRegression;
  m.theta = Eigen::VectorXd::Zero(2);
  const auto r = subject("a", 1.0, true, 1, {}, {0.7});
  CHECK(center_instrument(m, r) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("logistic fit: score equation, influence and weighted-refit oracle") {
  std::mt19937_64 rng(5);
  auto records = scsmiv::testing::random_dataset(rng, 60);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].covariates.push_back(std::sin(static_cast<double>(i)));
  }
  const auto m = fit_iv_model(records, IvSpec::logistic());
  REQUIRE(m.theta.size() == 3);

  const std::vector<double> ones(records.size(), 1.0);
  const Eigen::VectorXd ref = scsmiv::testing::weighted_logistic(records, ones);
  CHECK((m.theta - ref).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(m.theta_influence.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);

  // n d theta / d w_i equals the influence row.
  const double h = 1e-6;
  const double n = static_cast<double>(records.size());
  for (std::size_t i : {0u, 7u, 33u}) {
    auto w = ones;
    w[i] = 1.0 + h;
    const Eigen::VectorXd up = scsmiv::testing::weighted_logistic(records, w);
    w[i] = 1.0 - h;
    const Eigen::VectorXd down = scsmiv::testing::weighted_logistic(records, w);
    const Eigen::VectorXd fd = n * (up - down) / (2.0 * h);
    CHECK((fd - m.theta_influence.row(static_cast<Eigen::Index>(i)).transpose()).cwiseAbs().maxCoeff() < 1e-5);
  }

  const auto refit = m.with_theta(m.theta);
  CHECK(center_instrument(refit, records[3]) == center_instrument(m, records[3]));
}

TEST_CASE("logistic without covariates is a hard error") {
  auto records = with_z({1, 0, 1, 0});
  records[2].covariates = {1.0};
  try {
    fit_iv_model(records, IvSpec::logistic());
    FAIL("expected MissingCovariates");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCovariates);
  }
}

TEST_CASE("logistic separation fails to converge") {
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 10; ++i) {
    records.push_back(subject(std::to_string(i), 1.0, true, i < 5 ? 0 : 1, {}, {static_cast<double>(i)}));
  }
  try {
    fit_iv_model(records, IvSpec::logistic());
    FAIL("expected NonConvergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonConvergence);
  }
}
