#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "sqc/ekf.hpp"
#include "sqc/oracle.hpp"
#include "test_support.hpp"

using namespace sqc;
using sqc::test::vec;

namespace {

GaussianBelief predicted(Vector mean, SymMatrix cov, Step step = 1) {
  return {std::move(mean), std::move(cov), step, BeliefTag::predicted};
}

ObservationModel nonlinear_model() {
  ObservationModel obs;
  obs.h = [](const Vector& x, Step) { return vec({std::sin(x(0)) + x(1) * x(1)}); };
  obs.jacobian = [](const Vector& x, Step) {
    Matrix j(1, 2);
    j << std::cos(x(0)), 2.0 * x(1);
    return j;
  };
  obs.sigma_nu = SymMatrix::scaled_identity(1, 0.2);
  return obs;
}

}  // namespace

TEST(EkfUpdate, ZeroInnovationKeepsMean) {
  const auto obs = ObservationModel::linear(Matrix::Identity(2, 2), SymMatrix::identity(2));
  const auto prior = predicted(vec({0.3, -0.4}), SymMatrix::diagonal({2.0, 3.0}));
  const auto post = ekf_update(prior, obs, prior.mean);
  EXPECT_LE((post.mean - prior.mean).norm(), 1e-15);
  EXPECT_NEAR(post.cov(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(post.cov(1, 1), 0.75, 1e-15);
}

TEST(EkfUpdate, ScalarKalman) {
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::identity(1));
  const auto post = ekf_update(predicted(vec({0.0}), SymMatrix::identity(1)), obs, vec({1.0}));
  EXPECT_NEAR(post.mean(0), 0.5, 1e-15);
  EXPECT_NEAR(post.cov(0, 0), 0.5, 1e-15);
}

TEST(EkfUpdate, MatchesEngineUpdate) {
  std::mt19937_64 rng(8);
  const auto obs = nonlinear_model();
  for (int i = 0; i < 100; ++i) {
    const auto prior = predicted(test::random_vector(rng, 2), test::random_spd(rng, 2));
    const Vector y = test::random_vector(rng, 1);
    const auto pot = observation_potential(obs, y).evaluate(prior.mean, prior.step);
    const auto a = ekf_update(prior, obs, y);
    const auto b = update(prior, pot, 1.0);
    EXPECT_LE(relative_difference(b.mean, a.mean), 1e-12);
    EXPECT_LE(relative_difference(b.cov.mat(), a.cov.mat()), 1e-12);
  }
}

TEST(EkfUpdate, ObservationSignPin) {
  // A positive innovation along a positive Jacobian must move the mean up.
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::identity(1));
  const auto prior = predicted(vec({0.0}), SymMatrix::identity(1));
  const auto pot = observation_potential(obs, vec({2.0})).evaluate(prior.mean, 1);
  EXPECT_EQ(pot.h(0, 0), 1.0);
  EXPECT_EQ(pot.l(0), 2.0);
  EXPECT_GT(update(prior, pot, 1.0).mean(0), 0.0);
  EXPECT_LT(verify_derivatives(observation_potential(nonlinear_model(), vec({0.3})), vec({0.2, 0.5})).h_error, 1e-6);
}

TEST(EkfUpdate, JosephFormAgreement) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const Matrix c = test::random_matrix(rng, 2, 3);
    const SymMatrix r = test::random_spd(rng, 2);
    const auto obs = ObservationModel::linear(c, r);
    const auto prior = predicted(test::random_vector(rng, 3), test::random_spd(rng, 3));
    const auto post = ekf_update(prior, obs, test::random_vector(rng, 2));
    const Matrix s = r.mat() + c * prior.cov.mat() * c.transpose();
    const Matrix k = prior.cov.mat() * c.transpose() * s.inverse();
    const Matrix ikh = Matrix::Identity(3, 3) - k * c;
    const Matrix joseph = ikh * prior.cov.mat() * ikh.transpose() + k * r.mat() * k.transpose();
    EXPECT_LE(relative_difference(post.cov.mat(), joseph), 1e-10);
  }
}

TEST(EkfUpdate, CovarianceIndependentOfObservationForLinearModel) {
  const auto obs = ObservationModel::linear(Matrix::Identity(2, 2), SymMatrix::identity(2));
  const auto prior = predicted(vec({0.1, 0.2}), SymMatrix::diagonal({1.5, 0.5}));
  const auto a = ekf_update(prior, obs, vec({5.0, -3.0}));
  const auto b = ekf_update(prior, obs, vec({-1.0, 0.0}));
  EXPECT_EQ(a.cov.mat(), b.cov.mat());
  EXPECT_NE(a.mean, b.mean);
}

TEST(EkfUpdate, RejectsWrongTagAndSize) {
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::identity(1));
  GaussianBelief b = predicted(vec({0.0}), SymMatrix::identity(1));
  EXPECT_THROW(ekf_update(b, obs, vec({1.0, 2.0})), DimensionMismatch);
  b.tag = BeliefTag::updated;
  EXPECT_THROW(ekf_update(b, obs, vec({1.0})), ValidationError);
  EXPECT_THROW(ObservationModel::linear(Matrix::Identity(2, 2), SymMatrix::identity(1)), DimensionMismatch);
}

TEST(Likelihood, DensityAtZeroResidual) {
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::identity(1));
  EXPECT_NEAR(observation_log_density(obs, vec({0.4}), vec({0.4}), 0), -0.5 * std::log(2.0 * std::numbers::pi),
              1e-15);
}

TEST(Likelihood, EvidenceMatchesQuadrature) {
  // Omega(y|Y) = integral N(y; Cx, R) N(x; m, P) dx.
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::scaled_identity(1, 0.3));
  const auto prior = predicted(vec({0.2}), SymMatrix::scaled_identity(1, 0.7));
  const Vector y = vec({1.1});
  const auto terms = marginal_likelihood(prior, obs, y);
  const auto rule = oracle::gauss_hermite(64);
  double integral = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = 0.2 + std::sqrt(0.7) * rule.nodes[i];
    integral += rule.weights[i] * std::exp(observation_log_density(obs, y, vec({x}), 1));
  }
  EXPECT_NEAR(terms.log_evidence, std::log(integral), 1e-12);
  EXPECT_NEAR(terms.log_weight_at_mean, terms.log_density_at_mean - terms.log_evidence, 1e-15);
}

TEST(ObservationCsv, ParsesAndValidates) {
  std::istringstream ok("step,y1,y2\n0,1.5,2\n3, -1e-3 ,4\n");
  const auto s = read_observation_csv(ok);
  ASSERT_EQ(s.entries().size(), 2u);
  EXPECT_EQ(s.entries()[1].step, 3);
  EXPECT_EQ(s.entries()[1].y(0), -1e-3);
  EXPECT_NE(s.at(3), nullptr);
  EXPECT_EQ(s.at(2), nullptr);

  std::istringstream bad_header("t,y1\n0,1\n");
  EXPECT_THROW(read_observation_csv(bad_header), ParseError);
  std::istringstream bad_width("step,y1\n0,1,2\n");
  EXPECT_THROW(read_observation_csv(bad_width), ParseError);
  std::istringstream bad_number("step,y1\n0,abc\n");
  EXPECT_THROW(read_observation_csv(bad_number), ParseError);
  std::istringstream not_increasing("step,y1\n2,1\n2,1\n");
  EXPECT_THROW(read_observation_csv(not_increasing), ParseError);
  std::istringstream nan("step,y1\n0,nan\n");
  EXPECT_THROW(read_observation_csv(nan), ParseError);
}

TEST(ObservationCsv, EmptyInputGivesEmptyStream) {
  std::istringstream blank("");
  EXPECT_TRUE(read_observation_csv(blank).empty());
  std::istringstream header_only("step,y1\n");
  EXPECT_TRUE(read_observation_csv(header_only).empty());
}

TEST(RunFilter, NoObservationsIsPurePrediction) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 2), SymMatrix::identity(1));
  const GaussianBelief initial{vec({0.5, 0.5}), SymMatrix::identity(2), 0, BeliefTag::initial};
  const auto out = run_filter(model, obs, ObservationStream{}, initial, 10);
  ASSERT_EQ(out.beliefs.size(), 11u);
  EXPECT_EQ(out.total_log_likelihood, 0.0);
  GaussianBelief b = initial;
  for (Step t = 1; t <= 10; ++t) {
    b = predict(b, model);
    b.tag = BeliefTag::updated;
  }
  EXPECT_LE((out.beliefs.back().mean - b.mean).norm(), 1e-15);
  EXPECT_LE((out.beliefs.back().cov.mat() - b.cov.mat()).norm(), 1e-14);
}

TEST(RunFilter, RejectsObservationPastHorizon) {
  const ItoProcessModel model(1, 1.0, drift::zero(1), SymMatrix::identity(1));
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 1), SymMatrix::identity(1));
  const ObservationStream s({{5, vec({1.0})}});
  const GaussianBelief initial{vec({0.0}), SymMatrix::identity(1), 0, BeliefTag::initial};
  EXPECT_THROW(run_filter(model, obs, s, initial, 4), ValidationError);
  EXPECT_THROW(run_filter(model, obs, s, initial, -1), ValidationError);
}

TEST(RunFilter, VanDerPolTrackingBeatsPrediction) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  const auto obs = ObservationModel::linear(Matrix::Identity(1, 2), SymMatrix::scaled_identity(1, 0.01));
  RandomStream truth_rng(3, 0), noise_rng(3, 1);
  const Step horizon = 400;
  const auto path = simulate_open_loop(model, vec({0.5, 0.5}), horizon, truth_rng);
  std::vector<Observation> ys;
  for (Step t = 0; t <= horizon; ++t) ys.push_back({t, vec({path.states[t](0) + 0.1 * noise_rng.normal()})});
  const GaussianBelief initial{vec({0.0, 0.0}), SymMatrix::identity(2), 0, BeliefTag::initial};
  const auto filtered = run_filter(model, obs, ObservationStream(ys), initial, horizon);
  const auto open = run_filter(model, obs, ObservationStream{}, initial, horizon);
  // x2 couples to x1 only through the slow drift, so compare the observed component.
  double se_f = 0.0, se_o = 0.0;
  for (Step t = 0; t <= horizon; ++t) {
    se_f += std::pow(filtered.beliefs[t].mean(0) - path.states[t](0), 2);
    se_o += std::pow(open.beliefs[t].mean(0) - path.states[t](0), 2);
  }
  EXPECT_LT(se_f, 0.25 * se_o);
  EXPECT_TRUE(std::isfinite(filtered.total_log_likelihood));
}
