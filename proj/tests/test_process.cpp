#include <gtest/gtest.h>

#include "sqc/process.hpp"
#include "test_support.hpp"

using namespace sqc;
using sqc::test::vec;

TEST(RandomStream, SameSeedSameDraws) {
  RandomStream a(7, 0), b(7, 0), c(7, 1);
  const Vector x = a.standard_normal(5), y = b.standard_normal(5), z = c.standard_normal(5);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
}

TEST(RandomStream, SplitIsDeterministicAndDistinct) {
  const RandomStream root(3, 0);
  RandomStream s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
  const double a = s1.normal();
  EXPECT_EQ(a, s1b.normal());
  EXPECT_NE(a, s2.normal());
}

TEST(VanDerPol, DriftAtInitialPoint) {
  const Drift d = drift::vanderpol_forced({});
  const Vector f = d.value(vec({0.5, 0.5}), 0);
  EXPECT_NEAR(f(0), 0.0025, 1e-15);
  EXPECT_NEAR(f(1), -0.00125, 1e-15);
}

TEST(VanDerPol, TransitionMatrixAtInitialPoint) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  const Matrix f = transition_matrix(model, vec({0.5, 0.5}), 0);
  EXPECT_NEAR(f(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(f(0, 1), 0.005, 1e-15);
  EXPECT_NEAR(f(1, 0), -0.0075, 1e-15);
  EXPECT_NEAR(f(1, 1), 1.0, 1e-15);
}

TEST(VanDerPol, JacobianMatchesFiniteDifferences) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_LT(drift_jacobian_fd_error(model, test::random_vector(rng, 2), i * 37), 1e-5);
  }
}

TEST(TransitionMatrix, ZeroAndLinearDrift) {
  const ItoProcessModel zero(3, 0.5, drift::zero(3), SymMatrix::identity(3));
  EXPECT_EQ(transition_matrix(zero, vec({1, 2, 3}), 0), Matrix::Identity(3, 3));
  Matrix a(2, 2);
  a << -1, 2, 0.5, -3;
  const ItoProcessModel lin(2, 0.1, drift::linear(a), SymMatrix::identity(2));
  EXPECT_EQ(transition_matrix(lin, vec({4, -1}), 9), Matrix(Matrix::Identity(2, 2) + a * 0.1));
}

TEST(ItoProcessModel, RejectsBadNoiseAndDt) {
  EXPECT_THROW(ItoProcessModel(2, 1.0, drift::zero(2), SymMatrix::diagonal({1.0, -1.0})), NotPositiveDefinite);
  EXPECT_THROW(ItoProcessModel(2, 0.0, drift::zero(2), SymMatrix::identity(2)), ValidationError);
  EXPECT_THROW(ItoProcessModel(3, 1.0, drift::zero(2), SymMatrix::identity(2)), DimensionMismatch);
}

TEST(StepSample, DeterministicLimit) {
  const ItoProcessModel model(2, 1.0, drift::zero(2), SymMatrix::scaled_identity(2, 1e-20));
  RandomStream rng(1, 0);
  const Vector x = vec({0.3, -0.7});
  EXPECT_LE((step_sample(model, x, 0, rng) - x).norm(), 1e-9);
}

TEST(StepSample, MomentsMatchOneStepGaussian) {
  const ItoProcessModel model(2, 1.0, drift::zero(2), SymMatrix::identity(2));
  RandomStream rng(2024, 0);
  const int n = 100000;
  const Vector x = vec({1.0, -2.0});
  Vector sum = Vector::Zero(2);
  Matrix outer = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector d = step_sample(model, x, 0, rng) - x;
    sum += d;
    outer += d * d.transpose();
  }
  const Vector mean = sum / n;
  const Matrix cov = outer / n - mean * mean.transpose();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 3.0 / std::sqrt(double(n)) * 1.5);
  EXPECT_LT((cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(StepSample, MeanFollowsDrift) {
  Matrix a(2, 2);
  a << -0.5, 0.2, 0.1, -0.3;
  const ItoProcessModel model(2, 0.5, drift::linear(a), SymMatrix::diagonal({0.2, 0.1}));
  RandomStream rng(5, 0);
  const int n = 100000;
  const Vector x = vec({1.0, 1.0});
  Vector sum = Vector::Zero(2);
  for (int i = 0; i < n; ++i) sum += step_sample(model, x, 0, rng);
  const Vector expected = x + a * x * 0.5;
  const double se = std::sqrt(0.2 * 0.5 / n);
  EXPECT_LT((sum / n - expected).cwiseAbs().maxCoeff(), 4.0 * se);
}

TEST(OpenLoop, ReproducibleAndConsistentWithStepSample) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  RandomStream a(9, 0), b(9, 0), c(9, 0);
  const StatePath p1 = simulate_open_loop(model, vec({0.5, 0.5}), 100, a);
  const StatePath p2 = simulate_open_loop(model, vec({0.5, 0.5}), 100, b);
  ASSERT_EQ(p1.states.size(), 101u);
  ASSERT_EQ(p1.times.size(), p1.states.size());
  for (std::size_t i = 0; i < p1.states.size(); ++i) EXPECT_EQ(p1.states[i], p2.states[i]);
  EXPECT_EQ(p1.states[1], step_sample(model, vec({0.5, 0.5}), 0, c));
}

TEST(OpenLoop, ConstantPathWithoutDriftOrNoise) {
  const ItoProcessModel model(2, 1.0, drift::zero(2), SymMatrix::zero(2));
  RandomStream rng(1, 0);
  const StatePath p = simulate_open_loop(model, vec({0.1, 0.2}), 10, rng);
  for (const auto& s : p.states) EXPECT_EQ(s, vec({0.1, 0.2}));
}

TEST(OpenLoop, StepsMustBePositive) {
  const ItoProcessModel model(1, 1.0, drift::zero(1), SymMatrix::identity(1));
  RandomStream rng(1, 0);
  EXPECT_THROW(simulate_open_loop(model, vec({0.0}), 0, rng), ValidationError);
}

TEST(OpenLoop, NonFiniteStateThrows) {
  Matrix a = Matrix::Constant(1, 1, 1e200);
  const ItoProcessModel model(1, 1.0, drift::linear(a), SymMatrix::identity(1));
  RandomStream rng(1, 0);
  EXPECT_THROW(simulate_open_loop(model, vec({1e200}), 5, rng), NonFinite);
}

TEST(OpenLoop, VanDerPolPathsStayBounded) {
  const ItoProcessModel model(2, 1.0, drift::vanderpol_forced({}), SymMatrix::scaled_identity(2, 0.001));
  int bounded = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomStream rng(seed, 0);
    const StatePath p = simulate_open_loop(model, vec({0.5, 0.5}), 5000, rng);
    bool ok = true;
    for (const auto& s : p.states) ok = ok && s.norm() < 10.0;
    bounded += ok;
  }
  EXPECT_GE(bounded, 99);
}
