#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "sqc/linalg.hpp"
#include "sqc/potential.hpp"
#include "sqc/process.hpp"

namespace sqc {

enum class BeliefTag { initial, predicted, updated };

struct GaussianBelief {
  Vector mean;
  SymMatrix cov;
  Step step = 0;
  BeliefTag tag = BeliefTag::initial;

  Eigen::Index dim() const { return mean.size(); }
};

/// Per-step log-partition terms: log N and the scalar correction script-N.
struct NormalizationDiagnostic {
  double log_N = 0.0;
  double script_N = 0.0;
};

/// How the next prediction is seeded after an update. `belief` carries the
/// posterior mean forward; `sampled` draws a state from the posterior and
/// restarts the prediction from it with the posterior covariance.
enum class Mode { belief, sampled };

inline std::string_view to_string(Mode m) { return m == Mode::belief ? "belief" : "sampled"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "belief") return Mode::belief;
  if (s == "sampled") return Mode::sampled;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected belief|sampled)");
}

/// Drift-and-diffuse half step: mean + f dt, F cov F^T + g^-1 dt.
inline GaussianBelief predict(const GaussianBelief& belief, const ItoProcessModel& model) {
  if (belief.tag == BeliefTag::predicted) {
    throw ValidationError("predict: belief is already a prediction");
  }
  if (belief.dim() != model.dim() || belief.cov.dim() != model.dim()) {
    throw DimensionMismatch("predict: belief and model dimensions differ");
  }
  const Step t = belief.step;
  const Matrix f = transition_matrix(model, belief.mean, t);
  GaussianBelief out;
  out.mean = belief.mean + model.drift(belief.mean, t) * model.dt();
  out.cov = SymMatrix(f * belief.cov.mat() * f.transpose() + model.noise_metric_inv(t).mat() * model.dt());
  out.step = t + 1;
  out.tag = BeliefTag::predicted;
  factor_spd(out.cov, "predicted covariance");
  return out;
}

namespace detail {

inline void check_update_inputs(const GaussianBelief& belief, const PotentialEvaluation& pot, double dt) {
  if (belief.tag != BeliefTag::predicted) throw ValidationError("update: belief must be a prediction");
  if (!(dt > 0.0)) throw ValidationError("update: dt must be positive");
  if (pot.state_dim() != belief.dim()) throw DimensionMismatch("update: potential/state dimension mismatch");
  const double tol = 1e-12 * (1.0 + belief.mean.norm());
  if (pot.point.size() != belief.dim() || (pot.point - belief.mean).norm() > tol) {
    throw ValidationError("update: potential must be evaluated at the predicted mean");
  }
}

// Sigma_nu / dt + H Sigma H^T, the k x k innovation-like matrix of the gain form.
struct GainTerms {
  SymMatrix sigma_nu;
  Matrix cov_ht;  // Sigma H^T
  Eigen::LLT<Matrix> inner;
  SymMatrix inner_matrix;
};

inline GainTerms gain_terms(const GaussianBelief& belief, const PotentialEvaluation& pot, double dt) {
  GainTerms g;
  g.sigma_nu = spd_inverse(pot.curvature, "potential curvature Sigma_nu^-1");
  g.cov_ht = belief.cov.mat() * pot.h.transpose();
  g.inner_matrix = SymMatrix(g.sigma_nu.mat() / dt + pot.h * g.cov_ht);
  g.inner = factor_spd(g.inner_matrix, "gain matrix Sigma_nu/dt + H Sigma H^T");
  return g;
}

}  // namespace detail

/// Mean displacement produced by the potential:
///   Sigma H^T (Sigma_nu/dt + H Sigma H^T)^-1 Sigma_nu dV/dl.
inline Vector update_mean_shift(const GaussianBelief& belief, const PotentialEvaluation& pot, double dt) {
  detail::check_update_inputs(belief, pot, dt);
  const auto g = detail::gain_terms(belief, pot, dt);
  return g.cov_ht * g.inner.solve(Vector(g.sigma_nu.mat() * pot.grad_l));
}

/// Gain-form update. The counter curvature never enters: the counter term
/// cancels it exactly, so it is carried for diagnostics only.
inline GaussianBelief update(const GaussianBelief& belief, const PotentialEvaluation& pot, double dt) {
  detail::check_update_inputs(belief, pot, dt);
  const auto g = detail::gain_terms(belief, pot, dt);
  GaussianBelief out;
  out.mean = belief.mean + g.cov_ht * g.inner.solve(Vector(g.sigma_nu.mat() * pot.grad_l));
  out.cov = SymMatrix(belief.cov.mat() - g.cov_ht * g.inner.solve(Matrix(g.cov_ht.transpose())));
  out.step = belief.step;
  out.tag = BeliefTag::updated;
  factor_spd(out.cov, "updated covariance");
  return out;
}

/// Precision-form update: with M = Sigma^-1 + H^T Sigma_nu^-1 H dt,
///   mean' = mean - M^-1 grad V dt,   cov' = M^-1.
inline GaussianBelief update_precision_form(const GaussianBelief& belief, const PotentialEvaluation& pot,
                                            double dt) {
  detail::check_update_inputs(belief, pot, dt);
  const SymMatrix precision(spd_inverse(belief.cov, "predicted covariance").mat() +
                            pot.h.transpose() * pot.curvature.mat() * pot.h * dt);
  const auto llt = factor_spd(precision, "posterior precision");
  GaussianBelief out;
  out.mean = belief.mean - llt.solve(Vector(state_gradient(pot) * dt));
  out.cov = SymMatrix(llt.solve(Matrix::Identity(belief.dim(), belief.dim())));
  out.step = belief.step;
  out.tag = BeliefTag::updated;
  return out;
}

/// log N = 1/2 log|Sigma_nu/dt + H Sigma H^T| - 1/2 log|Sigma_nu| + (k/2) log dt + script_N dt
/// script_N = V - 1/2 g^T M^-1 g dt, with g = H^T dV/dl and M^-1 the posterior
/// covariance (taken in Woodbury form).
inline NormalizationDiagnostic normalization(const GaussianBelief& belief, const PotentialEvaluation& pot,
                                             double dt) {
  detail::check_update_inputs(belief, pot, dt);
  const auto g = detail::gain_terms(belief, pot, dt);
  const Matrix posterior_cov = belief.cov.mat() - g.cov_ht * g.inner.solve(Matrix(g.cov_ht.transpose()));
  const Vector force = pot.h.transpose() * pot.grad_l;
  NormalizationDiagnostic n;
  n.script_N = pot.value - 0.5 * force.dot(posterior_cov * force) * dt;
  const double log_det_inner = 2.0 * g.inner.matrixLLT().diagonal().array().log().sum();
  const double log_det_sigma_nu = -log_det_spd(pot.curvature, "potential curvature Sigma_nu^-1");
  const auto k = static_cast<double>(pot.inner_dim());
  n.log_N = 0.5 * log_det_inner - 0.5 * log_det_sigma_nu + 0.5 * k * std::log(dt) + n.script_N * dt;
  if (!std::isfinite(n.log_N) || !std::isfinite(n.script_N)) {
    throw Singular("normalization is not finite");
  }
  return n;
}

/// Draw x ~ N(mean, cov).
inline Vector sample_posterior(const GaussianBelief& belief, RandomStream& rng) {
  const Matrix l = cholesky_lower(belief.cov, "posterior covariance");
  return belief.mean + l * rng.standard_normal(belief.dim());
}

/// One logged step of a closed-loop or filtering run.
struct TrajectoryRecord {
  Step step = 0;
  Vector state;    // sampled state (posterior mean in belief mode)
  Vector mean;     // posterior mean
  SymMatrix cov;   // posterior covariance
  Vector control;  // control input u
  double potential_value = 0.0;
  double log_N = 0.0;
};

struct StepResult {
  GaussianBelief next;       // belief the following step predicts from
  GaussianBelief predicted;  // x_hat_{t+1|t}
  GaussianBelief posterior;  // x_hat_{t+1|t+1}
  PotentialEvaluation potential;
  NormalizationDiagnostic normalization;
  TrajectoryRecord record;   // control holds the raw mean shift (B = R = I)
};

/// predict -> evaluate the potential once at the predicted mean -> update ->
/// (sampled mode) draw the next state from the posterior.
inline StepResult step(const GaussianBelief& belief, const ItoProcessModel& model, const Potential& potential,
                       RandomStream& rng, Mode mode) {
  StepResult r;
  r.predicted = predict(belief, model);
  r.potential = potential.evaluate(r.predicted.mean, r.predicted.step);
  r.normalization = normalization(r.predicted, r.potential, model.dt());
  r.posterior = update(r.predicted, r.potential, model.dt());

  Vector state = r.posterior.mean;
  if (mode == Mode::sampled) state = sample_posterior(r.posterior, rng);
  if (!state.allFinite()) throw NonFinite("step: state left the finite range");

  r.next = r.posterior;
  if (mode == Mode::sampled) r.next.mean = state;

  r.record.step = r.posterior.step;
  r.record.state = state;
  r.record.mean = r.posterior.mean;
  r.record.cov = r.posterior.cov;
  r.record.control = r.posterior.mean - r.predicted.mean;
  r.record.potential_value = r.potential.value;
  r.record.log_N = r.normalization.log_N;
  return r;
}

}  // namespace sqc
