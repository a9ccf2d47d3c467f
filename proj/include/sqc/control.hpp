#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "sqc/engine.hpp"

namespace sqc {

/// Input matrix B (m x l) and input weight R (l x l). Checked at construction:
/// R and B R^-1 B^T must both be SPD.
class ControlConfig {
 public:
  ControlConfig(Matrix b, SymMatrix r) : b_(std::move(b)), r_(std::move(r)) {
    if (r_.dim() != b_.cols()) throw DimensionMismatch("control: R must be l x l for B of size m x l");
    const SymMatrix r_inv = spd_inverse(r_, "control weight R");
    const SymMatrix brb(b_ * r_inv.mat() * b_.transpose());
    // The jitter retry would accept a rank-deficient B R^-1 B^T, so test the spectrum directly.
    const Eigen::SelfAdjointEigenSolver<Matrix> es(brb.mat(), Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff())) {
      throw NotPositiveDefinite("control: B R^-1 B^T not positive definite");
    }
    // u = R^-1 B^T (B R^-1 B^T)^-1 * shift
    projector_ = r_inv.mat() * b_.transpose() * spd_inverse(brb).mat();
  }

  static ControlConfig identity(Eigen::Index m) {
    return ControlConfig(Matrix::Identity(m, m), SymMatrix::identity(m));
  }

  const Matrix& b() const { return b_; }
  const SymMatrix& r() const { return r_; }
  Eigen::Index state_dim() const { return b_.rows(); }
  Eigen::Index input_dim() const { return b_.cols(); }

  /// Minimum R-norm input with B u equal to the given mean displacement.
  Vector input_for_shift(const Vector& shift) const {
    if (shift.size() != state_dim()) throw DimensionMismatch("control: shift dimension mismatch");
    return projector_ * shift;
  }

 private:
  Matrix b_;
  SymMatrix r_;
  Matrix projector_;
};

/// u = R^-1 B^T (B R^-1 B^T)^-1 Sigma H^T (Sigma_nu/dt + H Sigma H^T)^-1 Sigma_nu dV/dl
inline Vector control_input(const GaussianBelief& predicted, const PotentialEvaluation& pot,
                            const ControlConfig& cfg, double dt) {
  return cfg.input_for_shift(update_mean_shift(predicted, pot, dt));
}

struct ControlScenario {
  std::string name;
  ItoProcessModel model;
  Potential potential;
  GaussianBelief initial;
  ControlConfig control;
  Step horizon = 5000;
  Mode mode = Mode::sampled;
  std::uint64_t seed = 0;
};

struct ScenarioRun {
  std::vector<TrajectoryRecord> records;  // step 0 (initial) .. last completed step
  bool failed = false;
  std::string failure;  // diagnostic when failed
  Step failed_at = -1;
};

/// Closed loop: each step predicts, evaluates the potential at the predicted
/// mean, converts the mean shift into u, and samples (or carries) the next
/// state. The covariance follows the update recursion and is never reset.
/// A DomainViolation ends the run with the partial trajectory.
inline ScenarioRun run_scenario(const ControlScenario& sc, RandomStream rng) {
  if (sc.horizon < 1) throw ValidationError("horizon must be >= 1");
  ScenarioRun run;
  run.records.reserve(static_cast<std::size_t>(sc.horizon) + 1);

  GaussianBelief belief = sc.initial;
  belief.step = 0;
  belief.tag = BeliefTag::initial;

  try {
    TrajectoryRecord first;
    first.step = 0;
    first.state = belief.mean;
    first.mean = belief.mean;
    first.cov = belief.cov;
    first.control = Vector::Zero(sc.control.input_dim());
    first.potential_value = sc.potential.evaluate(belief.mean, 0).value;
    first.log_N = 0.0;
    run.records.push_back(std::move(first));

    for (Step t = 0; t < sc.horizon; ++t) {
      StepResult r = step(belief, sc.model, sc.potential, rng, sc.mode);
      r.record.control = sc.control.input_for_shift(r.record.control);
      run.records.push_back(std::move(r.record));
      belief = std::move(r.next);
    }
  } catch (const DomainViolation& e) {
    run.failed = true;
    run.failure = e.what();
    run.failed_at = belief.step + (run.records.empty() ? 0 : 1);
  }
  return run;
}

/// Runs one scenario per seed on a small thread pool. Results are ordered as
/// `seeds`; each run owns RandomStream(seed, 0).
inline std::vector<ScenarioRun> run_seeds(const ControlScenario& sc, const std::vector<std::uint64_t>& seeds,
                                          unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<ScenarioRun> out(seeds.size());
  std::size_t next = 0;
  while (next < seeds.size()) {
    std::vector<std::future<void>> batch;
    for (unsigned w = 0; w < threads && next < seeds.size(); ++w, ++next) {
      batch.push_back(std::async(std::launch::async, [&sc, &seeds, &out, i = next] {
        out[i] = run_scenario(sc, RandomStream(seeds[i], 0));
      }));
    }
    for (auto& f : batch) f.get();
  }
  return out;
}

enum class BuiltinScenario { penalty, barrier, doublewell };

inline std::string_view to_string(BuiltinScenario s) {
  switch (s) {
    case BuiltinScenario::penalty: return "penalty";
    case BuiltinScenario::barrier: return "barrier";
    case BuiltinScenario::doublewell: return "doublewell";
  }
  return "?";
}

inline BuiltinScenario parse_builtin_scenario(std::string_view s) {
  if (s == "penalty") return BuiltinScenario::penalty;
  if (s == "barrier") return BuiltinScenario::barrier;
  if (s == "doublewell") return BuiltinScenario::doublewell;
  throw ValidationError("unknown scenario '" + std::string(s) + "' (expected penalty|barrier|doublewell)");
}

struct ScenarioOverrides {
  std::optional<Step> steps;
  std::optional<Mode> mode;
  std::optional<Vector> initial_mean;
};

/// The three constrained-control experiments on the forced Van der Pol
/// process: quadratic penalty toward (0.2, -0.1), log barrier on x > 0 with
/// a = (10, 10), and a double well whose minima follow the tanh target.
inline ControlScenario builtin_scenario(BuiltinScenario which, std::uint64_t seed = 0,
                                      const ScenarioOverrides& overrides = {}) {
  const double dt = 1.0;
  const Drift vdp = drift::vanderpol_forced({});
  Vector x0(2);
  x0 << 0.5, 0.5;
  if (overrides.initial_mean) x0 = *overrides.initial_mean;
  GaussianBelief initial{x0, SymMatrix::identity(2), 0, BeliefTag::initial};

  auto make = [&](std::string name, double noise, Potential pot) {
    return ControlScenario{std::move(name),
                           ItoProcessModel(2, dt, vdp, SymMatrix::scaled_identity(2, noise)),
                           std::move(pot),
                           initial,
                           ControlConfig::identity(2),
                           overrides.steps.value_or(5000),
                           overrides.mode.value_or(Mode::sampled),
                           seed};
  };

  switch (which) {
    case BuiltinScenario::penalty: {
      Vector d(2);
      d << 0.2, -0.1;
      const SymMatrix sigma_nu_inv = spd_inverse(SymMatrix::diagonal({0.001, 0.0001}));
      return make("penalty", 0.001, Potential::quadratic_penalty(constant_target(d), sigma_nu_inv));
    }
    case BuiltinScenario::barrier: {
      Vector a(2);
      a << 10.0, 10.0;
      return make("barrier", 0.001, Potential::log_barrier(a));
    }
    case BuiltinScenario::doublewell: {
      const SymMatrix sigma_nu_inv = spd_inverse(SymMatrix::diagonal({0.001, 0.001}));
      return make("doublewell", 0.5, Potential::double_well(tanh_schedule({}), sigma_nu_inv));
    }
  }
  throw ValidationError("unknown scenario");
}

inline ScenarioRun run_scenario(BuiltinScenario which, const ScenarioOverrides& overrides, std::uint64_t seed) {
  const ControlScenario sc = builtin_scenario(which, seed, overrides);
  return run_scenario(sc, RandomStream(seed, 0));
}

/// Mean of the sampled states over the last `window` records.
inline Vector tail_mean(const ScenarioRun& run, std::size_t window) {
  if (run.records.empty()) throw ValidationError("tail_mean: empty run");
  const std::size_t n = std::min(window, run.records.size());
  Vector acc = Vector::Zero(run.records.front().state.size());
  for (std::size_t i = run.records.size() - n; i < run.records.size(); ++i) acc += run.records[i].state;
  return acc / static_cast<double>(n);
}

}  // namespace sqc
