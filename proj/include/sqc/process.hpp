#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sqc/linalg.hpp"

namespace sqc {

using Step = std::int64_t;

/// Seedable, splittable normal generator. Each (seed, stream) pair yields an
/// independent mt19937_64 sequence; split() derives child streams.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  RandomStream split(std::uint64_t index) const {
    std::seed_seq seq{static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5eedu};
    std::uint32_t derived[2];
    seq.generate(derived, derived + 2);
    return RandomStream(seed_, (static_cast<std::uint64_t>(derived[0]) << 32) | derived[1]);
  }

  double normal() { return normal_(engine_); }

  Vector standard_normal(Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal_(engine_);
    return z;
  }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

using DriftFn = std::function<Vector(const Vector&, Step)>;
using DriftJacobianFn = std::function<Matrix(const Vector&, Step)>;
using NoiseScheduleFn = std::function<SymMatrix(Step)>;

struct Drift {
  DriftFn value;
  DriftJacobianFn jacobian;
};

namespace drift {

inline Drift zero(Eigen::Index dim) {
  return {[dim](const Vector&, Step) { return Vector(Vector::Zero(dim)); },
          [dim](const Vector&, Step) { return Matrix(Matrix::Zero(dim, dim)); }};
}

/// f(x) = A x.
inline Drift linear(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("linear drift: A must be square");
  return {[a](const Vector& x, Step) { return Vector(a * x); },
          [a](const Vector&, Step) { return a; }};
}

struct VanDerPolParams {
  double coefficient = 0.005;
  double forcing = 3.0;
  double frequency = 0.005;
  double dt = 1.0;  // physical time of step t is t * dt
};

/// Forced Van der Pol type oscillator on R^2:
///   f1 = c x2
///   f2 = c [ (1 - x1^2 - x2^2) x2 - x1 + A x2 sin(w t) ]
inline Drift vanderpol_forced(VanDerPolParams p = {}) {
  auto value = [p](const Vector& x, Step t) {
    if (x.size() != 2) throw DimensionMismatch("vanderpol_forced: state must be 2-dimensional");
    const double s = std::sin(p.frequency * static_cast<double>(t) * p.dt);
    const double r = 1.0 - x(0) * x(0) - x(1) * x(1);
    Vector f(2);
    f(0) = p.coefficient * x(1);
    f(1) = p.coefficient * (r * x(1) - x(0) + p.forcing * x(1) * s);
    return f;
  };
  auto jacobian = [p](const Vector& x, Step t) {
    if (x.size() != 2) throw DimensionMismatch("vanderpol_forced: state must be 2-dimensional");
    const double s = std::sin(p.frequency * static_cast<double>(t) * p.dt);
    const double r = 1.0 - x(0) * x(0) - x(1) * x(1);
    Matrix j(2, 2);
    j(0, 0) = 0.0;
    j(0, 1) = p.coefficient;
    j(1, 0) = p.coefficient * (-2.0 * x(0) * x(1) - 1.0);
    j(1, 1) = p.coefficient * (-2.0 * x(1) * x(1) + r + p.forcing * s);
    return j;
  };
  return {value, jacobian};
}

}  // namespace drift

/// Discrete-time Ito process x' = x + f_t(x) dt + sqrt(dt) L z with
/// L L^T = g_t^-1 and z standard normal.
class ItoProcessModel {
 public:
  ItoProcessModel(Eigen::Index dim, double dt, Drift drift, SymMatrix noise_metric_inv)
      : dim_(dim), dt_(dt), drift_(std::move(drift)), constant_noise_(std::move(noise_metric_inv)) {
    check_common();
    if (constant_noise_->dim() != dim_) throw DimensionMismatch("noise metric dimension mismatch");
    constant_factor_ = factor_of(*constant_noise_);
  }

  ItoProcessModel(Eigen::Index dim, double dt, Drift drift, NoiseScheduleFn noise_schedule)
      : dim_(dim), dt_(dt), drift_(std::move(drift)), noise_schedule_(std::move(noise_schedule)) {
    check_common();
    if (!noise_schedule_) throw ValidationError("noise schedule is empty");
  }

  Eigen::Index dim() const { return dim_; }
  double dt() const { return dt_; }

  Vector drift(const Vector& x, Step t) const {
    Vector f = drift_.value(x, t);
    if (f.size() != dim_) throw DimensionMismatch("drift returned wrong dimension");
    return f;
  }

  Matrix drift_jacobian(const Vector& x, Step t) const {
    Matrix j = drift_.jacobian(x, t);
    if (j.rows() != dim_ || j.cols() != dim_) {
      throw DimensionMismatch("drift jacobian returned wrong shape");
    }
    return j;
  }

  SymMatrix noise_metric_inv(Step t) const {
    if (constant_noise_) return *constant_noise_;
    SymMatrix g = noise_schedule_(t);
    if (g.dim() != dim_) throw DimensionMismatch("noise schedule returned wrong dimension");
    return g;
  }

  /// L with L L^T = g_t^-1. An exactly zero metric gives L = 0 (the
  /// deterministic limit); anything else must factor as SPD.
  Matrix noise_factor(Step t) const {
    if (constant_factor_) return *constant_factor_;
    return factor_of(noise_metric_inv(t));
  }

  bool has_constant_noise() const { return constant_noise_.has_value(); }

 private:
  void check_common() const {
    if (dim_ < 1) throw ValidationError("process dimension must be positive");
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ValidationError("dt must be positive");
    if (!drift_.value || !drift_.jacobian) throw ValidationError("drift functions are empty");
  }

  static Matrix factor_of(const SymMatrix& g) {
    if (g.mat().isZero(0.0)) return Matrix::Zero(g.dim(), g.dim());
    return cholesky_lower(g, "noise metric g^-1");
  }

  Eigen::Index dim_;
  double dt_;
  Drift drift_;
  std::optional<SymMatrix> constant_noise_;
  std::optional<Matrix> constant_factor_;
  NoiseScheduleFn noise_schedule_;
};

struct StatePath {
  std::vector<Step> times;
  std::vector<Vector> states;
};

/// One Euler-Maruyama draw of x_{t+dt} given x_t.
inline Vector step_sample(const ItoProcessModel& model, const Vector& x, Step t, RandomStream& rng) {
  if (x.size() != model.dim()) throw DimensionMismatch("step_sample: state dimension mismatch");
  if (!x.allFinite()) throw NonFinite("step_sample: non-finite state");
  const Matrix l = model.noise_factor(t);
  const Vector z = rng.standard_normal(model.dim());
  return x + model.drift(x, t) * model.dt() + std::sqrt(model.dt()) * (l * z);
}

/// F_t = I + (df/dx)(x_hat) dt.
inline Matrix transition_matrix(const ItoProcessModel& model, const Vector& x_hat, Step t) {
  return Matrix::Identity(model.dim(), model.dim()) + model.drift_jacobian(x_hat, t) * model.dt();
}

/// Path of steps + 1 states starting with x0 at step 0.
inline StatePath simulate_open_loop(const ItoProcessModel& model, const Vector& x0, Step steps,
                                    RandomStream& rng) {
  if (steps < 1) throw ValidationError("simulate_open_loop: steps must be >= 1");
  StatePath path;
  path.times.reserve(static_cast<std::size_t>(steps) + 1);
  path.states.reserve(static_cast<std::size_t>(steps) + 1);
  path.times.push_back(0);
  path.states.push_back(x0);
  Vector x = x0;
  for (Step t = 0; t < steps; ++t) {
    x = step_sample(model, x, t, rng);
    if (!x.allFinite()) {
      throw NonFinite("simulate_open_loop: state left the finite range at step " +
                      std::to_string(t + 1));
    }
    path.times.push_back(t + 1);
    path.states.push_back(x);
  }
  return path;
}

/// Max relative deviation between the analytic drift Jacobian and a central
/// finite difference at x. Test hook for user-supplied drifts.
inline double drift_jacobian_fd_error(const ItoProcessModel& model, const Vector& x, Step t,
                                      double h = 1e-6) {
  const Matrix analytic = model.drift_jacobian(x, t);
  Matrix numeric(model.dim(), model.dim());
  for (Eigen::Index j = 0; j < model.dim(); ++j) {
    Vector xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x(j)));
    xp(j) += step;
    xm(j) -= step;
    numeric.col(j) = (model.drift(xp, t) - model.drift(xm, t)) / (2.0 * step);
  }
  return (analytic - numeric).cwiseAbs().maxCoeff() /
         std::max(1.0, analytic.cwiseAbs().maxCoeff());
}

}  // namespace sqc
