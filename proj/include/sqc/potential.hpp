#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include "sqc/linalg.hpp"
#include "sqc/process.hpp"

namespace sqc {

/// Everything the update needs from a potential V(l(x)), evaluated at one
/// expansion point (the predicted mean).
struct PotentialEvaluation {
  Vector point;                 // expansion point x_hat
  Vector l;                     // inner map l(x_hat), k-vector
  double value = 0.0;           // V(l)
  Vector grad_l;                // dV/dl
  Matrix h;                     // k x m, H^T = -dl/dx
  SymMatrix curvature;          // Sigma_nu^-1 = d2V/dl2, k x k
  SymMatrix counter_curvature;  // Sigma'_nu^-1 = sum_m d2l^m/dx2 dV/dl^m, m x m

  Eigen::Index state_dim() const { return h.cols(); }
  Eigen::Index inner_dim() const { return h.rows(); }
};

/// Gradient of V with respect to the state: -H^T dV/dl.
inline Vector state_gradient(const PotentialEvaluation& pot) { return -pot.h.transpose() * pot.grad_l; }

using TargetSchedule = std::function<Vector(Step)>;

inline TargetSchedule constant_target(Vector d) {
  return [d = std::move(d)](Step) { return d; };
}

struct TanhTargetParams {
  double amplitude = 0.2;
  double rate = 0.01;
  double center = 2500.0;
  Eigen::Index dim = 2;
};

/// Each component amplitude * [1 + tanh(rate (t - center))]; moves from 0 to
/// 2 * amplitude around t = center.
inline Vector tanh_target(Step t, const TanhTargetParams& p = {}) {
  const double v = p.amplitude * (1.0 + std::tanh(p.rate * (static_cast<double>(t) - p.center)));
  return Vector::Constant(p.dim, v);
}

inline TargetSchedule tanh_schedule(TanhTargetParams p = {}) {
  return [p](Step t) { return tanh_target(t, p); };
}

inline PotentialEvaluation eval_quadratic_penalty(const Vector& x_hat, const Vector& d,
                                                  const SymMatrix& sigma_nu_inv) {
  const auto m = x_hat.size();
  if (d.size() != m || sigma_nu_inv.dim() != m) {
    throw DimensionMismatch("quadratic penalty: dimension mismatch");
  }
  PotentialEvaluation e;
  e.point = x_hat;
  e.l = x_hat - d;
  e.grad_l = sigma_nu_inv.mat() * e.l;
  e.value = 0.5 * e.l.dot(e.grad_l);
  e.h = -Matrix::Identity(m, m);
  e.curvature = sigma_nu_inv;
  e.counter_curvature = SymMatrix::zero(m);
  return e;
}

/// V = -sum a_i ln x_i with l = x. Throws DomainViolation unless every
/// component of x_hat is strictly positive.
inline PotentialEvaluation eval_log_barrier(const Vector& x_hat, const Vector& a) {
  const auto m = x_hat.size();
  if (a.size() != m) throw DimensionMismatch("log barrier: dimension mismatch");
  if ((a.array() <= 0.0).any()) throw ValidationError("log barrier: weights a must be positive");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(x_hat(i) > 0.0)) {
      throw DomainViolation("log barrier breached: component " + std::to_string(i + 1) +
                            " of expansion point is " + std::to_string(x_hat(i)));
    }
  }
  PotentialEvaluation e;
  e.point = x_hat;
  e.l = x_hat;
  e.value = -(a.array() * x_hat.array().log()).sum();
  e.grad_l = -(a.array() / x_hat.array()).matrix();
  e.h = -Matrix::Identity(m, m);
  e.curvature = SymMatrix::diagonal(Vector((a.array() / x_hat.array().square()).matrix()));
  e.counter_curvature = SymMatrix::zero(m);
  return e;
}

/// Quadratic outer function on l_i = (x_i - d_i)(x_i + d_i), minima at x = +/-d
/// componentwise.
inline PotentialEvaluation eval_double_well(const Vector& x_hat, const Vector& d,
                                            const SymMatrix& sigma_nu_inv) {
  const auto m = x_hat.size();
  if (d.size() != m || sigma_nu_inv.dim() != m) {
    throw DimensionMismatch("double well: dimension mismatch");
  }
  PotentialEvaluation e;
  e.point = x_hat;
  e.l = (x_hat.array().square() - d.array().square()).matrix();
  e.grad_l = sigma_nu_inv.mat() * e.l;
  e.value = 0.5 * e.l.dot(e.grad_l);
  e.h = Matrix((-2.0 * x_hat).asDiagonal());
  e.curvature = sigma_nu_inv;
  // d2 l^i / dx_i^2 = 2, all other second derivatives vanish.
  e.counter_curvature = SymMatrix::diagonal(Vector(2.0 * e.grad_l));
  return e;
}

/// A potential V(l(x)) with its inner map, outer function, and analytic
/// evaluation bundled so every consumer sees the same definition.
class Potential {
 public:
  using InnerMapFn = std::function<Vector(const Vector&, Step)>;
  using OuterFn = std::function<double(const Vector&, Step)>;
  using EvalFn = std::function<PotentialEvaluation(const Vector&, Step)>;

  Potential(std::string name, InnerMapFn inner, OuterFn outer, EvalFn eval)
      : name_(std::move(name)), inner_(std::move(inner)), outer_(std::move(outer)),
        eval_(std::move(eval)) {}

  const std::string& name() const { return name_; }
  double offset() const { return offset_; }

  /// Analytic evaluation at x_hat. Rejects non-SPD curvature rather than
  /// clamping it.
  PotentialEvaluation evaluate(const Vector& x_hat, Step t) const {
    PotentialEvaluation e = eval_(x_hat, t);
    e.value += offset_;
    const auto m = x_hat.size();
    const auto k = e.l.size();
    if (e.h.rows() != k || e.h.cols() != m || e.grad_l.size() != k || e.curvature.dim() != k ||
        e.counter_curvature.dim() != m) {
      throw DimensionMismatch("potential '" + name_ + "' returned inconsistent shapes");
    }
    if (!std::isfinite(e.value) || !e.l.allFinite() || !e.grad_l.allFinite() || !e.h.allFinite()) {
      throw NonFinite("potential '" + name_ + "' is not finite at the expansion point");
    }
    factor_spd(e.curvature, "potential curvature Sigma_nu^-1");
    return e;
  }

  /// V(l(x)) at an arbitrary point; +inf outside the domain.
  double value(const Vector& x, Step t) const {
    const double v = outer_(inner_(x, t), t);
    if (std::isnan(v)) return std::numeric_limits<double>::infinity();
    return v + offset_;
  }

  Vector inner_map(const Vector& x, Step t) const { return inner_(x, t); }
  double outer(const Vector& l, Step t) const { return outer_(l, t) + offset_; }

  /// Same potential shifted by a constant (changes normalization only).
  Potential with_offset(double c) const {
    Potential p = *this;
    p.offset_ += c;
    return p;
  }

  static Potential quadratic_penalty(TargetSchedule target, SymMatrix sigma_nu_inv) {
    auto inner = [target](const Vector& x, Step t) { return Vector(x - target(t)); };
    auto outer = [sigma_nu_inv](const Vector& l, Step) {
      return 0.5 * l.dot(sigma_nu_inv.mat() * l);
    };
    auto eval = [target, sigma_nu_inv](const Vector& x, Step t) {
      return eval_quadratic_penalty(x, target(t), sigma_nu_inv);
    };
    return Potential("quadratic_penalty", inner, outer, eval);
  }

  static Potential log_barrier(Vector a) {
    auto inner = [](const Vector& x, Step) { return x; };
    auto outer = [a](const Vector& l, Step) {
      if ((l.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      return -(a.array() * l.array().log()).sum();
    };
    auto eval = [a](const Vector& x, Step) { return eval_log_barrier(x, a); };
    return Potential("log_barrier", inner, outer, eval);
  }

  static Potential double_well(TargetSchedule target, SymMatrix sigma_nu_inv) {
    auto inner = [target](const Vector& x, Step t) {
      const Vector d = target(t);
      return Vector((x.array().square() - d.array().square()).matrix());
    };
    auto outer = [sigma_nu_inv](const Vector& l, Step) {
      return 0.5 * l.dot(sigma_nu_inv.mat() * l);
    };
    auto eval = [target, sigma_nu_inv](const Vector& x, Step t) {
      return eval_double_well(x, target(t), sigma_nu_inv);
    };
    return Potential("double_well", inner, outer, eval);
  }

  /// V = c everywhere, expressed with a constant inner map so that H = 0 and
  /// Sigma_nu^-1 = epsilon I.
  static Potential constant(Eigen::Index state_dim, double c = 0.0, double epsilon = 1e-6) {
    auto inner = [state_dim](const Vector&, Step) { return Vector(Vector::Zero(state_dim)); };
    auto outer = [c, epsilon](const Vector& l, Step) { return c + 0.5 * epsilon * l.squaredNorm(); };
    auto eval = [state_dim, c, epsilon](const Vector& x, Step) {
      PotentialEvaluation e;
      e.point = x;
      e.l = Vector::Zero(state_dim);
      e.value = c;
      e.grad_l = Vector::Zero(state_dim);
      e.h = Matrix::Zero(state_dim, x.size());
      e.curvature = SymMatrix::scaled_identity(state_dim, epsilon);
      e.counter_curvature = SymMatrix::zero(x.size());
      return e;
    };
    return Potential("constant", inner, outer, eval);
  }

 private:
  std::string name_;
  InnerMapFn inner_;
  OuterFn outer_;
  EvalFn eval_;
  double offset_ = 0.0;
};

struct DerivativeReport {
  double grad_l_error = 0.0;
  double h_error = 0.0;
  double curvature_error = 0.0;
  double counter_curvature_error = 0.0;
  double hessian_error = 0.0;  // d2V/dx2 vs H^T Sigma_nu^-1 H + Sigma'_nu^-1

  double max_error() const {
    return std::max({grad_l_error, h_error, curvature_error, counter_curvature_error, hessian_error});
  }
};

namespace detail {

inline double scaled_error(const Matrix& analytic, const Matrix& numeric) {
  if (analytic.size() == 0) return 0.0;
  return (analytic - numeric).cwiseAbs().maxCoeff() /
         std::max(1.0, numeric.cwiseAbs().maxCoeff());
}

template <typename F>
Vector fd_gradient(const F& f, const Vector& at, double rel_step) {
  Vector g(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(at(i)));
    Vector p = at, m = at;
    p(i) += h;
    m(i) -= h;
    g(i) = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

template <typename F>
Matrix fd_hessian(const F& f, const Vector& at, double rel_step) {
  const auto n = at.size();
  Matrix hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double hi = rel_step * std::max(1.0, std::abs(at(i)));
      const double hj = rel_step * std::max(1.0, std::abs(at(j)));
      auto shifted = [&](double si, double sj) {
        Vector p = at;
        p(i) += si;
        p(j) += sj;
        return f(p);
      };
      hess(i, j) = (shifted(hi, hj) - shifted(hi, -hj) - shifted(-hi, hj) + shifted(-hi, -hj)) /
                   (4.0 * hi * hj);
    }
  }
  return hess;
}

}  // namespace detail

/// Central finite-difference audit of an analytic evaluation: dV/dl and
/// Sigma_nu^-1 against the outer function, H and Sigma'_nu^-1 against the
/// inner map, and the full state Hessian against H^T Sigma_nu^-1 H + Sigma'_nu^-1.
/// Errors are max-abs differences scaled by max(1, |reference|).
inline DerivativeReport verify_derivatives(const Potential& potential, const Vector& x_hat,
                                           Step t = 0) {
  constexpr double kFirst = 1e-6;
  constexpr double kSecond = 1e-4;
  const PotentialEvaluation e = potential.evaluate(x_hat, t);
  const auto m = x_hat.size();
  const auto k = e.l.size();

  auto outer = [&](const Vector& l) { return potential.outer(l, t); };
  auto value = [&](const Vector& x) { return potential.value(x, t); };

  DerivativeReport r;
  r.grad_l_error = detail::scaled_error(e.grad_l, detail::fd_gradient(outer, e.l, kFirst));
  r.curvature_error =
      detail::scaled_error(e.curvature.mat(), detail::fd_hessian(outer, e.l, kSecond));

  Matrix dl_dx(k, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double h = kFirst * std::max(1.0, std::abs(x_hat(j)));
    Vector p = x_hat, q = x_hat;
    p(j) += h;
    q(j) -= h;
    dl_dx.col(j) = (potential.inner_map(p, t) - potential.inner_map(q, t)) / (2.0 * h);
  }
  r.h_error = detail::scaled_error(e.h, -dl_dx);

  Matrix counter = Matrix::Zero(m, m);
  for (Eigen::Index c = 0; c < k; ++c) {
    auto component = [&](const Vector& x) { return potential.inner_map(x, t)(c); };
    counter += detail::fd_hessian(component, x_hat, kSecond) * e.grad_l(c);
  }
  r.counter_curvature_error = detail::scaled_error(e.counter_curvature.mat(), counter);

  const Matrix model_hessian =
      e.h.transpose() * e.curvature.mat() * e.h + e.counter_curvature.mat();
  r.hessian_error = detail::scaled_error(model_hessian, detail::fd_hessian(value, x_hat, kSecond));
  return r;
}

}  // namespace sqc
