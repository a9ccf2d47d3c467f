#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sqc/engine.hpp"

namespace sqc::oracle {

using UpdateFn = std::function<GaussianBelief(const GaussianBelief&, const PotentialEvaluation&, double)>;

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature
// ---------------------------------------------------------------------------

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

/// Probabilists' Gauss-Hermite rule for E[f(z)], z ~ N(0, 1), by
/// Golub-Welsch on the Hermite Jacobi matrix.
inline QuadratureRule gauss_hermite(int order) {
  if (order < 1) throw ValidationError("gauss_hermite: order must be positive");
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  return rule;
}

struct WeightedMoments {
  Vector mean;
  Matrix cov;
  double log_norm = 0.0;        // -log E[exp(-V dt)], comparable to log N
  double excluded_mass = 0.0;   // Gaussian mass on nodes where V is not finite
};

namespace detail {

// Tensor-product nodes z and weights for dimension 1 or 2.
inline void tensor_nodes(const QuadratureRule& rule, Eigen::Index dim, std::vector<Vector>& z,
                         std::vector<double>& w) {
  const auto n = rule.nodes.size();
  const std::size_t count = dim == 1 ? n : n * n;
  z.assign(count, Vector(dim));
  w.assign(count, 0.0);
  for (std::size_t idx = 0; idx < count; ++idx) {
    z[idx](0) = rule.nodes[idx % n];
    w[idx] = rule.weights[idx % n];
    if (dim == 2) {
      z[idx](1) = rule.nodes[idx / n];
      w[idx] *= rule.weights[idx / n];
    }
  }
}

// Mode and curvature of log[exp(-V dt) N(x; mean, cov)] by damped Newton with
// finite differences. Falls back to the prior when the search fails.
inline std::pair<Vector, Matrix> laplace_proposal(const Vector& mean, const SymMatrix& cov,
                                                  const std::function<double(const Vector&)>& phi) {
  const auto dim = mean.size();
  Vector x = mean;
  double fx = phi(x);
  auto hessian_at = [&](const Vector& at, Vector& grad) {
    Matrix hess(dim, dim);
    grad.resize(dim);
    const double f0 = phi(at);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double hi = 1e-4 * std::sqrt(cov(i, i));
      Vector p = at, q = at;
      p(i) += hi;
      q(i) -= hi;
      const double fp = phi(p), fq = phi(q);
      grad(i) = (fp - fq) / (2.0 * hi);
      hess(i, i) = (fp - 2.0 * f0 + fq) / (hi * hi);
      for (Eigen::Index j = 0; j < i; ++j) {
        const double hj = 1e-4 * std::sqrt(cov(j, j));
        Vector pp = at, pm = at, mp = at, mm = at;
        pp(i) += hi, pp(j) += hj;
        pm(i) += hi, pm(j) -= hj;
        mp(i) -= hi, mp(j) += hj;
        mm(i) -= hi, mm(j) -= hj;
        hess(i, j) = hess(j, i) = (phi(pp) - phi(pm) - phi(mp) + phi(mm)) / (4.0 * hi * hj);
      }
    }
    return hess;
  };
  if (!std::isfinite(fx)) return {mean, cov.mat()};
  Vector grad;
  for (int it = 0; it < 50; ++it) {
    const Matrix hess = hessian_at(x, grad);
    Eigen::LLT<Matrix> llt(-hess);
    if (llt.info() != Eigen::Success || !grad.allFinite()) return {mean, cov.mat()};
    const Vector dir = llt.solve(grad);
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, step *= 0.5) {
      const Vector trial = x + step * dir;
      const double ft = phi(trial);
      if (std::isfinite(ft) && ft >= fx) {
        moved = ft > fx;
        x = trial;
        fx = ft;
        break;
      }
    }
    if (!moved || (step * dir).norm() < 1e-12 * (1.0 + x.norm())) break;
  }
  const Matrix hess = hessian_at(x, grad);
  Eigen::LLT<Matrix> llt(-hess);
  if (llt.info() != Eigen::Success) return {mean, cov.mat()};
  return {x, Matrix(llt.solve(Matrix::Identity(dim, dim)))};
}

}  // namespace detail

/// Moments of the weighted Gaussian  exp(-V(x) dt) N(x; mean, cov) / Z by
/// tensor-product Gauss-Hermite quadrature (dimension <= 2). The nodes are
/// placed on a Gaussian fitted at the mode of the integrand, so a posterior
/// much narrower than the prior is still resolved. Only values of V are used.
inline WeightedMoments weighted_gaussian_moments(const Vector& mean, const SymMatrix& cov,
                                                 const std::function<double(const Vector&)>& potential,
                                                 double dt, int order = 64) {
  const auto dim = mean.size();
  if (dim < 1 || dim > 2) throw ValidationError("weighted_gaussian_moments: dimension must be 1 or 2");
  if (cov.dim() != dim) throw DimensionMismatch("weighted_gaussian_moments: covariance size mismatch");
  const QuadratureRule rule = gauss_hermite(order);
  std::vector<Vector> zs;
  std::vector<double> ws;
  detail::tensor_nodes(rule, dim, zs, ws);

  // Prior mass on which the potential is undefined.
  const Matrix l_prior = cholesky_lower(cov, "quadrature covariance");
  double excluded = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (!std::isfinite(potential(mean + l_prior * zs[i]))) excluded += ws[i];
  }
  if (excluded > 1e-6) {
    throw QuadratureDomain("weighted_gaussian_moments: potential undefined on " + std::to_string(excluded) +
                           " of the Gaussian mass");
  }

  const auto prior_llt = factor_spd(cov, "quadrature covariance");
  const double log_det_prior = 2.0 * prior_llt.matrixLLT().diagonal().array().log().sum();
  auto phi = [&](const Vector& x) {
    const double v = potential(x);
    if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
    const Vector white = prior_llt.matrixL().solve(x - mean);
    return -v * dt - 0.5 * white.squaredNorm();
  };
  const auto [center, proposal] = detail::laplace_proposal(mean, cov, phi);
  const Matrix lq = cholesky_lower(SymMatrix(proposal), "quadrature proposal");
  const double log_det_lq = lq.diagonal().array().log().sum();

  // Z = E_N[exp(-V dt)] = sum_i w_i exp(phi(x_i) + |z_i|^2 / 2) |Lq| / |cov|^1/2
  std::vector<double> log_w(zs.size());
  std::vector<Vector> xs(zs.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    xs[i] = center + lq * zs[i];
    log_w[i] = std::log(ws[i]) + phi(xs[i]) + 0.5 * zs[i].squaredNorm();
    max_log = std::max(max_log, log_w[i]);
  }
  if (!std::isfinite(max_log)) throw QuadratureDomain("weighted_gaussian_moments: no admissible nodes");

  double z_sum = 0.0;
  Vector m1 = Vector::Zero(dim);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double w = std::exp(log_w[i] - max_log);
    z_sum += w;
    m1 += w * xs[i];
  }
  m1 /= z_sum;
  Matrix m2 = Matrix::Zero(dim, dim);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double w = std::exp(log_w[i] - max_log);
    const Vector d = xs[i] - m1;
    m2 += w * d * d.transpose();
  }
  m2 /= z_sum;

  WeightedMoments out;
  out.mean = m1;
  out.cov = 0.5 * (m2 + m2.transpose());
  out.log_norm = -(std::log(z_sum) + max_log + log_det_lq - 0.5 * log_det_prior);
  out.excluded_mass = excluded;
  return out;
}

inline WeightedMoments weighted_gaussian_moments(const Vector& mean, const SymMatrix& cov,
                                                 const Potential& potential, double dt, int order = 64,
                                                 Step t = 0) {
  return weighted_gaussian_moments(
      mean, cov, [&](const Vector& x) { return potential.value(x, t); }, dt, order);
}

/// How far the second-order update is from the quadrature moments of the
/// exact weighted Gaussian, for a predicted belief.
struct ExpansionError {
  WeightedMoments exact;
  GaussianBelief engine;
  double mean_rel_error = 0.0;   // |m_engine - m_exact| / |m_exact|
  double shift_rel_error = 0.0;  // relative to the exact displacement from the prior mean
  double cov_rel_error = 0.0;    // Frobenius, relative
  double log_norm_error = 0.0;   // |log N_engine - log N_exact|
};

inline ExpansionError expansion_error(const GaussianBelief& predicted, const Potential& potential, double dt,
                                      int order = 64, const UpdateFn& update_fn = {}) {
  ExpansionError e;
  e.exact = weighted_gaussian_moments(predicted.mean, predicted.cov, potential, dt, order, predicted.step);
  const PotentialEvaluation pot = potential.evaluate(predicted.mean, predicted.step);
  e.engine = update_fn ? update_fn(predicted, pot, dt) : update(predicted, pot, dt);
  const NormalizationDiagnostic norm = normalization(predicted, pot, dt);
  e.mean_rel_error = (e.engine.mean - e.exact.mean).norm() / e.exact.mean.norm();
  const double exact_shift = (e.exact.mean - predicted.mean).norm();
  e.shift_rel_error = exact_shift > 0.0 ? (e.engine.mean - e.exact.mean).norm() / exact_shift : 0.0;
  e.cov_rel_error = relative_difference(e.engine.cov.mat(), e.exact.cov);
  e.log_norm_error = std::abs(norm.log_N - e.exact.log_norm);
  return e;
}

// ---------------------------------------------------------------------------
// One-dimensional forward equation
// ---------------------------------------------------------------------------

struct Grid1D {
  double lower = 0.0;
  double upper = 0.0;
  int n = 0;

  Grid1D(double lo, double hi, int points) : lower(lo), upper(hi), n(points) {
    if (!(upper > lower)) throw ValidationError("Grid1D: upper must exceed lower");
    if (n < 64) throw ValidationError("Grid1D: at least 64 points required");
  }

  /// mean +/- 8 standard deviations.
  static Grid1D around(double mean, double sd, int points) {
    return Grid1D(mean - 8.0 * sd, mean + 8.0 * sd, points);
  }

  double spacing() const { return (upper - lower) / static_cast<double>(n - 1); }
  double x(int i) const { return lower + spacing() * static_cast<double>(i); }

  double integrate(const std::vector<double>& f) const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (i == 0 || i == n - 1 ? 0.5 : 1.0) * f[static_cast<std::size_t>(i)];
    return s * spacing();
  }
};

/// dx = f(x) dt + sqrt(g^-1) dW with the weight exp(-U(x) dt).
struct ForwardProblem1D {
  std::function<double(double)> drift = [](double) { return 0.0; };
  double noise_metric_inv = 1.0;
  std::function<double(double)> potential = [](double) { return 0.0; };
};

struct ForwardStep1D {
  std::vector<double> next;  // density after one kernel step
  double residual = 0.0;     // L2 norm of (P' - P)/dt - RHS
  double mass_before = 0.0;
  double mass_after = 0.0;
  double kernel_mass_loss = 0.0;
};

/// Evolves `density` one step through the discrete transition kernel
///   sqrt(g)/sqrt(2 pi dt) exp(-g (x' - x - f(x) dt)^2 / (2 dt)) exp(-U(x') dt)
/// by trapezoid quadrature, and measures the residual against
///   dP/dt = 1/2 g^-1 P'' - (f P)' - U P
/// with central differences on the interior nodes.
inline ForwardStep1D forward_step(const ForwardProblem1D& problem, const Grid1D& grid,
                                  const std::vector<double>& density, double dt) {
  if (static_cast<int>(density.size()) != grid.n) throw DimensionMismatch("forward_step: density size");
  if (!(dt > 0.0)) throw ValidationError("forward_step: dt must be positive");
  for (double p : density) {
    if (!(p >= 0.0)) throw ValidationError("forward_step: density must be nonnegative");
  }
  const int n = grid.n;
  const double h = grid.spacing();
  const double g = 1.0 / problem.noise_metric_inv;
  const double norm = std::sqrt(g / (2.0 * std::numbers::pi * dt));

  std::vector<double> xs(n), shifted(n), weight_src(n), u(n), f(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = grid.x(i);
    f[i] = problem.drift(xs[i]);
    shifted[i] = xs[i] + f[i] * dt;
    weight_src[i] = (i == 0 || i == n - 1 ? 0.5 : 1.0) * h * density[static_cast<std::size_t>(i)];
    u[i] = problem.potential(xs[i]);
  }

  ForwardStep1D out;
  out.next.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> kernel_mass(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    const double wj = (j == 0 || j == n - 1 ? 0.5 : 1.0) * h;
    for (int i = 0; i < n; ++i) {
      const double d = xs[j] - shifted[i];
      const double k = norm * std::exp(-0.5 * g * d * d / dt);
      acc += k * weight_src[i];
      kernel_mass[i] += k * wj;
    }
    out.next[static_cast<std::size_t>(j)] = std::exp(-u[j] * dt) * acc;
  }

  out.mass_before = grid.integrate(density);
  out.mass_after = grid.integrate(out.next);
  double lost = 0.0;
  for (int i = 0; i < n; ++i) lost += weight_src[i] * (1.0 - kernel_mass[i]);
  out.kernel_mass_loss = out.mass_before > 0.0 ? lost / out.mass_before : 0.0;
  if (out.kernel_mass_loss > 1e-4) {
    throw MassLoss("forward_step: kernel lost " + std::to_string(out.kernel_mass_loss) +
                   " of the mass; widen the grid");
  }

  double sum_sq = 0.0;
  for (int j = 1; j < n - 1; ++j) {
    const auto J = static_cast<std::size_t>(j);
    const double p_xx = (density[J + 1] - 2.0 * density[J] + density[J - 1]) / (h * h);
    const double fp_x = (f[j + 1] * density[J + 1] - f[j - 1] * density[J - 1]) / (2.0 * h);
    const double rhs = 0.5 * problem.noise_metric_inv * p_xx - fp_x - u[j] * density[J];
    const double r = (out.next[J] - density[J]) / dt - rhs;
    sum_sq += r * r * h;
  }
  out.residual = std::sqrt(sum_sq);
  return out;
}

inline double fokker_planck_residual(const ForwardProblem1D& problem, const Grid1D& grid,
                                     const std::vector<double>& density, double dt) {
  return forward_step(problem, grid, density, dt).residual;
}

struct ConvergenceStudy {
  std::vector<double> dts;
  std::vector<double> residuals;
  std::vector<double> ratios;          // residual(dt_i) / residual(dt_{i+1})
  std::vector<double> mass_ratios;     // mass_after / mass_before per dt
};

/// Residuals for dt0, dt0/2, ... (halvings + 1 values) starting from a
/// Gaussian N(mean, sd^2) on a grid spanning mean +/- 8 sd.
inline ConvergenceStudy fokker_planck_convergence(const ForwardProblem1D& problem, double mean, double sd,
                                                  double dt0 = 1e-2, int halvings = 3, int points = 2001) {
  const Grid1D grid = Grid1D::around(mean, sd, points);
  std::vector<double> density(static_cast<std::size_t>(grid.n));
  for (int i = 0; i < grid.n; ++i) {
    const double z = (grid.x(i) - mean) / sd;
    density[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  }
  ConvergenceStudy study;
  double dt = dt0;
  for (int k = 0; k <= halvings; ++k, dt *= 0.5) {
    const ForwardStep1D s = forward_step(problem, grid, density, dt);
    study.dts.push_back(dt);
    study.residuals.push_back(s.residual);
    study.mass_ratios.push_back(s.mass_after / s.mass_before);
  }
  for (std::size_t i = 0; i + 1 < study.residuals.size(); ++i) {
    study.ratios.push_back(study.residuals[i] / study.residuals[i + 1]);
  }
  return study;
}

// ---------------------------------------------------------------------------
// Randomized algebraic identity suite
// ---------------------------------------------------------------------------

struct IdentitySuiteOptions {
  std::uint64_t seed = 0;
  int trials = 500;
  int max_dim = 6;
  double tolerance = 1e-8;
  double condition_limit = 1e7;  // trials with cond(Sigma) above this are skipped
  int degenerate_every = 10;     // every n-th trial uses H = 0
  int ill_conditioned_every = 50;  // every n-th trial uses cond(Sigma) = 1e8
  UpdateFn gain_update = [](const GaussianBelief& b, const PotentialEvaluation& p, double dt) {
    return update(b, p, dt);
  };
  UpdateFn precision_update = [](const GaussianBelief& b, const PotentialEvaluation& p, double dt) {
    return update_precision_form(b, p, dt);
  };
};

struct CheckStats {
  int failures = 0;
  double max_error = 0.0;

  void record(double err, double tol) {
    max_error = std::max(max_error, err);
    if (!(err <= tol)) ++failures;
  }
};

struct IdentityReport {
  int trials = 0;
  int skipped = 0;
  CheckStats update_forms;     // gain vs precision update, mean and covariance
  CheckStats covariance_forms; // direct inverse of the precision vs Woodbury form
  CheckStats determinant;      // |Sigma_nu/dt + H S H^T|^1/2 |Sigma_nu/dt|^-1/2 |S|^-1/2 = |M|^1/2
  CheckStats gauge;            // V -> V + c leaves the update unchanged, shifts log N by c dt
  std::vector<std::string> failure_notes;

  int failures() const {
    return update_forms.failures + covariance_forms.failures + determinant.failures + gauge.failures;
  }
  bool passed() const { return failures() == 0; }
};

namespace detail {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

inline SymMatrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix a = random_matrix(rng, n, n);
  return SymMatrix(a * a.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n));
}

/// SPD matrix with the given condition number (random orthogonal basis).
inline SymMatrix spd_with_condition(std::mt19937_64& rng, Eigen::Index n, double condition) {
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
  const Matrix q = qr.householderQ();
  Vector eig(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    eig(i) = std::pow(condition, -frac);
  }
  if (n == 1) eig(0) = 1.0 / condition;
  return SymMatrix(q * eig.asDiagonal() * q.transpose());
}

}  // namespace detail

/// A random predicted belief and an arbitrary (not necessarily quadratic)
/// expansion of a potential around its mean.
struct RandomInstance {
  GaussianBelief predicted;
  PotentialEvaluation potential;
  double dt = 1.0;
};

inline RandomInstance random_instance(std::mt19937_64& rng, Eigen::Index m, Eigen::Index k, bool zero_h = false) {
  std::uniform_real_distribution<double> dt_dist(0.1, 2.0);
  RandomInstance inst;
  inst.predicted.mean = detail::random_matrix(rng, m, 1);
  inst.predicted.cov = detail::random_spd(rng, m);
  inst.predicted.step = 1;
  inst.predicted.tag = BeliefTag::predicted;
  inst.dt = dt_dist(rng);
  auto& p = inst.potential;
  p.point = inst.predicted.mean;
  p.l = detail::random_matrix(rng, k, 1);
  p.curvature = detail::random_spd(rng, k);
  p.grad_l = p.curvature.mat() * p.l;
  p.value = 0.5 * p.l.dot(p.grad_l);
  p.h = zero_h ? Matrix::Zero(k, m) : detail::random_matrix(rng, k, m);
  p.counter_curvature = SymMatrix::zero(m);
  return inst;
}

/// Randomized check of the update's algebraic identities. Failures are
/// counted and described, never thrown.
inline IdentityReport identity_suite(const IdentitySuiteOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> dim_dist(1, opt.max_dim);
  std::normal_distribution<double> offset_dist(0.0, 10.0);
  IdentityReport rep;

  for (int trial = 0; trial < opt.trials; ++trial) {
    ++rep.trials;
    const Eigen::Index m = dim_dist(rng);
    const Eigen::Index k = dim_dist(rng);
    const bool zero_h = opt.degenerate_every > 0 && trial % opt.degenerate_every == 0;
    RandomInstance inst = random_instance(rng, m, k, zero_h);
    if (opt.ill_conditioned_every > 0 && trial % opt.ill_conditioned_every == opt.ill_conditioned_every - 1) {
      inst.predicted.cov = detail::spd_with_condition(rng, m, 1e8);
    }
    if (m > 1 && spd_condition_number(inst.predicted.cov) > opt.condition_limit) {
      ++rep.skipped;
      continue;
    }
    if (m == 1 && inst.predicted.cov(0, 0) < 1.0 / opt.condition_limit) {
      ++rep.skipped;
      continue;
    }
    const auto& b = inst.predicted;
    const auto& pot = inst.potential;
    const double dt = inst.dt;
    auto note = [&](const std::string& what, double err) {
      if (!(err <= opt.tolerance) && rep.failure_notes.size() < 20) {
        rep.failure_notes.push_back("trial " + std::to_string(trial) + " (m=" + std::to_string(m) +
                                    ", k=" + std::to_string(k) + "): " + what + " error " + std::to_string(err));
      }
    };

    try {
      const GaussianBelief gain = opt.gain_update(b, pot, dt);
      const GaussianBelief prec = opt.precision_update(b, pot, dt);
      // Relative to the larger of the prior mean and the displacement, so a
      // tiny displacement is not compared against itself alone.
      const double mean_scale = std::max(b.mean.norm(), (prec.mean - b.mean).norm());
      const double mean_err = mean_scale > 0.0 ? (gain.mean - prec.mean).norm() / mean_scale : 0.0;
      const double shift_norm = (prec.mean - b.mean).norm();
      const double shift_err =
          shift_norm > 1e-12 ? ((gain.mean - b.mean) - (prec.mean - b.mean)).norm() / shift_norm : 0.0;
      const double cov_err = relative_difference(gain.cov.mat(), prec.cov.mat());
      const double err = std::max({mean_err, std::min(shift_err, 1.0), cov_err});
      rep.update_forms.record(err, opt.tolerance);
      note("gain/precision update", err);

      const SymMatrix precision(spd_inverse(b.cov).mat() + pot.h.transpose() * pot.curvature.mat() * pot.h * dt);
      const Matrix direct = precision.mat().inverse();
      const SymMatrix sigma_nu_over_dt = (1.0 / dt) * spd_inverse(pot.curvature);
      const SymMatrix woodbury = woodbury_inverse(b.cov, pot.h.transpose(), sigma_nu_over_dt, pot.h);
      const double cov_form_err = relative_difference(woodbury.mat(), direct);
      rep.covariance_forms.record(cov_form_err, opt.tolerance);
      note("covariance forms", cov_form_err);

      const SymMatrix inner(sigma_nu_over_dt.mat() + pot.h * b.cov.mat() * pot.h.transpose());
      const double lhs = 0.5 * log_det_spd(inner) - 0.5 * log_det_spd(sigma_nu_over_dt) - 0.5 * log_det_spd(b.cov);
      const double rhs = 0.5 * log_det_spd(precision);
      const double det_err = std::abs(std::expm1(lhs - rhs));
      rep.determinant.record(det_err, opt.tolerance);
      note("determinant identity", det_err);

      PotentialEvaluation shifted = pot;
      const double c = offset_dist(rng);
      shifted.value += c;
      const GaussianBelief g2 = opt.gain_update(b, shifted, dt);
      const double log_n0 = normalization(b, pot, dt).log_N;
      const double log_n1 = normalization(b, shifted, dt).log_N;
      const double gauge_err = std::max({(g2.mean - gain.mean).norm() / std::max(1.0, gain.mean.norm()),
                                         relative_difference(g2.cov.mat(), gain.cov.mat()),
                                         std::abs(log_n1 - log_n0 - c * dt) / std::max(1.0, std::abs(c * dt))});
      rep.gauge.record(gauge_err, opt.tolerance);
      note("gauge invariance", gauge_err);
    } catch (const Error& e) {
      rep.update_forms.record(std::numeric_limits<double>::infinity(), opt.tolerance);
      if (rep.failure_notes.size() < 20) {
        rep.failure_notes.push_back("trial " + std::to_string(trial) + ": " + e.what());
      }
    }
  }
  return rep;
}

}  // namespace sqc::oracle
