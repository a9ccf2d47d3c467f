#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sqc/engine.hpp"

namespace sqc {

struct ObservationModel {
  std::function<Vector(const Vector&, Step)> h;
  std::function<Matrix(const Vector&, Step)> jacobian;
  SymMatrix sigma_nu;  // observation curvature, used as the nominal noise covariance

  static ObservationModel linear(const Matrix& c, SymMatrix sigma_nu) {
    if (sigma_nu.dim() != c.rows()) throw DimensionMismatch("linear observation: sigma_nu size mismatch");
    return {[c](const Vector& x, Step) { return Vector(c * x); }, [c](const Vector&, Step) { return c; },
            std::move(sigma_nu)};
  }

  Eigen::Index obs_dim() const { return sigma_nu.dim(); }
};

struct Observation {
  Step step = 0;
  Vector y;
};

class ObservationStream {
 public:
  ObservationStream() = default;

  explicit ObservationStream(std::vector<Observation> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].step <= entries_[i - 1].step) {
        throw ValidationError("observation steps must be strictly increasing (step " +
                              std::to_string(entries_[i].step) + ")");
      }
    }
    for (const auto& e : entries_) {
      if (e.y.size() != entries_.front().y.size()) throw ValidationError("observation width varies");
    }
  }

  const std::vector<Observation>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  const Vector* at(Step s) const {
    for (const auto& e : entries_) {
      if (e.step == s) return &e.y;
      if (e.step > s) break;
    }
    return nullptr;
  }

 private:
  std::vector<Observation> entries_;
};

/// The filtering potential V = 1/2 l^T Sigma_nu^-1 l with l = y - h(x).
/// H = +dh/dx under the H^T = -dl/dx convention.
inline Potential observation_potential(const ObservationModel& obs, const Vector& y) {
  const SymMatrix sigma_nu_inv = spd_inverse(obs.sigma_nu, "observation sigma_nu");
  auto inner = [obs, y](const Vector& x, Step t) { return Vector(y - obs.h(x, t)); };
  auto outer = [sigma_nu_inv](const Vector& l, Step) { return 0.5 * l.dot(sigma_nu_inv.mat() * l); };
  auto eval = [obs, y, sigma_nu_inv](const Vector& x, Step t) {
    PotentialEvaluation e;
    e.point = x;
    e.l = y - obs.h(x, t);
    e.grad_l = sigma_nu_inv.mat() * e.l;
    e.value = 0.5 * e.l.dot(e.grad_l);
    e.h = obs.jacobian(x, t);
    e.curvature = sigma_nu_inv;
    // Diagnostic only: -sum_m d2h^m/dx2 * dV/dl^m from differences of the Jacobian.
    const auto m = x.size();
    Matrix counter = Matrix::Zero(m, m);
    for (Eigen::Index nu = 0; nu < m; ++nu) {
      const double step = 1e-6 * std::max(1.0, std::abs(x(nu)));
      Vector p = x, q = x;
      p(nu) += step;
      q(nu) -= step;
      const Matrix dj = (obs.jacobian(p, t) - obs.jacobian(q, t)) / (2.0 * step);
      counter.col(nu) = -dj.transpose() * e.grad_l;
    }
    e.counter_curvature = SymMatrix(counter);
    return e;
  };
  return Potential("observation", inner, outer, eval);
}

/// Textbook EKF measurement update at a predicted belief:
///   K = P H^T (Sigma_nu + H P H^T)^-1, mean' = mean + K (y - h(mean)), P' = P - K H P.
inline GaussianBelief ekf_update(const GaussianBelief& predicted, const ObservationModel& obs, const Vector& y) {
  if (predicted.tag != BeliefTag::predicted) throw ValidationError("ekf_update: belief must be a prediction");
  if (y.size() != obs.obs_dim()) throw DimensionMismatch("ekf_update: observation size mismatch");
  const Vector innovation = y - obs.h(predicted.mean, predicted.step);
  const Matrix h = obs.jacobian(predicted.mean, predicted.step);
  const Matrix pht = predicted.cov.mat() * h.transpose();
  const SymMatrix s(obs.sigma_nu.mat() + h * pht);
  const Matrix gain = spd_solve(s, Matrix(pht.transpose())).transpose();
  GaussianBelief out;
  out.mean = predicted.mean + gain * innovation;
  out.cov = SymMatrix(predicted.cov.mat() - gain * h * predicted.cov.mat());
  out.step = predicted.step;
  out.tag = BeliefTag::updated;
  factor_spd(out.cov, "updated covariance");
  return out;
}

inline GaussianBelief ekf_step(const GaussianBelief& belief, const ItoProcessModel& model,
                               const ObservationModel& obs, const Vector& y) {
  return ekf_update(predict(belief, model), obs, y);
}

struct LikelihoodTerms {
  double log_evidence = 0.0;        // log Omega(y | Y): N(y; h(mean), Sigma_nu + H P H^T)
  double log_density_at_mean = 0.0; // log Omega(y | x) at x = mean
  double log_weight_at_mean = 0.0;  // log Omega(y|x) - log Omega(y|Y) at x = mean
};

namespace detail {

inline double gaussian_log_density(const Vector& residual, const SymMatrix& cov) {
  const auto llt = factor_spd(cov, "likelihood covariance");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Vector white = llt.matrixL().solve(residual);
  const double k = static_cast<double>(residual.size());
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det + white.squaredNorm());
}

}  // namespace detail

/// log Omega(y | x) with the normalizing function alpha fixed to 1.
inline double observation_log_density(const ObservationModel& obs, const Vector& y, const Vector& x, Step t) {
  return detail::gaussian_log_density(Vector(y - obs.h(x, t)), obs.sigma_nu);
}

inline LikelihoodTerms marginal_likelihood(const GaussianBelief& predicted, const ObservationModel& obs,
                                           const Vector& y) {
  if (y.size() != obs.obs_dim()) throw DimensionMismatch("marginal_likelihood: observation size mismatch");
  const Vector innovation = y - obs.h(predicted.mean, predicted.step);
  const Matrix h = obs.jacobian(predicted.mean, predicted.step);
  const SymMatrix s(obs.sigma_nu.mat() + h * predicted.cov.mat() * h.transpose());
  LikelihoodTerms r;
  try {
    r.log_evidence = detail::gaussian_log_density(innovation, s);
    r.log_density_at_mean = observation_log_density(obs, y, predicted.mean, predicted.step);
  } catch (const NotPositiveDefinite& e) {
    throw Singular(std::string("marginal_likelihood: ") + e.what());
  }
  r.log_weight_at_mean = r.log_density_at_mean - r.log_evidence;
  return r;
}

struct FilterResult {
  std::vector<GaussianBelief> beliefs;  // index = step, 0..horizon
  std::vector<double> log_likelihood;   // per step; 0 where no observation
  double total_log_likelihood = 0.0;
};

/// Runs steps 0..horizon. The initial belief is the prior at step 0 and is
/// conditioned on an observation at step 0 if the stream has one; steps
/// without an observation are pure predictions.
inline FilterResult run_filter(const ItoProcessModel& model, const ObservationModel& obs,
                               const ObservationStream& stream, const GaussianBelief& initial, Step horizon) {
  if (horizon < 0) throw ValidationError("run_filter: horizon must be non-negative");
  if (!stream.empty() && stream.entries().back().step > horizon) {
    throw ValidationError("run_filter: observation beyond horizon");
  }
  if (!stream.empty() && stream.entries().front().step < initial.step) {
    throw ValidationError("run_filter: observation before the initial step");
  }
  FilterResult out;
  out.beliefs.reserve(static_cast<std::size_t>(horizon) + 1);

  auto condition = [&](GaussianBelief prior) {
    double ll = 0.0;
    if (const Vector* y = stream.at(prior.step)) {
      prior.tag = BeliefTag::predicted;
      ll = marginal_likelihood(prior, obs, *y).log_evidence;
      prior = ekf_update(prior, obs, *y);
    }
    out.log_likelihood.push_back(ll);
    out.total_log_likelihood += ll;
    out.beliefs.push_back(std::move(prior));
  };

  GaussianBelief first = initial;
  first.step = 0;
  condition(first);
  for (Step t = 1; t <= horizon; ++t) {
    GaussianBelief prev = out.beliefs.back();
    prev.tag = BeliefTag::updated;
    condition(predict(prev, model));
  }
  return out;
}

/// Reads `step,y1,...,yk` CSV (header required).
inline ObservationStream read_observation_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    header = split(line);
    break;
  }
  if (header.empty()) return ObservationStream{};
  if (header.size() < 2 || header[0] != "step") {
    throw ParseError("observation CSV line " + std::to_string(line_no) + ": header must be step,y1,...,yk");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "y" + std::to_string(i)) {
      throw ParseError("observation CSV line " + std::to_string(line_no) + ": expected column y" +
                       std::to_string(i) + ", found '" + header[i] + "'");
    }
  }

  std::vector<Observation> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError("observation CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
    }
    Observation o;
    o.y.resize(static_cast<Eigen::Index>(header.size() - 1));
    try {
      std::size_t used = 0;
      o.step = std::stoll(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("step");
      for (std::size_t i = 1; i < cells.size(); ++i) {
        o.y(static_cast<Eigen::Index>(i - 1)) = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("value");
      }
    } catch (const std::exception&) {
      throw ParseError("observation CSV line " + std::to_string(line_no) + ": malformed number");
    }
    if (!o.y.allFinite()) throw ParseError("observation CSV line " + std::to_string(line_no) + ": non-finite value");
    entries.push_back(std::move(o));
  }
  try {
    return ObservationStream(std::move(entries));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("observation CSV: ") + e.what());
  }
}

}  // namespace sqc
