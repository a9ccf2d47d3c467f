#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "sqc/errors.hpp"

namespace sqc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Dense symmetric matrix. Symmetrized as (M + M^T)/2 on construction, so
/// callers can pass the raw result of a product like F P F^T.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols()) {
      throw DimensionMismatch("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", expected square");
    }
    if (!m.allFinite()) throw NonFinite("SymMatrix: non-finite entries");
    m_ = 0.5 * (m + m.transpose());
  }

  static SymMatrix identity(Eigen::Index n) { return SymMatrix(Matrix::Identity(n, n)); }
  static SymMatrix zero(Eigen::Index n) { return SymMatrix(Matrix::Zero(n, n)); }
  static SymMatrix scaled_identity(Eigen::Index n, double s) {
    return SymMatrix(s * Matrix::Identity(n, n));
  }
  static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }
  static SymMatrix diagonal(std::initializer_list<double> d) {
    Vector v(static_cast<Eigen::Index>(d.size()));
    Eigen::Index i = 0;
    for (double x : d) v(i++) = x;
    return diagonal(v);
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.m_ + b.m_);
  }
  friend SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(s * a.m_); }

 private:
  Matrix m_;
};

namespace detail {

inline Eigen::LLT<Matrix> try_llt(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return llt;
  // LLT only flags non-positive pivots; reject NaN/inf factors as well.
  if (!llt.matrixLLT().allFinite()) {
    return Eigen::LLT<Matrix>(Matrix::Constant(1, 1, -1.0));
  }
  return llt;
}

}  // namespace detail

/// Cholesky factor of an SPD matrix. If the first attempt fails the diagonal
/// is loaded with 1e-10 * trace / dim and factorization retried once.
inline Eigen::LLT<Matrix> factor_spd(const SymMatrix& a, const char* what = "matrix") {
  if (a.dim() == 0) throw DimensionMismatch(std::string(what) + ": empty matrix");
  auto llt = detail::try_llt(a.mat());
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * a.mat().trace() / static_cast<double>(a.dim());
  if (jitter > 0.0) {
    Matrix loaded = a.mat();
    loaded.diagonal().array() += jitter;
    llt = detail::try_llt(loaded);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NotPositiveDefinite(std::string(what) + " not positive definite");
}

/// Lower-triangular L with L L^T = a.
inline Matrix cholesky_lower(const SymMatrix& a, const char* what = "matrix") {
  return factor_spd(a, what).matrixL();
}

inline Vector spd_solve(const SymMatrix& a, const Vector& b) {
  if (b.size() != a.dim()) throw DimensionMismatch("spd_solve: rhs size mismatch");
  return factor_spd(a, "spd_solve operand").solve(b);
}

inline Matrix spd_solve(const SymMatrix& a, const Matrix& b) {
  if (b.rows() != a.dim()) throw DimensionMismatch("spd_solve: rhs rows mismatch");
  return factor_spd(a, "spd_solve operand").solve(b);
}

inline SymMatrix spd_inverse(const SymMatrix& a, const char* what = "matrix") {
  return SymMatrix(factor_spd(a, what).solve(Matrix::Identity(a.dim(), a.dim())));
}

inline double log_det_spd(const SymMatrix& a, const char* what = "matrix") {
  const auto llt = factor_spd(a, what);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct SignedLogDet {
  double log_abs = 0.0;
  int sign = 1;
};

/// log|det M| with sign, via partial-pivot LU. Throws Singular when the
/// reciprocal condition estimate underflows.
inline SignedLogDet log_abs_det(const Matrix& m, const char* what = "matrix") {
  if (m.rows() != m.cols()) throw DimensionMismatch(std::string(what) + ": not square");
  Eigen::PartialPivLU<Matrix> lu(m);
  if (!(lu.rcond() > 1e-14)) throw Singular(std::string(what) + " is singular");
  SignedLogDet out;
  out.sign = static_cast<int>(lu.permutationP().determinant());
  const Vector d = lu.matrixLU().diagonal();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    out.log_abs += std::log(std::abs(d(i)));
    if (d(i) < 0.0) out.sign = -out.sign;
  }
  return out;
}

/// (A + B D^-1 C)^-1 evaluated as A^-1 - A^-1 B (D + C A^-1 B)^-1 C A^-1.
/// Takes A^-1 directly, so no inversion of A happens here.
inline SymMatrix woodbury_inverse(const SymMatrix& a_inv, const Matrix& b, const SymMatrix& d,
                                  const Matrix& c) {
  const auto n = a_inv.dim();
  const auto k = d.dim();
  if (b.rows() != n || b.cols() != k || c.rows() != k || c.cols() != n) {
    throw DimensionMismatch("woodbury_inverse: non-conformable operands");
  }
  const Matrix a_inv_b = a_inv.mat() * b;
  const Matrix c_a_inv = c * a_inv.mat();
  const Matrix inner = d.mat() + c * a_inv_b;
  Matrix correction;
  if ((c - b.transpose()).norm() <= 1e-14 * (1.0 + b.norm())) {
    correction = a_inv_b * spd_solve(SymMatrix(inner), c_a_inv);
  } else {
    Eigen::PartialPivLU<Matrix> lu(inner);
    if (!(lu.rcond() > 1e-14)) throw Singular("woodbury_inverse: inner matrix singular");
    correction = a_inv_b * lu.solve(c_a_inv);
  }
  return SymMatrix(a_inv.mat() - correction);
}

/// Checks |[[A,B],[C,D]]| = |A - B D^-1 C| |D| = |A| |D - C A^-1 B| and
/// returns the largest relative discrepancy between the three values.
/// Comparison happens on log-determinants.
inline double det_product_identity_check(const SymMatrix& a, const Matrix& b, const Matrix& c,
                                         const SymMatrix& d) {
  const auto n = a.dim();
  const auto k = d.dim();
  if (b.rows() != n || b.cols() != k || c.rows() != k || c.cols() != n) {
    throw DimensionMismatch("det_product_identity_check: non-conformable blocks");
  }
  Eigen::PartialPivLU<Matrix> lu_a(a.mat());
  Eigen::PartialPivLU<Matrix> lu_d(d.mat());
  if (!(lu_a.rcond() > 1e-14)) throw Singular("det_product_identity_check: A singular");
  if (!(lu_d.rcond() > 1e-14)) throw Singular("det_product_identity_check: D singular");

  Matrix block(n + k, n + k);
  block << a.mat(), b, c, d.mat();

  const auto full = log_abs_det(block, "block matrix");
  const auto schur_d = log_abs_det(Matrix(a.mat() - b * lu_d.solve(c)), "A - B D^-1 C");
  const auto schur_a = log_abs_det(Matrix(d.mat() - c * lu_a.solve(b)), "D - C A^-1 B");
  const auto det_a = log_abs_det(a.mat(), "A");
  const auto det_d = log_abs_det(d.mat(), "D");

  const SignedLogDet via_d{schur_d.log_abs + det_d.log_abs, schur_d.sign * det_d.sign};
  const SignedLogDet via_a{det_a.log_abs + schur_a.log_abs, det_a.sign * schur_a.sign};

  auto discrepancy = [](const SignedLogDet& x, const SignedLogDet& y) {
    if (x.sign != y.sign) return 2.0;
    return std::abs(std::expm1(x.log_abs - y.log_abs));
  };
  return std::max({discrepancy(full, via_d), discrepancy(full, via_a), discrepancy(via_d, via_a)});
}

/// Ratio of extreme eigenvalues; +inf when the smallest is not positive.
inline double spd_condition_number(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat(), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline double relative_difference(const Matrix& x, const Matrix& reference) {
  const double diff = (x - reference).norm();
  if (diff == 0.0) return 0.0;
  return diff / std::max(reference.norm(), x.norm());
}

}  // namespace sqc
