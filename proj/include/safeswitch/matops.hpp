#ifndef SAFESWITCH_MATOPS_HPP
#define SAFESWITCH_MATOPS_HPP

// Dense real-matrix primitives shared by the model builders and the
// certificate computations: stability tests, Stein (discrete Lyapunov) and
// Riccati solvers, weighted norms.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <utility>

#include "safeswitch/errors.hpp"

namespace safeswitch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite()) {
    throw InvalidArgumentError(std::string(name) + " has non-finite entries");
  }
}

inline void require_square(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(name) + " must be square, got " +
                         shape_str(m));
  }
}

inline void require_shape(const Matrix& m, Eigen::Index rows,
                          Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(name) + " must be " +
                         std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + shape_str(m));
  }
}

/// Symmetric to within relative tolerance `rel_tol` of the largest entry.
inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Positive definiteness via Cholesky, rejecting pivots below
/// 1e-12 * trace.
inline bool is_spd(const Matrix& m) {
  if (m.rows() == 0 || !m.allFinite() || !is_symmetric(m)) return false;
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) return false;
  const double threshold = 1e-12 * std::abs(sym.trace());
  const Vector pivots = Matrix(llt.matrixL()).diagonal().array().square();
  return pivots.minCoeff() > threshold;
}

/// Symmetric positive semidefinite to within `rel_tol` of its largest
/// eigenvalue.
inline bool is_psd(const Matrix& m, double rel_tol = 1e-10) {
  if (!m.allFinite() || !is_symmetric(m)) return false;
  if (m.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()),
                                           Eigen::EigenvaluesOnly);
  const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -rel_tol * top;
}

/// A symmetric positive definite matrix. Construction validates.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(Matrix m, const char* name = "matrix") {
    if (!is_spd(m)) {
      throw InvalidArgumentError(std::string(name) +
                                 " is not symmetric positive definite");
    }
    m_ = 0.5 * (m + m.transpose());
  }
  const Matrix& matrix() const { return m_; }
  operator const Matrix&() const { return m_; }  // NOLINT
  Eigen::Index size() const { return m_.rows(); }

 private:
  Matrix m_;
};

inline Matrix block_diag(std::initializer_list<Matrix> blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

/// Largest eigenvalue modulus.
inline double spectral_radius(const Matrix& a) {
  require_square(a, "A");
  require_finite(a, "A");
  if (a.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, false);
  if (es.info() != Eigen::Success) {
    throw ConvergenceError("eigenvalue computation failed", 0.0);
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_schur_stable(const Matrix& a, double margin = 0.0) {
  return spectral_radius(a) < 1.0 - margin;
}

/// Induced 2-norm (largest singular value).
inline double induced_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Principal square root of a symmetric positive semidefinite matrix.
inline Matrix psd_sqrt(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (p + p.transpose()));
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix spd_inverse_sqrt(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (p + p.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw InvalidArgumentError("weight matrix is not positive definite");
  }
  const Vector d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

struct LyapunovOptions {
  /// Doubling stops once the squared-power iterate has norm below this.
  double power_tolerance = 1e-14;
  int max_doublings = 64;
  /// Residual-correction passes after the main doubling sweep.
  int refinement_steps = 1;
};

namespace detail {

// Sum_{k>=0} (A^T)^k Q A^k by repeated squaring; Q symmetric of any sign.
inline Matrix stein_doubling(const Matrix& a, const Matrix& q,
                             const LyapunovOptions& opts) {
  Matrix x = q;
  Matrix ak = a;
  for (int i = 0; i < opts.max_doublings; ++i) {
    if (induced_norm(ak) < opts.power_tolerance) return 0.5 * (x + x.transpose());
    x += ak.transpose() * x * ak;
    ak = (ak * ak).eval();
  }
  throw ConvergenceError("Lyapunov doubling did not converge", induced_norm(ak));
}

}  // namespace detail

/// Solves A^T P A - P + Q = 0 for Schur-stable A. Q must be symmetric; it is
/// usually positive definite but semidefinite right-hand sides are accepted
/// (the solution is then only semidefinite).
inline Matrix solve_dlyap_transpose(const Matrix& a, const Matrix& q,
                                    const LyapunovOptions& opts = {}) {
  require_square(a, "A");
  require_square(q, "Q");
  require_finite(a, "A");
  require_finite(q, "Q");
  if (a.rows() != q.rows()) {
    throw DimensionError("A is " + shape_str(a) + " but Q is " + shape_str(q));
  }
  if (!is_symmetric(q)) throw InvalidArgumentError("Q is not symmetric");
  const double rho = spectral_radius(a);
  if (rho >= 1.0) {
    throw NoSolutionError("Lyapunov equation requires a Schur-stable matrix (" +
                          std::to_string(rho) + " >= 1)");
  }
  const Matrix qs = 0.5 * (q + q.transpose());
  Matrix p = detail::stein_doubling(a, qs, opts);
  for (int i = 0; i < opts.refinement_steps; ++i) {
    Matrix r = a.transpose() * p * a - p + qs;
    r = 0.5 * (r + r.transpose());
    p += detail::stein_doubling(a, r, opts);
  }
  return 0.5 * (p + p.transpose());
}

/// Solves A X A^T - X + Q = 0, i.e. X = sum_k A^k Q (A^k)^T.
inline Matrix solve_dlyap(const Matrix& a, const Matrix& q,
                          const LyapunovOptions& opts = {}) {
  require_square(a, "A");
  return solve_dlyap_transpose(a.transpose(), q, opts);
}

struct DareOptions {
  int max_iterations = 200;
  /// Relative change between successive iterates that counts as converged.
  double relative_tolerance = 1e-12;
};

/// Residual of P = A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q.
inline Matrix dare_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                            const Matrix& r, const Matrix& p) {
  const Matrix bp = b.transpose() * p;
  const Matrix s = r + bp * b;
  return a.transpose() * p * a -
         a.transpose() * bp.transpose() * s.ldlt().solve(bp * a) + q - p;
}

/// Stabilizing solution of the discrete algebraic Riccati equation via the
/// structure-preserving doubling algorithm.
inline SpdMatrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q,
                            const Matrix& r, const DareOptions& opts = {}) {
  require_square(a, "A");
  const auto n = a.rows();
  if (b.rows() != n) {
    throw DimensionError("B must have " + std::to_string(n) + " rows, got " +
                         shape_str(b));
  }
  require_shape(q, n, n, "Q");
  require_shape(r, b.cols(), b.cols(), "R");
  require_finite(a, "A");
  require_finite(b, "B");
  require_finite(q, "Q");
  require_finite(r, "R");
  if (!is_psd(q)) throw InvalidArgumentError("Q is not positive semidefinite");
  if (!is_spd(r)) throw InvalidArgumentError("R is not positive definite");

  const Eigen::LLT<Matrix> r_llt(0.5 * (r + r.transpose()));
  Matrix ak = a;
  Matrix gk = b * r_llt.solve(b.transpose());
  Matrix hk = 0.5 * (q + q.transpose());
  const Matrix eye = Matrix::Identity(n, n);
  double change = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Eigen::PartialPivLU<Matrix> w(eye + gk * hk);
    const Matrix w_a = w.solve(ak);
    const Matrix w_g = w.solve(gk);
    Matrix h_next = hk + ak.transpose() * hk * w_a;
    h_next = 0.5 * (h_next + h_next.transpose());
    Matrix g_next = gk + ak * w_g * ak.transpose();
    g_next = 0.5 * (g_next + g_next.transpose());
    ak = (ak * w_a).eval();
    gk = std::move(g_next);
    if (!h_next.allFinite()) {
      throw NoSolutionError("Riccati iteration diverged; (A,B) may not be "
                            "stabilizable");
    }
    change = (h_next - hk).norm() / std::max(h_next.norm(), 1e-300);
    hk = std::move(h_next);
    if (change < opts.relative_tolerance) {
      return SpdMatrix(hk, "Riccati solution");
    }
  }
  throw ConvergenceError("Riccati doubling did not converge",
                         dare_residual(a, b, q, r, hk).norm());
}

/// K = -(R + B^T P B)^{-1} B^T P A, so that A + B K is the closed loop.
inline Matrix lqr_gain(const Matrix& a, const Matrix& b, const Matrix& r,
                       const Matrix& p) {
  require_square(a, "A");
  require_shape(b, a.rows(), b.cols(), "B");
  require_shape(r, b.cols(), b.cols(), "R");
  require_shape(p, a.rows(), a.rows(), "P");
  const Matrix bp = b.transpose() * p;
  const Eigen::LLT<Matrix> s(r + bp * b);
  if (s.info() != Eigen::Success) {
    throw InvalidArgumentError("R + B^T P B is not positive definite");
  }
  return -s.solve(bp * a);
}

/// Induced P-norm by similarity, ||P^{1/2} M P^{-1/2}||. Compatible with the
/// vector P-norm: ||M v||_P <= ||M||_P ||v||_P.
inline double weighted_matrix_norm(const Matrix& m, const Matrix& p) {
  require_square(m, "M");
  require_shape(p, m.rows(), m.rows(), "P");
  return induced_norm(psd_sqrt(p) * m * spd_inverse_sqrt(p));
}

/// Congruence P-norm ||P^{-1/2} M P^{-1/2}||. For symmetric M this is the
/// smallest c with v^T M v <= c ||v||_P^2, which is how quadratic-form
/// weights get compared.
inline double congruence_pnorm(const Matrix& m, const Matrix& p) {
  require_square(m, "M");
  require_shape(p, m.rows(), m.rows(), "P");
  const Matrix s = spd_inverse_sqrt(p);
  return induced_norm(s * m * s);
}

inline double weighted_vector_norm(const Vector& v, const Matrix& p) {
  require_shape(p, v.size(), v.size(), "P");
  const double q = v.dot(p * v);
  return std::sqrt(std::max(q, 0.0));
}

/// Smallest rho with A^T P A <= rho P, i.e. ||A||_P^2.
inline double contraction_factor(const Matrix& a, const Matrix& p) {
  const Matrix s = spd_inverse_sqrt(p);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s * a.transpose() * p * a * s,
                                           Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

/// Rank with singular values below rel_tol * sigma_max treated as zero.
inline Eigen::Index numerical_rank(const Matrix& m, double rel_tol = 1e-8) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double cut = rel_tol * s(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) ++r;
  }
  return r;
}

/// [B, AB, ..., A^{n-1}B]
inline Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
  const auto n = a.rows();
  Matrix out(n, n * b.cols());
  Matrix blk = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.middleCols(i * b.cols(), b.cols()) = blk;
    blk = (a * blk).eval();
  }
  return out;
}

inline bool is_controllable(const Matrix& a, const Matrix& b) {
  return numerical_rank(controllability_matrix(a, b)) == a.rows();
}

inline bool is_observable(const Matrix& a, const Matrix& c) {
  return is_controllable(a.transpose(), c.transpose());
}

}  // namespace safeswitch

#endif  // SAFESWITCH_MATOPS_HPP
