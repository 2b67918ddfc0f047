#ifndef SAFESWITCH_MODEL_HPP
#define SAFESWITCH_MODEL_HPP

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "safeswitch/matops.hpp"

namespace safeswitch {

/// Plant x+ = A x + B u + w, y = C x + v with w ~ N(0,W), v ~ N(0,V) and
/// stage cost x'Qx + u'Ru.
struct SystemModel {
  Matrix A, B, C, W, V, Q, R;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }

  /// Throws DimensionError / InvalidArgumentError naming the offending matrix.
  void validate() const {
    require_square(A, "A");
    const auto nn = A.rows();
    if (nn == 0) throw DimensionError("A must be non-empty");
    if (B.rows() != nn) {
      throw DimensionError("B rows (" + std::to_string(B.rows()) +
                           ") != A rows (" + std::to_string(nn) + ")");
    }
    if (C.cols() != nn) {
      throw DimensionError("C cols (" + std::to_string(C.cols()) +
                           ") != A rows (" + std::to_string(nn) + ")");
    }
    if (B.cols() == 0 || C.rows() == 0) {
      throw DimensionError("B and C must be non-empty");
    }
    require_shape(W, nn, nn, "W");
    require_shape(V, C.rows(), C.rows(), "V");
    require_shape(Q, nn, nn, "Q");
    require_shape(R, B.cols(), B.cols(), "R");
    require_finite(A, "A");
    require_finite(B, "B");
    require_finite(C, "C");
    using Named = std::pair<const Matrix*, const char*>;
    for (const auto& [m, name] :
         {Named{&W, "W"}, Named{&V, "V"}, Named{&Q, "Q"}, Named{&R, "R"}}) {
      if (!is_spd(*m)) {
        throw InvalidArgumentError(std::string(name) +
                                   " is not symmetric positive definite");
      }
    }
  }
};

enum class ControllerRole { kPrimary, kFallback };

/// z+ = Ac z + Bc u + Lc y,  u_c = Kc z.
struct DynamicController {
  Matrix Ac, Bc, Lc, Kc;
  ControllerRole role = ControllerRole::kPrimary;

  Eigen::Index order() const { return Ac.rows(); }

  void validate_against(const SystemModel& sys, const char* name) const {
    const std::string nm(name);
    require_square(Ac, (nm + ".A").c_str());
    const auto k = Ac.rows();
    if (k == 0) throw DimensionError(nm + " has empty internal state");
    require_shape(Bc, k, sys.m(), (nm + ".B").c_str());
    require_shape(Lc, k, sys.p(), (nm + ".L").c_str());
    require_shape(Kc, sys.m(), k, (nm + ".K").c_str());
    require_finite(Ac, name);
    require_finite(Bc, name);
    require_finite(Lc, name);
    require_finite(Kc, name);
  }
};

/// u0 == 0 realized with a single dummy internal state that stays at zero.
inline DynamicController zero_controller(const SystemModel& sys,
                                         ControllerRole role =
                                             ControllerRole::kFallback) {
  return {Matrix::Zero(1, 1), Matrix::Zero(1, sys.m()),
          Matrix::Zero(1, sys.p()), Matrix::Zero(sys.m(), 1), role};
}

/// Closed loop of [x; z] under a single controller:
///   [[A, B K], [L C, Ac + Bc K]].
inline Matrix closed_loop_matrix(const SystemModel& sys,
                                 const DynamicController& ctrl) {
  ctrl.validate_against(sys, "controller");
  const auto n = sys.n();
  const auto k = ctrl.order();
  Matrix out(n + k, n + k);
  out.topLeftCorner(n, n) = sys.A;
  out.topRightCorner(n, k) = sys.B * ctrl.Kc;
  out.bottomLeftCorner(k, n) = ctrl.Lc * sys.C;
  out.bottomRightCorner(k, k) = ctrl.Ac + ctrl.Bc * ctrl.Kc;
  return out;
}

inline Matrix build_cal_A0(const SystemModel& sys,
                           const DynamicController& fallback) {
  return closed_loop_matrix(sys, fallback);
}

inline Matrix build_cal_A1(const SystemModel& sys,
                           const DynamicController& primary) {
  return closed_loop_matrix(sys, primary);
}

namespace detail {

// Augmented matrix of [x; z0; z1] when the input is `active`'s output. Both
// controllers integrate the applied input, so the idle controller's state
// is driven through its own B by the active gain.
inline Matrix augmented_matrix(const SystemModel& sys,
                               const DynamicController& fallback,
                               const DynamicController& primary,
                               bool primary_active) {
  fallback.validate_against(sys, "fallback");
  primary.validate_against(sys, "primary");
  const auto n = sys.n();
  const auto n0 = fallback.order();
  const auto n1 = primary.order();
  Matrix out = Matrix::Zero(n + n0 + n1, n + n0 + n1);
  out.block(0, 0, n, n) = sys.A;
  out.block(n, 0, n0, n) = fallback.Lc * sys.C;
  out.block(n + n0, 0, n1, n) = primary.Lc * sys.C;
  out.block(n, n, n0, n0) = fallback.Ac;
  out.block(n + n0, n + n0, n1, n1) = primary.Ac;
  if (primary_active) {
    const Matrix& k = primary.Kc;
    out.block(0, n + n0, n, n1) = sys.B * k;
    out.block(n, n + n0, n0, n1) = fallback.Bc * k;
    out.block(n + n0, n + n0, n1, n1) += primary.Bc * k;
  } else {
    const Matrix& k = fallback.Kc;
    out.block(0, n, n, n0) = sys.B * k;
    out.block(n, n, n0, n0) += fallback.Bc * k;
    out.block(n + n0, n, n1, n0) = primary.Bc * k;
  }
  return out;
}

}  // namespace detail

/// Augmented dynamics of [x; z0; z1] while the primary input is applied.
inline Matrix build_scr_A1(const SystemModel& sys,
                           const DynamicController& primary,
                           const DynamicController& fallback) {
  return detail::augmented_matrix(sys, fallback, primary, true);
}

/// Augmented dynamics of [x; z0; z1] while the fallback input is applied.
inline Matrix build_scr_A0(const SystemModel& sys,
                           const DynamicController& primary,
                           const DynamicController& fallback) {
  return detail::augmented_matrix(sys, fallback, primary, false);
}

/// Covariance of the augmented noise [w; L0 v; L1 v].
inline Matrix build_Sigma(const SystemModel& sys,
                          const DynamicController& primary,
                          const DynamicController& fallback) {
  fallback.validate_against(sys, "fallback");
  primary.validate_against(sys, "primary");
  const auto n = sys.n();
  const auto n0 = fallback.order();
  const auto n1 = primary.order();
  Matrix out = Matrix::Zero(n + n0 + n1, n + n0 + n1);
  out.block(0, 0, n, n) = sys.W;
  Matrix l(n0 + n1, sys.p());
  l << fallback.Lc, primary.Lc;
  out.block(n, n, n0 + n1, n0 + n1) = l * sys.V * l.transpose();
  return 0.5 * (out + out.transpose());
}

/// sum_tau scrA0^tau Sigma (scrA0^tau)^T; requires scrA0 Schur stable.
inline Matrix build_sigma_tilde(const Matrix& scr_a0, const Matrix& sigma) {
  if (!is_schur_stable(scr_a0)) {
    throw NoSolutionError(
        "fallback-mode augmented matrix is not Schur stable; the fallback "
        "controller does not satisfy the stability assumption");
  }
  return solve_dlyap(scr_a0, sigma);
}

/// Every matrix describing the switched closed loop.
struct AugmentedSystem {
  Eigen::Index n = 0, n0 = 0, n1 = 0;
  Matrix cal_A0, cal_A1;
  Matrix scr_A0, scr_A1;
  Matrix Sigma;
  Matrix SigmaTilde;  // empty when scr_A0 is not Schur stable

  Eigen::Index N() const { return n + n0 + n1; }
  bool has_sigma_tilde() const { return SigmaTilde.size() > 0; }
};

inline AugmentedSystem build_augmented(const SystemModel& sys,
                                       const DynamicController& primary,
                                       const DynamicController& fallback) {
  AugmentedSystem aug;
  aug.n = sys.n();
  aug.n0 = fallback.order();
  aug.n1 = primary.order();
  aug.cal_A0 = build_cal_A0(sys, fallback);
  aug.cal_A1 = build_cal_A1(sys, primary);
  aug.scr_A0 = build_scr_A0(sys, primary, fallback);
  aug.scr_A1 = build_scr_A1(sys, primary, fallback);
  aug.Sigma = build_Sigma(sys, primary, fallback);
  if (is_schur_stable(aug.scr_A0)) {
    aug.SigmaTilde = build_sigma_tilde(aug.scr_A0, aug.Sigma);
  }
  return aug;
}

/// Stage-cost weight of the augmented state under the primary controller,
/// blockdiag(Q, 0, K1' R K1).
inline Matrix build_Q_scr1(const SystemModel& sys,
                           const DynamicController& primary,
                           const DynamicController& fallback) {
  const auto n0 = fallback.order();
  return block_diag({sys.Q, Matrix::Zero(n0, n0),
                     primary.Kc.transpose() * sys.R * primary.Kc});
}

/// blockdiag(0, K0' R K0, -K1' R K1): cost change of using u0 instead of u1.
inline Matrix build_Delta(const SystemModel& sys,
                          const DynamicController& primary,
                          const DynamicController& fallback) {
  return block_diag({Matrix::Zero(sys.n(), sys.n()),
                     fallback.Kc.transpose() * sys.R * fallback.Kc,
                     -primary.Kc.transpose() * sys.R * primary.Kc});
}

/// Observer-based LQG controller: K* from the control Riccati equation and
/// the predictor Kalman gain L* from its dual.
inline DynamicController synth_optimal_controller(const SystemModel& sys) {
  sys.validate();
  const SpdMatrix p = solve_dare(sys.A, sys.B, sys.Q, sys.R);
  const Matrix k = lqr_gain(sys.A, sys.B, sys.R, p);
  const SpdMatrix s =
      solve_dare(sys.A.transpose(), sys.C.transpose(), sys.W, sys.V);
  const Matrix l = -lqr_gain(sys.A.transpose(), sys.C.transpose(), sys.V, s)
                        .transpose();
  return {sys.A - l * sys.C, sys.B, l, k, ControllerRole::kPrimary};
}

/// Adds lambda to every entry of every controller matrix.
inline DynamicController perturb_controller(const DynamicController& ctrl,
                                            double lambda) {
  DynamicController out = ctrl;
  out.Ac.array() += lambda;
  out.Bc.array() += lambda;
  out.Lc.array() += lambda;
  out.Kc.array() += lambda;
  return out;
}

/// Smallest lambda > 0 (to within `tol`) at which the primary-mode augmented
/// matrix reaches spectral radius `target_rho`. Scans upward in steps of
/// `step` and bisects the first bracketing interval.
inline double perturbation_for_radius(const SystemModel& sys,
                                      const DynamicController& primary,
                                      const DynamicController& fallback,
                                      double target_rho, double step = 1e-3,
                                      double max_lambda = 10.0,
                                      double tol = 1e-10) {
  auto radius = [&](double lam) {
    return spectral_radius(
        build_scr_A1(sys, perturb_controller(primary, lam), fallback));
  };
  double lo = 0.0;
  if (radius(lo) >= target_rho) return 0.0;
  double hi = step;
  while (radius(hi) < target_rho) {
    lo = hi;
    hi += step;
    if (hi > max_lambda) {
      throw NoSolutionError("no perturbation up to " +
                            std::to_string(max_lambda) +
                            " reaches the requested spectral radius");
    }
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (radius(mid) < target_rho ? lo : hi) = mid;
  }
  return hi;
}

/// Random plant with spectral radius exactly `target_rho`, standard normal
/// B and C, identity covariances and weights. Deterministic in `seed`;
/// redraws until (A,B) is controllable and (A,C) observable.
inline SystemModel random_stable_system(std::uint64_t seed, int n, int m,
                                        int p, double target_rho,
                                        int max_attempts = 100) {
  if (n < 1 || m < 1 || p < 1) {
    throw InvalidArgumentError("dimensions must be positive");
  }
  if (!(target_rho > 0.0 && target_rho < 1.0)) {
    throw InvalidArgumentError("target spectral radius must lie in (0,1)");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int r, int c) {
    Matrix out(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out(i, j) = normal(rng);
    return out;
  };
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Matrix a = draw(n, n);
    const Matrix b = draw(n, m);
    const Matrix c = draw(p, n);
    const double rho = spectral_radius(a);
    if (rho < 1e-8) continue;
    a *= target_rho / rho;
    if (!is_controllable(a, b) || !is_observable(a, c)) continue;
    return {a,
            b,
            c,
            Matrix::Identity(n, n),
            Matrix::Identity(p, p),
            Matrix::Identity(n, n),
            Matrix::Identity(m, m)};
  }
  throw GenerationError("could not draw a controllable and observable system");
}

}  // namespace safeswitch

#endif  // SAFESWITCH_MODEL_HPP
