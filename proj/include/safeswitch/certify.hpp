#ifndef SAFESWITCH_CERTIFY_HPP
#define SAFESWITCH_CERTIFY_HPP

// Certificates for the switched loop.
//
//  * Safety: bound on the long-run LQ cost that holds for any primary
//    controller, from a Lyapunov function of the fallback closed loop.
//  * Dwell: common Lyapunov pair (P, rho) contracting the primary-mode
//    augmented matrix in one step and the fallback-mode matrix over a block
//    of t steps, plus the smallest such t.
//  * Efficiency: fourth-moment, switching-probability and cost-gap bounds
//    for a stabilizing primary controller.
//
// Induced P-norms appear in two readings: the similarity form
// ||P^{1/2} M P^{-1/2}|| and the congruence form ||P^{-1/2} M P^{-1/2}||.
// Where both are meaningful the report carries both and the bound uses the
// larger one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>

#include "safeswitch/model.hpp"
#include "safeswitch/model_io.hpp"
#include "safeswitch/supervisor.hpp"

namespace safeswitch {

/// Added to the exact contraction factor so that the Lyapunov decrease
/// inequalities hold strictly.
inline constexpr double kSafetyRhoMargin = 1e-11;
inline constexpr double kDwellRhoMargin = 1e-10;
/// Floor applied to rho before it enters the escape bound.
inline constexpr double kEscapeRhoFloor = 0.2500001;

struct AssumptionReport {
  double rho_cal_A0 = 0.0;  // fallback closed loop [x; z0]
  double rho_A0 = 0.0;      // fallback internal dynamics
  double rho_cal_A1 = 0.0;  // primary closed loop [x; z1]
  double rho_A1 = 0.0;      // primary internal dynamics
  bool assumption1 = false;
  bool assumption2 = false;
};

inline AssumptionReport check_assumptions(const SystemModel& sys,
                                          const DynamicController& primary,
                                          const DynamicController& fallback) {
  AssumptionReport r;
  r.rho_cal_A0 = spectral_radius(build_cal_A0(sys, fallback));
  r.rho_A0 = spectral_radius(fallback.Ac);
  r.rho_cal_A1 = spectral_radius(build_cal_A1(sys, primary));
  r.rho_A1 = spectral_radius(primary.Ac);
  r.assumption1 = r.rho_cal_A0 < 1.0 && r.rho_A0 < 1.0;
  r.assumption2 = r.rho_cal_A1 < 1.0 && r.rho_A1 < 1.0;
  return r;
}

struct SafetyCertificate {
  SpdMatrix P0;
  double rho0 = 0.0;
  double threshold = 0.0;  // M the bounds below were evaluated at
  double input_gain_sq = 0.0;  // ||[B; B0]||^2
  double P0_norm = 0.0;
  double noise_trace = 0.0;  // tr(blockdiag(W, L0 V L0') P0)
  double R_norm = 0.0;
  double energy_bound = 0.0;
  double cost_bound = 0.0;

  /// Bound on E V0(k) = E ||[x; z0]||^2_{P0} for every k.
  double energy_bound_at(double m) const {
    return 4.0 * (1.0 + rho0) / ((1.0 - rho0) * (1.0 - rho0)) *
           (m * m * input_gain_sq * P0_norm + noise_trace);
  }

  /// Bound on the long-run average stage cost for any primary controller.
  double cost_bound_at(double m) const {
    const double d = (1.0 - rho0) * (1.0 - rho0);
    return (8.0 * (1.0 + rho0) * input_gain_sq * P0_norm / d + 2.0 * R_norm) *
               m * m +
           8.0 * (1.0 + rho0) * noise_trace / d;
  }
};

inline SafetyCertificate safety_certificate(const SystemModel& sys,
                                            const DynamicController& fallback,
                                            double threshold) {
  sys.validate();
  fallback.validate_against(sys, "fallback");
  const Matrix cal_a0 = build_cal_A0(sys, fallback);
  const double r_cal = spectral_radius(cal_a0);
  const double r_a0 = spectral_radius(fallback.Ac);
  if (r_cal >= 1.0) {
    throw CertificateUnavailableError(
        "fallback closed-loop matrix has spectral radius " +
        std::to_string(r_cal) + " >= 1");
  }
  if (r_a0 >= 1.0) {
    throw CertificateUnavailableError(
        "fallback internal matrix A0 has spectral radius " +
        std::to_string(r_a0) + " >= 1");
  }
  const auto n0 = fallback.order();
  const Matrix q_block =
      block_diag({sys.Q, fallback.Kc.transpose() * sys.R * fallback.Kc +
                             Matrix::Identity(n0, n0)});
  SafetyCertificate c;
  c.P0 = SpdMatrix(solve_dlyap_transpose(cal_a0, q_block), "P0");
  c.rho0 = contraction_factor(cal_a0, c.P0) + kSafetyRhoMargin;
  Matrix bb(sys.n() + n0, sys.m());
  bb << sys.B, fallback.Bc;
  const double g = induced_norm(bb);
  c.input_gain_sq = g * g;
  c.P0_norm = induced_norm(c.P0.matrix());
  c.noise_trace =
      (block_diag({sys.W, fallback.Lc * sys.V * fallback.Lc.transpose()}) *
       c.P0.matrix())
          .trace();
  c.R_norm = induced_norm(sys.R);
  c.threshold = threshold;
  c.energy_bound = c.energy_bound_at(threshold);
  c.cost_bound = c.cost_bound_at(threshold);
  return c;
}

struct DwellCertificate {
  SpdMatrix P;
  /// ||scrA1||_P^2 exactly; rho below adds kDwellRhoMargin.
  double primary_contraction = 0.0;
  double rho = 0.0;
  int t_min = 0;
  Matrix scr_A0;
  Matrix scr_A1;

  /// (scrA0^t)' P scrA0^t < rho P with margin kDwellRhoMargin.
  bool holds_for(int t) const {
    if (t < 1) return false;
    Matrix pw = Matrix::Identity(scr_A0.rows(), scr_A0.cols());
    for (int i = 0; i < t; ++i) pw = (pw * scr_A0).eval();
    return contraction_factor(pw, P) <= primary_contraction;
  }
};

/// Dwell certificate for given mode matrices: P solves the Lyapunov
/// equation of scrA1 with identity weight and t_min is found by accumulating
/// powers of scrA0.
inline DwellCertificate dwell_certificate_from(const Matrix& scr_a1,
                                               const Matrix& scr_a0,
                                               int max_dwell = 1000000) {
  require_square(scr_a1, "scrA1");
  require_shape(scr_a0, scr_a1.rows(), scr_a1.cols(), "scrA0");
  if (!is_schur_stable(scr_a1)) {
    throw CertificateUnavailableError(
        "primary-mode augmented matrix is not Schur stable");
  }
  DwellCertificate d;
  d.scr_A0 = scr_a0;
  d.scr_A1 = scr_a1;
  const auto big_n = scr_a1.rows();
  d.P = SpdMatrix(
      solve_dlyap_transpose(scr_a1, Matrix::Identity(big_n, big_n)), "P");
  d.primary_contraction = contraction_factor(scr_a1, d.P);
  d.rho = d.primary_contraction + kDwellRhoMargin;
  Matrix pw = scr_a0;
  for (int t = 1; t <= max_dwell; ++t) {
    if (contraction_factor(pw, d.P) <= d.primary_contraction) {
      d.t_min = t;
      return d;
    }
    pw = (pw * scr_a0).eval();
  }
  throw CertificateUnavailableError("no dwell time up to " +
                                    std::to_string(max_dwell) +
                                    " satisfies the common Lyapunov condition");
}

inline DwellCertificate dwell_certificate(const SystemModel& sys,
                                          const DynamicController& primary,
                                          const DynamicController& fallback,
                                          int max_dwell = 1000000) {
  const auto rep = check_assumptions(sys, primary, fallback);
  if (!rep.assumption1) {
    throw CertificateUnavailableError(
        "fallback controller is not stabilizing (closed loop " +
        std::to_string(rep.rho_cal_A0) + ", A0 " + std::to_string(rep.rho_A0) +
        ")");
  }
  if (!rep.assumption2) {
    throw CertificateUnavailableError(
        "primary controller is not stabilizing (closed loop " +
        std::to_string(rep.rho_cal_A1) + ", A1 " + std::to_string(rep.rho_A1) +
        ")");
  }
  return dwell_certificate_from(build_scr_A1(sys, primary, fallback),
                                build_scr_A0(sys, primary, fallback),
                                max_dwell);
}

/// One P-norm constant under both readings.
struct NormPair {
  double similarity = std::numeric_limits<double>::quiet_NaN();
  double congruence = std::numeric_limits<double>::quiet_NaN();
  double conservative() const {
    if (std::isnan(similarity)) return congruence;
    if (std::isnan(congruence)) return similarity;
    return std::max(similarity, congruence);
  }
};

inline NormPair pnorm_pair(const Matrix& m, const Matrix& p) {
  return {weighted_matrix_norm(m, p), congruence_pnorm(m, p)};
}

struct EfficiencyCertificate {
  DwellCertificate dwell;
  SafetyCertificate safety;
  int dwell_time = 0;      // t the bounds are evaluated at
  double threshold = 0.0;  // M the bounds are evaluated at
  Eigen::Index N = 0;

  Matrix Sigma;
  Matrix SigmaTilde;
  /// Lyapunov weight of the fallback-mode augmented matrix, used for
  /// ||X||_{P0} of the full stacked state.
  SpdMatrix P0_aug;
  double rho0_aug = 0.0;

  double P_norm = 0.0;
  double P_inv_norm = 0.0;
  double SigmaTilde_norm = 0.0;
  double tr_SigmaTilde_P = 0.0;
  double tr_Sigma_P = 0.0;

  double Qcal = 0.0;
  double rho_escape = 0.0;  // rho after the 1/4 floor
  bool rho_inflated = false;
  double a0 = 0.0;
  double Kcal = 0.0;

  NormPair P0_in_P;
  NormPair P0_in_SigmaTildeInv;
  double moment_core = 0.0;  // Qcal ||P0||_P^2 + (N^2+2N) ||P0||^2
  double fourth_moment_bound = 0.0;

  Matrix Q_scr1;
  Matrix Delta;
  NormPair Q_scr1_in_P;
  NormPair A_diff_norm;        // ||scrA0 - scrA1||_{Q1+I}
  NormPair Q1I_in_P0;          // ||Q1 + I||_{P0}
  NormPair A1_power_sum;       // sum_s ||scrA1^s||_{Q1+I}
  NormPair Delta_in_P0;
  NormPair c1_pair;
  NormPair c2_pair;
  double c1 = 0.0;
  double c2 = 0.0;
  double Delta_norm = 0.0;

  bool dwell_valid = false;      // dwell condition holds at dwell_time
  bool threshold_valid = false;  // threshold >= a0 * Kcal
  bool valid() const { return dwell_valid && threshold_valid; }

  /// Tail bound P(||X~(j)|| >= a) for the transformed sequence.
  double escape(double a) const {
    const double nn = static_cast<double>(N);
    const double q = std::pow(rho_escape, 0.25);
    const double pre = 4.0 * nn / (1.0 / std::sqrt(rho_escape) - 1.0);
    const double rate = (1.0 - q) * (1.0 - q) /
                        (2.0 * nn * SigmaTilde_norm * P_norm * P_inv_norm);
    return pre * std::exp(-rate * a * a);
  }

  /// Bound on P(u(k) != u1(k)).
  double switch_prob_bound(double m, int t) const {
    const double a = Kcal > 0.0 ? m / Kcal
                                : std::numeric_limits<double>::infinity();
    return static_cast<double>(t) * escape(a);
  }
  double switch_prob_bound(double m) const {
    return switch_prob_bound(m, dwell_time);
  }

  double G(double m, int t) const {
    return std::pow(2.0, 0.75) * std::pow(moment_core, 0.25) *
           std::pow(switch_prob_bound(m, t), 0.25);
  }

  /// Bound on J - J1.
  double gap_bound(double m, int t) const {
    const double g = G(m, t);
    return 2.0 * c1 * c2 * g + (c2 * c2 + Delta_norm) * g * g;
  }
  double gap_bound(double m) const { return gap_bound(m, dwell_time); }

  /// Exponent c in the exp(-c M^2) decay of the switching probability.
  double corollary_rate() const {
    const double nn = static_cast<double>(N);
    const double q = std::pow(rho_escape, 0.25);
    return (1.0 - q) * (1.0 - q) /
           (2.0 * nn * SigmaTilde_norm * P_norm * P_inv_norm * Kcal * Kcal);
  }
};

namespace detail {

// sum_{s>=0} ||A^s|| under `norm`, stopping once a term drops below tol.
template <typename NormFn>
double power_norm_series(const Matrix& a, NormFn&& norm, double tol = 1e-14,
                         int max_terms = 1000000) {
  Matrix pw = Matrix::Identity(a.rows(), a.cols());
  double sum = 0.0;
  for (int s = 0; s < max_terms; ++s) {
    const double term = norm(pw);
    sum += term;
    if (term < tol) return sum;
    pw = (pw * a).eval();
  }
  throw ConvergenceError("power-norm series did not converge", sum);
}

}  // namespace detail

inline EfficiencyCertificate efficiency_certificate(
    const SystemModel& sys, const DynamicController& primary,
    const DynamicController& fallback, const SupervisorConfig& cfg) {
  cfg.validate();
  EfficiencyCertificate e;
  e.dwell = dwell_certificate(sys, primary, fallback);
  e.safety = safety_certificate(sys, fallback, cfg.threshold);
  e.dwell_time = cfg.dwell;
  e.threshold = cfg.threshold;
  const AugmentedSystem aug = build_augmented(sys, primary, fallback);
  e.N = aug.N();
  const double nn = static_cast<double>(e.N);
  e.Sigma = aug.Sigma;
  e.SigmaTilde = aug.SigmaTilde;
  const Matrix& p = e.dwell.P.matrix();
  const double rho = e.dwell.rho;

  const auto n0 = fallback.order();
  const auto n1 = primary.order();
  const Matrix q_aug = block_diag(
      {sys.Q,
       fallback.Kc.transpose() * sys.R * fallback.Kc +
           Matrix::Identity(n0, n0),
       Matrix::Identity(n1, n1)});
  e.P0_aug = SpdMatrix(solve_dlyap_transpose(aug.scr_A0, q_aug), "P0_aug");
  e.rho0_aug = contraction_factor(aug.scr_A0, e.P0_aug);

  Eigen::SelfAdjointEigenSolver<Matrix> pes(p, Eigen::EigenvaluesOnly);
  e.P_norm = pes.eigenvalues().maxCoeff();
  e.P_inv_norm = 1.0 / pes.eigenvalues().minCoeff();
  e.SigmaTilde_norm = induced_norm(e.SigmaTilde);
  e.tr_SigmaTilde_P = (e.SigmaTilde * p).trace();
  e.tr_Sigma_P = (e.Sigma * p).trace();

  const double n2 = nn * nn + 2.0 * nn;
  e.Qcal = (6.0 * rho * e.tr_SigmaTilde_P * e.tr_SigmaTilde_P +
            (1.0 - rho) * n2 * e.P_norm * e.P_norm * e.SigmaTilde_norm *
                e.SigmaTilde_norm) /
           ((1.0 - rho) * (1.0 - rho * rho));

  e.rho_inflated = rho <= 0.25;
  e.rho_escape = e.rho_inflated ? kEscapeRhoFloor : rho;
  e.a0 = 8.0 * nn * e.SigmaTilde_norm * e.P_norm * e.P_inv_norm /
         (1.0 - std::pow(e.rho_escape, 0.25));
  Matrix kk(sys.m(), n0 + n1);
  kk << fallback.Kc, -primary.Kc;
  e.Kcal = induced_norm(kk);

  const Matrix& p0 = e.P0_aug.matrix();
  e.P0_in_P = pnorm_pair(p0, p);
  // Weight Sigma~^{-1}: congruence form is ||Sigma~^{1/2} P0 Sigma~^{1/2}||,
  // which stays defined when Sigma~ is singular.
  const Matrix st_half = psd_sqrt(e.SigmaTilde);
  e.P0_in_SigmaTildeInv.congruence = induced_norm(st_half * p0 * st_half);
  if (is_spd(e.SigmaTilde)) {
    e.P0_in_SigmaTildeInv.similarity =
        induced_norm(spd_inverse_sqrt(e.SigmaTilde) * p0 * st_half);
  }
  const double p0p = e.P0_in_P.conservative();
  const double p0s = e.P0_in_SigmaTildeInv.conservative();
  e.moment_core = e.Qcal * p0p * p0p + n2 * p0s * p0s;
  e.fourth_moment_bound = 8.0 * e.moment_core;

  e.Q_scr1 = build_Q_scr1(sys, primary, fallback);
  e.Delta = build_Delta(sys, primary, fallback);
  const Matrix q1i = e.Q_scr1 + Matrix::Identity(e.N, e.N);
  e.Q_scr1_in_P = pnorm_pair(e.Q_scr1, p);
  e.A_diff_norm = pnorm_pair(aug.scr_A0 - aug.scr_A1, q1i);
  e.Q1I_in_P0 = pnorm_pair(q1i, p0);
  e.A1_power_sum.similarity = detail::power_norm_series(
      aug.scr_A1, [&](const Matrix& m) { return weighted_matrix_norm(m, q1i); });
  e.A1_power_sum.congruence = detail::power_norm_series(
      aug.scr_A1, [&](const Matrix& m) { return congruence_pnorm(m, q1i); });
  e.Delta_in_P0 = pnorm_pair(e.Delta, p0);

  const double noise_scale = std::sqrt(e.tr_Sigma_P / (1.0 - rho));
  e.c1_pair = {e.Q_scr1_in_P.similarity * noise_scale,
               e.Q_scr1_in_P.congruence * noise_scale};
  e.c2_pair = {e.A_diff_norm.similarity * e.Q1I_in_P0.similarity *
                   e.A1_power_sum.similarity,
               e.A_diff_norm.congruence * e.Q1I_in_P0.congruence *
                   e.A1_power_sum.congruence};
  e.c1 = e.c1_pair.conservative();
  e.c2 = e.c2_pair.conservative();
  e.Delta_norm = e.Delta_in_P0.conservative();

  e.dwell_valid = e.dwell.holds_for(cfg.dwell);
  e.threshold_valid = cfg.threshold >= e.a0 * e.Kcal;
  return e;
}

/// Everything cmd `certify` reports for one model and (M, t).
struct CertificateReport {
  AssumptionReport assumptions;
  double threshold = 0.0;
  int dwell_time = 0;
  std::optional<SafetyCertificate> safety;
  std::optional<DwellCertificate> dwell;
  std::optional<EfficiencyCertificate> efficiency;
  std::string note;
};

inline CertificateReport certify_all(const SystemModel& sys,
                                     const DynamicController& primary,
                                     const DynamicController& fallback,
                                     const SupervisorConfig& cfg) {
  CertificateReport r;
  r.assumptions = check_assumptions(sys, primary, fallback);
  r.threshold = cfg.threshold;
  r.dwell_time = cfg.dwell;
  if (!r.assumptions.assumption1) {
    r.note = "fallback controller violates the stability assumption";
    return r;
  }
  r.safety = safety_certificate(sys, fallback, cfg.threshold);
  if (!r.assumptions.assumption2) {
    r.note = "primary controller is not stabilizing; safety bound only";
    return r;
  }
  r.efficiency = efficiency_certificate(sys, primary, fallback, cfg);
  r.dwell = r.efficiency->dwell;
  return r;
}

namespace detail {

inline void put_scalar(std::ostream& os, const char* name, double v) {
  os << "scalar " << name << ' ' << format_shortest(v) << '\n';
}
inline void put_flag(std::ostream& os, const char* name, bool v) {
  os << "flag " << name << ' ' << (v ? "true" : "false") << '\n';
}
inline void put_pair(std::ostream& os, const std::string& name,
                     const NormPair& p) {
  put_scalar(os, (name + ".similarity").c_str(), p.similarity);
  put_scalar(os, (name + ".congruence").c_str(), p.congruence);
}

}  // namespace detail

/// Key-value dump in the same literal family as model files.
inline void write_certificate_report(std::ostream& os,
                                     const CertificateReport& r) {
  using detail::put_flag;
  using detail::put_pair;
  using detail::put_scalar;
  os << "lqg-certificate v1\n";
  put_scalar(os, "M", r.threshold);
  os << "scalar t " << r.dwell_time << '\n';
  const auto& a = r.assumptions;
  put_scalar(os, "rho(calA0)", a.rho_cal_A0);
  put_scalar(os, "rho(A0)", a.rho_A0);
  put_scalar(os, "rho(calA1)", a.rho_cal_A1);
  put_scalar(os, "rho(A1)", a.rho_A1);
  put_flag(os, "assumption1", a.assumption1);
  put_flag(os, "assumption2", a.assumption2);
  if (!r.note.empty()) os << "note " << r.note << '\n';
  if (r.safety) {
    const auto& s = *r.safety;
    write_matrix_block(os, "matrix", "P0", s.P0.matrix());
    put_scalar(os, "rho0", s.rho0);
    put_scalar(os, "energy_bound", s.energy_bound);
    put_scalar(os, "cost_bound", s.cost_bound);
  }
  if (r.efficiency) {
    const auto& e = *r.efficiency;
    write_matrix_block(os, "matrix", "P", e.dwell.P.matrix());
    put_scalar(os, "rho", e.dwell.rho);
    os << "scalar t_min " << e.dwell.t_min << '\n';
    put_flag(os, "dwell_valid", e.dwell_valid);
    os << "scalar N " << e.N << '\n';
    write_matrix_block(os, "matrix", "SigmaTilde", e.SigmaTilde);
    write_matrix_block(os, "matrix", "P0_aug", e.P0_aug.matrix());
    put_scalar(os, "Qcal", e.Qcal);
    put_scalar(os, "rho_escape", e.rho_escape);
    put_flag(os, "rho_inflated", e.rho_inflated);
    put_scalar(os, "a0", e.a0);
    put_scalar(os, "Kcal", e.Kcal);
    put_flag(os, "threshold_valid", e.threshold_valid);
    put_pair(os, "||P0||_P", e.P0_in_P);
    put_pair(os, "||P0||_SigmaTilde^-1", e.P0_in_SigmaTildeInv);
    put_scalar(os, "fourth_moment_bound", e.fourth_moment_bound);
    put_scalar(os, "E(M/Kcal)", e.escape(e.threshold / e.Kcal));
    put_scalar(os, "switch_prob_bound", e.switch_prob_bound(e.threshold));
    put_scalar(os, "G", e.G(e.threshold, e.dwell_time));
    write_matrix_block(os, "matrix", "Qscr1", e.Q_scr1);
    write_matrix_block(os, "matrix", "Delta", e.Delta);
    put_pair(os, "c1", e.c1_pair);
    put_pair(os, "c2", e.c2_pair);
    put_pair(os, "||Delta||_P0", e.Delta_in_P0);
    put_scalar(os, "c1", e.c1);
    put_scalar(os, "c2", e.c2);
    put_scalar(os, "gap_bound", e.gap_bound(e.threshold));
    put_scalar(os, "corollary_rate", e.corollary_rate());
  }
}

}  // namespace safeswitch

#endif  // SAFESWITCH_CERTIFY_HPP
