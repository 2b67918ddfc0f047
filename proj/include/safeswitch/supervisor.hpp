#ifndef SAFESWITCH_SUPERVISOR_HPP
#define SAFESWITCH_SUPERVISOR_HPP

// Switching logic: apply the primary input unless it deviates from the
// fallback input by at least the threshold, in which case apply the
// fallback input for `dwell` consecutive steps (the triggering step
// included). Both controller states integrate the applied input.

#include <cstdint>
#include <limits>

#include "safeswitch/model.hpp"

namespace safeswitch {

struct SupervisorConfig {
  /// Switching threshold M; +infinity disables switching.
  double threshold = 1.0;
  /// Dwell time t.
  int dwell = 10;

  static constexpr double kNeverSwitch =
      std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(threshold > 0.0)) {
      throw InvalidArgumentError("switching threshold must be > 0");
    }
    if (dwell < 1) throw InvalidArgumentError("dwell time must be >= 1");
  }
};

struct SupervisorState {
  int xi = 0;  // remaining fallback steps
  Vector z0;
  Vector z1;
  std::int64_t k = 0;

  static SupervisorState initial(const DynamicController& primary,
                                 const DynamicController& fallback) {
    return {0, Vector::Zero(fallback.order()), Vector::Zero(primary.order()),
            0};
  }
};

struct StepDecision {
  Vector applied_input;
  Vector u1;
  Vector u0;
  double diff_norm = 0.0;  // ||u1 - u0||
  bool used_primary = false;
  bool triggered = false;
};

inline StepDecision decide(const SupervisorState& state,
                           const SupervisorConfig& cfg,
                           const DynamicController& primary,
                           const DynamicController& fallback) {
  if (state.z1.size() != primary.order() ||
      state.z0.size() != fallback.order()) {
    throw DimensionError("supervisor state does not match controller orders");
  }
  if (primary.Kc.rows() != fallback.Kc.rows()) {
    throw DimensionError("controllers disagree on input dimension");
  }
  StepDecision d;
  d.u1 = primary.Kc * state.z1;
  d.u0 = fallback.Kc * state.z0;
  d.diff_norm = (d.u1 - d.u0).norm();
  if (state.xi > 0) {
    d.applied_input = d.u0;
  } else if (cfg.threshold != SupervisorConfig::kNeverSwitch &&
             !(d.diff_norm < cfg.threshold)) {
    // Inclusive comparison; a NaN deviation (overflowed primary state) also
    // counts as a breach.
    d.triggered = true;
    d.applied_input = d.u0;
  } else {
    d.used_primary = true;
    d.applied_input = d.u1;
  }
  return d;
}

inline SupervisorState advance(const SupervisorState& state,
                               const StepDecision& decision,
                               const SupervisorConfig& cfg,
                               const DynamicController& primary,
                               const DynamicController& fallback,
                               const Vector& y) {
  if (y.size() != primary.Lc.cols() || y.size() != fallback.Lc.cols()) {
    throw DimensionError("measurement dimension does not match controllers");
  }
  if (decision.applied_input.size() != primary.Bc.cols()) {
    throw DimensionError("applied input dimension does not match controllers");
  }
  const Vector& u = decision.applied_input;
  SupervisorState next;
  next.z1 = primary.Ac * state.z1 + primary.Bc * u + primary.Lc * y;
  next.z0 = fallback.Ac * state.z0 + fallback.Bc * u + fallback.Lc * y;
  const int xi = decision.triggered ? cfg.dwell : state.xi;
  next.xi = xi > 0 ? xi - 1 : 0;
  next.k = state.k + 1;
  return next;
}

}  // namespace safeswitch

#endif  // SAFESWITCH_SUPERVISOR_HPP
