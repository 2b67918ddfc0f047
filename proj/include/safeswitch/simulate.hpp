#ifndef SAFESWITCH_SIMULATE_HPP
#define SAFESWITCH_SIMULATE_HPP

// Seeded closed-loop rollouts of the plant under the switching supervisor
// (or a single controller), Monte Carlo aggregation with common random
// numbers, and the transformed-sequence view that collapses every fallback
// block into one step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "safeswitch/model.hpp"
#include "safeswitch/supervisor.hpp"

namespace safeswitch {

/// Deterministic stream of (w, v) with w ~ N(0,W), v ~ N(0,V). Each step
/// draws n standard normals for w, then p for v, and colours them with the
/// lower Cholesky factors of W and V.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, const Matrix& w_cov, const Matrix& v_cov,
              bool zero_noise = false)
      : rng_(seed), zero_(zero_noise) {
    Eigen::LLT<Matrix> lw(w_cov), lv(v_cov);
    if (lw.info() != Eigen::Success || lv.info() != Eigen::Success) {
      throw InvalidArgumentError("noise covariances must be positive definite");
    }
    lw_ = lw.matrixL();
    lv_ = lv.matrixL();
    ew_.resize(lw_.rows());
    ev_.resize(lv_.rows());
  }

  void next(Vector& w, Vector& v) {
    if (zero_) {
      w.setZero(lw_.rows());
      v.setZero(lv_.rows());
      return;
    }
    for (Eigen::Index i = 0; i < ew_.size(); ++i) ew_(i) = draw();
    for (Eigen::Index i = 0; i < ev_.size(); ++i) ev_(i) = draw();
    w.noalias() = lw_ * ew_;
    v.noalias() = lv_ * ev_;
  }

  /// FNV-1a over the bit patterns of every standard normal drawn so far.
  std::uint64_t checksum() const { return checksum_; }

 private:
  double draw() {
    const double x = normal_(rng_);
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      checksum_ ^= (bits >> (8 * b)) & 0xffu;
      checksum_ *= 0x100000001b3ull;
    }
    return x;
  }

  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  bool zero_;
  Matrix lw_, lv_;
  Vector ew_, ev_;
  std::uint64_t checksum_ = 0xcbf29ce484222325ull;
};

struct RolloutOptions {
  /// Initial plant state; empty means zero.
  Vector x0;
  bool zero_noise = false;
  /// Keep per-step traces (costs, norms, modes).
  bool record_trace = true;
  /// Keep the stacked state [x; z0; z1] (or [x; z] unswitched) at every step.
  bool record_states = false;
  /// Leading steps excluded from empirical_cost.
  std::int64_t burn_in = 0;
  /// When non-empty, fourth_moment is the time average of (X' W X)^2 over
  /// the stacked state X with this weight.
  Matrix moment_weight;
  /// Plant state norm at which the run stops and is flagged as diverged.
  double divergence_limit = 1e150;
};

struct SwitchEvent {
  std::int64_t k;
  /// true: fallback engaged by a trigger at k; false: primary resumed at k.
  bool triggered;
};

struct RolloutResult {
  std::int64_t horizon = 0;
  std::int64_t steps = 0;  // completed steps (< horizon only if diverged)
  bool switched = true;

  std::vector<double> stage_costs;
  std::vector<double> state_norms;
  std::vector<double> u_diff_norms;
  std::vector<std::uint8_t> used_primary;
  std::vector<std::uint8_t> triggered;
  std::vector<SwitchEvent> events;
  std::vector<Vector> states;

  double empirical_cost = 0.0;
  double fallback_fraction = 0.0;
  double max_state_norm = 0.0;
  double fourth_moment = std::numeric_limits<double>::quiet_NaN();
  std::int64_t trigger_count = 0;

  bool diverged = false;
  std::int64_t diverged_at = -1;
  std::string diagnostic;
  std::uint64_t noise_checksum = 0;
};

namespace detail {

inline RolloutResult run_loop(const SystemModel& sys,
                              const DynamicController& primary,
                              const DynamicController* fallback,
                              const SupervisorConfig& cfg, std::uint64_t seed,
                              std::int64_t horizon,
                              const RolloutOptions& opts) {
  if (horizon < 1) throw InvalidArgumentError("horizon must be >= 1");
  sys.validate();
  primary.validate_against(sys, "primary");
  if (fallback) {
    fallback->validate_against(sys, "fallback");
    cfg.validate();
  }
  const auto n = sys.n();
  Vector x = opts.x0.size() ? opts.x0 : Vector::Zero(n);
  if (x.size() != n) throw DimensionError("x0 has wrong dimension");

  const Eigen::Index stacked =
      n + primary.order() + (fallback ? fallback->order() : 0);
  const bool want_moment = opts.moment_weight.size() > 0;
  if (want_moment) {
    require_shape(opts.moment_weight, stacked, stacked, "moment weight");
  }

  RolloutResult res;
  res.horizon = horizon;
  res.switched = fallback != nullptr;
  if (opts.record_trace) {
    res.stage_costs.reserve(horizon);
    res.state_norms.reserve(horizon);
    res.u_diff_norms.reserve(horizon);
    res.used_primary.reserve(horizon);
    res.triggered.reserve(horizon);
  }
  if (opts.record_states) res.states.reserve(horizon);

  NoiseStream noise(seed, sys.W, sys.V, opts.zero_noise);
  SupervisorState st;
  Vector z;  // unswitched controller state
  if (fallback) {
    st = SupervisorState::initial(primary, *fallback);
  } else {
    z = Vector::Zero(primary.order());
  }

  Vector w, v, y, u, stacked_x(stacked);
  double cost_sum = 0.0, moment_sum = 0.0;
  std::int64_t fallback_steps = 0, cost_steps = 0;
  bool prev_primary = true;
  res.max_state_norm = x.norm();

  for (std::int64_t k = 0; k < horizon; ++k) {
    bool used_primary = true;
    bool trig = false;
    double diff = 0.0;
    StepDecision d;
    if (fallback) {
      d = decide(st, cfg, primary, *fallback);
      u = d.applied_input;
      used_primary = d.used_primary;
      trig = d.triggered;
      diff = d.diff_norm;
    } else {
      u = primary.Kc * z;
    }

    if (opts.record_states || want_moment) {
      if (fallback) {
        stacked_x << x, st.z0, st.z1;
      } else {
        stacked_x << x, z;
      }
      if (want_moment) {
        const double q = stacked_x.dot(opts.moment_weight * stacked_x);
        moment_sum += q * q;
      }
      if (opts.record_states) res.states.push_back(stacked_x);
    }

    const double xnorm = x.norm();
    const double stage = x.dot(sys.Q * x) + u.dot(sys.R * u);
    if (k >= opts.burn_in) {
      cost_sum += stage;
      ++cost_steps;
    }
    if (!used_primary) ++fallback_steps;
    if (trig) ++res.trigger_count;
    if (fallback && used_primary != prev_primary) {
      res.events.push_back({k, trig});
    }
    prev_primary = used_primary;
    if (opts.record_trace) {
      res.stage_costs.push_back(stage);
      res.state_norms.push_back(xnorm);
      res.u_diff_norms.push_back(diff);
      res.used_primary.push_back(used_primary ? 1 : 0);
      res.triggered.push_back(trig ? 1 : 0);
    }

    noise.next(w, v);
    y = sys.C * x + v;
    if (fallback) {
      st = advance(st, d, cfg, primary, *fallback, y);
    } else {
      z = primary.Ac * z + primary.Bc * u + primary.Lc * y;
    }
    x = sys.A * x + sys.B * u + w;
    res.steps = k + 1;

    const double next_norm = x.norm();
    res.max_state_norm = std::max(res.max_state_norm, next_norm);
    if (!(next_norm <= opts.divergence_limit)) {
      res.diverged = true;
      res.diverged_at = k + 1;
      res.max_state_norm = std::numeric_limits<double>::infinity();
      res.diagnostic = "plant state norm exceeded " +
                       std::to_string(opts.divergence_limit) + " at step " +
                       std::to_string(k + 1) + "; closed loop diverged";
      break;
    }
  }

  res.noise_checksum = noise.checksum();
  res.fallback_fraction =
      static_cast<double>(fallback_steps) / static_cast<double>(res.steps);
  if (res.diverged) {
    res.empirical_cost = std::numeric_limits<double>::infinity();
  } else {
    res.empirical_cost =
        cost_steps ? cost_sum / static_cast<double>(cost_steps) : 0.0;
  }
  if (want_moment) {
    res.fourth_moment = res.diverged
                            ? std::numeric_limits<double>::infinity()
                            : moment_sum / static_cast<double>(res.steps);
  }
  return res;
}

}  // namespace detail

/// Closed loop under the switching supervisor.
inline RolloutResult rollout_switched(const SystemModel& sys,
                                      const DynamicController& primary,
                                      const DynamicController& fallback,
                                      const SupervisorConfig& cfg,
                                      std::uint64_t seed, std::int64_t horizon,
                                      const RolloutOptions& opts = {}) {
  return detail::run_loop(sys, primary, &fallback, cfg, seed, horizon, opts);
}

/// Closed loop under one controller. Consumes the same noise stream as
/// rollout_switched for a given seed.
inline RolloutResult rollout_unswitched(const SystemModel& sys,
                                        const DynamicController& controller,
                                        std::uint64_t seed,
                                        std::int64_t horizon,
                                        const RolloutOptions& opts = {}) {
  return detail::run_loop(sys, controller, nullptr, SupervisorConfig{}, seed,
                          horizon, opts);
}

/// Stationary average cost tr(X Qscr) of x+ = scrA x + noise(Sigma), with X
/// the stationary covariance.
inline double estimate_cost_analytic(const Matrix& scr_a, const Matrix& sigma,
                                     const Matrix& q_scr) {
  require_shape(q_scr, scr_a.rows(), scr_a.rows(), "Qscr");
  const Matrix x = solve_dlyap(scr_a, sigma);
  return (x * q_scr).trace();
}

struct MonteCarloOptions {
  int n_traj = 100;
  std::int64_t horizon = 1000;
  std::uint64_t base_seed = 0;
  RolloutOptions rollout;
  /// 0 = hardware concurrency.
  unsigned threads = 0;
};

struct PairedOutcome {
  std::uint64_t seed = 0;
  double switched_cost = 0.0;
  double primary_cost = 0.0;
  double fallback_fraction = 0.0;
  double fourth_moment = std::numeric_limits<double>::quiet_NaN();
  bool switched_diverged = false;
  bool primary_diverged = false;
};

struct MonteCarloSummary {
  int n_traj = 0;
  double mean_switched_cost = 0.0;
  double mean_primary_cost = 0.0;
  double switched_cost_std_error = 0.0;
  double primary_cost_std_error = 0.0;
  /// Paired estimate of J - J1 and its standard error.
  double gap = 0.0;
  double gap_std_error = 0.0;
  double relative_gap = 0.0;
  double relative_gap_std_error = 0.0;
  double mean_fallback_fraction = 0.0;
  double mean_fourth_moment = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> diverged;  // trajectory indices with any divergence
  std::vector<PairedOutcome> outcomes;
};

namespace detail {

struct MeanSe {
  double mean, se;
};

inline MeanSe mean_and_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  const double mean = s / n;
  if (xs.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

template <typename Fn>
void parallel_for(int count, unsigned threads, Fn&& fn) {
  unsigned nw = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  nw = std::min<unsigned>(nw, static_cast<unsigned>(std::max(count, 1)));
  if (nw <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(nw);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (unsigned wk = 0; wk < nw; ++wk) {
    pool.emplace_back([&, wk] {
      try {
        for (int i = static_cast<int>(wk); i < count; i += static_cast<int>(nw))
          fn(i);
      } catch (...) {
        errors[wk] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Seed-matched switched/unswitched pairs with seeds base_seed + i. The
/// reduction runs in trajectory order, so results do not depend on
/// scheduling.
inline MonteCarloSummary monte_carlo(const SystemModel& sys,
                                     const DynamicController& primary,
                                     const DynamicController& fallback,
                                     const SupervisorConfig& cfg,
                                     const MonteCarloOptions& mc) {
  if (mc.n_traj < 1) throw InvalidArgumentError("n_traj must be >= 1");
  RolloutOptions ro = mc.rollout;
  ro.record_trace = false;
  ro.record_states = false;
  RolloutOptions ro_primary = ro;
  ro_primary.moment_weight.resize(0, 0);

  MonteCarloSummary out;
  out.n_traj = mc.n_traj;
  out.outcomes.resize(mc.n_traj);
  detail::parallel_for(mc.n_traj, mc.threads, [&](int i) {
    const std::uint64_t seed = mc.base_seed + static_cast<std::uint64_t>(i);
    const auto sw =
        rollout_switched(sys, primary, fallback, cfg, seed, mc.horizon, ro);
    const auto un =
        rollout_unswitched(sys, primary, seed, mc.horizon, ro_primary);
    PairedOutcome& o = out.outcomes[i];
    o.seed = seed;
    o.switched_cost = sw.empirical_cost;
    o.primary_cost = un.empirical_cost;
    o.fallback_fraction = sw.fallback_fraction;
    o.fourth_moment = sw.fourth_moment;
    o.switched_diverged = sw.diverged;
    o.primary_diverged = un.diverged;
  });

  std::vector<double> js, j1, diff, frac, mom;
  for (int i = 0; i < mc.n_traj; ++i) {
    const auto& o = out.outcomes[i];
    if (o.switched_diverged || o.primary_diverged) out.diverged.push_back(i);
    js.push_back(o.switched_cost);
    j1.push_back(o.primary_cost);
    diff.push_back(o.switched_cost - o.primary_cost);
    frac.push_back(o.fallback_fraction);
    mom.push_back(o.fourth_moment);
  }
  const auto a = detail::mean_and_se(js);
  const auto b = detail::mean_and_se(j1);
  const auto g = detail::mean_and_se(diff);
  out.mean_switched_cost = a.mean;
  out.switched_cost_std_error = a.se;
  out.mean_primary_cost = b.mean;
  out.primary_cost_std_error = b.se;
  out.gap = g.mean;
  out.gap_std_error = g.se;
  out.relative_gap = g.mean / b.mean;
  out.relative_gap_std_error = g.se / b.mean;
  out.mean_fallback_fraction = detail::mean_and_se(frac).mean;
  if (ro.moment_weight.size() > 0) {
    out.mean_fourth_moment = detail::mean_and_se(mom).mean;
  }
  return out;
}

enum class TransformedLabel { kPrimaryStep, kFallbackBlock };

/// Subsequence i(0) = 0, i(j+1) = i(j) + 1 after a primary step and
/// i(j) + t after a fallback block.
struct TransformedTrace {
  std::vector<std::int64_t> indices;
  std::vector<TransformedLabel> labels;
  std::vector<Vector> states;
};

inline TransformedTrace extract_transformed(const RolloutResult& result,
                                            const SupervisorConfig& cfg) {
  if (!result.switched) {
    throw InvalidArgumentError("transformed trace needs a switched rollout");
  }
  if (result.states.size() != static_cast<std::size_t>(result.steps) ||
      result.used_primary.size() != static_cast<std::size_t>(result.steps)) {
    throw InvalidArgumentError(
        "transformed trace unavailable: rollout did not record full states "
        "and trace");
  }
  TransformedTrace tr;
  std::int64_t i = 0;
  while (i < result.steps) {
    tr.indices.push_back(i);
    tr.states.push_back(result.states[i]);
    if (result.used_primary[i]) {
      tr.labels.push_back(TransformedLabel::kPrimaryStep);
      i += 1;
    } else {
      if (!result.triggered[i]) {
        throw Error("fallback block at step " + std::to_string(i) +
                    " does not start with a trigger");
      }
      const std::int64_t end = std::min(i + cfg.dwell, result.steps);
      for (std::int64_t s = i; s < end; ++s) {
        if (result.used_primary[s]) {
          throw Error("fallback block starting at " + std::to_string(i) +
                      " is shorter than the dwell time");
        }
      }
      tr.labels.push_back(TransformedLabel::kFallbackBlock);
      i += cfg.dwell;
    }
  }
  return tr;
}

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// CSV columns: k, state_norm, applied_primary, stage_cost, u_diff_norm.
inline void write_trajectory_csv(std::ostream& os, const RolloutResult& r) {
  if (r.stage_costs.size() != static_cast<std::size_t>(r.steps)) {
    throw InvalidArgumentError("rollout did not record a trace");
  }
  os << "k,state_norm,applied_primary,stage_cost,u_diff_norm\n";
  for (std::int64_t k = 0; k < r.steps; ++k) {
    os << k << ',' << format_g17(r.state_norms[k]) << ','
       << static_cast<int>(r.used_primary[k]) << ','
       << format_g17(r.stage_costs[k]) << ',' << format_g17(r.u_diff_norms[k])
       << '\n';
  }
}

}  // namespace safeswitch

#endif  // SAFESWITCH_SIMULATE_HPP
