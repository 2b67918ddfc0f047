// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance <id>...    run the listed criteria (1..7)
//
// Exit status is 0 iff every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "safeswitch/safeswitch.hpp"

namespace {

using namespace safeswitch;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = nd(rng);
  return g * g.transpose() + 0.5 * Matrix::Identity(n, n);
}

// ---------------------------------------------------------------------------
// 1. Solver correctness.

Outcome solver_correctness() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  double worst_lyap = 0.0, worst_dare = 0.0, worst_cl = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int n = 1 + i % 12;
    const int m = 1 + i % 3;
    const int p = 1 + (i / 3) % 4;
    const SystemModel sys = random_stable_system(1000 + i, n, m, p, unif(rng));
    const Matrix q = random_spd(rng, n);
    const Matrix pl = solve_dlyap_transpose(sys.A, q);
    worst_lyap = std::max(worst_lyap,
                          (sys.A.transpose() * pl * sys.A - pl + q).norm() /
                              q.norm());
    const Matrix xl = solve_dlyap(sys.A, q);
    worst_lyap = std::max(worst_lyap,
                          (sys.A * xl * sys.A.transpose() - xl + q).norm() /
                              q.norm());
    const SpdMatrix pd = solve_dare(sys.A, sys.B, sys.Q, sys.R);
    worst_dare = std::max(
        worst_dare,
        dare_residual(sys.A, sys.B, sys.Q, sys.R, pd).norm() / pd.matrix().norm());
    const SpdMatrix sd =
        solve_dare(sys.A.transpose(), sys.C.transpose(), sys.W, sys.V);
    worst_dare = std::max(worst_dare,
                          dare_residual(sys.A.transpose(), sys.C.transpose(),
                                        sys.W, sys.V, sd)
                                  .norm() /
                              sd.matrix().norm());
    const auto c = synth_optimal_controller(sys);
    worst_cl = std::max({worst_cl, spectral_radius(sys.A + sys.B * c.Kc),
                         spectral_radius(sys.A - c.Lc * sys.C)});
  }
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  const double lyap_err =
      std::abs(solve_dlyap_transpose(Matrix::Constant(1, 1, 0.5), one)(0, 0) -
               4.0 / 3.0);
  const double lyap_err2 = std::abs(
      solve_dlyap_transpose(Matrix::Constant(1, 1, 0.9), 2.0 * one)(0, 0) -
      2.0 / 0.19);
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const double dare_err =
      std::abs(solve_dare(one, one, one, one).matrix()(0, 0) - phi);
  const double scalar_err = std::max({lyap_err, lyap_err2 / 10.0, dare_err});

  Outcome o;
  o.pass = worst_lyap <= 1e-10 && worst_dare <= 1e-8 && worst_cl < 1.0 &&
           scalar_err <= 1e-12;
  o.detail = "max Lyapunov residual/||Q|| " + fmt(worst_lyap) +
             ", max DARE residual/||P|| " + fmt(worst_dare) +
             ", max closed-loop radius " + fmt(worst_cl) +
             ", scalar oracle error " + fmt(scalar_err);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Supervisor equals a straight-line transcription of the switching rule.

DynamicController random_controller(std::mt19937_64& rng, int k, int m, int p,
                                    ControllerRole role) {
  std::normal_distribution<double> nd(0.0, 0.6);
  auto draw = [&](int r, int c) {
    Matrix out(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out(i, j) = nd(rng);
    return out;
  };
  return {draw(k, k) * 0.5, draw(k, m), draw(k, p), draw(m, k), role};
}

struct StraightLine {
  std::vector<Vector> inputs;
  std::vector<int> modes;  // 1 primary, 0 fallback
  std::vector<int> triggers;
};

StraightLine straight_line(const DynamicController& c1,
                           const DynamicController& c0, double M, int t,
                           const std::vector<Vector>& ys) {
  StraightLine out;
  int xi = 0;
  Vector z0 = Vector::Zero(c0.order());
  Vector z1 = Vector::Zero(c1.order());
  for (const Vector& y : ys) {
    const Vector u1 = c1.Kc * z1;
    const Vector u0 = c0.Kc * z0;
    Vector u;
    int trig = 0;
    if (xi == 0) {
      if ((u1 - u0).norm() >= M) {
        xi = t;
        u = u0;
        trig = 1;
      } else {
        u = u1;
      }
    } else {
      u = u0;
    }
    out.inputs.push_back(u);
    out.modes.push_back(xi == 0 ? 1 : 0);
    out.triggers.push_back(trig);
    z1 = c1.Ac * z1 + c1.Bc * u + c1.Lc * y;
    z0 = c0.Ac * z0 + c0.Bc * u + c0.Lc * y;
    xi = std::max(xi - 1, 0);
  }
  return out;
}

Outcome supervisor_equivalence() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 3), dwell(1, 15);
  std::uniform_real_distribution<double> thr(0.05, 3.0);
  std::normal_distribution<double> nd;
  int mismatches = 0, contract_violations = 0;
  long triggers = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int m = dim(rng), p = dim(rng);
    const auto c1 = random_controller(rng, dim(rng), m, p, ControllerRole::kPrimary);
    const auto c0 = random_controller(rng, dim(rng), m, p, ControllerRole::kFallback);
    const SupervisorConfig cfg{thr(rng), dwell(rng)};
    std::vector<Vector> ys(100, Vector(p));
    for (auto& y : ys)
      for (int i = 0; i < p; ++i) y(i) = nd(rng);

    const StraightLine ref = straight_line(c1, c0, cfg.threshold, cfg.dwell, ys);
    SupervisorState st = SupervisorState::initial(c1, c0);
    std::vector<int> modes, trig;
    bool same = true;
    for (std::size_t k = 0; k < ys.size(); ++k) {
      const StepDecision d = decide(st, cfg, c1, c0);
      same = same && d.applied_input.size() == ref.inputs[k].size() &&
             std::memcmp(d.applied_input.data(), ref.inputs[k].data(),
                         sizeof(double) * d.applied_input.size()) == 0 &&
             static_cast<int>(d.used_primary) == ref.modes[k] &&
             static_cast<int>(d.triggered) == ref.triggers[k];
      modes.push_back(d.used_primary);
      trig.push_back(d.triggered);
      st = advance(st, d, cfg, c1, c0, ys[k]);
    }
    if (!same) ++mismatches;
    // Dwell contract: each trigger opens a run of exactly t fallback steps
    // (truncated at the horizon) and fallback steps never occur otherwise.
    std::size_t k = 0;
    while (k < modes.size()) {
      if (modes[k]) {
        ++k;
        continue;
      }
      if (!trig[k]) {
        ++contract_violations;
        break;
      }
      ++triggers;
      const std::size_t end = std::min(modes.size(), k + cfg.dwell);
      for (std::size_t s = k; s < end; ++s)
        if (modes[s] || (s > k && trig[s])) ++contract_violations;
      k = end;
    }
  }
  Outcome o;
  o.pass = mismatches == 0 && contract_violations == 0 && triggers > 0;
  o.detail = "10000 traces x 100 steps, " + std::to_string(mismatches) +
             " mismatching traces, " + std::to_string(contract_violations) +
             " dwell violations, " + std::to_string(triggers) + " triggers";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Safety bound with destabilizing primaries.

struct Dims {
  int n, m, p;
};

const std::vector<Dims> kSafetyDims = {{2, 1, 2}, {2, 1, 1}, {2, 2, 2},
                                       {4, 2, 3}, {4, 1, 2}, {4, 2, 2},
                                       {4, 3, 4}, {8, 4, 10}, {8, 2, 4},
                                       {8, 3, 6}};

Outcome safety_bound() {
  int bound_ok = 0, blowups = 0;
  std::string worst;
  double worst_ratio = 0.0;
  double rho_lo = 1e9, rho_hi = 0.0;
  for (std::size_t i = 0; i < kSafetyDims.size(); ++i) {
    const Dims d = kSafetyDims[i];
    const SystemModel sys = random_stable_system(500 + i, d.n, d.m, d.p, 0.9);
    const auto opt = synth_optimal_controller(sys);
    const auto fb = zero_controller(sys);
    const double lam = perturbation_for_radius(sys, opt, fb, 1.05);
    const auto primary = perturb_controller(opt, lam);
    const double rho = spectral_radius(build_scr_A1(sys, primary, fb));
    rho_lo = std::min(rho_lo, rho);
    rho_hi = std::max(rho_hi, rho);
    const SupervisorConfig cfg{1.0, 10};
    const auto cert = safety_certificate(sys, fb, cfg.threshold);

    MonteCarloOptions mc;
    mc.n_traj = 50;
    mc.horizon = 10000;
    mc.base_seed = 9000;
    RolloutOptions ro;
    ro.record_trace = false;
    double sum = 0.0;
    for (int s = 0; s < mc.n_traj; ++s) {
      sum += rollout_switched(sys, primary, fb, cfg, mc.base_seed + s,
                              mc.horizon, ro)
                 .empirical_cost;
    }
    const double mean_cost = sum / mc.n_traj;
    const double ratio = mean_cost / cert.cost_bound;
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst = "n=" + std::to_string(d.n);
    }
    if (mean_cost <= cert.cost_bound) ++bound_ok;
    const auto un = rollout_unswitched(sys, primary, mc.base_seed, mc.horizon, ro);
    if (un.max_state_norm > 1e6) ++blowups;
  }
  Outcome o;
  o.pass = bound_ok == static_cast<int>(kSafetyDims.size()) && blowups >= 8 &&
           rho_lo >= 1.0 && rho_hi <= 1.1;
  o.detail = std::to_string(bound_ok) + "/10 below bound (max cost/bound " +
             fmt(worst_ratio) + " at " + worst + "), unswitched > 1e6 on " +
             std::to_string(blowups) + "/10, rho(scrA1) in [" + fmt(rho_lo) +
             ", " + fmt(rho_hi) + "]";
  return o;
}

// ---------------------------------------------------------------------------
// 4. Switching probability.

Outcome switching_probability() {
  const std::vector<Dims> dims = {{2, 1, 2}, {3, 1, 2}, {4, 2, 3}, {3, 2, 2},
                                  {5, 2, 3}};
  int ok = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const Dims d = dims[i];
    const SystemModel sys = random_stable_system(700 + i, d.n, d.m, d.p, 0.9);
    const auto primary = synth_optimal_controller(sys);
    const auto fb = zero_controller(sys);
    const auto dw = dwell_certificate(sys, primary, fb);
    const auto probe = efficiency_certificate(sys, primary, fb, {1.0, dw.t_min});
    const SupervisorConfig cfg{probe.a0 * probe.Kcal, dw.t_min};
    const auto e = efficiency_certificate(sys, primary, fb, cfg);
    if (!e.valid()) continue;
    MonteCarloOptions mc;
    mc.n_traj = 20;
    mc.horizon = 2000;
    mc.base_seed = 4000;
    const auto r = monte_carlo(sys, primary, fb, cfg, mc);
    const double bound = e.switch_prob_bound(cfg.threshold, cfg.dwell);
    if (r.mean_fallback_fraction <= bound) ++ok;
    worst = std::max(worst, r.mean_fallback_fraction - bound);
  }
  Outcome o;
  o.pass = ok == static_cast<int>(dims.size());
  o.detail = std::to_string(ok) + "/" + std::to_string(dims.size()) +
             " instances with fallback fraction <= t*E(M/K) at M = a0*K, "
             "t = t_min; max excess " + fmt(worst);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Decay of the cost gap in M.

Outcome decay_shape() {
  const SystemModel sys = random_stable_system(0, 4, 2, 3, 0.9);
  const auto primary = synth_optimal_controller(sys);
  const auto fb = zero_controller(sys);
  const int t = 10;
  const auto grid = ThresholdGrid{0.5, 3.0, 8, true}.values();

  std::vector<double> rel, rel_se;
  for (double m : grid) {
    MonteCarloOptions mc;
    mc.n_traj = 1000;
    mc.horizon = 1000;
    mc.base_seed = 0;
    const auto r = monte_carlo(sys, primary, fb, {m, t}, mc);
    rel.push_back(r.relative_gap);
    rel_se.push_back(r.relative_gap_std_error);
  }
  int violations = 0;
  for (std::size_t i = 0; i + 1 < rel.size(); ++i) {
    const double tol = 3.0 * std::hypot(rel_se[i], rel_se[i + 1]);
    if (rel[i + 1] > rel[i] + tol) ++violations;
  }

  const auto e = efficiency_certificate(sys, primary, fb, {grid.front(), t});
  // Least-squares slope of log gap_bound against M^2.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double m : grid) {
    const double x = m * m;
    const double y = std::log(e.gap_bound(m, t));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(grid.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  const double c = e.corollary_rate();
  const bool slope_ok = std::abs(slope + c) <= 1e-9;

  std::string seq;
  for (double v : rel) seq += (seq.empty() ? "" : " ") + fmt(v);
  Outcome o;
  o.pass = violations == 0 && slope_ok;
  o.detail = std::string("paired sweep ") +
             (violations == 0 ? "PASS" : "FAIL") + ": relative gap [" + seq +
             "], " + std::to_string(violations) +
             " increases beyond 3 paired SE; analytic slope " +
             (slope_ok ? "PASS" : "FAIL") + ": regression slope " +
             fmt(slope) + " vs -c = " + fmt(-c) + " (slope/(-c) = " +
             fmt(slope / -c) + ", |diff| " + fmt(std::abs(slope + c)) +
             ", tolerance 1e-9)";
  return o;
}

// ---------------------------------------------------------------------------
// 6. Stationary cost.

Outcome stationary_cost() {
  int ok = 0;
  double worst_z = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int n = 2 + i % 4;
    const SystemModel sys =
        random_stable_system(300 + i, n, 1 + i % 2, 1 + i % 3, 0.6 + 0.03 * i);
    const auto c = synth_optimal_controller(sys);
    const auto fb = zero_controller(sys);
    const double analytic = estimate_cost_analytic(
        build_scr_A1(sys, c, fb), build_Sigma(sys, c, fb),
        build_Q_scr1(sys, c, fb));
    RolloutOptions ro;
    ro.record_trace = false;
    ro.burn_in = 200;
    std::vector<double> costs;
    for (int s = 0; s < 40; ++s) {
      costs.push_back(
          rollout_unswitched(sys, c, 6000 + s, 2200, ro).empirical_cost);
    }
    double mean = 0.0, ss = 0.0;
    for (double v : costs) mean += v;
    mean /= costs.size();
    for (double v : costs) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (costs.size() - 1) / costs.size());
    const double z = std::abs(mean - analytic) / se;
    worst_z = std::max(worst_z, z);
    if (z <= 3.0) ++ok;
  }
  Outcome o;
  o.pass = ok == 10;
  o.detail = std::to_string(ok) +
             "/10 instances within 3 SE of the analytic cost (max |z| " +
             fmt(worst_z) + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 7. Determinism of the command-line tool.

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::map<std::string, std::uint64_t> hash_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::ifstream is(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    out[entry.path().filename().string()] = fnv1a(ss.str());
  }
  return out;
}

Outcome cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "safeswitch_acceptance";
  fs::remove_all(root);
  const std::string cli = SAFESWITCH_CLI_PATH;
  const std::string common = " --gen 11,3,1,2,0.9 --seed 5";
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"synth", " --lambda 0.05"},
      {"certify", ""},
      {"compare", " --T 2000 --M 0.5"},
      {"sweep", " --traj 40 --T 300 --M-grid 0.2:2:4"},
      {"check", " --traj 8 --T 200"},
  };
  int identical = 0;
  std::string bad;
  for (const auto& [name, extra] : cmds) {
    std::map<std::string, std::uint64_t> hashes[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / (name + std::to_string(run));
      fs::create_directories(out);
      // Second run with a different worker count.
      const std::string cmd = "\"" + cli + "\" " + name + common + extra +
                              " --threads " + (run ? "3" : "1") + " --out \"" +
                              out.string() + "\" > /dev/null 2>&1";
      const int rc = std::system(cmd.c_str());
      (void)rc;
      hashes[run] = hash_dir(out);
    }
    if (!hashes[0].empty() && hashes[0] == hashes[1]) {
      ++identical;
    } else {
      bad += " " + name;
    }
  }
  Outcome o;
  o.pass = identical == static_cast<int>(cmds.size());
  o.detail = std::to_string(identical) + "/" + std::to_string(cmds.size()) +
             " commands byte-identical across reruns" +
             (bad.empty() ? "" : " (differs:" + bad + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"solver correctness", solver_correctness},
      {"supervisor oracle equivalence", supervisor_equivalence},
      {"safety cost bound", safety_bound},
      {"switching probability bound", switching_probability},
      {"gap decay shape", decay_shape},
      {"stationary cost oracle", stationary_cost},
      {"cli determinism", cli_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(all.size()); ++i) selected.push_back(i);

  bool all_pass = true;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    const auto& [name, fn] = all[id - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " ("
              << name << ", " << fmt(secs) << " s): " << o.detail << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
