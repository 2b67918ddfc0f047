#ifndef SAFESWITCH_EXPERIMENTS_HPP
#define SAFESWITCH_EXPERIMENTS_HPP

// Experiment drivers behind the command-line tool. Each command resolves a
// model, writes its artifacts into the output directory and returns the
// process exit code: 0 success, 1 usage or I/O error, 2 a stability
// assumption failed (partial output may still have been written).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "safeswitch/certify.hpp"
#include "safeswitch/model_io.hpp"
#include "safeswitch/simulate.hpp"

namespace safeswitch {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitAssumption = 2;

struct GeneratorSpec {
  std::uint64_t seed = 0;
  int n = 4, m = 2, p = 3;
  double rho = 0.9;
};

/// "seed,n,m,p,rho"
inline GeneratorSpec parse_generator_spec(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (parts.size() != 5) {
    throw InvalidArgumentError("--gen expects seed,n,m,p,rho, got '" + text +
                               "'");
  }
  try {
    GeneratorSpec g;
    g.seed = std::stoull(parts[0]);
    g.n = std::stoi(parts[1]);
    g.m = std::stoi(parts[2]);
    g.p = std::stoi(parts[3]);
    g.rho = std::stod(parts[4]);
    return g;
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("--gen expects seed,n,m,p,rho, got '" + text +
                               "'");
  }
}

struct ThresholdGrid {
  double lo = 0.5;
  double hi = 3.0;
  int steps = 8;
  bool log_spaced = true;

  std::vector<double> values() const {
    std::vector<double> out;
    if (steps == 1) return {lo};
    for (int i = 0; i < steps; ++i) {
      const double f = static_cast<double>(i) / (steps - 1);
      out.push_back(log_spaced ? lo * std::pow(hi / lo, f)
                               : lo + (hi - lo) * f);
    }
    return out;
  }
};

/// "lo:hi:steps" (log-spaced) or "lo:hi:steps:lin".
inline ThresholdGrid parse_threshold_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  ThresholdGrid g;
  try {
    if (parts.size() < 3 || parts.size() > 4) throw std::invalid_argument("");
    g.lo = std::stod(parts[0]);
    g.hi = std::stod(parts[1]);
    g.steps = std::stoi(parts[2]);
    if (parts.size() == 4) {
      if (parts[3] == "lin") g.log_spaced = false;
      else if (parts[3] != "log") throw std::invalid_argument("");
    }
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("--M-grid expects lo:hi:steps[:log|:lin], got '" +
                               text + "'");
  }
  if (g.steps < 1 || !(g.lo > 0.0) || !(g.hi >= g.lo)) {
    throw InvalidArgumentError("--M-grid needs 0 < lo <= hi and steps >= 1");
  }
  return g;
}

struct ExperimentConfig {
  std::optional<std::string> model_path;
  std::optional<GeneratorSpec> generator;
  double threshold = 1.0;
  std::optional<ThresholdGrid> grid;
  int dwell = 10;
  std::int64_t horizon = 1000;
  int n_traj = 100;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool zero_noise = false;
  std::optional<double> lambda;
  /// Multiplies every theoretical value in `check`; harness self-test hook.
  double bound_scale = 1.0;
  unsigned threads = 0;

  void validate() const {
    if (model_path && generator) {
      throw InvalidArgumentError("--model and --gen are mutually exclusive");
    }
    if (horizon < 1) throw InvalidArgumentError("--T must be >= 1");
    if (n_traj < 1) throw InvalidArgumentError("--traj must be >= 1");
    SupervisorConfig{threshold, dwell}.validate();
  }
};

struct ResolvedSetup {
  SystemModel sys;
  DynamicController primary;
  DynamicController fallback;
};

inline ResolvedSetup resolve_setup(const ExperimentConfig& cfg) {
  ResolvedSetup s;
  std::optional<DynamicController> primary, fallback;
  if (cfg.model_path) {
    ModelFile mf = load_model(*cfg.model_path);
    s.sys = mf.sys;
    primary = mf.primary;
    fallback = mf.fallback;
  } else {
    const GeneratorSpec g = cfg.generator.value_or(GeneratorSpec{});
    s.sys = random_stable_system(g.seed, g.n, g.m, g.p, g.rho);
  }
  s.primary = primary ? *primary : synth_optimal_controller(s.sys);
  if (cfg.lambda) s.primary = perturb_controller(s.primary, *cfg.lambda);
  if (fallback) {
    s.fallback = *fallback;
  } else {
    if (!is_schur_stable(s.sys.A)) {
      throw InvalidArgumentError(
          "model has no fallback controller and the plant is open-loop "
          "unstable, so u0 = 0 is not stabilizing");
    }
    s.fallback = zero_controller(s.sys);
  }
  return s;
}

namespace detail {

inline std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  return os;
}

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace detail

/// Generates a random plant, attaches the optimal (optionally perturbed)
/// primary and the zero fallback, and saves it to <out>/model.txt.
inline int cmd_synth(const ExperimentConfig& cfg, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(
      [&] {
        cfg.validate();
        ExperimentConfig c = cfg;
        c.model_path.reset();
        const ResolvedSetup s = resolve_setup(c);
        const auto dir = detail::prepare_out_dir(cfg);
        save_model((dir / "model.txt").string(),
                   ModelFile{s.sys, s.primary, s.fallback});
        const auto rep = check_assumptions(s.sys, s.primary, s.fallback);
        out << "wrote " << (dir / "model.txt").string() << '\n'
            << "rho(scrA1) "
            << format_g17(spectral_radius(
                   build_scr_A1(s.sys, s.primary, s.fallback)))
            << "\nassumption1 " << rep.assumption1 << "\nassumption2 "
            << rep.assumption2 << '\n';
        return kExitOk;
      },
      err);
}

inline int cmd_certify(const ExperimentConfig& cfg,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return detail::guarded(
      [&] {
        cfg.validate();
        const ResolvedSetup s = resolve_setup(cfg);
        const auto rep = certify_all(s.sys, s.primary, s.fallback,
                                     SupervisorConfig{cfg.threshold, cfg.dwell});
        const auto dir = detail::prepare_out_dir(cfg);
        auto os = detail::open_out(dir / "certificate.txt");
        write_certificate_report(os, rep);
        out << "assumption1 " << rep.assumptions.assumption1
            << "\nassumption2 " << rep.assumptions.assumption2 << '\n';
        if (rep.safety) {
          out << "cost_bound " << format_g17(rep.safety->cost_bound) << '\n';
        }
        if (rep.efficiency) {
          out << "t_min " << rep.efficiency->dwell.t_min << '\n'
              << "gap_bound " << format_g17(rep.efficiency->gap_bound(
                                     cfg.threshold, cfg.dwell))
              << '\n';
        }
        if (!rep.note.empty()) out << "note: " << rep.note << '\n';
        const bool ok =
            rep.assumptions.assumption1 && rep.assumptions.assumption2;
        return ok ? kExitOk : kExitAssumption;
      },
      err);
}

/// Seed-matched rollouts with and without switching; writes switched.csv,
/// unswitched.csv and compare_summary.txt. The unswitched run is the
/// supervisor with an infinite threshold, so its CSV also carries the
/// deviation ||u1 - u0|| the supervisor would have seen.
inline int cmd_compare(const ExperimentConfig& cfg,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return detail::guarded(
      [&] {
        cfg.validate();
        const ResolvedSetup s = resolve_setup(cfg);
        RolloutOptions ro;
        ro.zero_noise = cfg.zero_noise;
        const auto sw =
            rollout_switched(s.sys, s.primary, s.fallback,
                             SupervisorConfig{cfg.threshold, cfg.dwell},
                             cfg.seed, cfg.horizon, ro);
        const auto un = rollout_switched(
            s.sys, s.primary, s.fallback,
            SupervisorConfig{SupervisorConfig::kNeverSwitch, cfg.dwell},
            cfg.seed, cfg.horizon, ro);
        const auto dir = detail::prepare_out_dir(cfg);
        {
          auto os = detail::open_out(dir / "switched.csv");
          write_trajectory_csv(os, sw);
        }
        {
          auto os = detail::open_out(dir / "unswitched.csv");
          write_trajectory_csv(os, un);
        }
        std::ostringstream sum;
        sum << "M " << format_g17(cfg.threshold) << "\nt " << cfg.dwell
            << "\nT " << cfg.horizon << "\nseed " << cfg.seed
            << "\nswitched_max_state_norm " << format_g17(sw.max_state_norm)
            << "\nswitched_diverged " << sw.diverged
            << "\nswitched_fallback_fraction "
            << format_g17(sw.fallback_fraction) << "\nswitched_cost "
            << format_g17(sw.empirical_cost)
            << "\nunswitched_max_state_norm " << format_g17(un.max_state_norm)
            << "\nunswitched_diverged " << un.diverged
            << "\nunswitched_exceeds_1e6 " << (un.max_state_norm > 1e6)
            << "\nunswitched_cost " << format_g17(un.empirical_cost) << '\n';
        auto os = detail::open_out(dir / "compare_summary.txt");
        os << sum.str();
        out << sum.str();
        return kExitOk;
      },
      err);
}

/// Paired Monte Carlo estimate of J - J1 over a threshold grid; writes
/// sweep.csv.
inline int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(
      [&] {
        cfg.validate();
        const ResolvedSetup s = resolve_setup(cfg);
        const auto rep = check_assumptions(s.sys, s.primary, s.fallback);
        if (!rep.assumption1 || !rep.assumption2) {
          err << "sweep needs a stabilizing primary and fallback controller; "
                 "run `certify` for the assumption report\n";
          return kExitAssumption;
        }
        const ThresholdGrid grid = cfg.grid.value_or(ThresholdGrid{});
        const auto eff = efficiency_certificate(
            s.sys, s.primary, s.fallback,
            SupervisorConfig{grid.values().front(), cfg.dwell});
        const auto dir = detail::prepare_out_dir(cfg);
        auto os = detail::open_out(dir / "sweep.csv");
        const std::string header =
            "M,gap_estimate,std_err,gap_bound,fallback_fraction,j1,"
            "relative_gap,relative_std_err,bound_valid\n";
        os << header;
        out << header;
        for (double m : grid.values()) {
          MonteCarloOptions mc;
          mc.n_traj = cfg.n_traj;
          mc.horizon = cfg.horizon;
          mc.base_seed = cfg.seed;
          mc.threads = cfg.threads;
          mc.rollout.zero_noise = cfg.zero_noise;
          const auto r = monte_carlo(s.sys, s.primary, s.fallback,
                                     SupervisorConfig{m, cfg.dwell}, mc);
          const bool valid = eff.dwell_valid && m >= eff.a0 * eff.Kcal;
          std::ostringstream row;
          row << format_g17(m) << ',' << format_g17(r.gap) << ','
              << format_g17(r.gap_std_error) << ','
              << format_g17(eff.gap_bound(m, cfg.dwell)) << ','
              << format_g17(r.mean_fallback_fraction) << ','
              << format_g17(r.mean_primary_cost) << ','
              << format_g17(r.relative_gap) << ','
              << format_g17(r.relative_gap_std_error) << ',' << valid << '\n';
          os << row.str();
          out << row.str();
        }
        return kExitOk;
      },
      err);
}

struct BoundRow {
  std::string name;
  double theoretical = 0.0;
  double empirical = 0.0;
  std::string status;  // PASS, FAIL or SKIPPED(<reason>)
};

/// Runs the empirical validations of every bound on one configuration.
inline std::vector<BoundRow> run_bound_checks(const ResolvedSetup& s,
                                              const ExperimentConfig& cfg) {
  const SupervisorConfig sc{cfg.threshold, cfg.dwell};
  const auto rep = check_assumptions(s.sys, s.primary, s.fallback);
  if (!rep.assumption1) {
    throw CertificateUnavailableError(
        "fallback controller violates the stability assumption");
  }
  const SafetyCertificate safety =
      safety_certificate(s.sys, s.fallback, cfg.threshold);
  std::optional<EfficiencyCertificate> eff;
  if (rep.assumption2) {
    eff = efficiency_certificate(s.sys, s.primary, s.fallback, sc);
  }

  const auto n = s.sys.n();
  const auto n0 = s.fallback.order();
  const auto T = cfg.horizon;
  std::vector<std::vector<double>> v0(cfg.n_traj), m4(cfg.n_traj),
      vt2(cfg.n_traj);
  std::vector<double> cost(cfg.n_traj), frac(cfg.n_traj);
  detail::parallel_for(cfg.n_traj, cfg.threads, [&](int i) {
    RolloutOptions ro;
    ro.zero_noise = cfg.zero_noise;
    ro.record_states = true;
    const auto r = rollout_switched(s.sys, s.primary, s.fallback, sc,
                                    cfg.seed + static_cast<std::uint64_t>(i),
                                    T, ro);
    cost[i] = r.empirical_cost;
    frac[i] = r.fallback_fraction;
    v0[i].resize(r.steps);
    for (std::int64_t k = 0; k < r.steps; ++k) {
      v0[i][k] = weighted_vector_norm(r.states[k].head(n + n0),
                                      safety.P0.matrix());
      v0[i][k] *= v0[i][k];
    }
    if (eff) {
      m4[i].resize(r.steps);
      for (std::int64_t k = 0; k < r.steps; ++k) {
        const double q = r.states[k].dot(eff->P0_aug.matrix() * r.states[k]);
        m4[i][k] = q * q;
      }
      const auto tr = extract_transformed(r, sc);
      for (const auto& xs : tr.states) {
        const double q = xs.dot(eff->dwell.P.matrix() * xs);
        vt2[i].push_back(q * q);
      }
    }
  });

  // Max over time of the across-trajectory mean.
  auto max_time_mean = [&](const std::vector<std::vector<double>>& per) {
    std::size_t len = 0;
    for (const auto& v : per) len = std::max(len, v.size());
    double best = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      double s = 0.0;
      int cnt = 0;
      for (const auto& v : per) {
        if (k < v.size()) {
          s += v[k];
          ++cnt;
        }
      }
      if (cnt) best = std::max(best, s / cnt);
    }
    return best;
  };
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  const double scale = cfg.bound_scale;
  std::vector<BoundRow> rows;
  auto judge = [](double th, double emp) {
    return emp <= th ? std::string("PASS") : std::string("FAIL");
  };
  rows.push_back({"fallback_energy", scale * safety.energy_bound,
                  max_time_mean(v0), ""});
  rows.push_back({"safety_cost", scale * safety.cost_bound, mean(cost), ""});
  for (auto& r : rows) r.status = judge(r.theoretical, r.empirical);

  const std::string no_primary = "SKIPPED(assumption)";
  if (!eff) {
    for (const char* name : {"transformed_second_moment", "fourth_moment",
                             "switch_probability", "cost_gap"}) {
      rows.push_back({name, 0.0, 0.0, no_primary});
    }
    return rows;
  }
  const std::string dwell_skip = "SKIPPED(validity)";
  BoundRow second{"transformed_second_moment", scale * eff->Qcal,
                  max_time_mean(vt2), ""};
  BoundRow fourth{"fourth_moment", scale * eff->fourth_moment_bound,
                  max_time_mean(m4), ""};
  second.status =
      eff->dwell_valid ? judge(second.theoretical, second.empirical) : dwell_skip;
  fourth.status =
      eff->dwell_valid ? judge(fourth.theoretical, fourth.empirical) : dwell_skip;
  rows.push_back(second);
  rows.push_back(fourth);

  BoundRow prob{"switch_probability",
                scale * eff->switch_prob_bound(cfg.threshold, cfg.dwell),
                mean(frac), ""};
  BoundRow gap{"cost_gap", scale * eff->gap_bound(cfg.threshold, cfg.dwell),
               0.0, ""};
  if (eff->valid()) {
    MonteCarloOptions mc;
    mc.n_traj = cfg.n_traj;
    mc.horizon = T;
    mc.base_seed = cfg.seed;
    mc.threads = cfg.threads;
    mc.rollout.zero_noise = cfg.zero_noise;
    const auto r = monte_carlo(s.sys, s.primary, s.fallback, sc, mc);
    const double se = std::isnan(r.gap_std_error) ? 0.0 : r.gap_std_error;
    gap.empirical = r.gap + 3.0 * se;
    prob.status = judge(prob.theoretical, prob.empirical);
    gap.status = judge(gap.theoretical, gap.empirical);
  } else {
    prob.status = dwell_skip;
    gap.status = dwell_skip;
  }
  rows.push_back(prob);
  rows.push_back(gap);
  return rows;
}

inline int cmd_check(const ExperimentConfig& cfg, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(
      [&] {
        cfg.validate();
        const ResolvedSetup s = resolve_setup(cfg);
        if (!check_assumptions(s.sys, s.primary, s.fallback).assumption1) {
          err << "fallback controller violates the stability assumption\n";
          return kExitAssumption;
        }
        const auto rows = run_bound_checks(s, cfg);
        const auto dir = detail::prepare_out_dir(cfg);
        auto os = detail::open_out(dir / "check.csv");
        os << "bound,theoretical,empirical,margin,status\n";
        bool all_ok = true;
        for (const auto& r : rows) {
          const double margin = r.theoretical - r.empirical;
          os << r.name << ',' << format_g17(r.theoretical) << ','
             << format_g17(r.empirical) << ',' << format_g17(margin) << ','
             << r.status << '\n';
          out << r.name << "  theoretical=" << format_g17(r.theoretical)
              << "  empirical=" << format_g17(r.empirical) << "  "
              << r.status << '\n';
          all_ok = all_ok && r.status != "FAIL";
        }
        return all_ok ? kExitOk : kExitError;
      },
      err);
}

}  // namespace safeswitch

#endif  // SAFESWITCH_EXPERIMENTS_HPP
