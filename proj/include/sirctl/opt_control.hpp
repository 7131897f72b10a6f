#pragma once

// SDI-minimizing intervention design on a piecewise-constant control grid.
//
//  * solve_p_opt:     min SDI  s.t.  I(t) <= i_max on [0, T],  S(T) = S*,
//                     R(t) in [r_min, r_bar]. Augmented-Lagrangian outer loop
//                     around a spectral projected-gradient inner solver;
//                     gradients by central finite differences, warm start
//                     from the wait-maintain-suspend schedule.
//  * solve_weighted:  min  int alpha_I I + alpha_R (r_bar - R) dt  without the
//                     epidemiological constraints.
//  * solve_quantized: one level per dwell slot, beam search over slots then
//                     first-improvement single-slot swaps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sirctl/epi_analysis.hpp"
#include "sirctl/errors.hpp"
#include "sirctl/parallel.hpp"
#include "sirctl/sir_core.hpp"
#include "sirctl/strategies.hpp"

namespace sirctl {

struct OptConfig {
  double t_horizon = 270.0;
  int n_intervals = 270;
  double i_max = 0.1;
  double s_star_target = 0.0;  ///< <= 0 selects herd_immunity(r_bar)
  double terminal_tol = 1e-3;
  std::vector<double> penalties = {1e3, 1e4, 1e5, 1e6, 1e7};
  int max_outer_iters = 12;
  int max_inner_iters = 400;
  double dt = 0.05;         ///< integration step inside the optimizer
  double verify_dt = 0.01;  ///< step of the final verification run
  double fd_step = 1e-6;
  double report_horizon = 0.0;  ///< simulated report length; <= t_horizon means T
  unsigned threads = 0;

  void validate() const {
    if (!(t_horizon > 0.0)) throw DomainError("opt.t_horizon must be > 0");
    if (n_intervals < 1) throw DomainError("opt.n_intervals must be >= 1");
    if (!(terminal_tol > 0.0)) throw DomainError("opt.terminal_tol must be > 0");
    if (!(i_max > 0.0 && i_max <= 1.0)) throw DomainError("opt.i_max must lie in (0, 1]");
    if (penalties.empty()) throw DomainError("opt.penalties must not be empty");
    if (!std::is_sorted(penalties.begin(), penalties.end()))
      throw DomainError("opt.penalties must be increasing");
    if (max_outer_iters < 1 || max_inner_iters < 1)
      throw DomainError("opt iteration limits must be >= 1");
    if (!(dt > 0.0) || !(verify_dt > 0.0) || !(fd_step > 0.0))
      throw DomainError("opt step sizes must be > 0");
  }
};

struct WeightedConfig {
  double alpha_i = 1.0;
  double alpha_r = 0.25;
  double t_horizon = 270.0;
  int n_intervals = 270;
  int max_inner_iters = 600;
  double dt = 0.05;
  double verify_dt = 0.01;
  double fd_step = 1e-6;
  double report_horizon = 0.0;
  unsigned threads = 0;

  void validate() const {
    if (!(alpha_i >= 0.0) || !(alpha_r >= 0.0) || !std::isfinite(alpha_i) || !std::isfinite(alpha_r))
      throw DomainError("weighted alphas must be finite and >= 0");
    if (!(t_horizon > 0.0)) throw DomainError("weighted.t_horizon must be > 0");
    if (n_intervals < 1) throw DomainError("weighted.n_intervals must be >= 1");
  }
};

struct QuantizedConfig {
  std::vector<double> levels = {0.660, 1.407, 2.153, 2.900};
  double dwell_min = 10.0;
  double t_horizon = 270.0;
  std::size_t beam_width = 512;
  double merge_ds = 5e-3;      ///< state-merging cell width in S
  double merge_dlog_i = 0.2;   ///< state-merging cell width in log I
  double terminal_tol = 1e-3;
  double dt = kDefaultDt;
  double report_horizon = 0.0;
  unsigned threads = 0;

  void validate(const ModelParams& p) const {
    if (levels.empty()) throw DomainError("quantized.levels must not be empty");
    if (!std::is_sorted(levels.begin(), levels.end()))
      throw DomainError("quantized.levels must be increasing");
    for (double l : levels)
      if (l < p.r_min - 1e-12 || l > p.r_bar + 1e-12)
        throw DomainError("quantized level " + std::to_string(l) + " outside [r_min, r_bar]");
    if (!(dwell_min > 0.0)) throw DomainError("quantized.dwell_min must be > 0");
    if (!(t_horizon > 0.0)) throw DomainError("quantized.t_horizon must be > 0");
    if (beam_width < 1) throw DomainError("quantized.beam_width must be >= 1");
    if (!(terminal_tol > 0.0)) throw DomainError("quantized.terminal_tol must be > 0");
  }
};

namespace detail {

/// Uniform piecewise-constant control grid over [0, horizon] integrated with
/// fixed RK4 sub-steps.
struct ControlGrid {
  ModelParams params;
  double horizon;
  int n;       ///< control intervals
  int m;       ///< RK4 steps per interval
  double width;
  double h;

  ControlGrid(const ModelParams& p, double horizon_days, int intervals, double dt)
      : params(p), horizon(horizon_days), n(intervals) {
    width = horizon / n;
    m = std::max(1, static_cast<int>(std::lround(width / dt)));
    h = width / m;
  }

  int steps() const { return n * m; }

  ControlSchedule schedule(std::span<const double> r) const {
    ControlSchedule s;
    for (int k = 0; k < n; ++k) {
      const double a = k * width;
      const double b = (k + 1 == n) ? horizon : (k + 1) * width;
      s.add_constant(a, b, std::clamp(r[k], params.r_min, params.r_bar));
    }
    return s;
  }
};

/// Cost that depends on the state path: sum over RK4 steps of step_cost plus a terminal term.
struct PathCost {
  std::function<double(int j, const EpiState& before, const EpiState& after, double h)> step;
  std::function<double(const EpiState& final_state)> terminal;
};

struct RollCache {
  std::vector<EpiState> start;  ///< state at each interval start
  std::vector<double> acc;      ///< accumulated step cost before each interval
};

/// Path cost of the controls from interval k0 onwards; r[override_k] is replaced by override_v.
inline double roll(const ControlGrid& g, std::span<const double> r, const PathCost& cost, int k0,
                   EpiState x, double acc, RollCache* cache, int override_k = -1,
                   double override_v = 0.0, std::vector<EpiState>* path = nullptr) {
  if (cache) {
    cache->start.resize(g.n);
    cache->acc.resize(g.n);
  }
  const double gamma = g.params.gamma;
  for (int k = k0; k < g.n; ++k) {
    if (cache) {
      cache->start[k] = x;
      cache->acc[k] = acc;
    }
    const double rk = (k == override_k) ? override_v : r[k];
    auto rate = [rk](const EpiState&) { return rk; };
    for (int s = 0; s < g.m; ++s) {
      const EpiState y = rk4_step(x, g.h, gamma, rate);
      if (cost.step) acc += cost.step(k * g.m + s, x, y, g.h);
      if (path) path->push_back(y);
      x = y;
    }
  }
  return acc + (cost.terminal ? cost.terminal(x) : 0.0);
}

struct SpgResult {
  std::vector<double> x;
  double value;
  int iterations;
  double pg_norm;
};

/// Spectral projected gradient with a nonmonotone Armijo line search over the box [lo, hi]^n.
/// Objective: linear_coef . x + path(x), gradient of the path part by central differences.
inline SpgResult spg_minimize(const ControlGrid& g, const PathCost& cost,
                              std::span<const double> linear_coef, std::vector<double> x,
                              int max_iters, double fd_step, unsigned threads,
                              double pg_tol = 1e-7) {
  const double lo = g.params.r_min, hi = g.params.r_bar;
  const int n = g.n;
  auto project = [&](std::vector<double>& v) {
    for (double& e : v) e = std::clamp(e, lo, hi);
  };
  auto linear = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += linear_coef[k] * v[k];
    return s;
  };
  const EpiState x0 = g.params.initial_state();

  auto value = [&](const std::vector<double>& v) {
    return linear(v) + roll(g, v, cost, 0, x0, 0.0, nullptr);
  };
  auto value_and_grad = [&](const std::vector<double>& v, std::vector<double>& grad) {
    RollCache cache;
    const double base = roll(g, v, cost, 0, x0, 0.0, &cache);
    grad.assign(n, 0.0);
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t kk) {
          const int k = static_cast<int>(kk);
          const double fp = roll(g, v, cost, k, cache.start[k], cache.acc[k], nullptr, k, v[k] + fd_step);
          const double fm = roll(g, v, cost, k, cache.start[k], cache.acc[k], nullptr, k, v[k] - fd_step);
          grad[k] = (fp - fm) / (2.0 * fd_step) + linear_coef[k];
        },
        threads);
    return linear(v) + base;
  };
  auto pg_norm = [&](const std::vector<double>& v, const std::vector<double>& grad) {
    double m = 0.0;
    for (int k = 0; k < n; ++k) m = std::max(m, std::abs(std::clamp(v[k] - grad[k], lo, hi) - v[k]));
    return m;
  };

  project(x);
  std::vector<double> grad;
  double f = value_and_grad(x, grad);
  std::deque<double> history{f};
  constexpr std::size_t kMemory = 10;
  double alpha = 1.0;
  {
    const double pn = pg_norm(x, grad);
    if (pn > 0.0) alpha = std::min(1.0, 1.0 / pn);
  }

  int it = 0;
  double pn = pg_norm(x, grad);
  std::vector<double> trial(n), d(n), grad_new;
  for (; it < max_iters && pn > pg_tol; ++it) {
    for (int k = 0; k < n; ++k) d[k] = std::clamp(x[k] - alpha * grad[k], lo, hi) - x[k];
    double gd = 0.0;
    for (int k = 0; k < n; ++k) gd += grad[k] * d[k];
    if (gd >= 0.0) break;
    const double f_ref = *std::max_element(history.begin(), history.end());
    double lambda = 1.0;
    double f_trial = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (int k = 0; k < n; ++k) trial[k] = x[k] + lambda * d[k];
      f_trial = value(trial);
      if (f_trial <= f_ref + 1e-4 * lambda * gd) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
    const double f_new = value_and_grad(trial, grad_new);
    double sy = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
      const double s = trial[k] - x[k];
      const double y = grad_new[k] - grad[k];
      sy += s * y;
      ss += s * s;
    }
    alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : 1e10;
    x = trial;
    grad = grad_new;
    f = f_new;
    history.push_back(f);
    if (history.size() > kMemory) history.pop_front();
    pn = pg_norm(x, grad);
  }
  return {std::move(x), f, it, pn};
}

inline std::vector<double> project_onto_grid(const ControlGrid& g, const Trajectory& traj) {
  std::vector<double> r(g.n, 0.0);
  std::vector<double> covered(g.n, 0.0);
  for (std::size_t k = 0; k + 1 < traj.samples.size(); ++k) {
    const Sample& a = traj.samples[k];
    const double b = traj.samples[k + 1].t;
    const double mid = 0.5 * (a.t + b);
    const int idx = std::clamp(static_cast<int>(mid / g.width), 0, g.n - 1);
    r[idx] += a.r * (b - a.t);
    covered[idx] += b - a.t;
  }
  for (int k = 0; k < g.n; ++k)
    r[k] = covered[k] > 0.0 ? std::clamp(r[k] / covered[k], g.params.r_min, g.params.r_bar)
                            : g.params.r_bar;
  return r;
}

inline EpiState state_at_time(const Trajectory& traj, double t) {
  auto it = std::upper_bound(traj.samples.begin(), traj.samples.end(), t + 1e-9,
                             [](double v, const Sample& s) { return v < s.t; });
  if (it == traj.samples.begin()) return {traj.samples.front().s, traj.samples.front().i};
  --it;
  return {it->s, it->i};
}

inline double max_i_until(const Trajectory& traj, double t) {
  double m = 0.0;
  for (const auto& s : traj.samples) {
    if (s.t > t + 1e-9) break;
    m = std::max(m, s.i);
  }
  return m;
}

}  // namespace detail

/// SDI-minimizing schedule under the peak cap and the terminal susceptible target.
inline StrategyReport solve_p_opt(const ModelParams& params, const OptConfig& cfg) {
  params.validate();
  cfg.validate();
  const double s_target = cfg.s_star_target > 0.0 ? cfg.s_star_target : herd_immunity(params.r_bar);
  const EpidemiologicalObjective objective{s_target, cfg.i_max};
  objective.validate();
  const double T = cfg.t_horizon;
  const double report_h = std::max(T, cfg.report_horizon);

  auto finalize = [&](StrategyReport rep) {
    const EpiState xT = detail::state_at_time(rep.trajectory, T);
    const double peak_T = detail::max_i_until(rep.trajectory, T);
    rep.timings.push_back({"t_horizon", T});
    rep.values.push_back({"s_at_T", xT.s});
    rep.values.push_back({"i_at_T", xT.i});
    rep.values.push_back({"max_i_on_horizon", peak_T});
    rep.feasible = peak_T <= cfg.i_max + kFeasiblePeakTol &&
                   std::abs(xT.s - s_target) <= cfg.terminal_tol;
    return rep;
  };

  // Constraints slack in open loop: the nonnegative objective is minimized by R = r_bar.
  {
    const Trajectory ol = simulate(params, ControlSchedule{}, params.initial_state(), T, cfg.verify_dt);
    if (ol.max_i() <= cfg.i_max && std::abs(ol.final_state().s - s_target) <= cfg.terminal_tol) {
      StrategyReport rep = evaluate_schedule("p_opt", params, objective, ControlSchedule{}, report_h,
                                             cfg.verify_dt);
      rep.notes.push_back("constraints inactive in open loop; R = r_bar is optimal");
      rep.feasible = true;
      return finalize(std::move(rep));
    }
  }

  StrategyReport warm;
  try {
    warm = wms(params, objective, DesignOptions{T, T, cfg.verify_dt});
  } catch (const std::exception& e) {
    throw Infeasible(std::string("no feasible point found: ") + e.what());
  }

  const detail::ControlGrid grid(params, T, cfg.n_intervals, cfg.dt);
  std::vector<double> x = detail::project_onto_grid(grid, warm.trajectory);
  const std::vector<double> warm_x = x;

  const int steps = grid.steps();
  std::vector<double> nu(steps, 0.0);
  double lambda = 0.0;
  double mu = cfg.penalties.front();
  std::vector<double> lin(grid.n, -grid.width);  // d SDI / d r_k

  double peak_res = 0.0, term_res = 0.0;
  int outer = 0;
  int inner_total = 0;
  bool converged = false;
  for (; outer < cfg.max_outer_iters; ++outer) {
    mu = cfg.penalties[std::min<std::size_t>(outer, cfg.penalties.size() - 1)];
    detail::PathCost cost;
    cost.step = [&, mu](int j, const EpiState&, const EpiState& y, double h) {
      const double v = std::max(0.0, nu[j] + mu * (y.i - cfg.i_max));
      return h * (v * v - nu[j] * nu[j]) / (2.0 * mu);
    };
    cost.terminal = [&, mu](const EpiState& y) {
      const double c = y.s - s_target;
      return lambda * c + 0.5 * mu * c * c;
    };
    const detail::SpgResult res =
        detail::spg_minimize(grid, cost, lin, x, cfg.max_inner_iters, cfg.fd_step, cfg.threads);
    x = res.x;
    inner_total += res.iterations;

    std::vector<EpiState> path;
    path.reserve(steps);
    const detail::PathCost none;
    detail::roll(grid, x, none, 0, params.initial_state(), 0.0, nullptr, -1, 0.0, &path);
    peak_res = 0.0;
    for (int j = 0; j < steps; ++j) {
      peak_res = std::max(peak_res, path[j].i - cfg.i_max);
      nu[j] = std::max(0.0, nu[j] + mu * (path[j].i - cfg.i_max));
    }
    const double c = path.back().s - s_target;
    term_res = std::abs(c);
    lambda += mu * c;
    if (peak_res <= cfg.terminal_tol && term_res <= cfg.terminal_tol) {
      converged = true;
      ++outer;
      break;
    }
  }

  StrategyReport rep = evaluate_schedule("p_opt", params, objective, grid.schedule(x), report_h,
                                         cfg.verify_dt);
  rep = finalize(std::move(rep));

  StrategyReport warm_rep = finalize(evaluate_schedule("p_opt", params, objective,
                                                       grid.schedule(warm_x), report_h, cfg.verify_dt));
  if (warm_rep.feasible && (!rep.feasible || rep.sdi > warm_rep.sdi + 1e-6)) {
    warm_rep.notes.push_back("optimizer did not improve on the wait-maintain-suspend warm start");
    rep = std::move(warm_rep);
  }
  if (!converged) rep.notes.push_back("not converged: constraint residuals above tolerance");
  rep.values.push_back({"outer_iterations", static_cast<double>(outer)});
  rep.values.push_back({"inner_iterations", static_cast<double>(inner_total)});
  rep.values.push_back({"peak_residual", std::max(0.0, peak_res)});
  rep.values.push_back({"terminal_residual", term_res});
  rep.values.push_back({"warm_start_sdi", warm_rep.sdi});
  return rep;
}

/// Unconstrained weighted objective int alpha_I I + alpha_R (r_bar - R) dt on [0, T].
inline StrategyReport solve_weighted(const ModelParams& params, const WeightedConfig& cfg,
                                     const EpidemiologicalObjective& objective) {
  params.validate();
  cfg.validate();
  objective.validate();
  const detail::ControlGrid grid(params, cfg.t_horizon, cfg.n_intervals, cfg.dt);

  std::vector<double> x;
  try {
    const StrategyReport warm =
        wms(params, objective, DesignOptions{cfg.t_horizon, cfg.t_horizon, cfg.verify_dt});
    x = detail::project_onto_grid(grid, warm.trajectory);
  } catch (const Infeasible&) {
    x.assign(grid.n, params.r_bar);
  }

  detail::PathCost cost;
  const double ai = cfg.alpha_i;
  cost.step = [ai](int, const EpiState& a, const EpiState& b, double h) {
    return ai * 0.5 * (a.i + b.i) * h;
  };
  std::vector<double> lin(grid.n, -cfg.alpha_r * grid.width);
  const detail::SpgResult res =
      detail::spg_minimize(grid, cost, lin, x, cfg.max_inner_iters, cfg.fd_step, cfg.threads);

  StrategyReport rep = evaluate_schedule("weighted", params, objective, grid.schedule(res.x),
                                         std::max(cfg.t_horizon, cfg.report_horizon), cfg.verify_dt);
  // Objective constants: r_bar * alpha_R * T is added so the value equals the stated integral.
  rep.values.push_back({"objective", res.value + cfg.alpha_r * params.r_bar * cfg.t_horizon});
  rep.values.push_back({"inner_iterations", static_cast<double>(res.iterations)});
  rep.values.push_back({"projected_gradient_norm", res.pg_norm});
  rep.values.push_back({"alpha_i", cfg.alpha_i});
  rep.values.push_back({"alpha_r", cfg.alpha_r});
  rep.timings.push_back({"t_horizon", cfg.t_horizon});
  if (res.iterations >= cfg.max_inner_iters) rep.notes.push_back("not converged: inner iteration limit");
  return rep;
}

namespace detail {

struct BeamNode {
  EpiState x;
  double cost = 0.0;
  std::vector<std::uint8_t> levels;
};

/// Propagates one slot at constant R; returns false if I exceeds i_max anywhere in it.
inline bool propagate_slot(const ModelParams& p, EpiState& x, double r, double len, double dt,
                           double i_max) {
  const int steps = std::max(1, static_cast<int>(std::ceil(len / dt - 1e-9)));
  const double h = len / steps;
  auto rate = [r](const EpiState&) { return r; };
  for (int s = 0; s < steps; ++s) {
    x = rk4_step(x, h, p.gamma, rate);
    if (x.i > i_max) return false;
  }
  return true;
}

/// Collapses nodes whose states fall in the same (S, log I) cell onto the
/// cheapest one; the future of a branch depends only on its state.
/// Input must be sorted by (cost, levels).
inline std::vector<BeamNode> merge_equivalent(std::vector<BeamNode> sorted, double ds,
                                              double dlog_i) {
  if (!(ds > 0.0) || !(dlog_i > 0.0)) return sorted;
  std::vector<std::pair<std::int64_t, std::int64_t>> seen;
  seen.reserve(sorted.size());
  std::vector<BeamNode> out;
  out.reserve(sorted.size());
  for (auto& node : sorted) {
    const std::int64_t cs = static_cast<std::int64_t>(std::floor(node.x.s / ds));
    const std::int64_t ci =
        static_cast<std::int64_t>(std::floor(std::log(std::max(node.x.i, 1e-300)) / dlog_i));
    const std::pair<std::int64_t, std::int64_t> key{cs, ci};
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    out.push_back(std::move(node));
  }
  return out;
}

struct QuantizedEval {
  bool feasible;
  double sdi;
  EpiState final_state;
};

inline QuantizedEval evaluate_levels(const ModelParams& p, const QuantizedConfig& cfg,
                                     const EpidemiologicalObjective& obj,
                                     std::span<const std::uint8_t> choice) {
  EpiState x = p.initial_state();
  double cost = 0.0;
  for (std::size_t j = 0; j < choice.size(); ++j) {
    const double a = j * cfg.dwell_min;
    const double b = std::min(cfg.t_horizon, (j + 1) * cfg.dwell_min);
    const double r = cfg.levels[choice[j]];
    if (!propagate_slot(p, x, r, b - a, cfg.dt, obj.i_max)) return {false, cost, x};
    cost += (p.r_bar - r) * (b - a);
  }
  const bool ok = std::abs(x.s - obj.s_star_target) <= cfg.terminal_tol;
  return {ok, cost, x};
}

}  // namespace detail

/// Quantized levels held for whole dwell slots; minimizes SDI subject to the
/// peak cap and the terminal susceptible band.
inline StrategyReport solve_quantized(const ModelParams& params, const QuantizedConfig& cfg,
                                      const EpidemiologicalObjective& objective) {
  params.validate();
  cfg.validate(params);
  objective.validate();

  const int slots = static_cast<int>(std::ceil(cfg.t_horizon / cfg.dwell_min - 1e-9));
  const int nl = static_cast<int>(cfg.levels.size());
  const double s_floor = objective.s_star_target - cfg.terminal_tol;

  std::vector<detail::BeamNode> beam{{params.initial_state(), 0.0, {}}};
  std::size_t expanded = 0;
  for (int j = 0; j < slots; ++j) {
    const double a = j * cfg.dwell_min;
    const double b = std::min(cfg.t_horizon, (j + 1) * cfg.dwell_min);
    std::vector<detail::BeamNode> children(beam.size() * nl);
    std::vector<char> alive(children.size(), 0);
    parallel_for(
        children.size(),
        [&](std::size_t c) {
          const detail::BeamNode& parent = beam[c / nl];
          const int l = static_cast<int>(c % nl);
          detail::BeamNode child{parent.x, parent.cost, parent.levels};
          if (!detail::propagate_slot(params, child.x, cfg.levels[l], b - a, cfg.dt, objective.i_max))
            return;
          if (child.x.s < s_floor) return;  // S never increases again
          child.cost += (params.r_bar - cfg.levels[l]) * (b - a);
          child.levels.push_back(static_cast<std::uint8_t>(l));
          children[c] = std::move(child);
          alive[c] = 1;
        },
        cfg.threads);
    expanded += children.size();
    std::vector<detail::BeamNode> next;
    next.reserve(children.size());
    for (std::size_t c = 0; c < children.size(); ++c)
      if (alive[c]) next.push_back(std::move(children[c]));
    std::sort(next.begin(), next.end(), [](const detail::BeamNode& u, const detail::BeamNode& v) {
      if (u.cost != v.cost) return u.cost < v.cost;
      return u.levels < v.levels;
    });
    next = detail::merge_equivalent(std::move(next), cfg.merge_ds, cfg.merge_dlog_i);
    if (next.size() > cfg.beam_width) next.resize(cfg.beam_width);
    if (next.empty()) throw Infeasible("quantized: beam exhausted, every branch violates the peak cap");
    beam = std::move(next);
  }

  const detail::BeamNode* best = nullptr;
  for (const auto& node : beam) {
    if (std::abs(node.x.s - objective.s_star_target) > cfg.terminal_tol) continue;
    best = &node;  // beam is sorted by cost
    break;
  }
  if (!best) throw Infeasible("quantized: no schedule in the beam meets the terminal band");

  std::vector<std::uint8_t> choice = best->levels;
  double best_cost = best->cost;
  int swaps = 0;
  for (bool improved = true; improved;) {
    improved = false;
    for (int j = 0; j < slots && !improved; ++j) {
      for (int l = 0; l < nl; ++l) {
        if (l == choice[j]) continue;
        std::vector<std::uint8_t> cand = choice;
        cand[j] = static_cast<std::uint8_t>(l);
        const detail::QuantizedEval ev = detail::evaluate_levels(params, cfg, objective, cand);
        if (ev.feasible && ev.sdi < best_cost - 1e-12) {
          choice = std::move(cand);
          best_cost = ev.sdi;
          improved = true;
          ++swaps;
          break;
        }
      }
    }
  }

  ControlSchedule sched;
  for (int j = 0; j < slots; ++j) {
    const double a = j * cfg.dwell_min;
    const double b = std::min(cfg.t_horizon, (j + 1) * cfg.dwell_min);
    sched.add_constant(a, b, cfg.levels[choice[j]]);
  }
  StrategyReport rep = evaluate_schedule("quantized", params, objective, std::move(sched),
                                         std::max(cfg.t_horizon, cfg.report_horizon), cfg.dt);
  const EpiState xT = detail::state_at_time(rep.trajectory, cfg.t_horizon);
  const double peak_T = detail::max_i_until(rep.trajectory, cfg.t_horizon);
  rep.feasible = peak_T <= objective.i_max + kFeasiblePeakTol &&
                 std::abs(xT.s - objective.s_star_target) <= cfg.terminal_tol;
  rep.timings.push_back({"t_horizon", cfg.t_horizon});
  rep.timings.push_back({"dwell_min", cfg.dwell_min});
  rep.values.push_back({"s_at_T", xT.s});
  rep.values.push_back({"i_at_T", xT.i});
  rep.values.push_back({"max_i_on_horizon", peak_T});
  rep.values.push_back({"beam_nodes_expanded", static_cast<double>(expanded)});
  rep.values.push_back({"local_search_swaps", static_cast<double>(swaps)});
  return rep;
}

}  // namespace sirctl
