#pragma once

// Analytic intervention designs: the open-loop baseline, single-interval
// reproduction numbers (terminal-targeting R*_si and peak-capping R^_si), the
// goldilocks single interval and the wait-maintain-suspend sequence.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sirctl/epi_analysis.hpp"
#include "sirctl/errors.hpp"
#include "sirctl/sir_core.hpp"

namespace sirctl {

inline constexpr double kFeasibleTerminalTol = 0.01;
inline constexpr double kFeasiblePeakTol = 1e-3;
inline constexpr double kDefaultTauF = 270.0;
inline constexpr double kDefaultHorizon = 300.0;

struct EpidemiologicalObjective {
  double s_star_target;
  double i_max;

  static EpidemiologicalObjective herd(const ModelParams& p, double i_max) {
    return {herd_immunity(p.r_bar), i_max};
  }

  void validate() const {
    if (!(i_max > 0.0 && i_max <= 1.0)) throw DomainError("objective.i_max must lie in (0, 1]");
    if (!(s_star_target > 0.0 && s_star_target < 1.0))
      throw DomainError("objective.s_star_target must lie in (0, 1)");
  }
};

using NamedValue = std::pair<std::string, double>;

struct StrategyReport {
  std::string strategy;
  ControlSchedule schedule;
  double efs = 0.0;          ///< limit final size 1 - S_inf
  double efs_horizon = 0.0;  ///< 1 - S at the end of the simulated horizon
  double ipp = 0.0;
  double sdi = 0.0;
  double s_inf = 1.0;
  EpiState final_state;
  std::vector<NamedValue> timings;  ///< days
  std::vector<NamedValue> values;   ///< other scalar design quantities
  std::vector<std::string> notes;
  bool feasible = false;
  Trajectory trajectory;

  std::optional<double> timing(const std::string& name) const {
    for (const auto& [k, v] : timings)
      if (k == name) return v;
    return std::nullopt;
  }
  std::optional<double> value(const std::string& name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Social distancing index

/// Integral over days of (r_bar - R(t)) on [0, horizon], evaluated on the
/// trajectory grid: exact for constant segments, trapezoidal for feedback ones.
inline double sdi(const Trajectory& traj, const ControlSchedule& schedule,
                  const ModelParams& params, double horizon) {
  double total = 0.0;
  for (const auto& seg : schedule.segments()) {
    const double a = std::min(seg.t_start, horizon);
    const double b = std::min(seg.t_end, horizon);
    if (b <= a) continue;
    if (const auto* c = std::get_if<ConstantLaw>(&seg.law)) {
      total += (params.r_bar - c->r) * (b - a);
      continue;
    }
    for (std::size_t k = 1; k < traj.samples.size(); ++k) {
      const Sample& x0 = traj.samples[k - 1];
      const Sample& x1 = traj.samples[k];
      if (x0.t < a - 1e-12 || x1.t > b + 1e-12) continue;
      const double g0 = params.r_bar - apply_law(seg.law, {x0.s, x0.i}, params);
      const double g1 = params.r_bar - apply_law(seg.law, {x1.s, x1.i}, params);
      total += 0.5 * (g0 + g1) * (x1.t - x0.t);
    }
  }
  return total;
}

/// SDI of a schedule; simulates from the model's initial state when a feedback segment is present.
inline double sdi(const ControlSchedule& schedule, const ModelParams& params, double horizon,
                  double dt = kDefaultDt) {
  if (horizon < schedule.end_time() - 1e-12)
    throw DomainError("sdi: horizon ends before the schedule");
  const bool needs_state =
      std::any_of(schedule.segments().begin(), schedule.segments().end(),
                  [](const Segment& s) { return is_feedback(s.law); });
  Trajectory traj;
  if (needs_state) traj = simulate(params, schedule, params.initial_state(), horizon, dt);
  return sdi(traj, schedule, params, horizon);
}

// ---------------------------------------------------------------------------
// Reports

/// Simulates the schedule over [0, horizon] and derives EFS, IPP and SDI.
/// After the horizon the system evolves open loop, so the final size uses the
/// closed form from the end state and IPP includes any later open-loop peak.
inline StrategyReport evaluate_schedule(std::string name, const ModelParams& params,
                                        const EpidemiologicalObjective& objective,
                                        ControlSchedule schedule, const EpiState& x0,
                                        double horizon, double dt = kDefaultDt) {
  if (horizon < schedule.end_time() - 1e-9)
    throw DomainError("evaluate_schedule: horizon ends before the schedule");
  StrategyReport rep;
  rep.strategy = std::move(name);
  rep.trajectory = simulate(params, schedule, x0, horizon, dt);
  rep.final_state = rep.trajectory.final_state();
  const FinalSizeResult fs =
      s_infinity(params.r_bar, std::clamp(rep.final_state.s, 0.0, 1.0),
                 std::clamp(rep.final_state.i, 0.0, 1.0 - std::clamp(rep.final_state.s, 0.0, 1.0)));
  rep.s_inf = fs.s_inf;
  rep.efs = fs.efs;
  rep.efs_horizon = 1.0 - rep.final_state.s;
  rep.ipp = std::max(rep.trajectory.max_i(),
                     peak_prevalence(params.r_bar, std::clamp(rep.final_state.s, 0.0, 1.0),
                                     std::max(rep.final_state.i, 0.0)));
  rep.sdi = sdi(rep.trajectory, schedule, params, horizon);
  rep.feasible = std::abs(rep.s_inf - objective.s_star_target) <= kFeasibleTerminalTol &&
                 rep.ipp <= objective.i_max + kFeasiblePeakTol;
  rep.schedule = std::move(schedule);
  return rep;
}

inline StrategyReport evaluate_schedule(std::string name, const ModelParams& params,
                                        const EpidemiologicalObjective& objective,
                                        ControlSchedule schedule, double horizon,
                                        double dt = kDefaultDt) {
  return evaluate_schedule(std::move(name), params, objective, std::move(schedule),
                           params.initial_state(), horizon, dt);
}

inline StrategyReport open_loop(const ModelParams& params, const EpidemiologicalObjective& objective,
                                double horizon, double dt = kDefaultDt) {
  if (!(horizon > 0.0)) throw DomainError("open_loop: horizon must be > 0");
  return evaluate_schedule("open_loop", params, objective, ControlSchedule{}, horizon, dt);
}

inline StrategyReport open_loop(const ModelParams& params, double horizon, double dt = kDefaultDt) {
  return open_loop(params, EpidemiologicalObjective::herd(params, 1.0), horizon, dt);
}

// ---------------------------------------------------------------------------
// Single-interval reproduction numbers

/// Constant R applied from (s_s, i_s) that drives S_inf to s_star.
inline double r_star_single(double s_star, double s_s, double i_s) {
  if (!(s_star > 0.0)) throw DomainError("r_star_single: s_star must be > 0");
  if (!(s_s > s_star))
    throw DomainError("r_star_single: intervention must start above the target (s_s > s_star)");
  if (!(i_s >= 0.0)) throw DomainError("r_star_single: i_s must be >= 0");
  return (std::log(s_s) - std::log(s_star)) / (s_s + i_s - s_star);
}

struct RHatResult {
  double r;
  bool unconstrained;  ///< the upper bound already keeps the peak under i_max
};

/// Largest R in [r_lo, r_hi] whose open-loop peak from (s_s, i_s) equals i_max.
inline RHatResult r_hat_single(double i_max, double s_s, double i_s, double r_lo, double r_hi) {
  if (!(r_lo > 0.0 && r_lo < r_hi)) throw DomainError("r_hat_single: need 0 < r_lo < r_hi");
  if (i_s > i_max) throw Infeasible("r_hat_single: I already above i_max");
  if (peak_prevalence(r_hi, s_s, i_s) <= i_max) return {r_hi, true};
  if (peak_prevalence(r_lo, s_s, i_s) > i_max)
    throw Infeasible("r_hat_single: even r_lo produces a peak above i_max");
  double lo = r_lo, hi = r_hi;
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (peak_prevalence(mid, s_s, i_s) > i_max) hi = mid;
    else lo = mid;
    if (hi - lo < 1e-13) break;
  }
  return {0.5 * (lo + hi), false};
}

namespace detail {

/// Refines the first sign change (negative to non-negative) of f along a
/// trajectory. `state_at(k, h)` returns the state h days after sample k.
/// Returns the crossing time, bisected to `tol` days.
template <typename F, typename StateAt>
std::optional<double> first_sign_change(const Trajectory& traj, std::size_t first, std::size_t last,
                                        F&& f, StateAt&& state_at, double tol) {
  std::optional<double> prev;
  for (std::size_t k = first; k <= last && k < traj.samples.size(); ++k) {
    const Sample& smp = traj.samples[k];
    const std::optional<double> cur = f(EpiState{smp.s, smp.i});
    if (prev && cur && *prev < 0.0 && *cur >= 0.0) {
      const Sample& a = traj.samples[k - 1];
      double lo = 0.0, hi = smp.t - a.t;
      while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const std::optional<double> v = f(state_at(k - 1, mid));
        if (v && *v >= 0.0) hi = mid;
        else lo = mid;
      }
      return a.t + 0.5 * (lo + hi);
    }
    prev = cur;
  }
  return std::nullopt;
}

}  // namespace detail

struct DesignOptions {
  double tau_f = kDefaultTauF;        ///< intervention end, days
  double horizon = kDefaultHorizon;   ///< simulated report horizon, days
  double dt = kDefaultDt;
};

/// Single interval R^g on [tau_s^g, tau_f] where the terminal-targeting and
/// peak-capping reproduction numbers coincide along the open-loop run.
inline StrategyReport goldilocks(const ModelParams& params, const EpidemiologicalObjective& objective,
                                 const DesignOptions& opts = {}) {
  params.validate();
  objective.validate();
  const double s_star = objective.s_star_target;
  const double i_max = objective.i_max;

  const ControlSchedule none;
  const Trajectory ol = simulate(params, none, params.initial_state(), opts.horizon, opts.dt);
  const double ol_peak = peak_prevalence(params.r_bar, params.initial_state().s, params.initial_state().i);

  if (ol_peak <= i_max) {
    StrategyReport rep = open_loop(params, objective, opts.horizon, opts.dt);
    rep.strategy = "goldilocks";
    rep.notes.push_back("peak constraint inactive: open-loop peak " + std::to_string(ol_peak) +
                        " <= i_max; the peak-capping curve sits at r_bar and no intersection exists");
    return rep;
  }

  // R* - R^ along the open-loop run, defined while S > s_star and I <= i_max.
  auto diff = [&](const EpiState& x) -> std::optional<double> {
    if (!(x.s > s_star) || x.i > i_max || x.i <= 0.0) return std::nullopt;
    const double rs = r_star_single(s_star, x.s, x.i);
    double rh;
    try {
      rh = r_hat_single(i_max, x.s, x.i, params.r_min, params.r_bar).r;
    } catch (const Infeasible&) {
      return std::nullopt;
    }
    return rs - rh;
  };
  auto state_at = [&](std::size_t k, double h) {
    const Sample& a = ol.samples[k];
    return rk4_step(EpiState{a.s, a.i}, h, params.gamma, [&](const EpiState&) { return params.r_bar; });
  };
  const std::optional<double> tau_g =
      detail::first_sign_change(ol, 0, ol.samples.size() - 1, diff, state_at, 1e-4);
  if (!tau_g) throw Infeasible("no goldilocks: R*_si and R^_si never cross before S reaches S*");

  // Open-loop state exactly at tau_g.
  const std::size_t k =
      static_cast<std::size_t>(std::upper_bound(ol.samples.begin(), ol.samples.end(), *tau_g,
                                                [](double t, const Sample& s) { return t < s.t; }) -
                               ol.samples.begin()) - 1;
  const EpiState xs = state_at(k, *tau_g - ol.samples[k].t);
  const double r_star = r_star_single(s_star, xs.s, xs.i);
  const double r_hat = r_hat_single(i_max, xs.s, xs.i, params.r_min, params.r_bar).r;
  const double r_g = std::clamp(0.5 * (r_star + r_hat), params.r_min, params.r_bar);
  if (!(opts.tau_f > *tau_g)) throw DomainError("goldilocks: tau_f must come after tau_s^g");

  ControlSchedule sched;
  sched.add_constant(*tau_g, opts.tau_f, r_g);
  StrategyReport rep = evaluate_schedule("goldilocks", params, objective, std::move(sched),
                                         opts.horizon, opts.dt);
  rep.timings = {{"tau_s", *tau_g}, {"tau_f", opts.tau_f}};
  rep.values = {{"r_g", r_g}, {"r_star_at_tau_s", r_star}, {"r_hat_at_tau_s", r_hat}};
  return rep;
}

/// Wait (open loop) until I = i_max, maintain I constant with R = 1/S until
/// tau_1*, then suspend at the constant R*_si that steers S_inf to the target.
inline StrategyReport wms(const ModelParams& params, const EpidemiologicalObjective& objective,
                          const DesignOptions& opts = {}) {
  params.validate();
  objective.validate();
  const double s_star = objective.s_star_target;
  const double i_max = objective.i_max;

  double tau_s;
  try {
    tau_s = find_time(params, ControlSchedule{}, params.initial_state(), i_rises(i_max),
                      opts.horizon, opts.dt);
  } catch (const NotReached&) {
    throw Infeasible("wms: open-loop I never reaches i_max, no intervention needed");
  }

  // Maintain phase run long enough for S to fall through the target.
  ControlSchedule maintain;
  maintain.add(tau_s, opts.horizon, InverseSusceptibleLaw{});
  const Trajectory tr = simulate(params, maintain, params.initial_state(), opts.horizon, opts.dt);

  auto f = [&](const EpiState& x) -> std::optional<double> {
    if (!(x.s > s_star)) return std::nullopt;
    // Sign chosen so the crossing goes from negative to non-negative.
    return 1.0 / x.s - r_star_single(s_star, x.s, x.i);
  };
  auto state_at = [&](std::size_t k, double h) {
    const Sample& a = tr.samples[k];
    return rk4_step(EpiState{a.s, a.i}, h, params.gamma,
                    [&](const EpiState& y) { return apply_law(InverseSusceptibleLaw{}, y, params); });
  };
  std::size_t first = 0;
  while (first < tr.samples.size() && tr.samples[first].t < tau_s) ++first;
  const std::optional<double> tau_1 =
      detail::first_sign_change(tr, first + 1, tr.samples.size() - 1, f, state_at, 1e-4);
  if (!tau_1)
    throw Infeasible("wms: infeasible bracket, R*_si and 1/S do not cross before S reaches S*");

  const std::size_t k =
      static_cast<std::size_t>(std::upper_bound(tr.samples.begin(), tr.samples.end(), *tau_1,
                                                [](double t, const Sample& s) { return t < s.t; }) -
                               tr.samples.begin()) - 1;
  const EpiState x1 = state_at(k, *tau_1 - tr.samples[k].t);
  const double r_susp = r_star_single(s_star, x1.s, x1.i);
  if (r_susp < params.r_min - 1e-12 || r_susp > params.r_bar + 1e-12)
    throw Infeasible("wms: suspend-phase R*_si outside [r_min, r_bar]");
  if (!(opts.tau_f > *tau_1)) throw DomainError("wms: tau_f must come after tau_1*");

  ControlSchedule sched;
  sched.add(tau_s, *tau_1, InverseSusceptibleLaw{});
  sched.add_constant(*tau_1, opts.tau_f, r_susp);
  StrategyReport rep =
      evaluate_schedule("wms", params, objective, std::move(sched), opts.horizon, opts.dt);
  rep.timings = {{"tau_s", tau_s}, {"tau_1", *tau_1}, {"tau_f", opts.tau_f}};
  rep.values = {{"r_suspend", r_susp}, {"s_at_tau_1", x1.s}, {"i_at_tau_1", x1.i}};
  return rep;
}

}  // namespace sirctl
