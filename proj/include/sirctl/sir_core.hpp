#pragma once

// Controlled SIR model in day-time:
//   dS/dt = -gamma * R(t) * S * I
//   dI/dt =  gamma * R(t) * S * I - gamma * I
// with the dimensionless time tau = gamma * t carried alongside every sample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sirctl/errors.hpp"

namespace sirctl {

inline constexpr double kEventTolDays = 1e-6;
inline constexpr double kDefaultDt = 0.01;
inline constexpr double kStateSlack = 1e-12;

/// Point (S, I) of the constraint set {S, I in [0,1], S + I <= 1}.
struct EpiState {
  double s = 1.0;
  double i = 0.0;
};

inline bool is_admissible(const EpiState& x, double slack = kStateSlack) {
  return std::isfinite(x.s) && std::isfinite(x.i) && x.s >= -slack && x.i >= -slack &&
         x.s <= 1.0 + slack && x.i <= 1.0 + slack && x.s + x.i <= 1.0 + slack;
}

inline void require_admissible(const EpiState& x, const char* what) {
  if (!is_admissible(x)) {
    throw DomainError(std::string(what) + ": state (S=" + std::to_string(x.s) +
                      ", I=" + std::to_string(x.i) + ") outside 0<=S,I, S+I<=1");
  }
}

struct ModelParams {
  double r_bar = 2.9;     ///< reproduction number without intervention
  double r_min = 0.66;    ///< hardest achievable reproduction number
  double gamma = 0.1;     ///< removal rate, 1/day
  double epsilon = 1.49e-5;  ///< initial infected fraction

  EpiState initial_state() const { return {1.0 - epsilon, epsilon}; }

  void validate() const {
    if (!(r_min > 0.0)) throw DomainError("model.r_min must be > 0");
    if (!(r_min < r_bar)) throw DomainError("model.r_min must be < model.r_bar");
    if (!(gamma > 0.0)) throw DomainError("model.gamma must be > 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("model.epsilon must lie in (0, 1)");
  }
};

struct Derivative {
  double ds;
  double di;
};

inline Derivative derivative(const EpiState& x, double r, double gamma) {
  const double incidence = gamma * r * x.s * x.i;
  return {-incidence, incidence - gamma * x.i};
}

/// Single classical RK4 step of size h; `rate` maps a stage state to R.
template <typename RateFn>
EpiState rk4_step(const EpiState& x, double h, double gamma, RateFn&& rate) {
  auto f = [&](const EpiState& y) { return derivative(y, rate(y), gamma); };
  const Derivative k1 = f(x);
  const Derivative k2 = f({x.s + 0.5 * h * k1.ds, x.i + 0.5 * h * k1.di});
  const Derivative k3 = f({x.s + 0.5 * h * k2.ds, x.i + 0.5 * h * k2.di});
  const Derivative k4 = f({x.s + h * k3.ds, x.i + h * k3.di});
  return {x.s + h / 6.0 * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds),
          x.i + h / 6.0 * (k1.di + 2.0 * k2.di + 2.0 * k3.di + k4.di)};
}

// ---------------------------------------------------------------------------
// Control schedules

struct ConstantLaw {
  double r;
};

/// R(t) = 1/S(t), which zeroes dI/dt; clamped into [r_min, r_bar].
struct InverseSusceptibleLaw {};

using ControlLaw = std::variant<ConstantLaw, InverseSusceptibleLaw>;

inline double apply_law(const ControlLaw& law, const EpiState& x, const ModelParams& p) {
  if (const auto* c = std::get_if<ConstantLaw>(&law)) return c->r;
  const double r = x.s > 0.0 ? 1.0 / x.s : p.r_bar;
  return std::clamp(r, p.r_min, p.r_bar);
}

inline bool is_feedback(const ControlLaw& law) {
  return std::holds_alternative<InverseSusceptibleLaw>(law);
}

/// Law active on [t_start, t_end).
struct Segment {
  double t_start;
  double t_end;
  ControlLaw law;
};

/// Piecewise description of R(t). Outside every segment R = r_bar.
class ControlSchedule {
 public:
  ControlSchedule() = default;
  explicit ControlSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  ControlSchedule& add(double t_start, double t_end, ControlLaw law) {
    segments_.push_back({t_start, t_end, law});
    return *this;
  }
  ControlSchedule& add_constant(double t_start, double t_end, double r) {
    return add(t_start, t_end, ConstantLaw{r});
  }

  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  /// Intervention end; 0 for the open-loop schedule.
  double end_time() const { return segments_.empty() ? 0.0 : segments_.back().t_end; }

  const Segment* segment_at(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const Segment& s) { return v < s.t_start; });
    if (it == segments_.begin()) return nullptr;
    --it;
    return t < it->t_end ? &*it : nullptr;
  }

  double rate(double t, const EpiState& x, const ModelParams& p) const {
    const Segment* seg = segment_at(t);
    return seg ? apply_law(seg->law, x, p) : p.r_bar;
  }

  void validate(const ModelParams& p) const {
    double prev_end = 0.0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      const Segment& s = segments_[k];
      const std::string where = "schedule segment " + std::to_string(k);
      if (!std::isfinite(s.t_start) || !std::isfinite(s.t_end))
        throw DomainError(where + ": segment times must be finite");
      if (s.t_start < 0.0) throw DomainError(where + ": starts before t = 0");
      if (!(s.t_start < s.t_end)) throw DomainError(where + ": t_start must be < t_end");
      if (k > 0 && s.t_start < prev_end - 1e-12)
        throw DomainError(where + ": segments overlap or are out of order");
      if (const auto* c = std::get_if<ConstantLaw>(&s.law)) {
        if (!(c->r >= p.r_min - 1e-12 && c->r <= p.r_bar + 1e-12))
          throw DomainError(where + ": R=" + std::to_string(c->r) + " outside [r_min, r_bar]");
      }
      prev_end = s.t_end;
    }
  }

 private:
  std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// Trajectories and events

enum class EventKind {
  IRises,  ///< I reaches `level` from below
  SFalls,  ///< S reaches `level` from above
  IPeak,   ///< dI/dt changes sign from + to -
};

struct Watch {
  EventKind kind;
  double level = 0.0;
};

inline Watch i_rises(double level) { return {EventKind::IRises, level}; }
inline Watch s_falls(double level) { return {EventKind::SFalls, level}; }
inline Watch i_peak() { return {EventKind::IPeak, 0.0}; }

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::IRises: return "i_rises";
    case EventKind::SFalls: return "s_falls";
    case EventKind::IPeak: return "i_peak";
  }
  return "unknown";
}

struct Event {
  double t;
  Watch watch;
};

struct Sample {
  double t;    ///< days
  double tau;  ///< gamma * t
  double s;
  double i;
  double r;    ///< R applied from this sample onwards
};

struct Trajectory {
  std::vector<Sample> samples;
  std::vector<Event> events;

  EpiState final_state() const { return {samples.back().s, samples.back().i}; }
  double final_time() const { return samples.back().t; }

  double max_i() const {
    double m = 0.0;
    for (const auto& x : samples) m = std::max(m, x.i);
    return m;
  }
};

namespace detail {

// Sign convention: the watched condition "has happened" once g >= 0.
inline double watch_value(const Watch& w, const EpiState& x, double r, double gamma) {
  switch (w.kind) {
    case EventKind::IRises: return x.i - w.level;
    case EventKind::SFalls: return w.level - x.s;
    case EventKind::IPeak: return -derivative(x, r, gamma).di;
  }
  return -1.0;
}

inline std::vector<double> breakpoints(const ControlSchedule& schedule, double t_end) {
  std::vector<double> bps;
  for (const auto& s : schedule.segments()) {
    if (s.t_start > 0.0 && s.t_start < t_end) bps.push_back(s.t_start);
    if (s.t_end > 0.0 && s.t_end < t_end) bps.push_back(s.t_end);
  }
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  return bps;
}

}  // namespace detail

/// Fixed-step RK4 integration of the controlled model on [0, t_end].
///
/// The step grid is k*dt, with extra nodes inserted at every schedule
/// discontinuity so no step straddles a change of law. Feedback laws are
/// evaluated at each RK stage. Crossings of the watched conditions are
/// localized by bisection over the bracketing step to kEventTolDays.
inline Trajectory simulate(const ModelParams& params, const ControlSchedule& schedule,
                           const EpiState& x0, double t_end, double dt = kDefaultDt,
                           std::span<const Watch> watches = {}) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("simulate: dt must be > 0");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw DomainError("simulate: t_end must be >= 0");
  params.validate();
  require_admissible(x0, "simulate");
  schedule.validate(params);

  const double gamma = params.gamma;
  const std::vector<double> bps = detail::breakpoints(schedule, t_end);

  Trajectory traj;
  traj.samples.reserve(static_cast<std::size_t>(t_end / dt) + bps.size() + 2);

  auto law_rate = [&](const Segment* seg) {
    return [seg, &params](const EpiState& y) {
      return seg ? apply_law(seg->law, y, params) : params.r_bar;
    };
  };

  double t = 0.0;
  EpiState x = x0;
  std::vector<double> g_prev(watches.size());
  {
    const Segment* seg0 = schedule.segment_at(0.0);
    const double r0 = law_rate(seg0)(x);
    for (std::size_t w = 0; w < watches.size(); ++w) {
      g_prev[w] = detail::watch_value(watches[w], x, r0, gamma);
      if (g_prev[w] >= 0.0) traj.events.push_back({0.0, watches[w]});
    }
  }

  auto bp = bps.begin();
  std::size_t k = 1;
  const double snap = 1e-9 * dt;
  while (t < t_end - snap) {
    double node = static_cast<double>(k) * dt;
    double t_next = std::min(node, t_end);
    if (bp != bps.end() && *bp < t_next - snap) t_next = *bp;
    if (std::abs(t_next - node) <= snap) ++k;
    if (bp != bps.end() && std::abs(*bp - t_next) <= snap) ++bp;

    const double h = t_next - t;
    const Segment* seg = schedule.segment_at(t + 0.5 * h);
    auto rate = law_rate(seg);
    const double r_start = rate(x);
    traj.samples.push_back({t, gamma * t, x.s, x.i, r_start});

    const EpiState x_next = rk4_step(x, h, gamma, rate);
    const double r_end = rate(x_next);

    for (std::size_t w = 0; w < watches.size(); ++w) {
      const Watch& watch = watches[w];
      const double g_a = detail::watch_value(watch, x, r_start, gamma);
      const double g_b = detail::watch_value(watch, x_next, r_end, gamma);
      if (g_prev[w] < 0.0 && g_a >= 0.0) {
        // Condition switched on exactly at a law discontinuity.
        traj.events.push_back({t, watch});
      } else if (g_a < 0.0 && g_b >= 0.0) {
        double lo = 0.0, hi = h;
        while (hi - lo > kEventTolDays) {
          const double mid = 0.5 * (lo + hi);
          const EpiState y = rk4_step(x, mid, gamma, rate);
          if (detail::watch_value(watch, y, rate(y), gamma) >= 0.0) hi = mid;
          else lo = mid;
        }
        traj.events.push_back({t + hi, watch});
      }
      g_prev[w] = g_b;
    }

    x = x_next;
    t = t_next;
  }

  traj.samples.push_back({t, gamma * t, x.s, x.i, schedule.rate(t, x, params)});
  std::stable_sort(traj.events.begin(), traj.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return traj;
}

inline double find_time(const Trajectory& traj, const Watch& watch) {
  for (const auto& e : traj.events) {
    if (e.watch.kind == watch.kind && e.watch.level == watch.level) return e.t;
  }
  throw NotReached("condition " + to_string(watch.kind) + "(" + std::to_string(watch.level) +
                   ") not reached on the simulated horizon");
}

/// First time the condition holds, simulating the schedule from x0 over [0, t_end].
inline double find_time(const ModelParams& params, const ControlSchedule& schedule,
                        const EpiState& x0, const Watch& watch, double t_end,
                        double dt = kDefaultDt) {
  const Watch ws[] = {watch};
  return find_time(simulate(params, schedule, x0, t_end, dt, ws), watch);
}

}  // namespace sirctl
