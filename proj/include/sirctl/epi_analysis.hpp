#pragma once

// Closed-form open-loop epidemic metrics: herd immunity, final size, peak
// prevalence, the constrained maximum of the final size, Lyapunov
// diagnostics around an equilibrium (s_bar, 0) and the AUC identity.

#include <algorithm>
#include <cmath>
#include <string>

#include "sirctl/errors.hpp"
#include "sirctl/lambert_w.hpp"
#include "sirctl/sir_core.hpp"

namespace sirctl {

/// I below this value counts as quasi-steady state.
inline constexpr double kQssThreshold = 1e-6;

namespace detail {
inline void require_positive_r(double r, const char* what) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw DomainError(std::string(what) + ": reproduction number must be > 0");
}
}  // namespace detail

/// S* = min{1, 1/r}.
inline double herd_immunity(double r) {
  detail::require_positive_r(r, "herd_immunity");
  return std::min(1.0, 1.0 / r);
}

struct FinalSizeResult {
  double s_inf;
  double efs;
};

/// Limit of S under constant R = r starting from (s0, i0).
inline FinalSizeResult s_infinity(double r, double s0, double i0) {
  detail::require_positive_r(r, "s_infinity");
  require_admissible({s0, i0}, "s_infinity");
  s0 = std::max(s0, 0.0);
  i0 = std::max(i0, 0.0);
  if (s0 == 0.0) return {0.0, 1.0};
  const double z = -r * s0 * std::exp(-r * (s0 + i0));
  const double s_inf = -lambert_w0(z) / r;
  return {s_inf, 1.0 - s_inf};
}

/// Peak of I under constant R = r starting from (s0, i0); i0 when I only decays.
inline double peak_prevalence(double r, double s0, double i0) {
  detail::require_positive_r(r, "peak_prevalence");
  require_admissible({s0, i0}, "peak_prevalence");
  if (s0 * r <= 1.0) return i0;
  return i0 + s0 - (1.0 + std::log(s0 * r)) / r;
}

struct SInfinityMax {
  double value;
  EpiState argmax;
};

/// Maximum of s_infinity over initial states with I >= delta; attained at (S*, delta).
inline SInfinityMax max_s_infinity(double r, double delta) {
  detail::require_positive_r(r, "max_s_infinity");
  if (!(delta >= 0.0 && delta <= 1.0)) throw DomainError("max_s_infinity: delta outside [0, 1]");
  const double s_star = herd_immunity(r);
  const double z = -r * s_star * std::exp(-r * (s_star + delta));
  return {-lambert_w0(z) / r, {s_star, delta}};
}

/// V(S, I) = S - s_bar - s_bar ln(S / s_bar) + I.
inline double lyapunov_value(const EpiState& x, double s_bar) {
  if (!(x.s > 0.0)) throw DomainError("lyapunov_value: S must be > 0");
  if (!(s_bar > 0.0)) throw DomainError("lyapunov_value: s_bar must be > 0");
  return x.s - s_bar - s_bar * std::log(x.s / s_bar) + x.i;
}

/// dV/dtau along the open-loop flow: I (r s_bar - 1).
inline double lyapunov_rate(const EpiState& x, double r, double s_bar) {
  if (!(x.s > 0.0)) throw DomainError("lyapunov_rate: S must be > 0");
  if (!(s_bar > 0.0)) throw DomainError("lyapunov_rate: s_bar must be > 0");
  return x.i * (r * s_bar - 1.0);
}

enum class Stability { Stable, Unstable };

struct EquilibriumClass {
  double s_bar;
  Stability label;
};

inline EquilibriumClass classify_equilibrium(double s_bar, double r) {
  if (!(s_bar >= 0.0 && s_bar <= 1.0)) throw DomainError("classify_equilibrium: s_bar outside [0, 1]");
  return {s_bar, s_bar <= herd_immunity(r) ? Stability::Stable : Stability::Unstable};
}

/// Trapezoidal integral of I over tau; the run must have reached quasi-steady state.
inline double auc_infected(const Trajectory& traj) {
  if (traj.samples.empty()) throw DomainError("auc_infected: empty trajectory");
  if (traj.samples.back().i >= kQssThreshold)
    throw NotConverged("auc_infected: I(end) = " + std::to_string(traj.samples.back().i) +
                       " has not reached quasi-steady state");
  double area = 0.0;
  for (std::size_t k = 1; k < traj.samples.size(); ++k) {
    const auto& a = traj.samples[k - 1];
    const auto& b = traj.samples[k];
    area += 0.5 * (a.i + b.i) * (b.tau - a.tau);
  }
  return area;
}

}  // namespace sirctl
