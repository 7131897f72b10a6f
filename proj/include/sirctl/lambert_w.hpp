#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sirctl/errors.hpp"

namespace sirctl {

inline constexpr double kBranchPointSlack = 1e-12;

/**
 * Principal branch W0 of the Lambert W function, the inverse of w -> w*exp(w)
 * on [-1/e, inf) with W0 >= -1.
 *
 * Halley iteration. The starting point is the branch-point expansion
 * -1 + sqrt(2(1 + e z)) close to -1/e, log1p(z) for moderate z, and
 * log(z) - log(log(z)) for large z.
 *
 * Arguments in [-1/e - 1e-12, -1/e) are treated as the branch point itself;
 * anything below throws DomainError.
 */
inline double lambert_w0(double z) {
  constexpr double kInvE = 1.0 / std::numbers::e;
  if (std::isnan(z)) throw DomainError("lambert_w0: NaN argument");
  if (z < -kInvE - kBranchPointSlack)
    throw DomainError("lambert_w0: argument " + std::to_string(z) + " below -1/e");
  if (z <= -kInvE) return -1.0;
  if (z == 0.0) return 0.0;
  if (std::isinf(z)) return z;

  const double p2 = 2.0 * (1.0 + std::numbers::e * z);
  double w;
  if (z < -0.25) {
    const double p = std::sqrt(std::max(p2, 0.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (z < 3.0) {
    w = std::log1p(z);
  } else {
    const double lz = std::log(z);
    w = lz - std::log(lz);
  }

  for (int it = 0; it < 50; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    const double wp1 = w + 1.0;
    if (wp1 <= 0.0) {
      w = -1.0 + 1e-8;
      continue;
    }
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    if (denom == 0.0) break;
    const double step = f / denom;
    w -= step;
    if (w < -1.0) w = -1.0;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(w)))
      break;
  }
  return w;
}

}  // namespace sirctl
