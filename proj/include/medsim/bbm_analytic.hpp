#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "medsim/core.hpp"
#include "medsim/errors.hpp"
#include "medsim/numerics.hpp"

namespace medsim {

/// Conditional absorption fraction below which the pre-absorption variance
/// approximation c^2 t (+ initial variance) is considered reliable.
inline constexpr double kSmallTAbsorptionCap = 0.01;

namespace detail {

// Largest x with exp(-x) above the double underflow threshold; used to clip
// the integrable singularity region where the hitting integrand is flat zero.
inline constexpr double kExpUnderflowArg = 690.7755278982137;  // ln(1e300)

// Lower endpoint for the hitting-time integral: before this time the nearest
// image sits so many standard deviations out that the integrand underflows.
inline double hitting_integral_start(double image_distance, double c, double t) {
  double eps = image_distance * image_distance / (2.0 * c * c * kExpUnderflowArg);
  return std::min(eps, t);
}

}  // namespace detail

/// P(message absorbed at the lower bound by time t | start s0).
/// Integral over (0, t] of image_series_even(s0, tau) / tau.
inline double hitting_prob_zero(double s0, double c, double t, const SeriesControl& series_ctl = {},
                                const QuadratureControl& quad_ctl = {}) {
  detail::check_series_args(s0, t, c);
  double start = detail::hitting_integral_start(s0, c, t);
  if (start >= t) return 0.0;
  double p = integrate_1d(
      [&](double tau) { return image_series_even(s0, tau, c, series_ctl) / tau; }, start, t,
      quad_ctl);
  return std::clamp(p, 0.0, 1.0);
}

/// P(message absorbed at the upper bound by time t | start s0).
/// Integral over (0, t] of image_series_odd(s0, tau) / tau.
inline double hitting_prob_one(double s0, double c, double t, const SeriesControl& series_ctl = {},
                               const QuadratureControl& quad_ctl = {}) {
  detail::check_series_args(s0, t, c);
  double start = detail::hitting_integral_start(1.0 - s0, c, t);
  if (start >= t) return 0.0;
  double p = integrate_1d(
      [&](double tau) { return image_series_odd(s0, tau, c, series_ctl) / tau; }, start, t,
      quad_ctl);
  return std::clamp(p, 0.0, 1.0);
}

/// Limits of the absorption probabilities as t grows: (at zero, at one) = (1 - s0, s0).
inline std::pair<double, double> asymptotic_law(double s0) {
  if (!(s0 > 0.0 && s0 < 1.0)) throw DomainError("s0 must lie strictly inside (0, 1)");
  return {1.0 - s0, s0};
}

/// Full conditional law of the message at one time: atoms at the bounds plus
/// the interior density of not-yet-absorbed paths.
struct AbsorbedLaw {
  double s0;
  double c;
  double t;
  double p_zero;
  double p_one;
  SeriesControl series_ctl;

  /// Interior density at x in [0, 1]; integrates to 1 - p_zero - p_one.
  double interior_density(double x) const {
    return interior_image_density(x, t, s0, c, series_ctl);
  }

  /// Quadrature of the interior density over [0, 1].
  double interior_mass(const QuadratureControl& quad_ctl = {}) const {
    return integrate_1d([&](double x) { return interior_density(x); }, 0.0, 1.0, quad_ctl);
  }

  /// Mean of the law: p_one * 1 + integral of x * interior_density.
  double mean(const QuadratureControl& quad_ctl = {}) const {
    return p_one + integrate_1d([&](double x) { return x * interior_density(x); }, 0.0, 1.0,
                                quad_ctl);
  }

  /// Variance of the law about its exact mean s0.
  double variance(const QuadratureControl& quad_ctl = {}) const {
    double second = p_one + integrate_1d([&](double x) { return x * x * interior_density(x); },
                                         0.0, 1.0, quad_ctl);
    return second - s0 * s0;
  }
};

/// Evaluates both absorption probabilities at time t and packages the law.
inline AbsorbedLaw absorbed_law(double s0, double c, double t, const SeriesControl& series_ctl = {},
                                const QuadratureControl& quad_ctl = {}) {
  AbsorbedLaw law{s0, c, t,
                  hitting_prob_zero(s0, c, t, series_ctl, quad_ctl),
                  hitting_prob_one(s0, c, t, series_ctl, quad_ctl), series_ctl};
  if (law.p_zero + law.p_one > 1.0 + 1e-9)
    throw Error("absorption probabilities exceed 1; series or quadrature failure");
  return law;
}

/// E(s_t | s0) = s0 for every t (the process is a martingale).
inline double conditional_message_mean(double s0) {
  if (!(s0 > 0.0 && s0 < 1.0)) throw DomainError("s0 must lie strictly inside (0, 1)");
  return s0;
}

/// E(s_t) = mu, the mean of the initial law.
inline double message_mean(const DerivedMessageStats& stats) { return stats.mu; }

/// Upper bound on D(s_t | s0): min(c^2 t, s0 (1 - s0)).
inline double conditional_variance_bound(double s0, double c, double t) {
  if (!(s0 > 0.0 && s0 < 1.0)) throw DomainError("s0 must lie strictly inside (0, 1)");
  if (!(c > 0.0) || !(t >= 0.0)) throw DomainError("need c > 0 and t >= 0");
  return std::min(c * c * t, s0 * (1.0 - s0));
}

/// Upper bound on D(s_t): min(c^2 t + delta_sq, mu (1 - mu)).
inline double variance_bound(const DerivedMessageStats& stats, double c, double t) {
  if (!(c > 0.0) || !(t >= 0.0)) throw DomainError("need c > 0 and t >= 0");
  return std::min(c * c * t + stats.delta_sq, stats.mu * (1.0 - stats.mu));
}

/// Pre-absorption variance approximation c^2 t + delta_sq; exact while the
/// mass absorbed at either bound is negligible.
inline double small_t_variance(const DerivedMessageStats& stats, double c, double t) {
  if (!(c > 0.0) || !(t >= 0.0)) throw DomainError("need c > 0 and t >= 0");
  return c * c * t + stats.delta_sq;
}

/// Steady-state variance mu (1 - mu) of the two-point limit law.
inline double steady_variance(const DerivedMessageStats& stats) {
  return stats.mu * (1.0 - stats.mu);
}

/// True when the absorbed mass at time t is below kSmallTAbsorptionCap, so the
/// small-t variance formula applies at this s0.
inline bool small_t_variance_reliable(double s0, double c, double t,
                                      const SeriesControl& series_ctl = {},
                                      const QuadratureControl& quad_ctl = {}) {
  double absorbed = hitting_prob_zero(s0, c, t, series_ctl, quad_ctl) +
                    hitting_prob_one(s0, c, t, series_ctl, quad_ctl);
  return absorbed < kSmallTAbsorptionCap;
}

}  // namespace medsim
