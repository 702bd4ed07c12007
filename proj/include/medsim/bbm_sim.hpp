#pragma once

#include <cmath>
#include <optional>

#include "medsim/core.hpp"
#include "medsim/errors.hpp"
#include "medsim/rng.hpp"

namespace medsim {

/// Bridge-correction exponent above which the crossing probability is below
/// 2e-22 and the uniform draw is skipped entirely.
inline constexpr double kBridgeExpCutoff = 50.0;

/// Where and when a path was absorbed. step is the first grid index at the
/// bound; bound is 0 or 1.
struct Absorption {
  Index step;
  int bound;
};

/// One sampled message path on a uniform grid. values has grid.n_points()
/// entries; after absorption every entry holds the bound value.
struct MessagePath {
  TimeGrid grid;
  Vector values;
  std::optional<Absorption> absorbed_at;

  bool absorbed() const { return absorbed_at.has_value(); }
};

/// Draws the initial value: fixed_s0 when set, else uniform on [xi_low, xi_high].
/// Consumes one uniform from the stream in both cases so path layouts agree.
inline double sample_initial(const MessageModelParams& params, RngStream& stream) {
  double u = stream.uniform01();
  if (params.fixed_s0) return *params.fixed_s0;
  return params.xi_low + (params.xi_high - params.xi_low) * u;
}

namespace detail {

// Probability that a free Brownian bridge between two interior points dipped
// across the bound at `level` within one step: exp(-2 d_prev d_next / (c^2 dt)).
// Returns true when the bridge is deemed to have crossed.
inline bool bridge_crossed(double d_prev, double d_next, double c, double dt, RngStream& stream) {
  double arg = 2.0 * d_prev * d_next / (c * c * dt);
  if (arg > kBridgeExpCutoff) return false;  // crossing probability < 2e-22
  return stream.uniform01() < std::exp(-arg);
}

}  // namespace detail

/// Samples one message path with exact Gaussian increments. A step that lands
/// on or beyond a bound absorbs there; with bridge_correction (default) a step
/// that stays interior may still absorb, with the Brownian-bridge crossing
/// probability for each bound (lower bound tested first).
inline MessagePath sample_path(const MessageModelParams& params, const TimeGrid& grid,
                               RngStream& stream, bool bridge_correction = true) {
  MessagePath path{grid, Vector(grid.n_points()), std::nullopt};
  double value = sample_initial(params, stream);
  path.values[0] = value;
  const double c_sqrt_dt = params.c * std::sqrt(grid.dt);

  Index k = 1;
  for (; k <= grid.n_steps; ++k) {
    double next = value + c_sqrt_dt * stream.normal();
    if (next <= 0.0 || next >= 1.0) {
      int bound = next <= 0.0 ? 0 : 1;
      path.absorbed_at = Absorption{k, bound};
      path.values.segment(k, grid.n_points() - k).setConstant(static_cast<double>(bound));
      break;
    }
    if (bridge_correction) {
      if (detail::bridge_crossed(value, next, params.c, grid.dt, stream)) {
        path.absorbed_at = Absorption{k, 0};
        path.values.segment(k, grid.n_points() - k).setZero();
        break;
      }
      if (detail::bridge_crossed(1.0 - value, 1.0 - next, params.c, grid.dt, stream)) {
        path.absorbed_at = Absorption{k, 1};
        path.values.segment(k, grid.n_points() - k).setOnes();
        break;
      }
    }
    value = next;
    path.values[k] = value;
  }
  return path;
}

}  // namespace medsim
