#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "medsim/errors.hpp"

namespace medsim {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerance on |row sum - 1| for row-stochastic matrices.
inline constexpr double kRowSumTol = 1e-12;

/// Parameters of the bounded-message process: diffusion rate c and the
/// support [xi_low, xi_high] of the uniform initial value. If fixed_s0 is set
/// every path starts there instead (conditional ensembles).
struct MessageModelParams {
  MessageModelParams(double c_, double xi_low_, double xi_high_,
                     std::optional<double> fixed_s0_ = std::nullopt)
      : c(c_), xi_low(xi_low_), xi_high(xi_high_), fixed_s0(fixed_s0_) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("message rate c must be positive and finite");
    if (!(0.0 < xi_low && xi_low <= xi_high && xi_high < 1.0))
      throw DomainError("initial support must satisfy 0 < xi_low <= xi_high < 1");
    if (fixed_s0 && !(*fixed_s0 > 0.0 && *fixed_s0 < 1.0))
      throw DomainError("fixed_s0 must lie strictly inside (0, 1)");
  }

  double c;
  double xi_low;
  double xi_high;
  std::optional<double> fixed_s0;
};

/// Moments of the initial message law: mean mu and variance delta_sq.
struct DerivedMessageStats {
  double mu;
  double delta_sq;
};

/// Mean and variance of the initial value implied by the params.
/// A point mass (fixed_s0) has mu = s0 and delta_sq = 0.
inline DerivedMessageStats derive_message_stats(const MessageModelParams& params) {
  if (params.fixed_s0) return {*params.fixed_s0, 0.0};
  double width = params.xi_high - params.xi_low;
  return {0.5 * (params.xi_low + params.xi_high), width * width / 12.0};
}

/// Uniform time grid with points k * dt for k = 0..n_steps.
/// n_steps = 0 is allowed and yields the single point t = 0.
struct TimeGrid {
  TimeGrid(double dt_, Index n_steps_) : dt(dt_), n_steps(n_steps_) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("grid dt must be positive and finite");
    if (n_steps < 0) throw DomainError("grid n_steps must be nonnegative");
  }

  double dt;
  Index n_steps;

  Index n_points() const { return n_steps + 1; }
  double time(Index k) const { return static_cast<double>(k) * dt; }
  double horizon() const { return time(n_steps); }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.dt == b.dt && a.n_steps == b.n_steps;
  }
};

/// Network shared by the opinion models: N agents with row-stochastic
/// influence matrix W (N x N), M message sources with row-stochastic
/// attention matrix U (N x M), and self-reliance weight alpha in (0, 1].
struct NetworkModel {
  Index n_agents = 0;
  Index n_sources = 0;
  Matrix W;
  Matrix U;
  double alpha = 1.0;
};

namespace detail {

inline void check_rows_stochastic(const Matrix& m, const std::string& name) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!(m(i, j) >= 0.0)) throw NegativeEntryError(name, i, j, m(i, j));
    }
    double sum = m.row(i).sum();
    if (std::abs(sum - 1.0) > kRowSumTol) throw RowSumError(name, i, sum);
  }
}

}  // namespace detail

/// Checks dimensions, nonnegativity, row sums, and alpha; returns the model.
inline NetworkModel validate_network(NetworkModel model) {
  if (model.n_agents < 1) throw DimensionError("network needs at least one agent");
  if (model.n_sources < 1) throw DimensionError("network needs at least one message source");
  if (model.W.rows() != model.n_agents || model.W.cols() != model.n_agents)
    throw DimensionError("W must be n_agents x n_agents");
  if (model.U.rows() != model.n_agents || model.U.cols() != model.n_sources)
    throw DimensionError("U must be n_agents x n_sources");
  if (!(model.alpha > 0.0 && model.alpha <= 1.0))
    throw DomainError("alpha must lie in (0, 1]");
  detail::check_rows_stochastic(model.W, "W");
  detail::check_rows_stochastic(model.U, "U");
  return model;
}

/// Divides every row of W and U by its sum so the result is row-stochastic.
/// Rows must be nonnegative with positive sums; does not validate otherwise.
inline NetworkModel renormalize_rows(NetworkModel model) {
  auto scale = [](Matrix& m, const std::string& name) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (!(m(i, j) >= 0.0)) throw NegativeEntryError(name, i, j, m(i, j));
      }
      double sum = m.row(i).sum();
      if (!(sum > 0.0)) throw DomainError("cannot renormalize " + name + ": row " +
                                          std::to_string(i) + " sums to " + std::to_string(sum));
      m.row(i) /= sum;
    }
  };
  scale(model.W, "W");
  scale(model.U, "U");
  return model;
}

}  // namespace medsim
