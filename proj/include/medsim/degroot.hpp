#pragma once

#include <Eigen/Dense>

#include "medsim/core.hpp"
#include "medsim/errors.hpp"
#include "medsim/numerics.hpp"

namespace medsim {

/// Opinions of N agents on a uniform grid; column k holds the opinion vector
/// at time k * dt.
struct OpinionTrajectory {
  TimeGrid grid;
  Matrix opinions;
};

/// Autonomous consensus dynamics d/dt o = (W - I) o, integrated exactly on the
/// grid by repeated application of the one-step propagator exp((W - I) dt).
inline OpinionTrajectory degroot_trajectory(const Eigen::Ref<const Matrix>& W,
                                            const Eigen::Ref<const Vector>& o0,
                                            const TimeGrid& grid) {
  const Index n = W.rows();
  if (W.cols() != n) throw DimensionError("W must be square");
  if (o0.size() != n) throw DimensionError("o0 length must match W");
  OpinionTrajectory traj{grid, Matrix(n, grid.n_points())};
  traj.opinions.col(0) = o0;
  if (grid.n_steps == 0) return traj;
  const Matrix propagator = mat_exp((W - Matrix::Identity(n, n)).eval(), grid.dt);
  for (Index k = 1; k <= grid.n_steps; ++k)
    traj.opinions.col(k) = propagator * traj.opinions.col(k - 1);
  return traj;
}

/// Consensus limit of the dynamics: (l^T o0) 1 with l the left unit
/// eigenvector of W. Requires that eigenvalue to be simple.
inline Vector degroot_steady_state(const Eigen::Ref<const Matrix>& W,
                                   const Eigen::Ref<const Vector>& o0) {
  if (o0.size() != W.rows()) throw DimensionError("o0 length must match W");
  Vector l = left_unit_eigenvector(W);
  return Vector::Constant(o0.size(), l.dot(o0));
}

}  // namespace medsim
