#pragma once

#include <Eigen/Dense>
#include <vector>

#include "medsim/bbm_sim.hpp"
#include "medsim/core.hpp"
#include "medsim/degroot.hpp"
#include "medsim/errors.hpp"
#include "medsim/numerics.hpp"

namespace medsim {

/// Message-driven opinion dynamics d/dt o = A o + B s with A = alpha W - I and
/// B = (1 - alpha) U, discretized exactly for piecewise-constant messages:
///   o_{k+1} = propagator * o_k + zoh_gain * s_k,
/// propagator = exp(A dt), zoh_gain = A^{-1} (propagator - I) B.
class MedSystem {
 public:
  MedSystem(NetworkModel network, double dt)
      : network_(validate_network(std::move(network))), dt_(dt) {
    if (!(dt > 0.0)) throw DomainError("step dt must be positive");
    const Index n = network_.n_agents;
    system_matrix_ = network_.alpha * network_.W - Matrix::Identity(n, n);
    input_matrix_ = (1.0 - network_.alpha) * network_.U;
    propagator_ = mat_exp(system_matrix_, dt_);
    if (network_.alpha == 1.0) {
      // pure consensus: no message input
      zoh_gain_ = Matrix::Zero(n, network_.n_sources);
    } else {
      Eigen::PartialPivLU<Matrix> lu(system_matrix_);
      Matrix rhs = (propagator_ - Matrix::Identity(n, n)) * input_matrix_;
      zoh_gain_ = lu.solve(rhs);
      if ((system_matrix_ * zoh_gain_ - rhs).lpNorm<Eigen::Infinity>() > 1e-8)
        throw SingularMatrixError("alpha W - I is numerically singular");
    }
  }

  const NetworkModel& network() const { return network_; }
  double dt() const { return dt_; }
  const Matrix& system_matrix() const { return system_matrix_; }
  const Matrix& input_matrix() const { return input_matrix_; }
  const Matrix& propagator() const { return propagator_; }
  const Matrix& zoh_gain() const { return zoh_gain_; }

 private:
  NetworkModel network_;
  double dt_;
  Matrix system_matrix_;
  Matrix input_matrix_;
  Matrix propagator_;
  Matrix zoh_gain_;
};

/// Integrates the opinion dynamics against one realization of the message
/// paths. All paths must share one grid whose dt matches the system.
inline OpinionTrajectory med_trajectory(const MedSystem& sys, const Eigen::Ref<const Vector>& o0,
                                        const std::vector<MessagePath>& messages) {
  const Index n = sys.network().n_agents;
  const Index m = sys.network().n_sources;
  if (o0.size() != n) throw DimensionError("o0 length must match n_agents");
  if (static_cast<Index>(messages.size()) != m)
    throw DimensionError("need one message path per source");
  const TimeGrid& grid = messages.front().grid;
  for (const MessagePath& path : messages)
    if (!(path.grid == grid)) throw GridMismatchError("message paths use different grids");
  if (grid.dt != sys.dt())
    throw GridMismatchError("message grid dt does not match the system step");

  OpinionTrajectory traj{grid, Matrix(n, grid.n_points())};
  traj.opinions.col(0) = o0;
  Vector s(m);
  for (Index k = 1; k <= grid.n_steps; ++k) {
    for (Index j = 0; j < m; ++j) s[j] = messages[j].values[k - 1];
    traj.opinions.col(k) = sys.propagator() * traj.opinions.col(k - 1) + sys.zoh_gain() * s;
  }
  return traj;
}

/// Ensemble-mean opinion at time t for initial-message mean mu:
/// exp(A t) o0 + mu (I - exp(A t)) 1.
inline Vector opinion_mean(const MedSystem& sys, const Eigen::Ref<const Vector>& o0, double mu,
                           double t) {
  const Index n = sys.network().n_agents;
  if (o0.size() != n) throw DimensionError("o0 length must match n_agents");
  if (!(t >= 0.0)) throw DomainError("time must be nonnegative");
  Matrix e = mat_exp(sys.system_matrix(), t);
  return e * o0 + mu * (Vector::Ones(n) - e * Vector::Ones(n));
}

/// Limit of the per-agent opinion variance:
/// mu (1 - mu) (1 - alpha)^2 diag(A^{-1} U U^T A^{-T}).
/// Zero when alpha = 1 (messages never enter).
inline Vector opinion_variance_limit(const MedSystem& sys, double mu) {
  const Index n = sys.network().n_agents;
  if (!(mu >= 0.0 && mu <= 1.0)) throw DomainError("mu must lie in [0, 1]");
  if (sys.network().alpha == 1.0) return Vector::Zero(n);
  Eigen::PartialPivLU<Matrix> lu(sys.system_matrix());
  Matrix x = lu.solve(sys.network().U);
  double scale = mu * (1.0 - mu) * (1.0 - sys.network().alpha) * (1.0 - sys.network().alpha);
  return scale * x.rowwise().squaredNorm();
}

}  // namespace medsim
