#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "medsim/bbm_sim.hpp"
#include "medsim/core.hpp"
#include "medsim/errors.hpp"
#include "medsim/med.hpp"
#include "medsim/rng.hpp"

namespace medsim {

/// Paths per work block. Fixed so ensemble results are bit-identical for any
/// thread count: block b always covers runs [b * size, (b+1) * size) and block
/// partials are merged in index order.
inline constexpr Index kEnsembleBlockSize = 256;

/// Maps a checkpoint time onto its grid index; the time must lie on the grid.
inline Index grid_index_for_time(const TimeGrid& grid, double t) {
  if (!(t >= 0.0)) throw CheckpointError("checkpoint time must be nonnegative");
  Index k = static_cast<Index>(std::llround(t / grid.dt));
  if (k < 0 || k > grid.n_steps)
    throw CheckpointError("checkpoint time " + std::to_string(t) + " outside the grid");
  if (std::abs(grid.time(k) - t) > 1e-9 * std::max(grid.dt, std::abs(t)))
    throw CheckpointError("checkpoint time " + std::to_string(t) + " is not a grid point");
  return k;
}

/// Interior histogram of surviving paths at one checkpoint. mass is the
/// fraction of all paths per bin, so it sums to surviving_fraction.
struct Histogram {
  double t = 0.0;
  Index grid_index = 0;
  Index n_bins = 0;
  Vector mass;
  double surviving_fraction = 0.0;

  double bin_width() const { return 1.0 / static_cast<double>(n_bins); }
  Vector density() const { return mass * static_cast<double>(n_bins); }
};

enum class EnsembleKind { message, opinion };

/// Moment trajectories of an ensemble. Rows of the matrices are series (one
/// for a message ensemble, n_agents for an opinion ensemble), columns are grid
/// points. The hit vectors are cumulative absorption frequencies and are empty
/// for opinion ensembles.
struct EnsembleStats {
  EnsembleKind kind = EnsembleKind::message;
  TimeGrid grid{1.0, 0};
  Index n_runs = 0;
  Matrix mean;
  Matrix variance;
  Matrix se_mean;
  Matrix se_variance;
  Vector hit_zero_freq;
  Vector hit_one_freq;
  Vector se_hit_zero;
  Vector se_hit_one;
  std::vector<Histogram> histograms;

  Index n_series() const { return mean.rows(); }
};

/// Tuning knobs shared by the ensemble drivers.
struct EnsembleOptions {
  int threads = 0;  // <= 0 picks hardware concurrency
  bool bridge_correction = true;
  Index n_bins = 100;
  std::vector<double> histogram_times;  // message ensembles only
};

namespace detail {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(partial[b], run_begin, run_end) over fixed-size blocks, work-stealing
// whole blocks. Partials come back in block order regardless of schedule.
template <typename Partial, typename BlockFn>
std::vector<Partial> run_blocks(Index n_runs, int threads, BlockFn fn) {
  const Index n_blocks = (n_runs + kEnsembleBlockSize - 1) / kEnsembleBlockSize;
  std::vector<Partial> partials(static_cast<std::size_t>(n_blocks));
  std::atomic<Index> next{0};
  auto worker = [&]() {
    for (Index b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) {
      Index begin = b * kEnsembleBlockSize;
      Index end = std::min(n_runs, begin + kEnsembleBlockSize);
      fn(partials[static_cast<std::size_t>(b)], begin, end);
    }
  };
  int n_threads = static_cast<int>(std::min<Index>(resolve_threads(threads), n_blocks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads - 1));
    for (int i = 0; i < n_threads - 1; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& th : pool) th.join();
  }
  return partials;
}

struct MessagePartial {
  Vector sum;    // per grid point, over paths still interior there
  Vector sumsq;
  std::vector<Absorption> absorptions;
  Matrix hist_counts;  // histogram checkpoint x bin
  Index n = 0;
};

struct OpinionPartial {
  Index n = 0;
  Matrix mean;
  Matrix m2;
};

}  // namespace detail

/// Samples n_runs message paths (stream id = path index) and accumulates
/// moment trajectories, cumulative absorption frequencies, and interior
/// histograms at the requested checkpoint times.
inline EnsembleStats run_message_ensemble(const MessageModelParams& params, const TimeGrid& grid,
                                          Index n_runs, SeedSpec seed,
                                          const EnsembleOptions& opts = {}) {
  if (n_runs < 2) throw DomainError("ensemble needs n_runs >= 2");
  if (opts.n_bins < 1) throw DomainError("n_bins must be positive");
  std::vector<Index> hist_idx;
  hist_idx.reserve(opts.histogram_times.size());
  for (double t : opts.histogram_times) hist_idx.push_back(grid_index_for_time(grid, t));

  const Index n_pts = grid.n_points();
  const Index n_cp = static_cast<Index>(hist_idx.size());
  auto fill_block = [&](detail::MessagePartial& part, Index begin, Index end) {
    part.sum = Vector::Zero(n_pts);
    part.sumsq = Vector::Zero(n_pts);
    part.hist_counts = Matrix::Zero(n_cp, opts.n_bins);
    part.absorptions.reserve(static_cast<std::size_t>(end - begin));
    for (Index i = begin; i < end; ++i) {
      RngStream stream(seed, static_cast<std::uint64_t>(i));
      MessagePath path = sample_path(params, grid, stream, opts.bridge_correction);
      Index alive = path.absorbed() ? path.absorbed_at->step : n_pts;
      part.sum.head(alive) += path.values.head(alive);
      part.sumsq.head(alive) += path.values.head(alive).cwiseAbs2();
      if (path.absorbed()) part.absorptions.push_back(*path.absorbed_at);
      for (Index cp = 0; cp < n_cp; ++cp) {
        Index k = hist_idx[static_cast<std::size_t>(cp)];
        if (k < alive) {
          auto bin = std::min<Index>(opts.n_bins - 1,
                                     static_cast<Index>(path.values[k] * opts.n_bins));
          part.hist_counts(cp, bin) += 1.0;
        }
      }
      ++part.n;
    }
  };
  std::vector<detail::MessagePartial> partials =
      detail::run_blocks<detail::MessagePartial>(n_runs, opts.threads, fill_block);

  Vector sum = Vector::Zero(n_pts);
  Vector sumsq = Vector::Zero(n_pts);
  Vector new_hits_zero = Vector::Zero(n_pts);
  Vector new_hits_one = Vector::Zero(n_pts);
  Matrix hist_counts = Matrix::Zero(n_cp, opts.n_bins);
  for (const detail::MessagePartial& part : partials) {
    sum += part.sum;
    sumsq += part.sumsq;
    hist_counts += part.hist_counts;
    for (const Absorption& a : part.absorptions)
      (a.bound == 0 ? new_hits_zero : new_hits_one)[a.step] += 1.0;
  }

  const double n = static_cast<double>(n_runs);
  EnsembleStats stats;
  stats.kind = EnsembleKind::message;
  stats.grid = grid;
  stats.n_runs = n_runs;
  Vector cum_zero(n_pts), cum_one(n_pts);
  double acc0 = 0.0, acc1 = 0.0;
  for (Index k = 0; k < n_pts; ++k) {
    acc0 += new_hits_zero[k];
    acc1 += new_hits_one[k];
    cum_zero[k] = acc0;
    cum_one[k] = acc1;
  }
  // paths at the upper bound contribute value 1 to both moment sums
  Vector mean = (sum + cum_one) / n;
  Vector variance = ((sumsq + cum_one) - n * mean.cwiseAbs2()) / (n - 1.0);
  variance = variance.cwiseMax(0.0);
  stats.mean = mean.transpose();
  stats.variance = variance.transpose();
  stats.se_mean = (variance / n).cwiseSqrt().transpose();
  stats.se_variance = (variance * std::sqrt(2.0 / (n - 1.0))).transpose();
  stats.hit_zero_freq = cum_zero / n;
  stats.hit_one_freq = cum_one / n;
  auto binom_se = [n](const Vector& p) {
    return (p.array() * (1.0 - p.array()) / n).sqrt().matrix();
  };
  stats.se_hit_zero = binom_se(stats.hit_zero_freq);
  stats.se_hit_one = binom_se(stats.hit_one_freq);

  for (Index cp = 0; cp < n_cp; ++cp) {
    Histogram h;
    h.grid_index = hist_idx[static_cast<std::size_t>(cp)];
    h.t = grid.time(h.grid_index);
    h.n_bins = opts.n_bins;
    h.mass = hist_counts.row(cp).transpose() / n;
    h.surviving_fraction = hist_counts.row(cp).sum() / n;
    stats.histograms.push_back(std::move(h));
  }
  return stats;
}

/// Samples n_runs opinion trajectories, each driven by n_sources independent
/// message paths (stream id = run * n_sources + source), and accumulates
/// per-agent moments with Welford updates merged blockwise.
inline EnsembleStats run_opinion_ensemble(const MedSystem& sys, const Eigen::Ref<const Vector>& o0,
                                          const MessageModelParams& msg_params,
                                          const TimeGrid& grid, Index n_runs, SeedSpec seed,
                                          const EnsembleOptions& opts = {}) {
  if (n_runs < 2) throw DomainError("ensemble needs n_runs >= 2");
  if (grid.dt != sys.dt()) throw GridMismatchError("grid dt does not match the system step");
  const Index n_agents = sys.network().n_agents;
  const Index m = sys.network().n_sources;
  const Index n_pts = grid.n_points();

  auto fill_block = [&](detail::OpinionPartial& part, Index begin, Index end) {
    part.mean = Matrix::Zero(n_agents, n_pts);
    part.m2 = Matrix::Zero(n_agents, n_pts);
    Matrix delta(n_agents, n_pts);
    std::vector<MessagePath> messages;
    for (Index r = begin; r < end; ++r) {
      messages.clear();
      for (Index j = 0; j < m; ++j) {
        RngStream stream(seed, static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(m) +
                                   static_cast<std::uint64_t>(j));
        messages.push_back(sample_path(msg_params, grid, stream, opts.bridge_correction));
      }
      OpinionTrajectory traj = med_trajectory(sys, o0, messages);
      ++part.n;
      delta = traj.opinions - part.mean;
      part.mean += delta / static_cast<double>(part.n);
      part.m2.array() += delta.array() * (traj.opinions - part.mean).array();
    }
  };
  std::vector<detail::OpinionPartial> partials =
      detail::run_blocks<detail::OpinionPartial>(n_runs, opts.threads, fill_block);

  detail::OpinionPartial total;
  total.mean = Matrix::Zero(n_agents, n_pts);
  total.m2 = Matrix::Zero(n_agents, n_pts);
  for (const detail::OpinionPartial& part : partials) {
    if (part.n == 0) continue;
    if (total.n == 0) {
      total = part;
      continue;
    }
    // Chan's pairwise merge of (mean, M2) accumulators
    double na = static_cast<double>(total.n);
    double nb = static_cast<double>(part.n);
    Matrix delta = part.mean - total.mean;
    total.mean += delta * (nb / (na + nb));
    total.m2 += part.m2 + delta.cwiseAbs2() * (na * nb / (na + nb));
    total.n += part.n;
  }

  const double n = static_cast<double>(n_runs);
  EnsembleStats stats;
  stats.kind = EnsembleKind::opinion;
  stats.grid = grid;
  stats.n_runs = n_runs;
  stats.mean = total.mean;
  stats.variance = (total.m2 / (n - 1.0)).cwiseMax(0.0);
  stats.se_mean = (stats.variance / n).cwiseSqrt();
  stats.se_variance = stats.variance * std::sqrt(2.0 / (n - 1.0));
  return stats;
}

/// Returns the recorded interior histogram at checkpoint time t, coarsened to
/// n_bins when the stored bin count is a multiple of the requested one.
inline Histogram empirical_interior_pdf(const EnsembleStats& stats, double t, Index n_bins) {
  if (stats.kind != EnsembleKind::message)
    throw CheckpointError("interior histograms exist only for message ensembles");
  if (n_bins < 1) throw DomainError("n_bins must be positive");
  Index k = grid_index_for_time(stats.grid, t);
  for (const Histogram& h : stats.histograms) {
    if (h.grid_index != k) continue;
    if (h.n_bins == n_bins) return h;
    if (h.n_bins % n_bins == 0) {
      Index factor = h.n_bins / n_bins;
      Histogram coarse{h.t, h.grid_index, n_bins, Vector::Zero(n_bins), h.surviving_fraction};
      for (Index b = 0; b < n_bins; ++b) coarse.mass[b] = h.mass.segment(b * factor, factor).sum();
      return coarse;
    }
    throw CheckpointError("recorded histogram has " + std::to_string(h.n_bins) +
                          " bins, cannot produce " + std::to_string(n_bins));
  }
  throw CheckpointError("no histogram recorded at t = " + std::to_string(t));
}

}  // namespace medsim
