#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "medsim/bbm_analytic.hpp"
#include "medsim/core.hpp"
#include "medsim/ensemble.hpp"
#include "medsim/errors.hpp"
#include "medsim/med.hpp"

namespace medsim {

/// Decision thresholds for ensemble validation. z thresholds are in standard
/// errors; a two-sided check is inconclusive when its +-z band covers the
/// whole plausible range of the quantity (1 for probabilities and means, 1/4
/// for variances), since no sample that small can falsify anything.
struct ValidationThresholds {
  double z_mandatory = 4.0;
  double z_one_sided = 3.0;
  double pdf_bin_fraction = 0.97;
  double small_t_rel_tol = 0.10;
  double var_limit_rel_tol = 0.15;
  double steady_mean_tol = 0.02;
  double steady_var_tol = 0.02;
};

struct ValidationCheck {
  std::string name;
  bool mandatory = true;
  bool pass = false;
  bool inconclusive = false;
  double expected = 0.0;
  double observed = 0.0;
  double se = 0.0;
  double z = 0.0;
  std::string note;

  const char* status() const { return inconclusive ? "INCONCLUSIVE" : pass ? "PASS" : "FAIL"; }
};

/// Outcome of validating one ensemble. Overall pass requires every mandatory
/// check to pass conclusively.
struct ValidationReport {
  Index n_runs = 0;
  std::vector<ValidationCheck> checks;
  bool pass = true;

  void add(ValidationCheck check) {
    if (check.mandatory && (check.inconclusive || !check.pass)) pass = false;
    checks.push_back(std::move(check));
  }

  std::string summary() const {
    std::string out;
    int n_mandatory = 0, n_failed = 0, n_inconclusive = 0;
    for (const ValidationCheck& c : checks) {
      out += c.status();
      out += c.mandatory ? " [mandatory] " : " [advisory] ";
      out += c.name + ": expected " + std::to_string(c.expected) + ", observed " +
             std::to_string(c.observed);
      if (c.se > 0.0) out += ", se " + std::to_string(c.se) + ", z " + std::to_string(c.z);
      if (!c.note.empty()) out += " (" + c.note + ")";
      out += "\n";
      if (c.mandatory) {
        ++n_mandatory;
        if (c.inconclusive)
          ++n_inconclusive;
        else if (!c.pass)
          ++n_failed;
      }
    }
    out += "validation: ";
    out += pass ? "PASS" : "FAIL";
    out += " (" + std::to_string(n_mandatory) + " mandatory checks, " + std::to_string(n_failed) +
           " failed, " + std::to_string(n_inconclusive) + " inconclusive; n_runs = " +
           std::to_string(n_runs) + ")\n";
    return out;
  }
};

namespace detail {

inline constexpr double kProbRange = 1.0;   // probabilities and bounded means
inline constexpr double kVarRange = 0.25;   // variances of [0, 1] variables
inline constexpr double kZeroSeFloor = 1e-12;  // keeps exact-match checks finite

inline ValidationCheck z_check(std::string name, bool mandatory, double expected, double observed,
                               double se, double z_threshold, double range) {
  ValidationCheck c;
  c.name = std::move(name);
  c.mandatory = mandatory;
  c.expected = expected;
  c.observed = observed;
  c.se = se;
  c.z = (observed - expected) / std::max(se, kZeroSeFloor);
  c.pass = std::abs(c.z) <= z_threshold;
  c.inconclusive = 2.0 * z_threshold * se >= range;
  return c;
}

// One-sided: observed may not exceed the bound by more than z_threshold se.
inline ValidationCheck upper_bound_check(std::string name, bool mandatory, double bound,
                                         double observed, double se, double z_threshold,
                                         double range) {
  ValidationCheck c;
  c.name = std::move(name);
  c.mandatory = mandatory;
  c.expected = bound;
  c.observed = observed;
  c.se = se;
  c.z = (observed - bound) / std::max(se, kZeroSeFloor);
  c.pass = c.z <= z_threshold;
  c.inconclusive = 2.0 * z_threshold * se >= range;
  c.note = "upper bound";
  return c;
}

inline ValidationCheck rel_check(std::string name, bool mandatory, double expected,
                                 double observed, double rel_tol, double se) {
  ValidationCheck c;
  c.name = std::move(name);
  c.mandatory = mandatory;
  c.expected = expected;
  c.observed = observed;
  c.se = se;
  c.pass = std::abs(observed - expected) <= rel_tol * std::abs(expected);
  c.inconclusive = se > rel_tol * std::abs(expected) / 3.0;
  c.note = "relative tolerance " + std::to_string(rel_tol);
  return c;
}

inline ValidationCheck abs_check(std::string name, bool mandatory, double expected,
                                 double observed, double tol, double se) {
  ValidationCheck c;
  c.name = std::move(name);
  c.mandatory = mandatory;
  c.expected = expected;
  c.observed = observed;
  c.se = se;
  c.pass = std::abs(observed - expected) <= tol;
  c.inconclusive = se > tol / 3.0;
  c.note = "absolute tolerance " + std::to_string(tol);
  return c;
}

// Binomial standard error with a floor of one event in n, so that a stray
// path at a near-impossible checkpoint does not divide by zero.
inline double binomial_se(double p_expected, double p_observed, double n) {
  double var = std::max({p_expected * (1.0 - p_expected), p_observed * (1.0 - p_observed), 1.0 / n});
  return std::sqrt(var / n);
}

inline std::vector<double> log_spaced_grid_times(const TimeGrid& grid, Index count) {
  std::vector<double> times;
  if (grid.n_steps < 1) return times;
  double lo = std::max(grid.dt, grid.horizon() * 1e-3);
  double hi = grid.horizon();
  std::vector<Index> seen;
  for (Index i = 0; i < count; ++i) {
    double frac = count == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    double t = lo * std::pow(hi / lo, frac);
    Index k = std::clamp<Index>(static_cast<Index>(std::llround(t / grid.dt)), 1, grid.n_steps);
    if (std::find(seen.begin(), seen.end(), k) == seen.end()) {
      seen.push_back(k);
      times.push_back(grid.time(k));
    }
  }
  return times;
}

}  // namespace detail

/// Analytic references for a message ensemble. Empty time lists select
/// defaults derived from the grid (log-spaced checkpoints, recorded
/// histograms, and a few early points for the pre-absorption variance law).
struct MessageOracleSet {
  MessageModelParams params;
  SeriesControl series_ctl{};
  QuadratureControl quad_ctl{};
  std::vector<double> hitting_times;
  std::vector<double> pdf_times;
  std::vector<double> moment_times;
};

/// Absorption probability at `bound` by time t under the initial law of
/// params: the conditional value at fixed_s0, else the uniform mixture.
inline double mixture_hitting_prob(const MessageModelParams& params, int bound, double t,
                                   const SeriesControl& series_ctl = {},
                                   const QuadratureControl& quad_ctl = {}) {
  if (bound != 0 && bound != 1) throw DomainError("bound must be 0 or 1");
  auto prob = [&](double s0) {
    return bound == 0 ? hitting_prob_zero(s0, params.c, t, series_ctl, quad_ctl)
                      : hitting_prob_one(s0, params.c, t, series_ctl, quad_ctl);
  };
  if (params.fixed_s0) return prob(*params.fixed_s0);
  if (params.xi_low == params.xi_high) return prob(params.xi_low);
  QuadratureControl outer{1e-7, 1e-6, 200};
  double width = params.xi_high - params.xi_low;
  return integrate_1d(prob, params.xi_low, params.xi_high, outer) / width;
}

/// Compares a message ensemble against the analytic law: absorption
/// frequencies, interior histograms (fixed start only), moment trajectories
/// with the variance bound and the pre-absorption law, and the steady state.
inline ValidationReport validate(const EnsembleStats& stats, const MessageOracleSet& oracle,
                                 const ValidationThresholds& thr = {}) {
  if (stats.kind != EnsembleKind::message)
    throw DomainError("message oracle set needs a message ensemble");
  const MessageModelParams& params = oracle.params;
  const TimeGrid& grid = stats.grid;
  const double n = static_cast<double>(stats.n_runs);
  ValidationReport report;
  report.n_runs = stats.n_runs;

  std::vector<double> hitting_times =
      oracle.hitting_times.empty() ? detail::log_spaced_grid_times(grid, 10) : oracle.hitting_times;
  for (double t : hitting_times) {
    Index k = grid_index_for_time(grid, t);
    for (int bound : {0, 1}) {
      double expected = mixture_hitting_prob(params, bound, grid.time(k), oracle.series_ctl,
                                             oracle.quad_ctl);
      double observed = bound == 0 ? stats.hit_zero_freq[k] : stats.hit_one_freq[k];
      double se = detail::binomial_se(expected, observed, n);
      report.add(detail::z_check("absorbed at " + std::to_string(bound) + " t=" +
                                     std::to_string(grid.time(k)),
                                 true, expected, observed, se, thr.z_mandatory,
                                 detail::kProbRange));
    }
  }

  std::vector<double> pdf_times = oracle.pdf_times;
  if (!pdf_times.empty() && !params.fixed_s0)
    throw DomainError("interior pdf validation requires a fixed start value");
  if (pdf_times.empty() && params.fixed_s0)
    for (const Histogram& h : stats.histograms) pdf_times.push_back(h.t);
  for (double t : pdf_times) {
    Index k = grid_index_for_time(grid, t);
    const Histogram* hist = nullptr;
    for (const Histogram& h : stats.histograms)
      if (h.grid_index == k) hist = &h;
    if (!hist) throw CheckpointError("no histogram recorded at t = " + std::to_string(t));

    QuadratureControl bin_ctl{1e-13, 1e-10, 50};
    Index n_ok = 0;
    double worst_z = 0.0;
    Index worst_bin = 0;
    for (Index b = 0; b < hist->n_bins; ++b) {
      double lo = static_cast<double>(b) * hist->bin_width();
      double hi = lo + hist->bin_width();
      double expected = integrate_1d(
          [&](double x) {
            return interior_image_density(x, hist->t, *params.fixed_s0, params.c,
                                          oracle.series_ctl);
          },
          lo, hi, bin_ctl);
      double observed = hist->mass[b];
      double z = (observed - expected) / detail::binomial_se(expected, observed, n);
      if (std::abs(z) <= thr.z_mandatory) ++n_ok;
      if (std::abs(z) > std::abs(worst_z)) {
        worst_z = z;
        worst_bin = b;
      }
    }
    ValidationCheck c;
    c.name = "interior pdf t=" + std::to_string(hist->t);
    c.mandatory = true;
    c.expected = thr.pdf_bin_fraction;
    c.observed = static_cast<double>(n_ok) / static_cast<double>(hist->n_bins);
    c.pass = c.observed >= c.expected;
    c.inconclusive =
        n * hist->surviving_fraction < 10.0 * static_cast<double>(hist->n_bins);
    c.note = "fraction of bins with |z| <= " + std::to_string(thr.z_mandatory) + "; worst z " +
             std::to_string(worst_z) + " at bin " + std::to_string(worst_bin);
    report.add(std::move(c));
  }

  DerivedMessageStats ms = derive_message_stats(params);
  std::vector<double> moment_times = oracle.moment_times;
  if (moment_times.empty()) {
    for (Index mult : {5, 10, 20, 50}) {
      if (mult <= grid.n_steps) moment_times.push_back(grid.time(mult));
    }
    for (double t : hitting_times) moment_times.push_back(t);
  }
  for (double t : moment_times) {
    Index k = grid_index_for_time(grid, t);
    double t_k = grid.time(k);
    std::string at = " t=" + std::to_string(t_k);
    report.add(detail::z_check("mean" + at, true, ms.mu, stats.mean(0, k), stats.se_mean(0, k),
                               thr.z_mandatory, detail::kProbRange));
    double bound = params.fixed_s0 ? conditional_variance_bound(*params.fixed_s0, params.c, t_k)
                                   : variance_bound(ms, params.c, t_k);
    report.add(detail::upper_bound_check("variance bound" + at, true, bound, stats.variance(0, k),
                                         stats.se_variance(0, k), thr.z_one_sided,
                                         detail::kVarRange));
    double absorbed = stats.hit_zero_freq[k] + stats.hit_one_freq[k];
    if (k > 0 && absorbed < kSmallTAbsorptionCap) {
      report.add(detail::rel_check("pre-absorption variance" + at, true,
                                   small_t_variance(ms, params.c, t_k), stats.variance(0, k),
                                   thr.small_t_rel_tol, stats.se_variance(0, k)));
    }
  }

  if (grid.n_steps > 0) {
    Index k = grid.n_steps;
    double absorbed_ana = mixture_hitting_prob(params, 0, grid.horizon(), oracle.series_ctl,
                                               oracle.quad_ctl) +
                          mixture_hitting_prob(params, 1, grid.horizon(), oracle.series_ctl,
                                               oracle.quad_ctl);
    if (absorbed_ana >= 0.5) {
      bool mandatory = absorbed_ana >= 0.99;
      report.add(detail::abs_check("steady mean", mandatory, ms.mu, stats.mean(0, k),
                                   thr.steady_mean_tol, stats.se_mean(0, k)));
      report.add(detail::abs_check("steady variance", mandatory, steady_variance(ms),
                                   stats.variance(0, k), thr.steady_var_tol,
                                   stats.se_variance(0, k)));
    }
  }
  return report;
}

/// Analytic references for an opinion ensemble.
struct OpinionOracleSet {
  NetworkModel network;  // validated, matching what the ensemble simulated
  Vector o0;
  MessageModelParams msg_params;
  std::vector<double> mean_times;
};

/// Compares an opinion ensemble against the moment dynamics: per-agent mean
/// trajectories, the steady mean, and the variance limit (exact zero under
/// pure consensus).
inline ValidationReport validate(const EnsembleStats& stats, const OpinionOracleSet& oracle,
                                 const ValidationThresholds& thr = {}) {
  if (stats.kind != EnsembleKind::opinion)
    throw DomainError("opinion oracle set needs an opinion ensemble");
  const TimeGrid& grid = stats.grid;
  MedSystem sys(oracle.network, grid.dt > 0 ? grid.dt : 1.0);
  if (oracle.o0.size() != sys.network().n_agents)
    throw DimensionError("o0 length must match n_agents");
  if (stats.n_series() != sys.network().n_agents)
    throw DimensionError("ensemble series count must match n_agents");
  const double mu = derive_message_stats(oracle.msg_params).mu;
  ValidationReport report;
  report.n_runs = stats.n_runs;

  std::vector<double> mean_times =
      oracle.mean_times.empty() ? detail::log_spaced_grid_times(grid, 20) : oracle.mean_times;
  for (double t : mean_times) {
    Index k = grid_index_for_time(grid, t);
    Vector expected = opinion_mean(sys, oracle.o0, mu, grid.time(k));
    for (Index a = 0; a < stats.n_series(); ++a) {
      report.add(detail::z_check(
          "opinion mean agent " + std::to_string(a) + " t=" + std::to_string(grid.time(k)), true,
          expected[a], stats.mean(a, k), stats.se_mean(a, k), thr.z_mandatory,
          detail::kProbRange));
    }
  }

  if (grid.n_steps == 0) return report;
  const Index k_end = grid.n_steps;
  Vector mean_end = opinion_mean(sys, oracle.o0, mu, grid.horizon());
  bool mean_converged =
      (mean_end.array() - mu).abs().maxCoeff() <= 0.25 * thr.steady_mean_tol;
  if (mean_converged) {
    for (Index a = 0; a < stats.n_series(); ++a)
      report.add(detail::abs_check("steady opinion mean agent " + std::to_string(a), true, mu,
                                   stats.mean(a, k_end), thr.steady_mean_tol,
                                   stats.se_mean(a, k_end)));
  }

  if (sys.network().alpha == 1.0) {
    ValidationCheck c;
    c.name = "variance zero under pure consensus";
    c.mandatory = true;
    c.expected = 0.0;
    c.observed = stats.variance.rightCols(1).maxCoeff();
    c.pass = c.observed == 0.0;
    report.add(std::move(c));
    return report;
  }

  Eigen::EigenSolver<Matrix> es(sys.system_matrix());
  double slowest_rate = -es.eigenvalues().real().maxCoeff();
  bool var_converged = slowest_rate > 0.0 && grid.horizon() >= 10.0 / slowest_rate;
  Vector vlimit = opinion_variance_limit(sys, mu);
  for (Index a = 0; a < stats.n_series(); ++a) {
    report.add(detail::rel_check("variance limit agent " + std::to_string(a), var_converged,
                                 vlimit[a], stats.variance(a, k_end), thr.var_limit_rel_tol,
                                 stats.se_variance(a, k_end)));
  }
  return report;
}

}  // namespace medsim
