#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <utility>
#include <vector>

#include "medsim/core.hpp"
#include "medsim/errors.hpp"

namespace medsim {

/// Truncation control for the image-charge series.
/// Terms are added in shells of increasing |image index|; summation stops when
/// the magnitude bound of the next shell drops below tail_tol.
struct SeriesControl {
  int max_terms = 200;
  double tail_tol = 1e-14;
};

/// Control for adaptive Gauss-Kronrod quadrature.
struct QuadratureControl {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_subdivisions = 2000;
};

/// Free-space transition density of the driving process:
/// density at x after time t, started at x0, diffusion rate c.
template <typename Scalar>
Scalar gauss_transition(Scalar x, Scalar t, Scalar x0, Scalar c) {
  const Scalar var = c * c * t;
  const Scalar d = x - x0;
  return std::exp(-d * d / (2 * var)) / std::sqrt(2 * std::numbers::pi_v<Scalar> * var);
}

namespace detail {

inline void check_series_args(double s0, double tau, double c) {
  if (!(s0 > 0.0 && s0 < 1.0)) throw DomainError("s0 must lie strictly inside (0, 1)");
  if (!(tau > 0.0)) throw DomainError("time must be positive");
  if (!(c > 0.0)) throw DomainError("rate c must be positive");
}

}  // namespace detail

/// Image series over even integers: sum over n in {0, +-2, +-4, ...} of
/// (s0 - n) g(n, tau | s0). Feeds the hitting density at the lower bound.
inline double image_series_even(double s0, double tau, double c, const SeriesControl& ctl = {}) {
  detail::check_series_args(s0, tau, c);
  auto g = [&](double n) { return gauss_transition(n, tau, s0, c); };
  double sum = s0 * g(0.0);
  for (int k = 1;; ++k) {
    if (k > ctl.max_terms)
      throw ConvergenceError("even image series did not meet tail_tol within max_terms");
    double n = 2.0 * k;
    // |s0 -+ n| <= n + 1 bounds each term of the shell
    double shell_bound = (n + 1.0) * (g(n) + g(-n));
    sum += (s0 - n) * g(n) + (s0 + n) * g(-n);
    double next = n + 2.0;
    if ((next + 1.0) * (g(next) + g(-next)) < ctl.tail_tol && shell_bound < ctl.tail_tol) break;
  }
  return sum;
}

/// Image series over odd integers: sum over n in {+-1, +-3, ...} of
/// (n - s0) g(n, tau | s0). Feeds the hitting density at the upper bound.
inline double image_series_odd(double s0, double tau, double c, const SeriesControl& ctl = {}) {
  detail::check_series_args(s0, tau, c);
  auto g = [&](double n) { return gauss_transition(n, tau, s0, c); };
  double sum = 0.0;
  for (int k = 0;; ++k) {
    if (k > ctl.max_terms)
      throw ConvergenceError("odd image series did not meet tail_tol within max_terms");
    double n = 2.0 * k + 1.0;
    double shell_bound = (n + 1.0) * (g(n) + g(-n));
    sum += (n - s0) * g(n) + (-n - s0) * g(-n);
    double next = n + 2.0;
    if ((next + 1.0) * (g(next) + g(-next)) < ctl.tail_tol && shell_bound < ctl.tail_tol) break;
  }
  return sum;
}

/// Density of paths still inside (0, 1) at time t, evaluated at x:
/// sum over even n >= 0 of [g(n + x) - g(-n - x)] and the mirrored shell for -n.
/// Tiny negative values from truncation are clamped to 0.
inline double interior_image_density(double x, double t, double s0, double c,
                                     const SeriesControl& ctl = {}) {
  detail::check_series_args(s0, t, c);
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("x must lie in [0, 1]");
  auto g = [&](double y) { return gauss_transition(y, t, s0, c); };
  double sum = g(x) - g(-x);
  for (int k = 1;; ++k) {
    if (k > ctl.max_terms)
      throw ConvergenceError("interior image series did not meet tail_tol within max_terms");
    double n = 2.0 * k;
    double shell = (g(n + x) - g(-n - x)) + (g(-n + x) - g(n - x));
    sum += shell;
    double next = n + 2.0;
    double next_bound = g(next + x) + g(-next - x) + g(-next + x) + g(next - x);
    if (next_bound < ctl.tail_tol && std::abs(shell) < ctl.tail_tol) break;
  }
  if (sum < 0.0 && sum > -ctl.tail_tol * 10) sum = 0.0;
  return sum;
}

namespace detail {

// 15-point Kronrod nodes (positive half, descending) with embedded 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

// One Gauss-Kronrod panel on [a, b]; writes the Kronrod value and an error
// estimate from the Gauss/Kronrod discrepancy.
template <typename F>
void gk15_panel(F& f, double a, double b, double& integral, double& err) {
  const double h = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double fc = f(mid);
  double ik = kKronrodWeights[7] * fc;
  double ig = kGaussWeights[3] * fc;
  for (int j = 0; j < 7; ++j) {
    double dx = h * kKronrodNodes[j];
    double pair = f(mid - dx) + f(mid + dx);
    ik += kKronrodWeights[j] * pair;
    if (j % 2 == 1) ig += kGaussWeights[j / 2] * pair;
  }
  integral = ik * h;
  err = std::abs(ik - ig) * h;
}

struct QuadSegment {
  double a, b, integral, err;
  bool operator<(const QuadSegment& other) const { return err < other.err; }
};

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b].
/// The interval with the largest error estimate is bisected until the summed
/// estimate meets max(abs_tol, rel_tol * |integral|) or the budget runs out.
/// Seeding with several panels keeps narrow features from slipping between
/// the nodes of a single full-interval panel, where the error estimate would
/// be deceptively small.
template <typename F>
double integrate_1d(F&& f, double a, double b, const QuadratureControl& ctl = {}) {
  if (!(a <= b) || !std::isfinite(a) || !std::isfinite(b))
    throw DomainError("integration bounds must be finite with a <= b");
  if (a == b) return 0.0;

  constexpr int kInitialPanels = 8;
  std::priority_queue<detail::QuadSegment> segments;
  double total = 0.0;
  double total_err = 0.0;
  for (int i = 0; i < kInitialPanels; ++i) {
    double lo = a + (b - a) * i / kInitialPanels;
    double hi = (i + 1 == kInitialPanels) ? b : a + (b - a) * (i + 1) / kInitialPanels;
    detail::QuadSegment seg{lo, hi, 0.0, 0.0};
    detail::gk15_panel(f, lo, hi, seg.integral, seg.err);
    segments.push(seg);
    total += seg.integral;
    total_err += seg.err;
  }

  for (int n = 0; total_err > std::max(ctl.abs_tol, ctl.rel_tol * std::abs(total)); ++n) {
    if (n >= ctl.max_subdivisions)
      throw QuadratureError("quadrature did not converge within max_subdivisions");
    detail::QuadSegment worst = segments.top();
    segments.pop();
    total -= worst.integral;
    total_err -= worst.err;
    double mid = 0.5 * (worst.a + worst.b);
    for (auto [lo, hi] : {std::pair{worst.a, mid}, std::pair{mid, worst.b}}) {
      detail::QuadSegment seg{lo, hi, 0.0, 0.0};
      detail::gk15_panel(f, lo, hi, seg.integral, seg.err);
      segments.push(seg);
      total += seg.integral;
      total_err += seg.err;
    }
  }
  return total;
}

/// Matrix exponential exp(a * t) by scaling and squaring of the truncated
/// power series; the scaled norm is kept at or below 1/2.
template <typename Derived>
typename Derived::PlainObject mat_exp(const Eigen::MatrixBase<Derived>& a,
                                      typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  using Plain = typename Derived::PlainObject;
  if (a.rows() != a.cols()) throw DimensionError("mat_exp requires a square matrix");
  Plain b = a.derived() * t;
  if (!b.allFinite()) throw DomainError("mat_exp requires finite entries");

  const Scalar norm = b.template lpNorm<Eigen::Infinity>();
  int squarings = 0;
  if (norm > Scalar(0.5)) squarings = static_cast<int>(std::ceil(std::log2(norm / Scalar(0.5))));
  b /= std::exp2(Scalar(squarings));

  Plain result = Plain::Identity(a.rows(), a.cols());
  Plain term = result;
  for (int k = 1; k <= 40; ++k) {
    term = (term * b / Scalar(k)).eval();
    result += term;
    if (term.template lpNorm<Eigen::Infinity>() <
        std::numeric_limits<Scalar>::epsilon() * result.template lpNorm<Eigen::Infinity>())
      break;
  }
  for (int i = 0; i < squarings; ++i) result = (result * result).eval();
  return result;
}

/// Left eigenvector of W for eigenvalue 1, normalized to sum 1.
/// Computed as the kernel of W^T - I; throws NonUniqueEigenvectorError when
/// that eigenvalue is not simple (kernel dimension != 1).
inline Vector left_unit_eigenvector(const Eigen::Ref<const Matrix>& W) {
  const Index n = W.rows();
  if (W.cols() != n || n < 1) throw DimensionError("left_unit_eigenvector requires a square matrix");
  Matrix shifted = W.transpose() - Matrix::Identity(n, n);
  Eigen::FullPivLU<Matrix> lu(shifted);
  if (lu.dimensionOfKernel() != 1)
    throw NonUniqueEigenvectorError("unit eigenvalue of W is not simple; kernel dimension " +
                                    std::to_string(lu.dimensionOfKernel()));
  Vector v = lu.kernel().col(0);
  double total = v.sum();
  if (std::abs(total) < 1e-300)
    throw NonUniqueEigenvectorError("kernel vector of W^T - I has zero sum");
  v /= total;
  // truncation noise only; genuine negative mass would fail the residual check
  v = v.cwiseMax(0.0);
  v /= v.sum();
  double residual = (W.transpose() * v - v).template lpNorm<Eigen::Infinity>();
  if (residual > 1e-10)
    throw NonUniqueEigenvectorError("left eigenvector residual " + std::to_string(residual) +
                                    " exceeds 1e-10");
  return v;
}

}  // namespace medsim
