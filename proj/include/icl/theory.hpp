#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "icl/scenario.hpp"

namespace icl {

// ================================================================
// Closed-form leading-order prediction losses of the simplified
// softmax-attention predictor on in-context linear regression, plus the
// optimality conditions for the local-example and distribution-shift
// regimes. Every evaluator returns the leading 1/D term only; the o(1/D)
// remainder is absorbed by Monte-Carlo tolerances downstream.
//
// Validity is reported, not thrown: parameter sweeps intentionally cross
// the singular boundaries (v^2 = 2 and friends) and must render gaps.
// ================================================================

struct TheoryValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
  // min over all finiteness conditions of (v^2 - boundary); negative when
  // some condition fails.
  double condition_margin = 0.0;
};

// E ||theta||^4 under theta ~ N(0, I_d / d); equals (d+2)/d by the
// chi-square second moment E (chi^2_d)^2 = d^2 + 2d.
inline double moment_theta4(int d) {
  if (d < 1) throw std::invalid_argument("moment_theta4: d must be >= 1");
  return (d + 2.0) / d;
}

// Population loss of a single head at arbitrary (A, b) with read-out v,
// up to O(1/D):  ||vA - I||_F^2 / d + v^2 ||b||^2 E||theta||^4.
// (E (theta^T M x_q)^2 = tr(M^T M)/d, so the trace is the Frobenius one;
// its gradient in A is 2v(vA - I)/d.)
inline double quadratic_loss(const MatrixXd& A, const VectorXd& b, double v,
                             int d) {
  if (A.rows() != d || A.cols() != d || b.size() != d)
    throw std::invalid_argument("quadratic_loss: shape mismatch");
  const MatrixXd M = v * A - MatrixXd::Identity(d, d);
  return M.squaredNorm() / d + v * v * b.squaredNorm() * moment_theta4(d);
}

// Loss of the canonical single head (A = I/v, b = 0). Finite iff v^2 > 2:
//   (v^2/D) r^{d/2} + (1/D) r^{d/2+1},   r = v^2/(v^2-2).
inline TheoryValue loss_single(int d, long D, double v) {
  TheoryValue out;
  const double v2 = v * v;
  out.condition_margin = v2 - 2.0;
  out.valid = out.condition_margin > 0.0;
  if (!out.valid) return out;
  const double r = v2 / (v2 - 2.0);
  const double half_d = 0.5 * d;
  out.value = v2 / D * std::pow(r, half_d) + std::pow(r, half_d + 1.0) / D;
  return out;
}

// Two-head loss at A1 = (c/v) I, A2 = ((2c-1)/v) I, b1 = b2 = 0 and
// combination weights (+2v, -v). Five terms with bases
//   r1 = v^2/(v^2-2c^2),  r2 = v^2/(v^2-2(2c-1)^2),  rx = v^2/(v^2-2c(2c-1)).
// The cross-term base adds the condition v^2 > 2c(2c-1), implied for
// c in (0,1] but enforced to guard extrapolated c.
inline TheoryValue loss_multi(int d, long D, double v, double c) {
  TheoryValue out;
  const double v2 = v * v;
  const double two_c2 = 2.0 * c * c;
  const double two_s2 = 2.0 * (2.0 * c - 1.0) * (2.0 * c - 1.0);
  const double two_cs = 2.0 * c * (2.0 * c - 1.0);
  out.condition_margin =
      std::min({v2 - two_c2, v2 - two_s2, v2 - two_cs});
  out.valid = out.condition_margin > 0.0;
  if (!out.valid) return out;

  const double r1 = v2 / (v2 - two_c2);
  const double r2 = v2 / (v2 - two_s2);
  const double rx = v2 / (v2 - two_cs);
  const double half_d = 0.5 * d;
  const double s = 2.0 * c - 1.0;
  out.value = 4.0 * v2 / D * (std::pow(r1, half_d) - std::pow(rx, half_d)) +
              v2 / D * std::pow(r2, half_d) +
              s * s / D * std::pow(r2, half_d + 1.0) -
              (8.0 * c - 4.0) * c / D * std::pow(rx, half_d + 1.0) +
              4.0 * c * c / D * std::pow(r1, half_d + 1.0);
  return out;
}

// Noisy-label single head: sigma_eps^2 floor plus inflated 1/D terms.
inline TheoryValue loss_single_noisy(int d, long D, double v,
                                     double sigma_eps) {
  TheoryValue out;
  const double v2 = v * v;
  out.condition_margin = v2 - 2.0;
  out.valid = out.condition_margin > 0.0;
  if (!out.valid) return out;
  const double se2 = sigma_eps * sigma_eps;
  const double r = v2 / (v2 - 2.0);
  const double rd = std::pow(r, 0.5 * d);
  out.value = se2 + v2 * se2 / D * rd + (v2 * v2 - v2) / (v2 - 2.0) / D * rd;
  return out;
}

// Noisy-label two-head loss: the v^2-coefficient terms scale by
// (1 + sigma_eps^2) and the floor sigma_eps^2 is added; the three
// curvature terms are unchanged.
inline TheoryValue loss_multi_noisy(int d, long D, double v, double c,
                                    double sigma_eps) {
  TheoryValue out;
  const double v2 = v * v;
  const double two_c2 = 2.0 * c * c;
  const double two_s2 = 2.0 * (2.0 * c - 1.0) * (2.0 * c - 1.0);
  const double two_cs = 2.0 * c * (2.0 * c - 1.0);
  out.condition_margin = std::min({v2 - two_c2, v2 - two_s2, v2 - two_cs});
  out.valid = out.condition_margin > 0.0;
  if (!out.valid) return out;

  const double se2 = sigma_eps * sigma_eps;
  const double r1 = v2 / (v2 - two_c2);
  const double r2 = v2 / (v2 - two_s2);
  const double rx = v2 / (v2 - two_cs);
  const double half_d = 0.5 * d;
  const double s = 2.0 * c - 1.0;
  out.value = se2 +
              4.0 * v2 * (1.0 + se2) / D *
                  (std::pow(r1, half_d) - std::pow(rx, half_d)) +
              v2 * (1.0 + se2) / D * std::pow(r2, half_d) +
              s * s / D * std::pow(r2, half_d + 1.0) -
              (8.0 * c - 4.0) * c / D * std::pow(rx, half_d + 1.0) +
              4.0 * c * c / D * std::pow(r1, half_d + 1.0);
  return out;
}

// Prior regime at the no-prior optimum with u = 0: the whole loss scales
// by (||theta0||^2 + sigma^2).
inline TheoryValue loss_prior(int d, long D, double v, const VectorXd& theta0,
                              double sigma_prior, double c = 1.0,
                              bool multi = false) {
  TheoryValue base = multi ? loss_multi(d, D, v, c) : loss_single(d, D, v);
  if (base.valid)
    base.value *= theta0.squaredNorm() + sigma_prior * sigma_prior;
  return base;
}

// Second derivative of loss_multi in c at c = 1, in closed form:
//   -(4 v^2 (d+2)^2 / D) r^{d/2} / w^2 - (4 v^2 (d+2)(d+4) / D) r^{d/2} / w^3
// with w = v^2 - 2, r = v^2/w. Negative for every v^2 > 2, so c = 1 is a
// local maximum and some c < 1 strictly beats the single head.
inline double curvature_at_c1(int d, long D, double v) {
  const double v2 = v * v;
  if (v2 <= 2.0)
    throw std::domain_error("curvature_at_c1: requires v^2 > 2");
  const double w = v2 - 2.0;
  const double rd = std::pow(v2 / w, 0.5 * d);
  return -(4.0 * v2 * (d + 2.0) * (d + 2.0) / D) * rd / (w * w) -
         (4.0 * v2 * (d + 2.0) * (d + 4.0) / D) * rd / (w * w * w);
}

// Minimizes loss_multi over c on [grid_lo, grid_hi]: uniform scan, then
// golden-section refinement on the best bracket. The grid includes the
// endpoints, so loss* can never exceed the c = 1 (single-head) value.
inline std::pair<double, double> optimal_c(int d, long D, double v,
                                           double grid_lo = 0.01,
                                           double grid_hi = 1.0,
                                           int steps = 1000) {
  if (steps < 2 || grid_hi <= grid_lo)
    throw std::invalid_argument("optimal_c: bad grid");
  double best_c = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double c = grid_lo + (grid_hi - grid_lo) * i / steps;
    const TheoryValue t = loss_multi(d, D, v, c);
    if (t.valid && t.value < best_loss) {
      best_loss = t.value;
      best_c = c;
    }
  }
  if (!std::isfinite(best_loss))
    throw std::domain_error("optimal_c: no valid c in the grid");

  // Golden-section inside the neighboring grid cells.
  const double h = (grid_hi - grid_lo) / steps;
  double lo = std::max(grid_lo, best_c - h);
  double hi = std::min(grid_hi, best_c + h);
  const double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  auto eval = [&](double c) {
    const TheoryValue t = loss_multi(d, D, v, c);
    return t.valid ? t.value : std::numeric_limits<double>::infinity();
  };
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = eval(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = eval(x2);
    }
  }
  const double c_ref = 0.5 * (a + b);
  const double f_ref = eval(c_ref);
  if (f_ref < best_loss) {
    best_loss = f_ref;
    best_c = c_ref;
  }
  return {best_c, best_loss};
}

// Residual of the local-example optimality condition
//   v [sigma_x^2 (A + theta b^T) + I] -> I
// as a Frobenius norm; zero means exactly optimal.
inline double local_optimum_check(const MatrixXd& A, const VectorXd& b,
                                  double v, const VectorXd& theta,
                                  double sigma_x) {
  const auto d = A.rows();
  if (A.cols() != d || b.size() != d || theta.size() != d)
    throw std::invalid_argument("local_optimum_check: shape mismatch");
  const MatrixXd M =
      v * (sigma_x * sigma_x * (A + theta * b.transpose()) +
           MatrixXd::Identity(d, d)) -
      MatrixXd::Identity(d, d);
  return M.norm();
}

// D -> infinity loss per unit E y_q^2 when training on fully random
// examples but testing on local ones: (sigma_x^2 + v - 1)^2.
inline double shifted_local_limit(double v, double sigma_x) {
  const double g = sigma_x * sigma_x + v - 1.0;
  return g * g;
}

}  // namespace icl
