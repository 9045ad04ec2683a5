#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ectrack/detection.hpp"

namespace ectrack {

/// Vector-valued B-spline on a clamped knot vector.
class BSpline {
 public:
  BSpline() = default;
  BSpline(int degree, std::vector<double> knots, Eigen::MatrixXd coefficients)
      : degree_(degree), knots_(std::move(knots)), coefs_(std::move(coefficients)) {}

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  const Eigen::MatrixXd& coefficients() const { return coefs_; }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }

  /// Value (deriv = 0) or derivative of order `deriv` at x in [lower, upper].
  Vector evaluate(double x, int deriv = 0) const {
    Eigen::VectorXd b = basis(knots_, degree_, x, deriv);
    return coefs_.transpose() * b;
  }

  /// All basis functions (or their derivatives) of the given degree at x.
  static Eigen::VectorXd basis(const std::vector<double>& t, int p, double x, int deriv) {
    const int m = static_cast<int>(t.size());
    const int n = m - p - 1;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (deriv > p) return out;

    // Knot span; the right end belongs to the last non-degenerate interval.
    int span = -1;
    if (x >= t[m - 1]) {
      for (int i = m - 2; i >= 0; --i) {
        if (t[i] < t[i + 1]) {
          span = i;
          break;
        }
      }
    } else {
      for (int i = 0; i + 1 < m; ++i) {
        if (t[i] <= x && x < t[i + 1]) {
          span = i;
          break;
        }
      }
    }
    if (span < 0) return out;

    // Cox-de Boor up to degree p - deriv, then derivative recursion.
    std::vector<double> cur(m - 1, 0.0);
    cur[span] = 1.0;
    for (int q = 1; q <= p - deriv; ++q) {
      std::vector<double> next(m - q - 1, 0.0);
      for (int i = 0; i < m - q - 1; ++i) {
        double v = 0.0;
        double d1 = t[i + q] - t[i];
        double d2 = t[i + q + 1] - t[i + 1];
        if (d1 > 0.0) v += (x - t[i]) / d1 * cur[i];
        if (d2 > 0.0) v += (t[i + q + 1] - x) / d2 * cur[i + 1];
        next[i] = v;
      }
      cur = std::move(next);
    }
    for (int q = p - deriv + 1; q <= p; ++q) {
      std::vector<double> next(m - q - 1, 0.0);
      for (int i = 0; i < m - q - 1; ++i) {
        double v = 0.0;
        double d1 = t[i + q] - t[i];
        double d2 = t[i + q + 1] - t[i + 1];
        if (d1 > 0.0) v += q / d1 * cur[i];
        if (d2 > 0.0) v -= q / d2 * cur[i + 1];
        next[i] = v;
      }
      cur = std::move(next);
    }
    for (int i = 0; i < n; ++i) out[i] = cur[i];
    return out;
  }

 private:
  int degree_ = 0;
  std::vector<double> knots_;
  Eigen::MatrixXd coefs_;
};

/// Fits a spline of degree min(3, n - 1) through n samples with strictly
/// increasing abscissae. Not-a-knot knots give one coefficient per sample,
/// so `penalty == 0` interpolates; a positive penalty minimises
/// sum of squared residuals + penalty * integral of |g''|^2.
inline BSpline fit_spline(std::span<const double> x, const Eigen::MatrixXd& y, double penalty) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || y.rows() != n) throw Error("spline fit needs at least two samples");
  for (int i = 1; i < n; ++i) {
    if (!(x[i] > x[i - 1])) throw Error("spline abscissae must be strictly increasing");
  }
  const int k = std::min(3, n - 1);
  std::vector<double> knots(k + 1, x[0]);
  if (n > 4) {
    for (int i = 2; i <= n - 3; ++i) knots.push_back(x[i]);
  }
  knots.insert(knots.end(), k + 1, x[n - 1]);

  Eigen::MatrixXd design(n, n);
  for (int i = 0; i < n; ++i) design.row(i) = BSpline::basis(knots, k, x[i], 0).transpose();

  Eigen::MatrixXd coefs;
  if (penalty > 0.0 && k >= 2) {
    // Roughness matrix: g'' is piecewise polynomial of degree k - 2, so a
    // two-point Gauss rule per knot interval integrates the products exactly
    // for cubic splines.
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
    const std::array<double, 2> nodes{-1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
    for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
      double a = knots[s], b = knots[s + 1];
      if (!(b > a)) continue;
      for (double z : nodes) {
        double xm = 0.5 * (a + b) + 0.5 * (b - a) * z;
        Eigen::VectorXd d2 = BSpline::basis(knots, k, xm, 2);
        omega += 0.5 * (b - a) * d2 * d2.transpose();
      }
    }
    Eigen::MatrixXd lhs = design.transpose() * design + penalty * omega;
    coefs = lhs.ldlt().solve(design.transpose() * y);
  } else {
    coefs = design.colPivHouseholderQr().solve(y);
  }
  return BSpline(k, std::move(knots), std::move(coefs));
}

}  // namespace ectrack
