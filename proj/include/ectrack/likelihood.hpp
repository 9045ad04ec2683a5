#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ectrack/detection.hpp"

namespace ectrack {

struct LikelihoodConfig {
  /// Weight of the displacement term against the area term in f1.
  double alpha = 0.5;
  /// Weight of the mass term against the position term in f3.
  double beta = 0.5;
  /// Entry sigmoid 1 / (1 + exp(slope * (y - midpoint))) over `vertical_axis`.
  double entry_slope = 0.5;
  double entry_midpoint = 0.0;
  /// Exit sigmoid; mirrored slope by default so exits favour large y.
  double exit_slope = -0.5;
  double exit_midpoint = 100.0;
  std::size_t vertical_axis = 1;
  /// Lower bound on the displacement spread of a trajectory (length).
  double position_sigma_floor = 1.0;
  /// Bounds applied to association likelihoods before complements are taken.
  double floor = 1e-6;
  double ceiling = 1.0 - 1e-9;
};

/// exp(-x^2 / 2 sigma^2): a Gaussian pdf divided by its peak value.
inline double gaussian_ratio(double x, double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian spread must be positive");
  const double z = x / sigma;
  return std::exp(-0.5 * z * z);
}

/// f1: weighted peak-normalised Gaussians of displacement and area change.
inline double translation_likelihood(double dr, double ds, double sigma_dr, double sigma_ds,
                                     double alpha, double floor = 1e-6) {
  const double gr = gaussian_ratio(dr, sigma_dr);
  const double gs = gaussian_ratio(ds, sigma_ds);
  // gs + alpha * (gr - gs) is alpha*gr + (1-alpha)*gs, and equals 1 exactly
  // when both ratios do.
  return std::clamp(gs + alpha * (gr - gs), floor, 1.0);
}

/// f2: logistic in the vertical coordinate.
inline double entry_exit_likelihood(double y, double slope, double midpoint) {
  return 1.0 / (1.0 + std::exp(slope * (y - midpoint)));
}

/// Inputs of the split/merge likelihood f3.
struct InteractionTerms {
  /// Signed mass residual S0 - sum of component means.
  double mass_mismatch = 0.0;
  /// Mean spread of the component properties.
  double mean_component_sigma = 1.0;
  /// Distance between the predicted component centroid and the principal node.
  double position_error = 0.0;
  double sigma_dr = 1.0;
  /// Involved trajectories, and how many of them had a motion prediction.
  std::size_t involved = 3;
  std::size_t predicted = 3;
};

inline double interaction_likelihood(const InteractionTerms& in, double beta, double floor = 1e-6) {
  if (in.involved < 3) throw Error("split/merge needs a principal and at least two components");
  if (in.predicted > in.involved) throw Error("more predicted trajectories than involved");
  const double mass = gaussian_ratio(in.mass_mismatch, in.mean_component_sigma);
  double position = 0.0;
  if (in.predicted > 0) {
    position = static_cast<double>(in.predicted) / static_cast<double>(in.involved) *
               gaussian_ratio(in.position_error, in.sigma_dr);
  }
  return std::clamp(beta * mass + (1.0 - beta) * position, floor, 1.0);
}

inline double clamp_likelihood(double f, double floor, double ceiling) {
  return std::clamp(f, floor, ceiling);
}

/// log prod_i (X_i ? f_i : 1 - f_i), with f clamped to [floor, ceiling].
inline double log_hypothesis_likelihood(const std::vector<bool>& selected, std::span<const double> f,
                                        double floor = 1e-6, double ceiling = 1.0 - 1e-9) {
  if (selected.size() != f.size()) throw Error("hypothesis and association lists differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double p = clamp_likelihood(f[i], floor, ceiling);
    sum += selected[i] ? std::log(p) : std::log1p(-p);
  }
  return sum;
}

inline double hypothesis_likelihood(const std::vector<bool>& selected, std::span<const double> f,
                                    double floor = 1e-6, double ceiling = 1.0 - 1e-9) {
  return std::exp(log_hypothesis_likelihood(selected, f, floor, ceiling));
}

}  // namespace ectrack
