#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ectrack/graph.hpp"
#include "ectrack/spline.hpp"

namespace ectrack {

struct MotionConfig {
  /// Offset (frames) inside the fit window where the extrapolation slope is
  /// taken; damps the end oscillation of interpolating splines.
  double offset = 0.5;
  /// At most this many nodes from the relevant end are fitted.
  std::size_t fit_window = 10;
  /// Fits with up to this many nodes interpolate exactly.
  std::size_t interpolate_max_nodes = 5;
  /// Expected position noise; longer fits are smoothed with a roughness
  /// penalty of `smoothing * noise_sigma^2`.
  double noise_sigma = 0.0;
  double smoothing = 1.0;
  /// Property sigma never drops below this fraction of the property mean.
  double sigma_floor_fraction = 0.05;
};

/// Which end of a trajectory a quantity refers to.
enum class End { Head, Tail };

/// Piecewise-polynomial motion fit g(t) over [first_time, last_time].
class MotionModel {
 public:
  MotionModel(BSpline spline, double origin, double offset, Vector residual)
      : spline_(std::move(spline)), origin_(origin), offset_(offset), residual_(std::move(residual)) {}

  double first_time() const { return origin_ + spline_.lower(); }
  double last_time() const { return origin_ + spline_.upper(); }
  int degree() const { return spline_.degree(); }
  double offset() const { return offset_; }
  /// Root-mean-square fit residual per coordinate.
  const Vector& residual() const { return residual_; }

  bool covers(double t) const { return t >= first_time() && t <= last_time(); }

  Vector evaluate(double t) const { return spline_.evaluate(clamp(t) - origin_, 0); }
  Vector derivative(double t) const { return spline_.evaluate(clamp(t) - origin_, 1); }

  /// Linear continuation past either end, with the slope read `offset`
  /// frames inside the window.
  Vector extrapolate(double t) const {
    if (covers(t)) throw Error("use evaluation, not extrapolation, inside the fit window");
    if (t > last_time()) {
      double tk = last_time();
      return evaluate(tk) + derivative(tk - offset_) * (t - tk);
    }
    double t1 = first_time();
    return evaluate(t1) + derivative(t1 + offset_) * (t - t1);
  }

  Vector head_velocity() const { return derivative(first_time() + offset_); }
  Vector tail_velocity() const { return derivative(last_time() - offset_); }

 private:
  double clamp(double t) const { return std::clamp(t, first_time(), last_time()); }

  BSpline spline_;
  double origin_;
  double offset_;
  Vector residual_;
};

inline MotionModel fit_motion(std::span<const double> times, std::span<const Vector> positions,
                              const MotionConfig& cfg) {
  if (times.size() < 2) throw Error("insufficient history for a motion model");
  if (times.size() != positions.size()) throw Error("times and positions differ in length");
  const auto n = static_cast<Eigen::Index>(times.size());
  const auto dims = positions.front().size();
  const double origin = times.front();

  std::vector<double> x(times.size());
  Eigen::MatrixXd y(n, dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = times[i] - origin;
    if (positions[i].size() != dims) throw Error("positions differ in dimension");
    y.row(i) = positions[i].transpose();
  }
  double penalty = 0.0;
  if (times.size() > cfg.interpolate_max_nodes) {
    penalty = cfg.smoothing * cfg.noise_sigma * cfg.noise_sigma;
  }
  BSpline spline = fit_spline(x, y, penalty);

  Vector residual = Vector::Zero(dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector r = spline.evaluate(x[i]) - positions[i];
    residual += r.cwiseProduct(r);
  }
  residual = (residual / static_cast<double>(n)).cwiseSqrt();
  return MotionModel(std::move(spline), origin, cfg.offset, std::move(residual));
}

namespace detail {

// Node indices of the window of at most `count` nodes at one end, in time order.
inline std::span<const std::size_t> end_window(const Trajectory& tr, End end, std::size_t count) {
  std::span<const std::size_t> all(tr.nodes);
  count = std::min(count, all.size());
  return end == End::Head ? all.first(count) : all.last(count);
}

}  // namespace detail

/// Fits the window at one end of a trajectory.
inline MotionModel fit_motion(const TrajectoryGraph& g, const Trajectory& tr, End end,
                              const MotionConfig& cfg) {
  auto window = detail::end_window(tr, end, cfg.fit_window);
  std::vector<double> times;
  std::vector<Vector> positions;
  for (std::size_t node : window) {
    times.push_back(g.frame(node));
    positions.push_back(g.detection(node).position);
  }
  return fit_motion(times, positions, cfg);
}

struct EndpointVelocity {
  Vector velocity;
  /// False for single-node trajectories: zero velocity, no prediction.
  bool predicted = false;
};

inline EndpointVelocity endpoint_velocity(const TrajectoryGraph& g, const Trajectory& tr, End end,
                                          const MotionConfig& cfg) {
  if (tr.size() < 2) {
    return {Vector::Zero(g.detection(tr.first()).position.size()), false};
  }
  auto model = fit_motion(g, tr, end, cfg);
  return {end == End::Head ? model.head_velocity() : model.tail_velocity(), true};
}

struct PropertyStats {
  double mean = 0.0;
  /// Population standard deviation, floored (see `raw_sigma`).
  double sigma = 0.0;
  double raw_sigma = 0.0;
  std::size_t count = 0;
};

inline PropertyStats property_stats(std::span<const double> values, double floor_fraction) {
  if (values.empty()) throw Error("property statistics need at least one value");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double raw = std::sqrt(ss / static_cast<double>(values.size()));
  return {mean, std::max(raw, floor_fraction * std::abs(mean)), raw, values.size()};
}

/// Mean and spread of a named property over the `window` nodes at one end.
inline PropertyStats property_stats(const TrajectoryGraph& g, const Trajectory& tr,
                                    std::string_view name, End end, std::size_t window,
                                    double floor_fraction) {
  if (window == 0) throw Error("empty property window");
  std::vector<double> values;
  for (std::size_t node : detail::end_window(tr, end, window)) {
    values.push_back(g.detection(node).property(name));
  }
  return property_stats(values, floor_fraction);
}

}  // namespace ectrack
