#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ectrack/graph.hpp"
#include "ectrack/likelihood.hpp"
#include "ectrack/motion.hpp"

namespace ectrack {

/// Gating and plausibility parameters. The geometric ones have no universal
/// defaults and start out unset (NaN / -1); `validate()` rejects that.
struct AssociationConfig {
  /// Maximum number of components in a split or merge; 0 or 1 disables both.
  int gamma = -1;
  /// Primary sphere-of-influence scale C on the effective radius.
  double soi_scale = std::numeric_limits<double>::quiet_NaN();
  /// Secondary sphere of influence: always admissible within this radius.
  double soi_min_radius = std::numeric_limits<double>::quiet_NaN();
  /// Largest displacement per elapsed frame.
  double max_displacement = std::numeric_limits<double>::quiet_NaN();
  /// Largest linear acceleration a_c.
  double max_acceleration = std::numeric_limits<double>::quiet_NaN();
  /// Velocity scale lambda of the direction-change bound.
  double direction_scale = std::numeric_limits<double>::quiet_NaN();
  /// Slack epsilon (radians) of the direction-change bound.
  double direction_slack = 0.01;
  double translation_mass_threshold = 4.0;
  double split_mass_threshold = 4.0;
  /// Split/merge candidates are drawn from the nearest max(gamma, pool) partners.
  std::size_t split_pool = 5;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(std::string("association.") + name + " must be set to a positive value");
      }
    };
    if (gamma < 0) throw Error("association.gamma must be set to a non-negative integer");
    positive(soi_scale, "soi_scale");
    positive(soi_min_radius, "soi_min_radius");
    positive(max_displacement, "max_displacement");
    positive(max_acceleration, "max_acceleration");
    positive(direction_scale, "direction_scale");
    positive(translation_mass_threshold, "translation_mass_threshold");
    positive(split_mass_threshold, "split_mass_threshold");
    if (!(direction_slack >= 0.0)) throw Error("association.direction_slack must be >= 0");
  }
};

/// Trajectories with an unresolved tail in [t, t+dt) (forward) and with an
/// unresolved head in (t, t+dt] (backward). Sorted by trajectory id.
struct WindowSets {
  std::vector<std::size_t> forward;
  std::vector<std::size_t> backward;

  bool empty() const { return forward.empty() && backward.empty(); }
};

inline WindowSets window_sets(const TrajectoryGraph& g, const TrajectorySet& ts, int t, int dt) {
  if (dt < 1) throw Error("time window width must be at least 1");
  WindowSets ws;
  for (const auto& tr : ts) {
    const int tk = g.frame(tr.last());
    if (!g.has_outgoing(tr.last()) && tk >= t && tk < t + dt) ws.forward.push_back(tr.id);
    const int t1 = g.frame(tr.first());
    if (!g.has_incoming(tr.first()) && t1 > t && t1 <= t + dt) ws.backward.push_back(tr.id);
  }
  return ws;
}

struct Association {
  enum class Kind { Entry, Exit, Translation, Split, Merge };

  Kind kind = Kind::Entry;
  std::vector<std::size_t> sources;  // trajectories whose tail is consumed
  std::vector<std::size_t> targets;  // trajectories whose head is consumed
  double likelihood = 0.0;

  static Association entry(std::size_t target) { return {Kind::Entry, {}, {target}, 0.0}; }
  static Association exit(std::size_t source) { return {Kind::Exit, {source}, {}, 0.0}; }
  static Association translation(std::size_t source, std::size_t target) {
    return {Kind::Translation, {source}, {target}, 0.0};
  }
  static Association split(std::size_t source, std::vector<std::size_t> targets) {
    std::sort(targets.begin(), targets.end());
    return {Kind::Split, {source}, std::move(targets), 0.0};
  }
  static Association merge(std::vector<std::size_t> sources, std::size_t target) {
    std::sort(sources.begin(), sources.end());
    return {Kind::Merge, std::move(sources), {target}, 0.0};
  }

  bool arity_ok() const {
    switch (kind) {
      case Kind::Entry:
        return sources.empty() && targets.size() == 1;
      case Kind::Exit:
        return sources.size() == 1 && targets.empty();
      case Kind::Translation:
        return sources.size() == 1 && targets.size() == 1;
      case Kind::Split:
        return sources.size() == 1 && targets.size() >= 2;
      case Kind::Merge:
        return sources.size() >= 2 && targets.size() == 1;
    }
    return false;
  }
};

inline std::string_view to_string(Association::Kind k) {
  switch (k) {
    case Association::Kind::Entry:
      return "entry";
    case Association::Kind::Exit:
      return "exit";
    case Association::Kind::Translation:
      return "translation";
    case Association::Kind::Split:
      return "split";
    case Association::Kind::Merge:
      return "merge";
  }
  return "?";
}

/// Per-trajectory quantities at one end: where it is, how it moves, and
/// the statistics of its conserved properties.
struct EndSummary {
  std::size_t node = 0;
  int frame = 0;
  Vector position;
  double radius = 0.0;
  /// Frames spanned by the edge adjacent to this end; 0 for 1-node trajectories.
  int edge_frames = 0;
  std::optional<MotionModel> model;
  Vector velocity;
  std::map<std::string, PropertyStats, std::less<>> stats;
  double node_area = 0.0;
  /// Spread of per-frame displacement over the window, floored.
  double sigma_dr = 1.0;

  bool predicted() const { return model.has_value(); }

  /// Extrapolated position at t, or the measured position without a model.
  Vector predict(double t) const { return model ? model->extrapolate(t) : position; }
};

struct TrajectorySummary {
  std::size_t id = 0;
  std::size_t size = 0;
  EndSummary head;
  EndSummary tail;
};

/// Immutable per-step view of the trajectories taking part in association.
class MotionContext {
 public:
  MotionContext(const TrajectoryGraph& g, const TrajectorySet& ts, const MotionConfig& motion,
                const LikelihoodConfig& likelihood, std::span<const std::size_t> ids)
      : graph_(&g), trajectories_(&ts), motion_(motion) {
    for (std::size_t id : ids) {
      if (!summaries_.contains(id)) summaries_.emplace(id, summarize(ts[id], likelihood));
    }
  }

  const TrajectoryGraph& graph() const { return *graph_; }
  const TrajectorySet& trajectories() const { return *trajectories_; }
  const MotionConfig& motion() const { return motion_; }

  const TrajectorySummary& operator[](std::size_t id) const {
    auto it = summaries_.find(id);
    if (it == summaries_.end()) throw Error("trajectory " + std::to_string(id) + " not in context");
    return it->second;
  }

  /// Property names compared for conservation: area always, volume when
  /// every participant carries it.
  std::vector<std::string> conserved_properties(std::span<const std::size_t> ids) const {
    std::vector<std::string> names{std::string(kArea)};
    bool volume = !ids.empty();
    for (std::size_t id : ids) {
      const auto& s = (*this)[id];
      volume = volume && s.head.stats.contains(kVolume) && s.tail.stats.contains(kVolume);
    }
    if (volume) names.emplace_back(kVolume);
    return names;
  }

 private:
  EndSummary summarize_end(const Trajectory& tr, End end, const LikelihoodConfig& lk) const {
    const auto& g = *graph_;
    EndSummary s;
    s.node = end == End::Head ? tr.first() : tr.last();
    const auto& det = g.detection(s.node);
    s.frame = det.frame;
    s.position = det.position;
    s.radius = det.effective_radius();
    s.node_area = det.area();
    if (tr.size() >= 2) {
      s.edge_frames = end == End::Head ? g.frame(tr.nodes[1]) - g.frame(tr.nodes[0])
                                       : g.frame(tr.last()) - g.frame(tr.nodes[tr.size() - 2]);
      s.model = fit_motion(g, tr, end, motion_);
      s.velocity = end == End::Head ? s.model->head_velocity() : s.model->tail_velocity();
    } else {
      s.velocity = Vector::Zero(det.position.size());
    }
    for (std::string_view name : {kArea, kVolume}) {
      if (!det.has_property(name)) continue;
      bool everywhere = std::all_of(tr.nodes.begin(), tr.nodes.end(), [&](std::size_t n) {
        return g.detection(n).has_property(name);
      });
      if (!everywhere) continue;
      s.stats.emplace(std::string(name), property_stats(g, tr, name, end, motion_.fit_window,
                                                        motion_.sigma_floor_fraction));
    }
    // Spread of per-frame speed across the window.
    auto window = detail::end_window(tr, end, motion_.fit_window);
    std::vector<double> speeds;
    for (std::size_t i = 1; i < window.size(); ++i) {
      const auto& a = g.detection(window[i - 1]);
      const auto& b = g.detection(window[i]);
      speeds.push_back((b.position - a.position).norm() / (b.frame - a.frame));
    }
    s.sigma_dr = lk.position_sigma_floor;
    if (speeds.size() >= 2) {
      s.sigma_dr = std::max(s.sigma_dr, property_stats(speeds, 0.0).raw_sigma);
    }
    return s;
  }

  TrajectorySummary summarize(const Trajectory& tr, const LikelihoodConfig& lk) const {
    return {tr.id, tr.size(), summarize_end(tr, End::Head, lk), summarize_end(tr, End::Tail, lk)};
  }

  const TrajectoryGraph* graph_;
  const TrajectorySet* trajectories_;
  MotionConfig motion_;
  std::map<std::size_t, TrajectorySummary> summaries_;
};

// --- Constraint formulas -------------------------------------------------

/// Both acceleration inequalities. `v1`/`v2` are the endpoint velocities of
/// the earlier/later trajectory (absent without prediction), `vk` the
/// connecting-edge velocity; dt_* are the frame spans of those edges.
inline bool acceleration_ok(const std::optional<Vector>& v1, const Vector& vk,
                            const std::optional<Vector>& v2, double dt1, double dtk, double dt2,
                            double max_acceleration) {
  if (v1 && !(2.0 * (vk - *v1).norm() / (dtk + dt1) < max_acceleration)) return false;
  if (v1 && v2 && !(2.0 * (*v2 - *v1).norm() / (dt2 + dtk) < max_acceleration)) return false;
  return true;
}

/// Admissible turning angle, (pi + slack) * exp(-speed / scale); strictly
/// decreasing in speed.
inline double direction_bound(double speed, double scale, double slack) {
  return (std::numbers::pi + slack) * std::exp(-speed / scale);
}

inline double turning_angle(const Vector& a, const Vector& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Both direction-change inequalities; undefined angles (zero velocity)
/// pass.
inline bool direction_ok(const std::optional<Vector>& v1, const Vector& vk,
                         const std::optional<Vector>& v2, double scale, double slack) {
  const bool vk_defined = vk.norm() > 0.0;
  if (v1 && vk_defined && v1->norm() > 0.0 &&
      !(turning_angle(vk, *v1) < direction_bound(v1->norm(), scale, slack))) {
    return false;
  }
  if (v2 && vk_defined && v2->norm() > 0.0 &&
      !(turning_angle(*v2, vk) < direction_bound(vk.norm(), scale, slack))) {
    return false;
  }
  return true;
}

/// Mean relative spread <sigma_k / <S_k>> over the participants.
inline double mean_relative_sigma(std::span<const PropertyStats> stats) {
  double sum = 0.0;
  for (const auto& s : stats) sum += s.sigma / s.mean;
  return sum / static_cast<double>(stats.size());
}

/// Weak conservation across a translation.
inline bool translation_mass_ok(const PropertyStats& a, const PropertyStats& b, double threshold) {
  const std::array<PropertyStats, 2> both{a, b};
  const double lhs = std::abs(a.mean - b.mean) / std::max(a.mean, b.mean);
  return lhs < threshold * mean_relative_sigma(both);
}

/// Weak conservation across a split or merge: the principal node value
/// against the summed component means.
inline bool interaction_mass_ok(double principal, std::span<const PropertyStats> components,
                                double threshold) {
  double total = 0.0;
  for (const auto& c : components) total += c.mean;
  const double lhs = std::abs(principal - total) / std::max(principal, total);
  return lhs < threshold * mean_relative_sigma(components);
}

/// Connecting-edge velocity between the tail of `from` and the head of `to`.
inline Vector edge_velocity(const EndSummary& from, const EndSummary& to) {
  return (to.position - from.position) / static_cast<double>(to.frame - from.frame);
}

inline bool check_constraints(const Association& a, const MotionContext& ctx,
                              const AssociationConfig& cfg) {
  switch (a.kind) {
    case Association::Kind::Entry:
    case Association::Kind::Exit:
      return true;
    case Association::Kind::Translation: {
      const auto& first = ctx[a.sources.front()].tail;
      const auto& second = ctx[a.targets.front()].head;
      const Vector vk = edge_velocity(first, second);
      std::optional<Vector> v1, v2;
      if (first.predicted()) v1 = first.velocity;
      if (second.predicted()) v2 = second.velocity;
      const double dtk = second.frame - first.frame;
      if (!acceleration_ok(v1, vk, v2, first.edge_frames, dtk, second.edge_frames,
                           cfg.max_acceleration)) {
        return false;
      }
      if (!direction_ok(v1, vk, v2, cfg.direction_scale, cfg.direction_slack)) return false;
      const std::array<std::size_t, 2> ids{a.sources.front(), a.targets.front()};
      for (const auto& name : ctx.conserved_properties(ids)) {
        if (!translation_mass_ok(first.stats.at(name), second.stats.at(name),
                                 cfg.translation_mass_threshold)) {
          return false;
        }
      }
      return true;
    }
    case Association::Kind::Split:
    case Association::Kind::Merge: {
      const bool split = a.kind == Association::Kind::Split;
      const auto& principal = split ? ctx[a.sources.front()].tail : ctx[a.targets.front()].head;
      const auto& component_ids = split ? a.targets : a.sources;
      std::vector<std::size_t> ids(component_ids);
      ids.push_back(split ? a.sources.front() : a.targets.front());
      for (const auto& name : ctx.conserved_properties(ids)) {
        std::vector<PropertyStats> comps;
        for (std::size_t c : component_ids) {
          comps.push_back(split ? ctx[c].head.stats.at(name) : ctx[c].tail.stats.at(name));
        }
        const double s0 = ctx.graph().detection(principal.node).property(name);
        if (!interaction_mass_ok(s0, comps, cfg.split_mass_threshold)) return false;
      }
      return true;
    }
  }
  return false;
}

// --- Enumeration ---------------------------------------------------------

struct Candidate {
  std::size_t id;
  double distance;
};

/// Pairwise admissibility of linking the tail of `from` to the head of `to`;
/// returns the gating distance when admissible.
inline std::optional<double> pairwise_distance(const TrajectorySummary& from,
                                               const TrajectorySummary& to,
                                               const AssociationConfig& cfg) {
  if (from.id == to.id) return std::nullopt;
  const auto& tail = from.tail;
  const auto& head = to.head;
  if (tail.frame >= head.frame) return std::nullopt;
  const double gap = head.frame - tail.frame;
  if ((head.position - tail.position).norm() > cfg.max_displacement * gap) return std::nullopt;
  const double d = (tail.predict(head.frame) - head.position).norm();
  const double radius = std::max(tail.radius, head.radius);
  if (d < cfg.soi_scale * radius || d < cfg.soi_min_radius) return d;
  return std::nullopt;
}

namespace detail {

inline void sort_candidates(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
}

// Calls fn with every subset of `pool` whose size lies in [2, max_size].
template <class Fn>
void for_each_subset(const std::vector<std::size_t>& pool, std::size_t max_size, Fn&& fn) {
  std::vector<std::size_t> pick;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (pick.size() >= 2) fn(pick);
    if (pick.size() == max_size) return;
    for (std::size_t i = start; i < pool.size(); ++i) {
      pick.push_back(pool[i]);
      self(self, i + 1);
      pick.pop_back();
    }
  };
  rec(rec, 0);
}

}  // namespace detail

/// All plausible associations over the window sets: an Exit per forward
/// member, an Entry per backward member, admissible translations, and
/// splits/merges up to `gamma` components. Constraint violators are dropped.
inline std::vector<Association> enumerate_associations(const WindowSets& ws,
                                                       const MotionContext& ctx,
                                                       const AssociationConfig& cfg) {
  std::vector<Association> out;
  for (std::size_t f : ws.forward) out.push_back(Association::exit(f));
  for (std::size_t b : ws.backward) out.push_back(Association::entry(b));

  const std::size_t gamma = cfg.gamma < 0 ? 0 : static_cast<std::size_t>(cfg.gamma);
  const std::size_t pool_size = std::max(gamma, cfg.split_pool);
  auto keep = [&](Association a) {
    if (check_constraints(a, ctx, cfg)) out.push_back(std::move(a));
  };

  for (std::size_t f : ws.forward) {
    std::vector<Candidate> cands;
    for (std::size_t b : ws.backward) {
      if (auto d = pairwise_distance(ctx[f], ctx[b], cfg)) cands.push_back({b, *d});
    }
    detail::sort_candidates(cands);
    for (const auto& c : cands) keep(Association::translation(f, c.id));
    if (gamma >= 2 && cands.size() >= 2) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < std::min(pool_size, cands.size()); ++i) pool.push_back(cands[i].id);
      detail::for_each_subset(pool, gamma, [&](const std::vector<std::size_t>& subset) {
        keep(Association::split(f, subset));
      });
    }
  }

  if (gamma >= 2) {
    for (std::size_t b : ws.backward) {
      std::vector<Candidate> cands;
      for (std::size_t f : ws.forward) {
        if (auto d = pairwise_distance(ctx[f], ctx[b], cfg)) cands.push_back({f, *d});
      }
      if (cands.size() < 2) continue;
      detail::sort_candidates(cands);
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < std::min(pool_size, cands.size()); ++i) pool.push_back(cands[i].id);
      detail::for_each_subset(pool, gamma, [&](const std::vector<std::size_t>& subset) {
        keep(Association::merge(subset, b));
      });
    }
  }
  return out;
}

// --- Likelihood assignment ------------------------------------------------

inline double rms(double a, double b) { return std::sqrt(0.5 * (a * a + b * b)); }

/// f1/f2/f3 by association kind, clamped into [floor, 1].
inline double association_likelihood(const Association& a, const MotionContext& ctx,
                                     const LikelihoodConfig& cfg) {
  auto vertical = [&](const Vector& p) {
    if (cfg.vertical_axis >= static_cast<std::size_t>(p.size())) {
      throw Error("likelihood.vertical_axis exceeds the position dimension");
    }
    return p[static_cast<Eigen::Index>(cfg.vertical_axis)];
  };
  double f = 0.0;
  switch (a.kind) {
    case Association::Kind::Entry:
      f = entry_exit_likelihood(vertical(ctx[a.targets.front()].head.position), cfg.entry_slope,
                                cfg.entry_midpoint);
      break;
    case Association::Kind::Exit:
      f = entry_exit_likelihood(vertical(ctx[a.sources.front()].tail.position), cfg.exit_slope,
                                cfg.exit_midpoint);
      break;
    case Association::Kind::Translation: {
      const auto& tail = ctx[a.sources.front()].tail;
      const auto& head = ctx[a.targets.front()].head;
      // Mean residual of the available predictions across the gap, in
      // either direction; raw displacement when neither side predicts.
      double dr = 0.0;
      int n = 0;
      if (tail.predicted()) {
        dr += (tail.predict(head.frame) - head.position).norm();
        ++n;
      }
      if (head.predicted()) {
        dr += (head.predict(tail.frame) - tail.position).norm();
        ++n;
      }
      dr = n > 0 ? dr / n : (head.position - tail.position).norm();
      const double ds = head.node_area - tail.node_area;
      const double sigma_ds = rms(tail.stats.at(std::string(kArea)).sigma,
                                  head.stats.at(std::string(kArea)).sigma);
      f = translation_likelihood(dr, ds, rms(tail.sigma_dr, head.sigma_dr), sigma_ds, cfg.alpha,
                                 cfg.floor);
      break;
    }
    case Association::Kind::Split:
    case Association::Kind::Merge: {
      const bool split = a.kind == Association::Kind::Split;
      const auto& principal = split ? ctx[a.sources.front()].tail : ctx[a.targets.front()].head;
      const auto& component_ids = split ? a.targets : a.sources;
      auto component_end = [&](std::size_t id) -> const EndSummary& {
        return split ? ctx[id].head : ctx[id].tail;
      };

      InteractionTerms terms;
      double total = 0.0, sigma_sum = 0.0, sigma_dr_sq = principal.sigma_dr * principal.sigma_dr;
      std::size_t predicted = principal.predicted() ? 1 : 0;
      Vector centroid = Vector::Zero(principal.position.size());
      Vector measured = Vector::Zero(principal.position.size());
      std::size_t with_model = 0;
      for (std::size_t id : component_ids) {
        const auto& c = component_end(id);
        const auto& st = c.stats.at(std::string(kArea));
        total += st.mean;
        sigma_sum += st.sigma;
        sigma_dr_sq += c.sigma_dr * c.sigma_dr;
        measured += c.position;
        if (c.predicted()) {
          centroid += c.predict(principal.frame);
          ++with_model;
          ++predicted;
        }
      }
      const double m = static_cast<double>(component_ids.size());
      terms.mass_mismatch = principal.node_area - total;
      terms.mean_component_sigma = sigma_sum / m;
      terms.involved = component_ids.size() + 1;
      terms.predicted = predicted;
      terms.sigma_dr = std::sqrt(sigma_dr_sq / static_cast<double>(terms.involved));
      if (with_model > 0) {
        terms.position_error =
            (centroid / static_cast<double>(with_model) - principal.position).norm();
      } else if (principal.predicted()) {
        // Components lack history: compare the principal's prediction at the
        // components' mean frame with their measured centroid instead.
        double frame = 0.0;
        for (std::size_t id : component_ids) frame += component_end(id).frame;
        terms.position_error = (principal.predict(frame / m) - measured / m).norm();
      }
      f = interaction_likelihood(terms, cfg.beta, cfg.floor);
      break;
    }
  }
  return std::clamp(f, cfg.floor, 1.0);
}

// --- Materialization -------------------------------------------------------

/// Graph edges realizing an association; all edges of one event share its
/// likelihood.
inline std::vector<Edge> materialize(const Association& a, const TrajectoryGraph& g,
                                     const TrajectorySet& ts) {
  if (!a.arity_ok()) throw Error("association has the wrong arity for its kind");
  for (std::size_t s : a.sources) {
    if (std::find(a.targets.begin(), a.targets.end(), s) != a.targets.end()) {
      throw Error("self-associations are forbidden");
    }
  }
  if (!(a.likelihood > 0.0 && a.likelihood <= 1.0)) {
    throw Error("association likelihood must lie in (0, 1]");
  }
  std::vector<Edge> edges;
  auto tail = [&](std::size_t id) { return NodeRef::measurement(ts[id].last()); };
  auto head = [&](std::size_t id) { return NodeRef::measurement(ts[id].first()); };
  switch (a.kind) {
    case Association::Kind::Entry:
      edges.push_back({NodeRef::entry(), head(a.targets.front()), a.likelihood});
      break;
    case Association::Kind::Exit:
      edges.push_back({tail(a.sources.front()), NodeRef::exit(), a.likelihood});
      break;
    case Association::Kind::Translation:
    case Association::Kind::Split:
    case Association::Kind::Merge:
      for (std::size_t s : a.sources) {
        for (std::size_t t : a.targets) edges.push_back({tail(s), head(t), a.likelihood});
      }
      break;
  }
  for (const auto& e : edges) g.check_edge(e);
  return edges;
}

}  // namespace ectrack
