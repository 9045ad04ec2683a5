#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ectrack/association.hpp"
#include "ectrack/exact_cover.hpp"
#include "ectrack/graph.hpp"
#include "ectrack/likelihood.hpp"
#include "ectrack/motion.hpp"

namespace ectrack {

struct SweepConfig {
  /// Widest time window; widths 1..max_window are swept in turn.
  int max_window = 3;
  /// Eradication quantile q in [0, 1].
  double quantile = 0.1;
  /// Per-width replacements for `quantile`.
  std::map<int, double> quantile_overrides;
  /// Cover enumeration cap per component.
  std::size_t max_covers = 100000;
  /// Upper bound on worker threads for component solving; 0 means hardware.
  unsigned threads = 1;

  double quantile_for(int dt) const {
    auto it = quantile_overrides.find(dt);
    return it == quantile_overrides.end() ? quantile : it->second;
  }

  void validate() const {
    if (max_window < 1) throw Error("sweep.max_window must be at least 1");
    auto check_q = [](double q) {
      if (!(q >= 0.0 && q <= 1.0)) throw Error("sweep.quantile must lie in [0, 1]");
    };
    check_q(quantile);
    for (const auto& [dt, q] : quantile_overrides) {
      if (dt < 1) throw Error("sweep quantile override for a width below 1");
      check_q(q);
    }
    if (max_covers == 0) throw Error("sweep.max_covers must be positive");
  }
};

struct TrackerConfig {
  AssociationConfig association;
  LikelihoodConfig likelihood;
  MotionConfig motion;
  SweepConfig sweep;

  void validate() const {
    association.validate();
    sweep.validate();
    if (!(likelihood.alpha >= 0.0 && likelihood.alpha <= 1.0)) {
      throw Error("likelihood.alpha must lie in [0, 1]");
    }
    if (!(likelihood.beta >= 0.0 && likelihood.beta <= 1.0)) {
      throw Error("likelihood.beta must lie in [0, 1]");
    }
    if (!(likelihood.floor > 0.0 && likelihood.floor < likelihood.ceiling &&
          likelihood.ceiling < 1.0)) {
      throw Error("likelihood bounds must satisfy 0 < floor < ceiling < 1");
    }
    if (!(likelihood.position_sigma_floor > 0.0)) {
      throw Error("likelihood.position_sigma_floor must be positive");
    }
    if (motion.fit_window < 2) throw Error("motion.fit_window must be at least 2");
    if (!(motion.offset >= 0.0)) throw Error("motion.offset must be non-negative");
    if (!(motion.noise_sigma >= 0.0) || !(motion.smoothing >= 0.0)) {
      throw Error("motion.noise_sigma and motion.smoothing must be non-negative");
    }
    if (!(motion.sigma_floor_fraction >= 0.0)) {
      throw Error("motion.sigma_floor_fraction must be non-negative");
    }
  }
};

/// Counters for one (width, frame) step.
struct StepReport {
  int dt = 0;
  int t = 0;
  double p_c = 0.0;
  std::size_t forward = 0;
  std::size_t backward = 0;
  std::size_t associations = 0;
  std::size_t components = 0;
  std::size_t inserted_edges = 0;
  std::size_t deferred = 0;
  std::size_t truncated_components = 0;
  std::size_t infeasible_components = 0;
};

using ProgressCallback = std::function<void(const StepReport&)>;

/// Graph with only the certain boundary edges: Entry into every first-frame
/// node and Exit out of every last-frame node, both with p = 1.
inline TrajectoryGraph initialize(std::vector<Detection> detections, int frame_count) {
  if (detections.empty()) throw Error("no detections to track");
  TrajectoryGraph g(std::move(detections), frame_count);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (g.frame(i) == 1) edges.push_back({NodeRef::entry(), NodeRef::measurement(i), 1.0});
    if (g.frame(i) == frame_count) edges.push_back({NodeRef::measurement(i), NodeRef::exit(), 1.0});
  }
  g.insert_edges(edges);
  return g;
}

/// Nearest-rank q-quantile of the uncertain (p < 1) edge likelihoods; 0
/// when every edge is certain.
inline double eradication_threshold(const TrajectoryGraph& g, double q) {
  std::vector<double> p;
  for (const auto& [key, v] : g.edges()) {
    if (v < 1.0) p.push_back(v);
  }
  if (p.empty()) return 0.0;
  std::sort(p.begin(), p.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(p.size())));
  return p[std::max<std::size_t>(rank, 1) - 1];
}

/// Removes every edge with p <= p_c except the certain ones; returns p_c.
inline double eradicate(TrajectoryGraph& g, double q) {
  const double p_c = eradication_threshold(g, q);
  std::vector<TrajectoryGraph::EdgeKey> doomed;
  for (const auto& [key, v] : g.edges()) {
    if (v <= p_c && v < 1.0) doomed.push_back(key);
  }
  for (const auto& [from, to] : doomed) g.remove_edge(from, to);
  return p_c;
}

namespace detail {

// Endpoint elements of the exact cover universe: the tail and the head of a
// trajectory are distinct, since one trajectory can sit in both window sets.
inline std::vector<std::size_t> endpoint_elements(const Association& a) {
  std::vector<std::size_t> out;
  for (std::size_t s : a.sources) out.push_back(2 * s);
  for (std::size_t t : a.targets) out.push_back(2 * t + 1);
  return out;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// One association step at frame t with window width dt. Associations chosen
/// by the MAP hypothesis are inserted when they are due at t (a source ends
/// at t or a target starts at t + 1) and beat p_c; the rest wait.
inline StepReport sweep_step(TrajectoryGraph& g, int t, int dt, double p_c,
                             const TrackerConfig& cfg) {
  StepReport report;
  report.dt = dt;
  report.t = t;
  report.p_c = p_c;
  if (t < 1 || t >= g.frame_count()) throw Error("sweep step frame outside [1, N-1]");

  const TrajectorySet ts = extract_trajectories(g);
  const WindowSets ws = window_sets(g, ts, t, dt);
  report.forward = ws.forward.size();
  report.backward = ws.backward.size();
  if (ws.empty()) return report;

  std::vector<std::size_t> ids(ws.forward);
  ids.insert(ids.end(), ws.backward.begin(), ws.backward.end());
  const MotionContext ctx(g, ts, cfg.motion, cfg.likelihood, ids);
  std::vector<Association> assoc = enumerate_associations(ws, ctx, cfg.association);
  for (auto& a : assoc) a.likelihood = association_likelihood(a, ctx, cfg.likelihood);
  report.associations = assoc.size();

  std::vector<std::vector<std::size_t>> elements;
  elements.reserve(assoc.size());
  for (const auto& a : assoc) elements.push_back(detail::endpoint_elements(a));
  const auto groups = disjoint_components(elements);
  report.components = groups.size();

  struct Outcome {
    std::vector<std::size_t> chosen;  // indices into assoc
    bool truncated = false;
    bool infeasible = false;
  };
  std::vector<Outcome> outcomes(groups.size());
  detail::parallel_for(groups.size(), cfg.sweep.threads, [&](std::size_t gi) {
    const auto& group = groups[gi];
    const ExactCoverProblem problem = component_problem(elements, group);
    const ExactCoverResult covers = solve_exact_cover(problem, cfg.sweep.max_covers);
    outcomes[gi].truncated = covers.truncated;
    if (covers.covers.empty()) {
      outcomes[gi].infeasible = true;
      return;
    }
    std::vector<double> f;
    for (std::size_t i : group) f.push_back(assoc[i].likelihood);
    const Hypothesis h = select_map(covers.covers, f, cfg.likelihood.floor, cfg.likelihood.ceiling);
    for (std::size_t local : h.selected) outcomes[gi].chosen.push_back(group[local]);
  });

  auto due = [&](const Association& a) {
    for (std::size_t s : a.sources) {
      if (g.frame(ts[s].last()) == t) return true;
    }
    for (std::size_t b : a.targets) {
      if (g.frame(ts[b].first()) == t + 1) return true;
    }
    return false;
  };

  std::vector<Edge> batch;
  for (const auto& out : outcomes) {
    report.truncated_components += out.truncated ? 1 : 0;
    report.infeasible_components += out.infeasible ? 1 : 0;
    for (std::size_t i : out.chosen) {
      const auto& a = assoc[i];
      if (!due(a) || !(a.likelihood > p_c)) {
        ++report.deferred;
        continue;
      }
      auto edges = materialize(a, g, ts);
      batch.insert(batch.end(), edges.begin(), edges.end());
    }
  }
  g.insert_edges(batch);
  report.inserted_edges = batch.size();
  return report;
}

/// Gives every endpoint still lacking an edge its Entry or Exit edge, so the
/// graph becomes fully connected. Returns the number of edges added.
inline std::size_t close_endpoints(TrajectoryGraph& g, const LikelihoodConfig& cfg) {
  std::vector<Edge> batch;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& pos = g.detection(i).position;
    if (cfg.vertical_axis >= static_cast<std::size_t>(pos.size())) {
      throw Error("likelihood.vertical_axis exceeds the position dimension");
    }
    const double y = pos[static_cast<Eigen::Index>(cfg.vertical_axis)];
    if (!g.has_incoming(i)) {
      const double f = entry_exit_likelihood(y, cfg.entry_slope, cfg.entry_midpoint);
      batch.push_back({NodeRef::entry(), NodeRef::measurement(i), std::clamp(f, cfg.floor, 1.0)});
    }
    if (!g.has_outgoing(i)) {
      const double f = entry_exit_likelihood(y, cfg.exit_slope, cfg.exit_midpoint);
      batch.push_back({NodeRef::measurement(i), NodeRef::exit(), std::clamp(f, cfg.floor, 1.0)});
    }
  }
  g.insert_edges(batch);
  return batch.size();
}

/// Full pipeline: initialize, then for each width eradicate and sweep every
/// frame, then close the remaining endpoints.
inline TrajectoryGraph run(std::vector<Detection> detections, int frame_count,
                           const TrackerConfig& cfg, const ProgressCallback& progress = {}) {
  cfg.validate();
  TrajectoryGraph g = initialize(std::move(detections), frame_count);
  for (int dt = 1; dt <= cfg.sweep.max_window; ++dt) {
    const double p_c = eradicate(g, cfg.sweep.quantile_for(dt));
    for (int t = 1; t < frame_count; ++t) {
      StepReport r = sweep_step(g, t, dt, p_c, cfg);
      if (progress) progress(r);
    }
  }
  close_endpoints(g, cfg.likelihood);
  return g;
}

}  // namespace ectrack
