#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ectrack/graph.hpp"
#include "ectrack/io.hpp"

namespace ectrack {

enum class VelocityField { Constant, Vortex, Drift };

inline VelocityField parse_velocity_field(const std::string& s) {
  if (s == "constant") return VelocityField::Constant;
  if (s == "vortex") return VelocityField::Vortex;
  if (s == "drift") return VelocityField::Drift;
  throw Error("unknown velocity field '" + s + "' (constant, vortex or drift)");
}

struct ScheduledEvent {
  enum class Kind { Split, Merge };
  Kind kind = Kind::Split;
  /// Object (lane) index the event belongs to.
  std::size_t object = 0;
  /// Last frame before the event: a split parent ends here, merge
  /// components end here and the merged object starts at frame + 1.
  int frame = 0;
};

/// Objects start in evenly spaced lanes across the x extent of the box and
/// are carried by the velocity field. Split children and merge components
/// sit symmetrically either side of their object's path.
struct SceneParams {
  std::size_t objects = 10;
  int frames = 50;
  Vector box_min = Vector::Zero(2);
  Vector box_max = (Vector(2) << 200.0, 100.0).finished();
  VelocityField field = VelocityField::Constant;
  /// Constant field velocity.
  Vector velocity = (Vector(2) << 0.0, 1.2).finished();
  /// Vortex: counter-clockwise rotation about the box centre (rad/frame).
  double angular_speed = 0.01;
  /// Drift: rise speed along y with a sideways sway.
  double rise_speed = 1.2;
  double sway_amplitude = 2.0;
  double sway_period = 25.0;
  /// Relative per-object speed variation, uniform in [1 - j, 1 + j].
  double speed_jitter = 0.1;
  /// Starting y is drawn from [box_min.y + start_low, box_min.y + start_high].
  double start_low = 5.0;
  double start_high = 15.0;
  double area_min = 20.0;
  double area_max = 40.0;
  /// Event counts drawn at random unless `events` is given explicitly.
  std::size_t splits = 0;
  std::size_t merges = 0;
  std::vector<ScheduledEvent> events;
  /// Random events fall in [margin, frames - margin].
  int event_margin = 10;
  /// Area share of the first split child / merge component.
  double split_fraction_min = 0.35;
  double split_fraction_max = 0.65;
  /// Lateral separation speed of components and its saturation half-width.
  double separation = 1.0;
  double max_half_width = 4.0;
  std::uint64_t seed = 1;
};

struct Scene {
  DetectionTable table;
  TrajectoryGraph truth;
};

namespace detail {

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

inline std::vector<ScheduledEvent> schedule_events(const SceneParams& p) {
  if (!p.events.empty()) return p.events;
  if (p.splits + p.merges > p.objects) {
    throw Error("infeasible schedule: more events than objects");
  }
  if (p.splits + p.merges == 0) return {};
  if (p.event_margin < 1 || p.frames - p.event_margin < p.event_margin) {
    throw Error("infeasible schedule: event margin leaves no room for events");
  }
  auto rng = detail::make_stream(p.seed, 11);
  std::vector<std::size_t> lanes(p.objects);
  for (std::size_t i = 0; i < lanes.size(); ++i) lanes[i] = i;
  std::shuffle(lanes.begin(), lanes.end(), rng);
  std::uniform_int_distribution<int> frame(p.event_margin, p.frames - p.event_margin);
  std::vector<ScheduledEvent> out;
  for (std::size_t i = 0; i < p.splits + p.merges; ++i) {
    out.push_back({i < p.splits ? ScheduledEvent::Kind::Split : ScheduledEvent::Kind::Merge,
                   lanes[i], frame(rng)});
  }
  std::sort(out.begin(), out.end(),
            [](const ScheduledEvent& a, const ScheduledEvent& b) { return a.object < b.object; });
  return out;
}

inline void validate(const SceneParams& p) {
  if (p.objects == 0) throw Error("scene needs at least one object");
  if (p.frames < 2) throw Error("scene needs at least two frames");
  if (p.box_min.size() != 2 || p.box_max.size() != 2 || p.velocity.size() != 2) {
    throw Error("scene geometry is two-dimensional");
  }
  if (!(p.box_max.array() > p.box_min.array()).all()) throw Error("scene box is empty");
  if (!(p.area_min > 0.0 && p.area_max >= p.area_min)) throw Error("areas must be positive");
  if (!(p.split_fraction_min > 0.0 && p.split_fraction_max < 1.0 &&
        p.split_fraction_min <= p.split_fraction_max)) {
    throw Error("split fractions must lie in (0, 1)");
  }
  if (!(p.speed_jitter >= 0.0 && p.speed_jitter < 1.0)) throw Error("speed_jitter must lie in [0, 1)");
  if (!(p.separation >= 0.0 && p.max_half_width >= 0.0)) throw Error("separation must be >= 0");
  if (!(p.start_high >= p.start_low)) throw Error("start range is empty");
}

/// Noise-free detections with their ground-truth graph. Detection ids are
/// "t<k>" with k the truth node index.
inline Scene generate_scene(const SceneParams& p) {
  validate(p);
  const auto events = schedule_events(p);
  std::map<std::size_t, ScheduledEvent> event_of;
  for (const auto& e : events) {
    if (e.object >= p.objects) throw Error("infeasible schedule: event on unknown object");
    if (e.frame < 1 || e.frame >= p.frames) {
      throw Error("infeasible schedule: event frame outside [1, frames - 1]");
    }
    if (!event_of.emplace(e.object, e).second) {
      throw Error("infeasible schedule: two events on one object");
    }
  }

  auto rng = detail::make_stream(p.seed, 10);
  const Vector centre = 0.5 * (p.box_min + p.box_max);
  const double lane_width = (p.box_max[0] - p.box_min[0]) / static_cast<double>(p.objects);

  struct Object {
    Vector start;
    double speed = 1.0;
    double area = 1.0;
    double fraction = 0.5;
  };
  std::vector<Object> objects(p.objects);
  for (std::size_t i = 0; i < p.objects; ++i) {
    auto& o = objects[i];
    o.start = Vector(2);
    o.start[0] = p.box_min[0] + (static_cast<double>(i) + 0.5) * lane_width;
    o.start[1] = p.box_min[1] + detail::uniform(rng, p.start_low, p.start_high);
    o.speed = 1.0 + detail::uniform(rng, -p.speed_jitter, p.speed_jitter);
    o.area = detail::uniform(rng, p.area_min, p.area_max);
    o.fraction = detail::uniform(rng, p.split_fraction_min, p.split_fraction_max);
  }

  // Path of the object's centre at frame t.
  auto path = [&](const Object& o, double t) -> Vector {
    const double s = (t - 1.0) * o.speed;
    Vector r(2);
    switch (p.field) {
      case VelocityField::Constant:
        r = o.start + p.velocity * s;
        break;
      case VelocityField::Vortex: {
        const double a = p.angular_speed * s;
        const Vector d = o.start - centre;
        r[0] = centre[0] + std::cos(a) * d[0] - std::sin(a) * d[1];
        r[1] = centre[1] + std::sin(a) * d[0] + std::cos(a) * d[1];
        break;
      }
      case VelocityField::Drift:
        r[0] = o.start[0] + p.sway_amplitude * std::sin(2.0 * std::numbers::pi * s / p.sway_period);
        r[1] = o.start[1] + p.rise_speed * s;
        break;
    }
    return r;
  };
  auto lateral = [&](const Object& o, double t) -> Vector {
    Vector v = path(o, t + 0.5) - path(o, t - 0.5);
    Vector n(2);
    n << -v[1], v[0];
    const double len = n.norm();
    if (len == 0.0) return (Vector(2) << 1.0, 0.0).finished();
    return n / len;
  };

  std::vector<Detection> dets;
  std::vector<std::pair<std::size_t, std::size_t>> links;  // truth node pairs
  struct Branch {
    std::size_t object;
    int sign;  // 0 for the centreline
    int first, last;
    double area;
  };
  std::vector<Branch> branches;
  for (std::size_t i = 0; i < p.objects; ++i) {
    const auto& o = objects[i];
    auto it = event_of.find(i);
    if (it == event_of.end()) {
      branches.push_back({i, 0, 1, p.frames, o.area});
    } else if (it->second.kind == ScheduledEvent::Kind::Split) {
      const int f = it->second.frame;
      branches.push_back({i, 0, 1, f, o.area});
      branches.push_back({i, -1, f + 1, p.frames, o.fraction * o.area});
      branches.push_back({i, +1, f + 1, p.frames, (1.0 - o.fraction) * o.area});
    } else {
      const int f = it->second.frame;
      branches.push_back({i, -1, 1, f, o.fraction * o.area});
      branches.push_back({i, +1, 1, f, (1.0 - o.fraction) * o.area});
      branches.push_back({i, 0, f + 1, p.frames, o.area});
    }
  }

  // Node index per (branch, frame); detections are ordered by frame, then
  // branch, so ingestion order is stable.
  std::vector<std::map<int, std::size_t>> node_of(branches.size());
  for (int t = 1; t <= p.frames; ++t) {
    for (std::size_t b = 0; b < branches.size(); ++b) {
      const auto& br = branches[b];
      if (t < br.first || t > br.last) continue;
      const auto& o = objects[br.object];
      Vector pos = path(o, t);
      if (br.sign != 0) {
        auto ev = event_of.at(br.object);
        const double frames_from_event =
            ev.kind == ScheduledEvent::Kind::Split ? t - ev.frame : ev.frame + 1 - t;
        const double half = std::min(p.max_half_width, p.separation * frames_from_event);
        pos += br.sign * half * lateral(o, t);
      }
      Detection d;
      d.frame = t;
      d.position = pos;
      d.properties.emplace(std::string(kArea), br.area);
      d.source_id = "t" + std::to_string(dets.size());
      node_of[b][t] = dets.size();
      dets.push_back(std::move(d));
    }
  }
  for (std::size_t b = 0; b < branches.size(); ++b) {
    for (int t = branches[b].first; t < branches[b].last; ++t) {
      links.emplace_back(node_of[b].at(t), node_of[b].at(t + 1));
    }
  }
  for (const auto& [object, ev] : event_of) {
    std::size_t centre_branch = 0;
    std::vector<std::size_t> sides;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (branches[b].object != object) continue;
      if (branches[b].sign == 0) {
        centre_branch = b;
      } else {
        sides.push_back(b);
      }
    }
    for (std::size_t s : sides) {
      if (ev.kind == ScheduledEvent::Kind::Split) {
        links.emplace_back(node_of[centre_branch].at(ev.frame), node_of[s].at(ev.frame + 1));
      } else {
        links.emplace_back(node_of[s].at(ev.frame), node_of[centre_branch].at(ev.frame + 1));
      }
    }
  }

  Scene scene{{dets, p.frames}, TrajectoryGraph(dets, p.frames)};
  std::vector<Edge> edges;
  for (auto [a, b] : links) edges.push_back({NodeRef::measurement(a), NodeRef::measurement(b), 1.0});
  scene.truth.insert_edges(edges);
  edges.clear();
  for (std::size_t i = 0; i < scene.truth.node_count(); ++i) {
    if (!scene.truth.has_incoming(i)) edges.push_back({NodeRef::entry(), NodeRef::measurement(i), 1.0});
    if (!scene.truth.has_outgoing(i)) edges.push_back({NodeRef::measurement(i), NodeRef::exit(), 1.0});
  }
  scene.truth.insert_edges(edges);
  return scene;
}

// --- Corruption ------------------------------------------------------------

struct Corruption {
  /// Independent drop probability per detection, in [0, 1).
  double dropout = 0.0;
  /// Spurious detections per frame: Poisson mean, or an exact count when
  /// `fixed_fp_count` is set.
  double fp_rate = 0.0;
  bool fixed_fp_count = false;
  /// Spurious detections keep at least this distance from every true
  /// detection within `fp_frame_window` frames.
  double fp_min_distance = 0.0;
  int fp_frame_window = 3;
  double position_sigma = 0.0;
  double area_sigma = 0.0;
  /// Placement box for spurious detections; empty means the bounding box of
  /// the input detections.
  Vector box_min;
  Vector box_max;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
    if (!(fp_rate >= 0.0)) throw Error("fp_rate must be non-negative");
    if (!(position_sigma >= 0.0 && area_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
    if (!(fp_min_distance >= 0.0) || fp_frame_window < 0) {
      throw Error("fp distance settings must be non-negative");
    }
    if (box_min.size() != box_max.size()) throw Error("fp box corners differ in dimension");
  }
};

/// Drops, perturbs and pads a table. Random streams: 1 dropout, 2 spurious
/// counts, 3 spurious placement, 4 noise. Kept detections keep their ids;
/// spurious ones are "fp<k>".
inline DetectionTable corrupt(const DetectionTable& table, const Corruption& c) {
  c.validate();
  auto drop_rng = detail::make_stream(c.seed, 1);
  auto count_rng = detail::make_stream(c.seed, 2);
  auto place_rng = detail::make_stream(c.seed, 3);
  auto noise_rng = detail::make_stream(c.seed, 4);

  const Eigen::Index dims = table.detections.empty() ? 2 : table.detections.front().position.size();
  Vector lo = c.box_min, hi = c.box_max;
  double area_lo = 1.0, area_hi = 1.0;
  if (!table.detections.empty()) {
    area_lo = area_hi = table.detections.front().area();
    if (lo.size() == 0) {
      lo = hi = table.detections.front().position;
    }
    for (const auto& d : table.detections) {
      if (c.box_min.size() == 0) {
        lo = lo.cwiseMin(d.position);
        hi = hi.cwiseMax(d.position);
      }
      area_lo = std::min(area_lo, d.area());
      area_hi = std::max(area_hi, d.area());
    }
  } else if (lo.size() == 0) {
    lo = Vector::Zero(dims);
    hi = Vector::Ones(dims);
  }
  if (lo.size() != dims) throw Error("fp box dimension differs from the detections");

  std::map<int, std::vector<Detection>> by_frame;
  std::map<int, std::vector<Vector>> true_positions;
  for (const auto& d : table.detections) {
    true_positions[d.frame].push_back(d.position);
    const bool drop = std::bernoulli_distribution(c.dropout)(drop_rng);
    if (drop) continue;
    by_frame[d.frame].push_back(d);
  }

  std::size_t fp_index = 0;
  std::poisson_distribution<int> poisson(c.fp_rate > 0.0 ? c.fp_rate : 1.0);
  for (int t = 1; t <= table.frame_count; ++t) {
    int count = 0;
    if (c.fp_rate > 0.0) {
      count = c.fixed_fp_count ? static_cast<int>(std::lround(c.fp_rate)) : poisson(count_rng);
    }
    for (int k = 0; k < count; ++k) {
      Vector pos(dims);
      bool placed = false;
      for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
        for (Eigen::Index a = 0; a < dims; ++a) pos[a] = detail::uniform(place_rng, lo[a], hi[a]);
        placed = true;
        for (int s = t - c.fp_frame_window; s <= t + c.fp_frame_window && placed; ++s) {
          auto it = true_positions.find(s);
          if (it == true_positions.end()) continue;
          for (const auto& q : it->second) {
            if ((q - pos).norm() < c.fp_min_distance) {
              placed = false;
              break;
            }
          }
        }
      }
      if (!placed) throw Error("cannot place a spurious detection at the requested distance");
      Detection d;
      d.frame = t;
      d.position = pos;
      d.properties.emplace(std::string(kArea), detail::uniform(place_rng, area_lo, area_hi));
      d.source_id = "fp" + std::to_string(fp_index++);
      by_frame[t].push_back(std::move(d));
    }
  }

  DetectionTable out;
  out.frame_count = table.frame_count;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& [t, dets] : by_frame) {
    for (auto& d : dets) {
      if (c.position_sigma > 0.0) {
        for (Eigen::Index a = 0; a < d.position.size(); ++a) {
          d.position[a] += c.position_sigma * unit(noise_rng);
        }
      }
      if (c.area_sigma > 0.0) {
        auto& s = d.properties.at(std::string(kArea));
        // Keep areas positive; a heavy negative draw is folded back.
        s = std::abs(s + c.area_sigma * unit(noise_rng));
        if (s == 0.0) s = c.area_sigma;
      }
      out.detections.push_back(std::move(d));
    }
  }
  return out;
}

/// Truth graph restricted to the detections of `table` (matched by id):
/// chains through dropped nodes are contracted, unmatched detections become
/// Entry -> node -> Exit singletons.
inline TrajectoryGraph project_truth(const TrajectoryGraph& truth, const DetectionTable& table) {
  std::map<std::string, std::size_t> truth_index;
  for (std::size_t i = 0; i < truth.node_count(); ++i) {
    if (!truth_index.emplace(truth.detection(i).source_id, i).second) {
      throw Error("duplicate truth id '" + truth.detection(i).source_id + "'");
    }
  }
  std::map<std::size_t, std::size_t> kept;  // truth index -> table index
  for (std::size_t i = 0; i < table.detections.size(); ++i) {
    auto it = truth_index.find(table.detections[i].source_id);
    if (it != truth_index.end()) kept.emplace(it->second, i);
  }
  TrajectoryGraph g(table.detections, table.frame_count);
  std::set<std::pair<std::size_t, std::size_t>> links;
  for (const auto& [u, ui] : kept) {
    std::vector<std::size_t> stack{u};
    std::set<std::size_t> visited;
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      for (NodeRef s : truth.successors(x)) {
        if (!s.is_measurement() || !visited.insert(s.index).second) continue;
        if (auto k = kept.find(s.index); k != kept.end()) {
          links.emplace(ui, k->second);
        } else {
          stack.push_back(s.index);
        }
      }
    }
  }
  std::vector<Edge> edges;
  for (auto [a, b] : links) edges.push_back({NodeRef::measurement(a), NodeRef::measurement(b), 1.0});
  g.insert_edges(edges);
  edges.clear();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (!g.has_incoming(i)) edges.push_back({NodeRef::entry(), NodeRef::measurement(i), 1.0});
    if (!g.has_outgoing(i)) edges.push_back({NodeRef::measurement(i), NodeRef::exit(), 1.0});
  }
  g.insert_edges(edges);
  return g;
}

// --- Scoring ---------------------------------------------------------------

struct ScoreReport {
  double edge_precision = 1.0;
  double edge_recall = 1.0;
  double special_precision = 1.0;
  double special_recall = 1.0;
  double split_recall = 1.0;
  double merge_recall = 1.0;
  double event_recall = 1.0;
  /// Share of the truth's isolated nodes that the solution isolates too.
  double isolated_fp_rate = 1.0;
  /// Mean over solution trajectories of the dominant truth-trajectory share.
  double purity = 1.0;
  std::size_t truth_edges = 0;
  std::size_t solution_edges = 0;
  std::size_t matched_edges = 0;
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

using EventKey = std::tuple<LinkEvent::Kind, std::string, std::set<std::string>>;

inline std::set<EventKey> event_keys(const TrajectoryGraph& g) {
  std::set<EventKey> out;
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    if (g.measurement_out_degree(u) >= 2) {
      std::set<std::string> parts;
      for (NodeRef v : g.successors(u)) {
        if (v.is_measurement()) parts.insert(g.detection(v.index).source_id);
      }
      out.emplace(LinkEvent::Kind::Split, g.detection(u).source_id, std::move(parts));
    }
    if (g.measurement_in_degree(u) >= 2) {
      std::set<std::string> parts;
      for (NodeRef v : g.predecessors(u)) {
        if (v.is_measurement()) parts.insert(g.detection(v.index).source_id);
      }
      out.emplace(LinkEvent::Kind::Merge, g.detection(u).source_id, std::move(parts));
    }
  }
  return out;
}

inline std::string edge_end_key(const TrajectoryGraph& g, NodeRef n) {
  return n.is_measurement() ? g.detection(n.index).source_id : "\x01" + to_string(n);
}

}  // namespace detail

/// Compares graphs over the same detection ids. Edges to or from special
/// nodes are scored separately from measurement edges.
inline ScoreReport score(const TrajectoryGraph& solution, const TrajectoryGraph& truth) {
  std::map<std::string, std::size_t> sol_ids, truth_ids;
  for (std::size_t i = 0; i < solution.node_count(); ++i) {
    if (!sol_ids.emplace(solution.detection(i).source_id, i).second) {
      throw Error("duplicate detection id '" + solution.detection(i).source_id + "' in solution");
    }
  }
  for (std::size_t i = 0; i < truth.node_count(); ++i) {
    if (!truth_ids.emplace(truth.detection(i).source_id, i).second) {
      throw Error("duplicate detection id '" + truth.detection(i).source_id + "' in truth");
    }
  }
  if (sol_ids.size() != truth_ids.size() ||
      !std::equal(sol_ids.begin(), sol_ids.end(), truth_ids.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw Error("solution and truth cover different detection ids");
  }

  using Key = std::pair<std::string, std::string>;
  auto split_edges = [](const TrajectoryGraph& g, std::set<Key>& inner, std::set<Key>& special) {
    for (const auto& [key, p] : g.edges()) {
      Key k{detail::edge_end_key(g, key.first), detail::edge_end_key(g, key.second)};
      (key.first.is_special() || key.second.is_special() ? special : inner).insert(k);
    }
  };
  std::set<Key> sol_inner, sol_special, truth_inner, truth_special;
  split_edges(solution, sol_inner, sol_special);
  split_edges(truth, truth_inner, truth_special);
  auto common = [](const std::set<Key>& a, const std::set<Key>& b) {
    std::size_t n = 0;
    for (const auto& k : a) n += b.contains(k) ? 1 : 0;
    return n;
  };

  ScoreReport r;
  r.truth_edges = truth_inner.size();
  r.solution_edges = sol_inner.size();
  r.matched_edges = common(sol_inner, truth_inner);
  r.edge_precision = detail::ratio(r.matched_edges, sol_inner.size());
  r.edge_recall = detail::ratio(r.matched_edges, truth_inner.size());
  const std::size_t special_hits = common(sol_special, truth_special);
  r.special_precision = detail::ratio(special_hits, sol_special.size());
  r.special_recall = detail::ratio(special_hits, truth_special.size());

  const auto sol_events = detail::event_keys(solution);
  const auto truth_events = detail::event_keys(truth);
  std::size_t splits = 0, merges = 0, split_hits = 0, merge_hits = 0;
  for (const auto& e : truth_events) {
    const bool hit = sol_events.contains(e);
    if (std::get<0>(e) == LinkEvent::Kind::Split) {
      ++splits;
      split_hits += hit ? 1 : 0;
    } else {
      ++merges;
      merge_hits += hit ? 1 : 0;
    }
  }
  r.split_recall = detail::ratio(split_hits, splits);
  r.merge_recall = detail::ratio(merge_hits, merges);
  r.event_recall = detail::ratio(split_hits + merge_hits, splits + merges);

  std::size_t iso_hits = 0;
  const auto truth_isolated = classify_false_detections(truth);
  const auto sol_isolated_nodes = classify_false_detections(solution);
  const std::set<std::size_t> sol_isolated(sol_isolated_nodes.begin(), sol_isolated_nodes.end());
  for (std::size_t i : truth_isolated) {
    iso_hits += sol_isolated.contains(sol_ids.at(truth.detection(i).source_id)) ? 1 : 0;
  }
  r.isolated_fp_rate = detail::ratio(iso_hits, truth_isolated.size());

  const TrajectorySet truth_ts = extract_trajectories(truth);
  const TrajectorySet sol_ts = extract_trajectories(solution);
  double purity_sum = 0.0;
  for (const auto& tr : sol_ts) {
    std::map<std::size_t, std::size_t> votes;
    for (std::size_t n : tr.nodes) {
      ++votes[truth_ts.owner[truth_ids.at(solution.detection(n).source_id)]];
    }
    std::size_t best = 0;
    for (const auto& [id, v] : votes) best = std::max(best, v);
    purity_sum += static_cast<double>(best) / static_cast<double>(tr.size());
  }
  r.purity = sol_ts.size() == 0 ? 1.0 : purity_sum / static_cast<double>(sol_ts.size());
  return r;
}

}  // namespace ectrack
