#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ectrack/detection.hpp"
#include "ectrack/util.hpp"

namespace ectrack {

struct Edge {
  NodeRef from;
  NodeRef to;
  double likelihood = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed, time-forward graph over detections plus the Entry and Exit
/// nodes. Edges are unique per (from, to) and carry a likelihood in (0, 1].
class TrajectoryGraph {
 public:
  using EdgeKey = std::pair<NodeRef, NodeRef>;

  TrajectoryGraph() = default;

  TrajectoryGraph(std::vector<Detection> detections, int frame_count)
      : detections_(std::move(detections)),
        frame_count_(frame_count),
        out_(detections_.size()),
        in_(detections_.size()) {
    if (frame_count_ < 1) {
      throw Error("frame count must be at least 1");
    }
    for (const auto& d : detections_) validate(d, frame_count_);
  }

  const std::vector<Detection>& detections() const { return detections_; }
  std::size_t node_count() const { return detections_.size(); }
  int frame_count() const { return frame_count_; }

  const Detection& detection(std::size_t i) const { return detections_.at(i); }
  int frame(std::size_t i) const { return detections_.at(i).frame; }

  const std::map<EdgeKey, double>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(edges_.size());
    for (const auto& [key, p] : edges_) out.push_back({key.first, key.second, p});
    return out;
  }

  std::optional<double> likelihood(NodeRef from, NodeRef to) const {
    auto it = edges_.find({from, to});
    if (it == edges_.end()) return std::nullopt;
    return it->second;
  }

  bool has_edge(NodeRef from, NodeRef to) const { return edges_.contains({from, to}); }

  /// Successors of a measurement node, special nodes included.
  const std::set<NodeRef>& successors(std::size_t i) const { return out_.at(i); }
  const std::set<NodeRef>& predecessors(std::size_t i) const { return in_.at(i); }

  bool has_outgoing(std::size_t i) const { return !out_.at(i).empty(); }
  bool has_incoming(std::size_t i) const { return !in_.at(i).empty(); }

  std::size_t measurement_out_degree(std::size_t i) const {
    const auto& s = out_.at(i);
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](NodeRef n) { return n.is_measurement(); }));
  }

  std::size_t measurement_in_degree(std::size_t i) const {
    const auto& s = in_.at(i);
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](NodeRef n) { return n.is_measurement(); }));
  }

  /// Every measurement node has at least one incoming and one outgoing edge.
  bool fully_connected() const {
    for (std::size_t i = 0; i < node_count(); ++i) {
      if (out_[i].empty() || in_[i].empty()) return false;
    }
    return true;
  }

  /// Throws with a diagnostic if `e` may not appear in this graph.
  void check_edge(const Edge& e) const {
    auto name = [](const Edge& x) { return "(" + to_string(x.from) + ", " + to_string(x.to) + ")"; };
    if (e.from == e.to) throw Error("self-loop edge " + name(e));
    if (e.from.is_exit()) throw Error("edge " + name(e) + " leaves the Exit node");
    if (e.to.is_entry()) throw Error("edge " + name(e) + " enters the Entry node");
    if (e.from.is_special() && e.to.is_special()) {
      throw Error("edge " + name(e) + " joins two special nodes");
    }
    for (NodeRef n : {e.from, e.to}) {
      if (n.is_measurement() && n.index >= node_count()) {
        throw Error("edge " + name(e) + " references unknown node");
      }
    }
    if (!(e.likelihood > 0.0 && e.likelihood <= 1.0) || !std::isfinite(e.likelihood)) {
      throw Error("edge " + name(e) + " likelihood " + format_double(e.likelihood) +
                  " outside (0, 1]");
    }
    if (e.from.is_measurement() && e.to.is_measurement() &&
        frame(e.from.index) >= frame(e.to.index)) {
      throw Error("time-forward violation on edge " + name(e));
    }
  }

  /// Inserts a batch atomically: either every edge is valid and new, or the
  /// graph is left untouched and an Error is thrown.
  void insert_edges(std::span<const Edge> batch) {
    std::set<EdgeKey> seen;
    for (const auto& e : batch) {
      check_edge(e);
      EdgeKey key{e.from, e.to};
      if (edges_.contains(key) || !seen.insert(key).second) {
        throw Error("duplicate edge (" + to_string(e.from) + ", " + to_string(e.to) + ")");
      }
    }
    for (const auto& e : batch) {
      edges_.emplace(EdgeKey{e.from, e.to}, e.likelihood);
      if (e.from.is_measurement()) out_[e.from.index].insert(e.to);
      if (e.to.is_measurement()) in_[e.to.index].insert(e.from);
    }
  }

  void insert_edge(const Edge& e) { insert_edges(std::span<const Edge>(&e, 1)); }

  bool remove_edge(NodeRef from, NodeRef to) {
    if (edges_.erase({from, to}) == 0) return false;
    if (from.is_measurement()) out_[from.index].erase(to);
    if (to.is_measurement()) in_[to.index].erase(from);
    return true;
  }

 private:
  std::vector<Detection> detections_;
  int frame_count_ = 0;
  std::map<EdgeKey, double> edges_;
  std::vector<std::set<NodeRef>> out_;
  std::vector<std::set<NodeRef>> in_;
};

/// Maximal chain of measurement nodes; ids follow (first frame, first node).
struct Trajectory {
  std::size_t id = 0;
  std::vector<std::size_t> nodes;

  std::size_t first() const { return nodes.front(); }
  std::size_t last() const { return nodes.back(); }
  std::size_t size() const { return nodes.size(); }
};

/// Trajectories plus the owning trajectory of every measurement node.
struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  std::vector<std::size_t> owner;

  const Trajectory& operator[](std::size_t id) const { return trajectories.at(id); }
  std::size_t size() const { return trajectories.size(); }
  auto begin() const { return trajectories.begin(); }
  auto end() const { return trajectories.end(); }
};

namespace detail {

// u continues into v when u's only neighbour forward is v and v's only
// neighbour backward is u; any fan-out, fan-in or special attachment breaks.
inline std::optional<std::size_t> continuation(const TrajectoryGraph& g, std::size_t u) {
  const auto& succ = g.successors(u);
  if (succ.size() != 1) return std::nullopt;
  NodeRef v = *succ.begin();
  if (!v.is_measurement()) return std::nullopt;
  const auto& pred = g.predecessors(v.index);
  if (pred.size() != 1 || *pred.begin() != NodeRef::measurement(u)) return std::nullopt;
  return v.index;
}

}  // namespace detail

inline TrajectorySet extract_trajectories(const TrajectoryGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<bool> is_continued(n, false);
  for (std::size_t u = 0; u < n; ++u) {
    if (auto v = detail::continuation(g, u)) is_continued[*v] = true;
  }

  std::vector<std::size_t> heads;
  for (std::size_t u = 0; u < n; ++u) {
    if (!is_continued[u]) heads.push_back(u);
  }
  std::stable_sort(heads.begin(), heads.end(), [&](std::size_t a, std::size_t b) {
    return g.frame(a) < g.frame(b);
  });

  TrajectorySet set;
  set.owner.assign(n, 0);
  set.trajectories.reserve(heads.size());
  for (std::size_t h : heads) {
    Trajectory tr;
    tr.id = set.trajectories.size();
    std::optional<std::size_t> cur = h;
    while (cur) {
      tr.nodes.push_back(*cur);
      set.owner[*cur] = tr.id;
      cur = detail::continuation(g, *cur);
    }
    set.trajectories.push_back(std::move(tr));
  }
  return set;
}

/// A fan-out (split) or fan-in (merge) at one measurement node.
struct LinkEvent {
  enum class Kind { Split, Merge };

  std::size_t id = 0;
  Kind kind = Kind::Split;
  std::size_t node = 0;  // the fanning node
  std::vector<std::size_t> sources;  // trajectory ids
  std::vector<std::size_t> targets;  // trajectory ids
};

inline std::string_view to_string(LinkEvent::Kind k) {
  return k == LinkEvent::Kind::Split ? "split" : "merge";
}

inline std::vector<LinkEvent> extract_events(const TrajectoryGraph& g, const TrajectorySet& ts) {
  std::vector<LinkEvent> events;
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    if (g.measurement_out_degree(u) >= 2) {
      LinkEvent e{0, LinkEvent::Kind::Split, u, {ts.owner[u]}, {}};
      for (NodeRef v : g.successors(u)) {
        if (v.is_measurement()) e.targets.push_back(ts.owner[v.index]);
      }
      std::sort(e.targets.begin(), e.targets.end());
      events.push_back(std::move(e));
    }
    if (g.measurement_in_degree(u) >= 2) {
      LinkEvent e{0, LinkEvent::Kind::Merge, u, {}, {ts.owner[u]}};
      for (NodeRef v : g.predecessors(u)) {
        if (v.is_measurement()) e.sources.push_back(ts.owner[v.index]);
      }
      std::sort(e.sources.begin(), e.sources.end());
      events.push_back(std::move(e));
    }
  }
  std::stable_sort(events.begin(), events.end(), [&](const LinkEvent& a, const LinkEvent& b) {
    return g.frame(a.node) < g.frame(b.node);
  });
  for (std::size_t i = 0; i < events.size(); ++i) events[i].id = i;
  return events;
}

/// Trajectories linked through split/merge events.
struct Family {
  std::size_t id = 0;
  std::vector<std::size_t> trajectories;
  std::vector<std::size_t> events;
};

inline std::vector<Family> extract_families(const TrajectoryGraph& g, const TrajectorySet& ts) {
  DisjointSets sets(ts.size());
  for (const auto& [key, p] : g.edges()) {
    if (key.first.is_measurement() && key.second.is_measurement()) {
      sets.unite(ts.owner[key.first.index], ts.owner[key.second.index]);
    }
  }
  // Families are numbered by their smallest trajectory id.
  std::map<std::size_t, std::size_t> root_to_family;
  std::vector<Family> families;
  for (std::size_t tid = 0; tid < ts.size(); ++tid) {
    auto root = sets.find(tid);
    auto [it, fresh] = root_to_family.try_emplace(root, families.size());
    if (fresh) families.push_back({families.size(), {}, {}});
    families[it->second].trajectories.push_back(tid);
  }
  for (const auto& e : extract_events(g, ts)) {
    families[root_to_family.at(sets.find(ts.owner[e.node]))].events.push_back(e.id);
  }
  return families;
}

inline std::vector<Family> extract_families(const TrajectoryGraph& g) {
  return extract_families(g, extract_trajectories(g));
}

/// Measurement nodes whose only edges are Entry->node and node->Exit.
inline std::vector<std::size_t> classify_false_detections(const TrajectoryGraph& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& s = g.successors(i);
    const auto& p = g.predecessors(i);
    if (s.size() == 1 && s.begin()->is_exit() && p.size() == 1 && p.begin()->is_entry()) {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace ectrack
