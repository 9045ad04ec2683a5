#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace ectrack;
using namespace ectrack::testing;

namespace {

std::size_t open_endpoints(const TrajectoryGraph& g) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    n += g.has_incoming(i) ? 0 : 1;
    n += g.has_outgoing(i) ? 0 : 1;
  }
  return n;
}

std::set<std::pair<std::string, std::string>> id_edges(const TrajectoryGraph& g) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& e : g.edge_list()) {
    if (e.from.is_measurement() && e.to.is_measurement()) {
      out.insert({g.detection(e.from.index).source_id, g.detection(e.to.index).source_id});
    }
  }
  return out;
}

Scene small_scene(std::uint64_t seed, std::size_t splits = 1, std::size_t merges = 1) {
  SceneParams p;
  p.objects = 5;
  p.frames = 30;
  p.splits = splits;
  p.merges = merges;
  p.seed = seed;
  return generate_scene(p);
}

}  // namespace

TEST(Initialize, BoundaryEdges) {
  auto g = initialize({det(1, 0, 0), det(2, 1, 0), det(3, 2, 0)}, 3);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(*g.likelihood(NodeRef::entry(), NodeRef::measurement(0)), 1.0);
  EXPECT_EQ(*g.likelihood(NodeRef::measurement(2), NodeRef::exit()), 1.0);
  EXPECT_FALSE(g.has_incoming(1));
  EXPECT_FALSE(g.has_outgoing(1));
}

TEST(Initialize, SingleFrameGetsBothEdges) {
  auto g = initialize({det(1, 0, 0)}, 1);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.fully_connected());
}

TEST(Initialize, Errors) {
  EXPECT_THROW(initialize({det(5, 0, 0)}, 3), Error);
  EXPECT_THROW(initialize({}, 3), Error);
}

TEST(Eradicate, QuantileExample) {
  auto g = initialize({det(1, 0, 0), det(2, 1, 0), det(2, 5, 0), det(3, 2, 0)}, 3);
  g.insert_edges(std::vector<Edge>{edge(0, 1, 0.2), edge(0, 2, 0.5), edge(1, 3, 0.9)});
  EXPECT_EQ(eradication_threshold(g, 0.5), 0.5);
  EXPECT_EQ(eradicate(g, 0.5), 0.5);
  EXPECT_FALSE(g.has_edge(NodeRef::measurement(0), NodeRef::measurement(1)));
  EXPECT_FALSE(g.has_edge(NodeRef::measurement(0), NodeRef::measurement(2)));
  EXPECT_TRUE(g.has_edge(NodeRef::measurement(1), NodeRef::measurement(3)));
  // Certain boundary edges always stay.
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(Eradicate, CertainEdgesOnly) {
  auto g = initialize({det(1, 0, 0), det(2, 1, 0)}, 2);
  g.insert_edge(edge(0, 1, 1.0));
  EXPECT_EQ(eradicate(g, 1.0), 0.0);
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(Eradicate, FullQuantileRemovesAllUncertain) {
  auto g = initialize({det(1, 0, 0), det(2, 1, 0), det(2, 5, 0), det(3, 2, 0)}, 3);
  g.insert_edges(std::vector<Edge>{edge(0, 1, 0.2), edge(0, 2, 0.5), edge(1, 3, 0.9)});
  EXPECT_EQ(eradicate(g, 1.0), 0.9);
  EXPECT_EQ(g.edge_count(), 2u);
}

TEST(Step, EmptyWindowsDoNothing) {
  auto g = initialize({det(1, 0, 0), det(2, 0.5, 0)}, 2);
  g.insert_edge(edge(0, 1, 0.9));
  auto r = sweep_step(g, 1, 1, 0.0, permissive_config());
  EXPECT_EQ(r.forward + r.backward, 0u);
  EXPECT_EQ(r.inserted_edges, 0u);
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(Step, InsertsTranslation) {
  auto g = initialize({det(1, 0, 0), det(2, 0.5, 0)}, 2);
  auto r = sweep_step(g, 1, 1, 0.0, permissive_config());
  EXPECT_EQ(r.associations, 3u);
  EXPECT_EQ(r.components, 1u);
  EXPECT_EQ(r.inserted_edges, 1u);
  auto p = g.likelihood(NodeRef::measurement(0), NodeRef::measurement(1));
  ASSERT_TRUE(p.has_value());
  EXPECT_GT(*p, 0.0);
  EXPECT_LE(*p, 1.0);
  EXPECT_TRUE(g.fully_connected());
  EXPECT_THROW(sweep_step(g, 2, 1, 0.0, permissive_config()), Error);
}

TEST(Step, TranslationBelowThresholdIsDeferred) {
  auto g = initialize({det(1, 0, 0), det(2, 0.5, 0)}, 2);
  auto r = sweep_step(g, 1, 1, 1.0, permissive_config());
  EXPECT_EQ(r.inserted_edges, 0u);
  EXPECT_GE(r.deferred, 1u);
}

TEST(Step, WideWindowDefersAssociationsNotDueYet) {
  // The pair (frame 2 -> frame 3) is visible at t=1 with width 2 but is not due.
  auto g = initialize({det(1, 80, 80), det(2, 0, 60), det(3, 0.5, 60)}, 3);
  auto r = sweep_step(g, 1, 2, 0.0, permissive_config());
  EXPECT_FALSE(g.has_edge(NodeRef::measurement(1), NodeRef::measurement(2)));
  EXPECT_GE(r.deferred, 1u);
  sweep_step(g, 2, 1, 0.0, permissive_config());
  EXPECT_TRUE(g.has_edge(NodeRef::measurement(1), NodeRef::measurement(2)));
}

TEST(Run, SingleDetection) {
  auto g = run({det(1, 0, 0)}, 1, permissive_config());
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(*g.likelihood(NodeRef::entry(), NodeRef::measurement(0)), 1.0);
  EXPECT_EQ(*g.likelihood(NodeRef::measurement(0), NodeRef::exit()), 1.0);
}

TEST(Run, CrossingObjectsKeepTheirIdentity) {
  std::vector<Detection> dets;
  const int n = 20;
  for (int t = 1; t <= n; ++t) {
    dets.push_back(det(t, 2.0 * t, 20.0 + t, 10, "a" + std::to_string(t)));
    dets.push_back(det(t, 2.0 * t + 0.5, 40.0 - t, 10, "b" + std::to_string(t)));
  }
  auto g = run(dets, n, permissive_config());
  EXPECT_TRUE(g.fully_connected());
  auto ts = extract_trajectories(g);
  ASSERT_EQ(ts.size(), 2u);
  for (const auto& tr : ts) {
    EXPECT_EQ(tr.size(), static_cast<std::size_t>(n));
    const char who = g.detection(tr.first()).source_id[0];
    for (std::size_t node : tr.nodes) EXPECT_EQ(g.detection(node).source_id[0], who);
  }
  EXPECT_TRUE(extract_events(g, ts).empty());
}

TEST(Run, BridgesOneMissingFrame) {
  std::vector<Detection> dets;
  for (int t = 1; t <= 6; ++t) {
    if (t != 3) dets.push_back(det(t, t, 60, 10, "n" + std::to_string(t)));
  }
  auto cfg = permissive_config();
  cfg.sweep.max_window = 2;
  auto g = run(dets, 6, cfg);
  EXPECT_TRUE(id_edges(g).contains({"n2", "n4"}));
  EXPECT_EQ(extract_trajectories(g).size(), 1u);

  cfg.sweep.max_window = 1;
  auto g1 = run(dets, 6, cfg);
  EXPECT_FALSE(id_edges(g1).contains({"n2", "n4"}));
  EXPECT_EQ(extract_trajectories(g1).size(), 2u);
}

TEST(Run, RejectsInvalidConfig) {
  TrackerConfig cfg;
  EXPECT_THROW(run({det(1, 0, 0)}, 1, cfg), Error);
}

TEST(Properties, OutputIsFullyConnectedAndBoundaryEdgesSurvive) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto scene = small_scene(seed);
    const int n = scene.table.frame_count;
    auto g = run(scene.table.detections, n, permissive_config());
    EXPECT_TRUE(g.fully_connected());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (g.frame(i) == 1) {
        EXPECT_EQ(g.likelihood(NodeRef::entry(), NodeRef::measurement(i)).value_or(0), 1.0);
      }
      if (g.frame(i) == n) {
        EXPECT_EQ(g.likelihood(NodeRef::measurement(i), NodeRef::exit()).value_or(0), 1.0);
      }
    }
  }
}

TEST(Properties, DeterministicAcrossThreadCounts) {
  auto scene = small_scene(7, 2, 2);
  auto cfg = permissive_config();
  auto a = run(scene.table.detections, scene.table.frame_count, cfg);
  auto b = run(scene.table.detections, scene.table.frame_count, cfg);
  cfg.sweep.threads = 4;
  auto c = run(scene.table.detections, scene.table.frame_count, cfg);
  EXPECT_EQ(a.edges(), b.edges());
  EXPECT_EQ(a.edges(), c.edges());
}

TEST(Properties, StepsOnlyAddEdgesAboveThreshold) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto scene = small_scene(seed);
    Corruption corr;
    corr.dropout = 0.1;
    corr.seed = seed;
    auto table = corrupt(scene.table, corr);
    auto cfg = permissive_config();
    auto g = initialize(table.detections, table.frame_count);
    for (int dt = 1; dt <= cfg.sweep.max_window; ++dt) {
      const double p_c = eradicate(g, cfg.sweep.quantile_for(dt));
      for (int t = 1; t < table.frame_count; ++t) {
        const auto before = g.edges();
        const std::size_t open = open_endpoints(g);
        sweep_step(g, t, dt, p_c, cfg);
        // Resolution is monotone: edges are only added within a width.
        EXPECT_LE(open_endpoints(g), open);
        for (const auto& [key, p] : before) EXPECT_TRUE(g.edges().contains(key));
        for (const auto& [key, p] : g.edges()) {
          if (!before.contains(key)) {
            EXPECT_GT(p, p_c);
          }
        }
      }
    }
  }
}
