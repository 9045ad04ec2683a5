// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ectrack/ectrack.hpp"

using namespace ectrack;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title;
  if (!o.detail.empty()) std::cout << "  [" << o.detail << "]";
  std::cout << std::endl;
}

// Random instance with at least one planted cover; |U| <= 10, <= 12 subsets.
ExactCoverProblem planted_problem(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> usize(1, 10);
  ExactCoverProblem p;
  p.universe_size = usize(rng);
  std::vector<std::size_t> elems(p.universe_size);
  for (std::size_t i = 0; i < elems.size(); ++i) elems[i] = i;
  std::shuffle(elems.begin(), elems.end(), rng);
  // Planted partition into blocks of 1..3 elements.
  std::uniform_int_distribution<std::size_t> block(1, 3);
  for (std::size_t i = 0; i < elems.size();) {
    const std::size_t k = std::min(block(rng), elems.size() - i);
    std::vector<std::size_t> s(elems.begin() + static_cast<long>(i), elems.begin() + static_cast<long>(i + k));
    std::sort(s.begin(), s.end());
    p.subsets.push_back(std::move(s));
    i += k;
  }
  std::uniform_int_distribution<std::size_t> extra_count(0, 12 - p.subsets.size());
  std::uniform_int_distribution<std::size_t> elem(0, p.universe_size - 1);
  for (std::size_t n = extra_count(rng); n > 0; --n) {
    std::set<std::size_t> s;
    const std::size_t k = std::min(block(rng), p.universe_size);
    while (s.size() < k) s.insert(elem(rng));
    p.subsets.emplace_back(s.begin(), s.end());
  }
  std::shuffle(p.subsets.begin(), p.subsets.end(), rng);
  return p;
}

std::set<std::vector<std::size_t>> brute_force_covers(const ExactCoverProblem& p) {
  std::set<std::vector<std::size_t>> out;
  const std::size_t n = p.subsets.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<int> hits(p.universe_size, 0);
    std::vector<std::size_t> pick;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      pick.push_back(i);
      for (std::size_t e : p.subsets[i]) ok = ok && ++hits[e] == 1;
    }
    for (int h : hits) ok = ok && h == 1;
    if (ok) out.insert(pick);
  }
  return out;
}

// Direct product over all associations, no logs.
double direct_likelihood(const std::vector<std::size_t>& cover, const std::vector<double>& f) {
  double prod = 1.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const bool in = std::find(cover.begin(), cover.end(), i) != cover.end();
    prod *= in ? f[i] : 1.0 - f[i];
  }
  return prod;
}

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::abs(b); }

struct MapInstance {
  ExactCoverProblem problem;
  std::vector<double> f;
};

std::vector<MapInstance> map_instances() {
  std::mt19937_64 rng(20240602);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<MapInstance> out;
  for (int i = 0; i < 200; ++i) {
    MapInstance m{planted_problem(rng), {}};
    for (std::size_t k = 0; k < m.problem.subsets.size(); ++k) m.f.push_back(u(rng));
    out.push_back(std::move(m));
  }
  return out;
}

TrackerConfig scene_tracker() {
  TrackerConfig c;
  c.association.gamma = 2;
  c.association.soi_scale = 2.0;
  c.association.soi_min_radius = 2.0;
  c.association.max_displacement = 5.0;
  c.association.max_acceleration = 3.0;
  c.association.direction_scale = 10.0;
  return c;
}

SceneParams event_scene(std::uint64_t seed) {
  SceneParams p;
  p.objects = 10;
  p.frames = 50;
  p.splits = 2;
  p.merges = 2;
  p.seed = seed;
  return p;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int main() {
  report(1, "Algorithm X cover set equals brute force on 200 instances in < 10 s", [] {
    std::mt19937_64 rng(1);
    const auto t0 = Clock::now();
    std::size_t mismatches = 0, covers = 0;
    for (int i = 0; i < 200; ++i) {
      auto p = planted_problem(rng);
      auto r = solve_exact_cover(p);
      const std::set<std::vector<std::size_t>> dlx(r.covers.begin(), r.covers.end());
      covers += dlx.size();
      if (r.truncated || dlx.size() != r.covers.size() || dlx != brute_force_covers(p)) ++mismatches;
    }
    const double sec = seconds_since(t0);
    return Outcome{mismatches == 0 && sec < 10.0,
                   "mismatches " + std::to_string(mismatches) + ", covers " + std::to_string(covers) +
                       ", " + fmt(sec) + " s"};
  });

  report(2, "MAP hypothesis equals brute-force argmax within 1e-12 relative", [] {
    std::size_t bad = 0;
    double worst = 0.0;
    for (const auto& m : map_instances()) {
      auto covers = solve_exact_cover(m.problem).covers;
      auto h = select_map(covers, m.f);
      double best = -1.0;
      std::vector<std::size_t> arg;
      for (const auto& c : brute_force_covers(m.problem)) {
        const double v = direct_likelihood(c, m.f);
        if (v > best) {
          best = v;
          arg = c;
        }
      }
      worst = std::max(worst, std::abs(h.likelihood - best) / best);
      if (!rel_close(h.likelihood, best, 1e-12)) ++bad;
      if (h.selected != arg && !rel_close(direct_likelihood(h.selected, m.f), best, 1e-12)) ++bad;
    }
    return Outcome{bad == 0, "disagreements " + std::to_string(bad) + ", worst rel " + fmt(worst)};
  });

  report(3, "Per-component MAP composes to the joint MAP within 1e-12 relative", [] {
    std::size_t bad = 0;
    double worst = 0.0;
    for (const auto& m : map_instances()) {
      auto joint = select_map(solve_exact_cover(m.problem).covers, m.f);
      std::vector<std::size_t> composed;
      double product = 1.0;
      for (const auto& group : disjoint_components(m.problem.subsets)) {
        auto sub = component_problem(m.problem.subsets, group);
        std::vector<double> f;
        for (std::size_t i : group) f.push_back(m.f[i]);
        auto h = select_map(solve_exact_cover(sub).covers, f);
        product *= h.likelihood;
        for (std::size_t local : h.selected) composed.push_back(group[local]);
      }
      std::sort(composed.begin(), composed.end());
      worst = std::max(worst, std::abs(product - joint.likelihood) / joint.likelihood);
      if (!rel_close(product, joint.likelihood, 1e-12)) ++bad;
      if (composed != joint.selected &&
          !rel_close(direct_likelihood(composed, m.f), joint.likelihood, 1e-12)) {
        ++bad;
      }
    }
    return Outcome{bad == 0, "disagreements " + std::to_string(bad) + ", worst rel " + fmt(worst)};
  });

  report(4, "Noiseless scene with 2 splits and 2 merges recovered exactly in < 30 s", [] {
    auto cfg = scene_tracker();
    cfg.sweep.max_window = 1;
    auto scene = generate_scene(event_scene(1));
    const auto t0 = Clock::now();
    auto g = run(scene.table.detections, scene.table.frame_count, cfg);
    const double sec = seconds_since(t0);
    auto r = score(g, scene.truth);
    return Outcome{r.edge_precision == 1.0 && r.edge_recall == 1.0 && r.event_recall == 1.0 && sec < 30.0,
                   "P " + fmt(r.edge_precision) + ", R " + fmt(r.edge_recall) + ", events " +
                       fmt(r.event_recall) + ", " + fmt(sec) + " s"};
  });

  report(5, "5% dropout bridged with window 3: edge recall >= 0.95 on each of 20 seeds", [] {
    auto cfg = scene_tracker();
    cfg.sweep.max_window = 3;
    double worst = 1.0, sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto scene = generate_scene(event_scene(seed));
      Corruption c;
      c.dropout = 0.05;
      c.seed = seed;
      auto table = corrupt(scene.table, c);
      auto truth = project_truth(scene.truth, table);
      auto r = score(run(table.detections, table.frame_count, cfg), truth);
      worst = std::min(worst, r.edge_recall);
      sum += r.edge_recall;
    }
    return Outcome{worst >= 0.95, "worst " + fmt(worst) + ", mean " + fmt(sum / 20)};
  });

  report(6, "Spurious detections isolated >= 95%, true-edge precision >= 0.98", [] {
    auto cfg = scene_tracker();
    cfg.sweep.max_window = 3;
    std::size_t injected = 0, isolated = 0;
    double worst_precision = 1.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto params = event_scene(seed);
      auto scene = generate_scene(params);
      Corruption c;
      c.fp_rate = 1.0;
      c.fixed_fp_count = true;
      c.fp_min_distance = 20.0;
      c.box_min = params.box_min;
      c.box_max = params.box_max;
      c.seed = seed;
      auto table = corrupt(scene.table, c);
      auto truth = project_truth(scene.truth, table);
      auto g = run(table.detections, table.frame_count, cfg);
      auto iso = classify_false_detections(g);
      const std::set<std::size_t> iso_set(iso.begin(), iso.end());
      for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (!g.detection(i).source_id.starts_with("fp")) continue;
        ++injected;
        isolated += iso_set.contains(i) ? 1 : 0;
      }
      worst_precision = std::min(worst_precision, score(g, truth).edge_precision);
    }
    const double rate = static_cast<double>(isolated) / static_cast<double>(injected);
    return Outcome{rate >= 0.95 && worst_precision >= 0.98,
                   "isolated " + std::to_string(isolated) + "/" + std::to_string(injected) +
                       ", worst precision " + fmt(worst_precision)};
  });

  report(7, "First/last-frame boundary edges are certain and survive to the solution", [] {
    auto params = event_scene(3);
    auto scene = generate_scene(params);
    Corruption c;
    c.fp_rate = 1.0;
    c.fixed_fp_count = true;
    c.fp_min_distance = 20.0;
    c.box_min = params.box_min;
    c.box_max = params.box_max;
    c.dropout = 0.05;
    c.seed = 3;
    auto table = corrupt(scene.table, c);
    const int n = table.frame_count;
    auto check = [n](const TrajectoryGraph& g) {
      std::size_t bad = 0, checked = 0;
      for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.frame(i) == 1) {
          ++checked;
          bad += g.likelihood(NodeRef::entry(), NodeRef::measurement(i)) == 1.0 ? 0 : 1;
        }
        if (g.frame(i) == n) {
          ++checked;
          bad += g.likelihood(NodeRef::measurement(i), NodeRef::exit()) == 1.0 ? 0 : 1;
        }
      }
      return std::pair{bad, checked};
    };
    auto [bad_init, checked] = check(initialize(table.detections, n));
    auto [bad_final, ignored] = check(run(table.detections, n, scene_tracker()));
    return Outcome{bad_init == 0 && bad_final == 0 && checked > 0,
                   std::to_string(checked) + " boundary edges, missing after initialize " +
                       std::to_string(bad_init) + ", missing in solution " + std::to_string(bad_final)};
  });

  report(8, "Statistical functions: peak, midpoint, monotonicity and range", [] {
    std::size_t bad = 0;
    bad += translation_likelihood(0.0, 0.0, 1.7, 0.4, 0.5) == 1.0 ? 0 : 1;
    for (double b : {-30.0, 0.0, 12.5, 100.0}) {
      bad += std::abs(entry_exit_likelihood(b, 0.5, b) - 0.5) <= 1e-15 ? 0 : 1;
      bad += std::abs(entry_exit_likelihood(b, -0.5, b) - 0.5) <= 1e-15 ? 0 : 1;
    }
    for (double a : {0.5, -0.5}) {
      double prev = entry_exit_likelihood(-40.0, a, 0.0);
      for (double y = -39.9; y <= 40.0; y += 0.1) {
        const double f = entry_exit_likelihood(y, a, 0.0);
        bad += (a > 0 ? f < prev : f > prev) ? 0 : 1;
        prev = f;
      }
    }
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0), res(-100.0, 100.0), sig(1e-3, 50.0);
    for (int i = 0; i < 10000; ++i) {
      const double f1 = translation_likelihood(res(rng), res(rng), sig(rng), sig(rng), u(rng));
      bad += f1 > 0.0 && f1 <= 1.0 ? 0 : 1;
      InteractionTerms t;
      t.mass_mismatch = res(rng);
      t.mean_component_sigma = sig(rng);
      t.position_error = std::abs(res(rng));
      t.sigma_dr = sig(rng);
      t.involved = 3 + static_cast<std::size_t>(i % 5);
      t.predicted = static_cast<std::size_t>(i) % (t.involved + 1);
      const double f3 = interaction_likelihood(t, u(rng));
      bad += f3 > 0.0 && f3 <= 1.0 ? 0 : 1;
    }
    return Outcome{bad == 0, "violations " + std::to_string(bad)};
  });

  report(9, "Constraint formulas: boundary strictness and bound monotonicity", [] {
    std::size_t bad = 0;
    auto v = [](double x, double y) { return (Vector(2) << x, y).finished(); };
    const std::optional<Vector> rest = v(0, 0);
    // |vk - v1| * 2 / (dtk + dt1) equal to a_c is rejected; just below passes.
    bad += acceleration_ok(rest, v(3, 0), std::nullopt, 1, 1, 0, 3.0) ? 1 : 0;
    bad += acceleration_ok(rest, v(6, 0), std::nullopt, 2, 2, 0, 3.0) ? 1 : 0;
    bad += acceleration_ok(rest, v(2.9999, 0), std::nullopt, 1, 1, 0, 3.0) ? 0 : 1;
    bad += acceleration_ok(rest, v(1, 0), v(4, 0), 1, 1, 1, 3.0) ? 1 : 0;
    bad += acceleration_ok(std::nullopt, v(50, 0), v(-50, 0), 1, 1, 1, 3.0) ? 0 : 1;
    // Turning angle equal to the bound is rejected.
    const double speed = 1.0, scale = 10.0, slack = 0.01;
    const double bound = direction_bound(speed, scale, slack);
    bad += std::abs(bound - (std::numbers::pi + slack) * std::exp(-0.1)) < 1e-15 ? 0 : 1;
    const std::optional<Vector> v1 = v(1, 0);
    const double inside = bound * 0.999, outside = bound * 1.001;
    bad += direction_ok(v1, v(std::cos(inside), std::sin(inside)), std::nullopt, scale, slack) ? 0 : 1;
    bad += direction_ok(v1, v(std::cos(outside), std::sin(outside)), std::nullopt, scale, slack) ? 1 : 0;
    bad += direction_ok(v1, v(-1, 0), std::nullopt, scale, slack) ? 1 : 0;
    // Mass conservation, strict at equality.
    auto st = [](double m, double s) {
      PropertyStats p;
      p.mean = m;
      p.sigma = s;
      p.raw_sigma = s;
      p.count = 1;
      return p;
    };
    const std::vector<PropertyStats> good{st(6, 0.6), st(4, 0.4)}, bad_pair{st(6, 6), st(9, 9)};
    bad += interaction_mass_ok(10, good, 4.0) ? 0 : 1;
    bad += interaction_mass_ok(10, bad_pair, 0.2) ? 1 : 0;
    // |10 - 12.5| / 12.5 = 0.2 against 2 * mean(0.1, 0.1) = 0.2
    bad += translation_mass_ok(st(10, 1), st(12.5, 1.25), 2.0) ? 1 : 0;
    bad += translation_mass_ok(st(10, 1), st(12.5, 1.25), 2.0001) ? 0 : 1;
    // Bound decreases strictly with speed on a grid.
    double prev = direction_bound(0.0, scale, slack);
    for (double s = 0.05; s <= 100.0; s += 0.05) {
      const double b = direction_bound(s, scale, slack);
      bad += b < prev && b > 0.0 ? 0 : 1;
      prev = b;
    }
    return Outcome{bad == 0, "violations " + std::to_string(bad)};
  });

  report(10, "Deterministic byte-identical outputs and identity JSON round trip", [] {
    auto params = event_scene(4);
    auto produce = [&] {
      auto scene = generate_scene(params);
      Corruption c;
      c.dropout = 0.05;
      c.fp_rate = 0.5;
      c.position_sigma = 0.2;
      c.seed = 4;
      auto table = corrupt(scene.table, c);
      auto cfg = scene_tracker();
      cfg.sweep.threads = 0;
      auto g = run(table.detections, table.frame_count, cfg);
      std::ostringstream out;
      write_detections_csv(out, table);
      write_detections_jsonl(out, table);
      write_graph_json(out, g);
      write_graph_graphml(out, g);
      write_graph_dot(out, g);
      write_trajectories_csv(out, g);
      return std::pair{out.str(), g};
    };
    auto [a, ga] = produce();
    auto [b, gb] = produce();
    std::ostringstream j1, j2;
    write_graph_json(j1, ga);
    auto back = graph_from_json(nlohmann::json::parse(j1.str()));
    write_graph_json(j2, back);
    const bool identical = a == b;
    const bool round_trip = j1.str() == j2.str() && back.edges() == ga.edges();
    return Outcome{identical && round_trip, std::string("outputs ") + (identical ? "identical" : "differ") +
                                                ", round trip " + (round_trip ? "identity" : "differs")};
  });

  return failures == 0 ? 0 : 1;
}
