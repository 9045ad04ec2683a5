#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ectrack/config.hpp"
#include "ectrack/io.hpp"
#include "ectrack/sweep.hpp"
#include "ectrack/synth.hpp"

namespace ectrack {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

inline void print_report(std::ostream& out, const ScoreReport& r) {
  out << "edge_precision " << format_double(r.edge_precision) << "\n"
      << "edge_recall " << format_double(r.edge_recall) << "\n"
      << "special_precision " << format_double(r.special_precision) << "\n"
      << "special_recall " << format_double(r.special_recall) << "\n"
      << "split_recall " << format_double(r.split_recall) << "\n"
      << "merge_recall " << format_double(r.merge_recall) << "\n"
      << "event_recall " << format_double(r.event_recall) << "\n"
      << "isolated_fp_rate " << format_double(r.isolated_fp_rate) << "\n"
      << "purity " << format_double(r.purity) << "\n"
      << "truth_edges " << r.truth_edges << "\n"
      << "solution_edges " << r.solution_edges << "\n"
      << "matched_edges " << r.matched_edges << "\n";
}

inline void log_step(std::ostream& err, const StepReport& r) {
  err << "dt=" << r.dt << " t=" << r.t << " F=" << r.forward << " B=" << r.backward
      << " associations=" << r.associations << " components=" << r.components
      << " inserted=" << r.inserted_edges << " deferred=" << r.deferred;
  if (r.truncated_components) err << " truncated=" << r.truncated_components;
  if (r.infeasible_components) err << " infeasible=" << r.infeasible_components;
  err << "\n";
}

/// Runs one subcommand; diagnostics go to `err`, reports to `out`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Offline multiple-hypothesis tracker for split/merge trajectories", "ectrack"};
  app.require_subcommand(1);

  // track
  std::string in_path, config_path, graph_path, traj_path;
  unsigned threads = 0;
  bool threads_set = false;
  bool verbose = false;
  auto* track = app.add_subcommand("track", "Reconstruct trajectories from a detection table");
  track->add_option("--in", in_path, "Detection table (.csv or .jsonl)")->required();
  track->add_option("--config", config_path, "Tracker configuration file")->required();
  track->add_option("--out-graph", graph_path, "Solution graph (.graphml, .dot or .json)");
  track->add_option("--out-traj", traj_path, "Trajectory table (.csv)");
  track->add_option("--threads", threads, "Worker threads for component solving (0 = all cores)")
      ->each([&](const std::string&) { threads_set = true; });
  track->add_flag("-v,--verbose", verbose, "Log per-step progress to stderr");

  // synth
  std::string params_path, synth_out, truth_out;
  std::optional<std::uint64_t> seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  synth->add_option("--params", params_path, "Scene parameter file")->required();
  synth->add_option("--seed", seed, "Overrides the scene and corruption seeds");
  synth->add_option("--out", synth_out, "Detection table to write")->required();
  synth->add_option("--truth", truth_out, "Ground-truth graph (.json)")->required();

  // corrupt
  std::string corrupt_in, corrupt_params, corrupt_out, corrupt_truth_in, corrupt_truth_out;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Apply dropout, spurious detections and noise");
  corrupt_cmd->add_option("--in", corrupt_in, "Detection table")->required();
  corrupt_cmd->add_option("--params", corrupt_params, "File with a [corruption] section")->required();
  corrupt_cmd->add_option("--seed", seed, "Overrides the corruption seed");
  corrupt_cmd->add_option("--out", corrupt_out, "Corrupted detection table")->required();
  corrupt_cmd->add_option("--truth", corrupt_truth_in, "Truth graph of the input table");
  corrupt_cmd->add_option("--out-truth", corrupt_truth_out, "Truth graph projected onto the output");

  // score
  std::string solution_path, score_truth;
  auto* score_cmd = app.add_subcommand("score", "Score a solution graph against ground truth");
  score_cmd->add_option("--solution", solution_path, "Solution graph (.json)")->required();
  score_cmd->add_option("--truth", score_truth, "Truth graph (.json)")->required();

  // export
  std::string export_in, export_out, export_traj;
  auto* export_cmd = app.add_subcommand("export", "Convert a JSON graph to other formats");
  export_cmd->add_option("--graph", export_in, "Graph (.json)")->required();
  export_cmd->add_option("--out", export_out, "Output graph (.graphml, .dot or .json)");
  export_cmd->add_option("--out-traj", export_traj, "Trajectory table (.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (track->parsed()) {
      if (graph_path.empty() && traj_path.empty()) {
        err << "error: track needs --out-graph and/or --out-traj\n" << track->help();
        return kExitUsage;
      }
      TrackerConfig cfg = load_tracker_config(config_path);
      if (threads_set) cfg.sweep.threads = threads;
      // Validate output formats before doing any work.
      if (!graph_path.empty()) (void)graph_format_from_path(graph_path);
      DetectionTable table = read_detections(in_path);
      if (verbose) {
        err << "read " << table.detections.size() << " detections over " << table.frame_count
            << " frames\n";
      }
      ProgressCallback progress;
      if (verbose) progress = [&](const StepReport& r) { log_step(err, r); };
      TrajectoryGraph g = run(std::move(table.detections), table.frame_count, cfg, progress);
      if (!graph_path.empty()) write_graph(graph_path, g);
      if (!traj_path.empty()) write_trajectories(traj_path, g);
      if (verbose) err << "solution has " << g.edge_count() << " edges\n";
      return kExitOk;
    }
    if (synth->parsed()) {
      SynthConfig cfg = load_synth_config(params_path);
      if (seed) {
        cfg.scene.seed = *seed;
        if (cfg.corruption) cfg.corruption->seed = *seed;
      }
      Scene scene = generate_scene(cfg.scene);
      DetectionTable table = scene.table;
      TrajectoryGraph truth = scene.truth;
      if (cfg.corruption) {
        table = corrupt(scene.table, *cfg.corruption);
        truth = project_truth(scene.truth, table);
      }
      write_detections(synth_out, table);
      write_graph(truth_out, truth, GraphFormat::Json);
      return kExitOk;
    }
    if (corrupt_cmd->parsed()) {
      if (corrupt_truth_out.empty() != corrupt_truth_in.empty()) {
        err << "error: --truth and --out-truth go together\n" << corrupt_cmd->help();
        return kExitUsage;
      }
      auto kv = KeyValueFile::load(corrupt_params);
      SynthConfig cfg = load_synth_config(kv);
      if (!cfg.corruption) throw ConfigError(corrupt_params + ": no [corruption] section");
      if (seed) cfg.corruption->seed = *seed;
      DetectionTable table = read_detections(corrupt_in);
      DetectionTable corrupted = corrupt(table, *cfg.corruption);
      std::optional<TrajectoryGraph> projected;
      if (!corrupt_truth_in.empty()) projected = project_truth(read_graph_json(corrupt_truth_in), corrupted);
      write_detections(corrupt_out, corrupted);
      if (projected) write_graph(corrupt_truth_out, *projected, GraphFormat::Json);
      return kExitOk;
    }
    if (score_cmd->parsed()) {
      print_report(out, score(read_graph_json(solution_path), read_graph_json(score_truth)));
      return kExitOk;
    }
    if (export_cmd->parsed()) {
      if (export_out.empty() && export_traj.empty()) {
        err << "error: export needs --out and/or --out-traj\n" << export_cmd->help();
        return kExitUsage;
      }
      TrajectoryGraph g = read_graph_json(export_in);
      if (!export_out.empty()) write_graph(export_out, g);
      if (!export_traj.empty()) write_trajectories(export_traj, g);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ectrack
