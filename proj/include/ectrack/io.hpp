#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ectrack/graph.hpp"
#include "ectrack/util.hpp"

namespace ectrack {

struct DetectionTable {
  std::vector<Detection> detections;
  /// Declared in the file, or the largest frame seen.
  int frame_count = 0;
};

enum class TableFormat { Csv, JsonLines };
enum class GraphFormat { GraphMl, Dot, Json };

inline TableFormat table_format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".csv") return TableFormat::Csv;
  if (ext == ".jsonl" || ext == ".ndjson") return TableFormat::JsonLines;
  throw Error("cannot infer table format from '" + p.string() + "' (use .csv or .jsonl)");
}

inline GraphFormat graph_format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".graphml") return GraphFormat::GraphMl;
  if (ext == ".dot" || ext == ".gv") return GraphFormat::Dot;
  if (ext == ".json") return GraphFormat::Json;
  throw Error("cannot infer graph format from '" + p.string() + "' (use .graphml, .dot or .json)");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& c : out) {
    while (!c.empty() && (c.back() == ' ' || c.back() == '\r' || c.back() == '\t')) c.pop_back();
    c.erase(0, c.find_first_not_of(" \t"));
  }
  return out;
}

inline double parse_number(const std::string& text, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw Error("non-numeric value '" + text + "' in column '" + column + "' (row " +
                std::to_string(row) + ")");
  }
  return v;
}

inline int parse_frame(double v, std::size_t row) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e9) {
    throw Error("frame must be a positive integer (row " + std::to_string(row) + ")");
  }
  return static_cast<int>(v);
}

// Builds a detection from named cells and checks it; `row` is 1-based over
// data rows.
inline Detection make_detection(const std::map<std::string, double>& numbers,
                                const std::string& source_id, std::size_t row) {
  auto need = [&](const char* name) {
    auto it = numbers.find(name);
    if (it == numbers.end()) {
      throw Error(std::string("missing value for column '") + name + "' (row " +
                  std::to_string(row) + ")");
    }
    return it->second;
  };
  Detection d;
  d.frame = parse_frame(need("frame"), row);
  const bool has_z = numbers.contains("z");
  d.position = Vector(has_z ? 3 : 2);
  d.position[0] = need("x");
  d.position[1] = need("y");
  if (has_z) d.position[2] = numbers.at("z");
  d.source_id = source_id;
  for (const auto& [name, v] : numbers) {
    if (name == "frame" || name == "x" || name == "y" || name == "z") continue;
    d.properties.emplace(name, v);
  }
  for (const auto& [name, v] : d.properties) {
    if (!std::isfinite(v)) {
      throw Error("value in column '" + name + "' is not finite (row " + std::to_string(row) + ")");
    }
  }
  for (Eigen::Index i = 0; i < d.position.size(); ++i) {
    if (!std::isfinite(d.position[i])) {
      throw Error("position is not finite (row " + std::to_string(row) + ")");
    }
  }
  if (!(need("area") > 0.0)) {
    throw Error("area must be positive (row " + std::to_string(row) + ")");
  }
  return d;
}

inline void finish_table(DetectionTable& table, int declared) {
  int max_frame = 0;
  for (const auto& d : table.detections) max_frame = std::max(max_frame, d.frame);
  if (declared > 0) {
    if (max_frame > declared) {
      throw Error("detection frame " + std::to_string(max_frame) + " exceeds declared frame count " +
                  std::to_string(declared));
    }
    table.frame_count = declared;
  } else {
    table.frame_count = max_frame;
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace detail

/// CSV with a header naming at least frame, x, y and area; z, id and any
/// other numeric columns are optional. A leading "# frame_count: N" line
/// declares N; otherwise N is the largest frame present.
inline DetectionTable read_detections_csv(std::istream& in) {
  using detail::split_csv_line;
  DetectionTable table;
  int declared = 0;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string key = "frame_count:";
      auto pos = line.find(key);
      if (pos != std::string::npos) {
        std::string v = line.substr(pos + key.size());
        v.erase(0, v.find_first_not_of(" \t"));
        declared = detail::parse_frame(detail::parse_number(v, 0, "frame_count"), 0);
      }
      continue;
    }
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error("missing CSV header");
  std::set<std::string> seen;
  for (const auto& h : header) {
    if (h.empty()) throw Error("empty column name in CSV header");
    if (!seen.insert(h).second) throw Error("duplicate column '" + h + "'");
  }
  for (const char* required : {"frame", "x", "y", "area"}) {
    if (!seen.contains(required)) throw Error(std::string("missing required column '") + required + "'");
  }

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    ++row;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                  " cells, header has " + std::to_string(header.size()));
    }
    std::map<std::string, double> numbers;
    std::string id;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == "id") {
        id = cells[c];
      } else if (!cells[c].empty()) {
        numbers[header[c]] = detail::parse_number(cells[c], row, header[c]);
      } else if (header[c] == "frame" || header[c] == "x" || header[c] == "y" ||
                 header[c] == "area") {
        throw Error("empty value in column '" + header[c] + "' (row " + std::to_string(row) + ")");
      }
    }
    table.detections.push_back(detail::make_detection(numbers, id, row));
  }
  detail::finish_table(table, declared);
  return table;
}

/// One JSON object per line with the same fields as the CSV form. A line
/// holding only {"frame_count": N} declares N.
inline DetectionTable read_detections_jsonl(std::istream& in) {
  DetectionTable table;
  int declared = 0;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed JSON line " + std::to_string(row + 1) + ": " + e.what());
    }
    if (!obj.is_object()) throw Error("JSON line is not an object");
    if (obj.size() == 1 && obj.contains("frame_count")) {
      if (!obj["frame_count"].is_number()) throw Error("frame_count must be a number");
      declared = detail::parse_frame(obj["frame_count"].get<double>(), 0);
      continue;
    }
    ++row;
    std::map<std::string, double> numbers;
    std::string id;
    for (const auto& [key, value] : obj.items()) {
      if (key == "id") {
        id = value.is_string() ? value.get<std::string>() : value.dump();
      } else if (value.is_number()) {
        numbers[key] = value.get<double>();
      } else if (!value.is_null()) {
        throw Error("non-numeric value in column '" + key + "' (row " + std::to_string(row) + ")");
      }
    }
    table.detections.push_back(detail::make_detection(numbers, id, row));
  }
  detail::finish_table(table, declared);
  return table;
}

inline DetectionTable read_detections(const std::filesystem::path& path, TableFormat format) {
  auto in = detail::open_input(path);
  return format == TableFormat::Csv ? read_detections_csv(in) : read_detections_jsonl(in);
}

inline DetectionTable read_detections(const std::filesystem::path& path) {
  return read_detections(path, table_format_from_path(path));
}

namespace detail {

inline std::vector<std::string> extra_properties(const std::vector<Detection>& dets) {
  std::set<std::string> names;
  for (const auto& d : dets) {
    for (const auto& [name, v] : d.properties) {
      if (name != kArea) names.insert(name);
    }
  }
  return {names.begin(), names.end()};
}

inline Eigen::Index dimension(const std::vector<Detection>& dets) {
  Eigen::Index dim = 2;
  for (const auto& d : dets) dim = std::max(dim, d.position.size());
  return dim;
}

}  // namespace detail

/// Columns id,frame,x,y[,z],area then the remaining properties sorted by name.
inline void write_detections_csv(std::ostream& out, const DetectionTable& table) {
  const auto extras = detail::extra_properties(table.detections);
  const bool three_d = detail::dimension(table.detections) == 3;
  out << "# frame_count: " << table.frame_count << "\n";
  out << "id,frame,x,y" << (three_d ? ",z" : "") << ",area";
  for (const auto& e : extras) out << ',' << e;
  out << "\n";
  for (const auto& d : table.detections) {
    if (d.source_id.find(',') != std::string::npos) {
      throw Error("detection id '" + d.source_id + "' contains a comma");
    }
    out << d.source_id << ',' << d.frame;
    for (Eigen::Index i = 0; i < (three_d ? 3 : 2); ++i) out << ',' << format_double(d.position[i]);
    out << ',' << format_double(d.area());
    for (const auto& e : extras) {
      out << ',';
      if (d.has_property(e)) out << format_double(d.property(e));
    }
    out << "\n";
  }
}

inline void write_detections_jsonl(std::ostream& out, const DetectionTable& table) {
  out << nlohmann::json{{"frame_count", table.frame_count}}.dump() << "\n";
  for (const auto& d : table.detections) {
    nlohmann::ordered_json obj;
    obj["id"] = d.source_id;
    obj["frame"] = d.frame;
    obj["x"] = d.position[0];
    obj["y"] = d.position[1];
    if (d.position.size() == 3) obj["z"] = d.position[2];
    for (const auto& [name, v] : d.properties) obj[name] = v;
    out << obj.dump() << "\n";
  }
}

inline void write_detections(const std::filesystem::path& path, const DetectionTable& table,
                             TableFormat format) {
  write_file_atomically(path, [&](std::ostream& out) {
    if (format == TableFormat::Csv) {
      write_detections_csv(out, table);
    } else {
      write_detections_jsonl(out, table);
    }
  });
}

inline void write_detections(const std::filesystem::path& path, const DetectionTable& table) {
  write_detections(path, table, table_format_from_path(path));
}

// --- Graphs ---------------------------------------------------------------

namespace detail {

inline nlohmann::json node_key(NodeRef n) {
  if (n.is_entry()) return "entry";
  if (n.is_exit()) return "exit";
  return n.index;
}

inline NodeRef parse_node_key(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "entry") return NodeRef::entry();
    if (s == "exit") return NodeRef::exit();
    throw Error("unknown special node '" + s + "'");
  }
  if (j.is_number_unsigned()) return NodeRef::measurement(j.get<std::size_t>());
  throw Error("malformed node reference " + j.dump());
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

inline std::string graph_node_id(NodeRef n) { return to_string(n); }

}  // namespace detail

/// Lossless JSON form; nodes in index order, edges in (from, to) order.
inline nlohmann::ordered_json graph_to_json(const TrajectoryGraph& g) {
  nlohmann::ordered_json j;
  j["frame_count"] = g.frame_count();
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& d = g.detection(i);
    nlohmann::ordered_json n;
    n["index"] = i;
    n["id"] = d.source_id;
    n["frame"] = d.frame;
    n["position"] = std::vector<double>(d.position.data(), d.position.data() + d.position.size());
    n["properties"] = nlohmann::ordered_json::object();
    for (const auto& [name, v] : d.properties) n["properties"][name] = v;
    nodes.push_back(std::move(n));
  }
  auto& edges = j["edges"] = nlohmann::ordered_json::array();
  for (const auto& [key, p] : g.edges()) {
    edges.push_back({{"from", detail::node_key(key.first)},
                     {"to", detail::node_key(key.second)},
                     {"p", p}});
  }
  return j;
}

inline TrajectoryGraph graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<Detection> dets;
    for (const auto& n : j.at("nodes")) {
      if (n.at("index").get<std::size_t>() != dets.size()) {
        throw Error("graph nodes must be listed in index order");
      }
      Detection d;
      d.source_id = n.at("id").get<std::string>();
      d.frame = n.at("frame").get<int>();
      auto pos = n.at("position").get<std::vector<double>>();
      d.position = Eigen::Map<Vector>(pos.data(), static_cast<Eigen::Index>(pos.size()));
      for (const auto& [name, v] : n.at("properties").items()) d.properties.emplace(name, v.get<double>());
      dets.push_back(std::move(d));
    }
    TrajectoryGraph g(std::move(dets), j.at("frame_count").get<int>());
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      edges.push_back({detail::parse_node_key(e.at("from")), detail::parse_node_key(e.at("to")),
                       e.at("p").get<double>()});
    }
    g.insert_edges(edges);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed graph JSON: ") + e.what());
  }
}

inline TrajectoryGraph read_graph_json(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed graph JSON in '" + path.string() + "': " + e.what());
  }
  return graph_from_json(j);
}

inline void write_graph_json(std::ostream& out, const TrajectoryGraph& g) {
  out << graph_to_json(g).dump(1) << "\n";
}

inline void write_graph_graphml(std::ostream& out, const TrajectoryGraph& g) {
  const auto extras = detail::extra_properties(g.detections());
  const auto dims = detail::dimension(g.detections());
  static constexpr const char* axes[] = {"x", "y", "z"};
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
         "  <key id=\"special\" for=\"node\" attr.name=\"special\" attr.type=\"boolean\"/>\n"
         "  <key id=\"t\" for=\"node\" attr.name=\"t\" attr.type=\"int\"/>\n"
         "  <key id=\"source_id\" for=\"node\" attr.name=\"source_id\" attr.type=\"string\"/>\n";
  for (Eigen::Index a = 0; a < dims; ++a) {
    out << "  <key id=\"" << axes[a] << "\" for=\"node\" attr.name=\"" << axes[a]
        << "\" attr.type=\"double\"/>\n";
  }
  out << "  <key id=\"area\" for=\"node\" attr.name=\"area\" attr.type=\"double\"/>\n";
  for (const auto& e : extras) {
    out << "  <key id=\"prop_" << detail::xml_escape(e) << "\" for=\"node\" attr.name=\""
        << detail::xml_escape(e) << "\" attr.type=\"double\"/>\n";
  }
  out << "  <key id=\"p\" for=\"edge\" attr.name=\"likelihood\" attr.type=\"double\"/>\n"
         "  <graph id=\"trajectories\" edgedefault=\"directed\">\n";
  for (NodeRef special : {NodeRef::entry(), NodeRef::exit()}) {
    out << "    <node id=\"" << to_string(special) << "\"><data key=\"special\">true</data></node>\n";
  }
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& d = g.detection(i);
    out << "    <node id=\"n" << i << "\">"
        << "<data key=\"special\">false</data>"
        << "<data key=\"t\">" << d.frame << "</data>"
        << "<data key=\"source_id\">" << detail::xml_escape(d.source_id) << "</data>";
    for (Eigen::Index a = 0; a < d.position.size(); ++a) {
      out << "<data key=\"" << axes[a] << "\">" << format_double(d.position[a]) << "</data>";
    }
    out << "<data key=\"area\">" << format_double(d.area()) << "</data>";
    for (const auto& e : extras) {
      if (d.has_property(e)) {
        out << "<data key=\"prop_" << detail::xml_escape(e) << "\">" << format_double(d.property(e))
            << "</data>";
      }
    }
    out << "</node>\n";
  }
  std::size_t k = 0;
  for (const auto& [key, p] : g.edges()) {
    out << "    <edge id=\"e" << k++ << "\" source=\"" << to_string(key.first) << "\" target=\""
        << to_string(key.second) << "\"><data key=\"p\">" << format_double(p) << "</data></edge>\n";
  }
  out << "  </graph>\n</graphml>\n";
}

inline void write_graph_dot(std::ostream& out, const TrajectoryGraph& g) {
  out << "digraph trajectories {\n"
         "  entry [shape=box, special=true];\n"
         "  exit [shape=box, special=true];\n";
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& d = g.detection(i);
    out << "  n" << i << " [t=" << d.frame << ", pos=\"";
    for (Eigen::Index a = 0; a < d.position.size(); ++a) {
      out << (a ? "," : "") << format_double(d.position[a]);
    }
    out << "\", area=" << format_double(d.area()) << "];\n";
  }
  for (const auto& [key, p] : g.edges()) {
    out << "  " << to_string(key.first) << " -> " << to_string(key.second)
        << " [likelihood=" << format_double(p) << "];\n";
  }
  out << "}\n";
}

inline void write_graph(std::ostream& out, const TrajectoryGraph& g, GraphFormat format) {
  switch (format) {
    case GraphFormat::GraphMl:
      write_graph_graphml(out, g);
      break;
    case GraphFormat::Dot:
      write_graph_dot(out, g);
      break;
    case GraphFormat::Json:
      write_graph_json(out, g);
      break;
  }
}

inline void write_graph(const std::filesystem::path& path, const TrajectoryGraph& g,
                        GraphFormat format) {
  write_file_atomically(path, [&](std::ostream& out) { write_graph(out, g, format); });
}

inline void write_graph(const std::filesystem::path& path, const TrajectoryGraph& g) {
  write_graph(path, g, graph_format_from_path(path));
}

// --- Trajectory tables ----------------------------------------------------

/// One row per trajectory node, ordered by trajectory id then frame. The
/// events column lists "split:k" / "merge:k" for rows at event boundaries;
/// isolated marks false detections.
inline void write_trajectories_csv(std::ostream& out, const TrajectoryGraph& g) {
  const TrajectorySet ts = extract_trajectories(g);
  const auto families = extract_families(g, ts);
  const auto events = extract_events(g, ts);
  std::vector<std::size_t> family_of(ts.size(), 0);
  for (const auto& f : families) {
    for (std::size_t t : f.trajectories) family_of[t] = f.id;
  }
  // Event tags on the last node of sources and first node of targets.
  std::map<std::size_t, std::vector<std::string>> tags;
  for (const auto& e : events) {
    const std::string tag = std::string(to_string(e.kind)) + ":" + std::to_string(e.id);
    for (std::size_t s : e.sources) tags[ts[s].last()].push_back(tag);
    for (std::size_t t : e.targets) tags[ts[t].first()].push_back(tag);
  }
  const auto isolated_nodes = classify_false_detections(g);
  const std::set<std::size_t> isolated(isolated_nodes.begin(), isolated_nodes.end());
  const auto extras = detail::extra_properties(g.detections());
  const bool three_d = detail::dimension(g.detections()) == 3;

  out << "trajectory,family,frame,node,id,x,y" << (three_d ? ",z" : "") << ",area";
  for (const auto& e : extras) out << ',' << e;
  out << ",events,isolated\n";
  for (const auto& tr : ts) {
    for (std::size_t n : tr.nodes) {
      const auto& d = g.detection(n);
      out << tr.id << ',' << family_of[tr.id] << ',' << d.frame << ',' << n << ',' << d.source_id;
      for (Eigen::Index a = 0; a < (three_d ? 3 : 2); ++a) {
        out << ',';
        if (a < d.position.size()) out << format_double(d.position[a]);
      }
      out << ',' << format_double(d.area());
      for (const auto& e : extras) {
        out << ',';
        if (d.has_property(e)) out << format_double(d.property(e));
      }
      out << ',';
      if (auto it = tags.find(n); it != tags.end()) {
        for (std::size_t k = 0; k < it->second.size(); ++k) out << (k ? ";" : "") << it->second[k];
      }
      out << ',' << (isolated.contains(n) ? 1 : 0) << "\n";
    }
  }
}

inline void write_trajectories(const std::filesystem::path& path, const TrajectoryGraph& g) {
  write_file_atomically(path, [&](std::ostream& out) { write_trajectories_csv(out, g); });
}

}  // namespace ectrack
