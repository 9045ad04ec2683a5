#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_util.hpp"

using namespace ectrack;
using namespace ectrack::testing;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

DetectionTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  return read_detections_csv(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("ectrack_io_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Split at frame 2 and an isolated spurious node.
TrajectoryGraph split_graph() {
  TrajectoryGraph g({det(1, 0, 0, 20, "a"), det(2, 0, 1, 20, "b"), det(3, -1, 2, 10, "c"),
                     det(3, 1, 2, 10, "d"), det(2, 40, 40, 5, "fp")},
                    3);
  g.insert_edges(std::vector<Edge>{entry_edge(0), edge(0, 1, 0.9), edge(1, 2, 0.8), edge(1, 3, 0.8),
                                   exit_edge(2), exit_edge(3), entry_edge(4, 0.01), exit_edge(4, 0.02)});
  return g;
}

}  // namespace

TEST(Csv, ThreeRows) {
  auto t = parse_csv("id,frame,x,y,area\na,1,0,0,10\nb,2,1.5,0,11\nc,2,3,4,12\n");
  ASSERT_EQ(t.detections.size(), 3u);
  EXPECT_EQ(t.frame_count, 2);
  EXPECT_EQ(t.detections[1].source_id, "b");
  EXPECT_EQ(t.detections[1].position[0], 1.5);
  EXPECT_EQ(t.detections[2].area(), 12.0);
}

TEST(Csv, DeclaredFrameCountAndExtras) {
  auto t = parse_csv("# frame_count: 7\nframe,x,y,z,area,brightness\n1,0,0,1,10,\n3,1,1,2,10,0.5\n");
  EXPECT_EQ(t.frame_count, 7);
  EXPECT_EQ(t.detections[0].position.size(), 3);
  EXPECT_FALSE(t.detections[0].has_property("brightness"));
  EXPECT_EQ(t.detections[1].property("brightness"), 0.5);
  EXPECT_NE(error_of([] { parse_csv("# frame_count: 2\nframe,x,y,area\n3,0,0,1\n"); }).find("exceeds"),
            std::string::npos);
}

TEST(Csv, Diagnostics) {
  EXPECT_NE(error_of([] { parse_csv("frame,x,y,area\n1,0,0,10\n2,0,0,-1\n"); })
                .find("area must be positive (row 2)"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("frame,x,area\n1,0,10\n"); }).find("missing required column 'y'"),
            std::string::npos);
  const auto msg = error_of([] { parse_csv("frame,x,y,area\n1,zero,0,10\n"); });
  EXPECT_NE(msg.find("non-numeric"), std::string::npos);
  EXPECT_NE(msg.find("row 1"), std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("frame,x,y,area\n1.5,0,0,10\n"); }).find("frame"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("frame,x,y,area\n1,0,0\n"); }).find("row 1"), std::string::npos);
}

TEST(JsonLines, VolumeAndFrameCount) {
  std::istringstream in(
      "{\"frame_count\": 4}\n"
      "{\"id\": \"p\", \"frame\": 1, \"x\": 0, \"y\": 1, \"z\": 2, \"area\": 3, \"volume\": 5.5}\n"
      "\n"
      "{\"frame\": 2, \"x\": 1, \"y\": 1, \"z\": 2, \"area\": 3, \"volume\": 5.0}\n");
  auto t = read_detections_jsonl(in);
  EXPECT_EQ(t.frame_count, 4);
  ASSERT_EQ(t.detections.size(), 2u);
  EXPECT_EQ(t.detections[0].source_id, "p");
  EXPECT_EQ(t.detections[0].property(kVolume), 5.5);
  EXPECT_EQ(t.detections[1].position.size(), 3);

  std::istringstream bad("{\"frame\": 1, \"x\": \"left\", \"y\": 0, \"area\": 1}\n");
  EXPECT_THROW(read_detections_jsonl(bad), Error);
  std::istringstream broken("{\"frame\": 1,\n");
  EXPECT_THROW(read_detections_jsonl(broken), Error);
}

TEST(Tables, CsvAndJsonLinesRoundTrip) {
  DetectionTable t;
  t.frame_count = 5;
  t.detections = {det(1, 0.1, 1.0 / 3.0, 10, "x1"), det(4, 2, 3, 7.25, "x2")};
  t.detections[1].properties["volume"] = 2.0;
  for (auto format : {TableFormat::Csv, TableFormat::JsonLines}) {
    std::stringstream s;
    if (format == TableFormat::Csv) {
      write_detections_csv(s, t);
    } else {
      write_detections_jsonl(s, t);
    }
    auto back = format == TableFormat::Csv ? read_detections_csv(s) : read_detections_jsonl(s);
    EXPECT_EQ(back.frame_count, 5);
    ASSERT_EQ(back.detections.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(back.detections[i].source_id, t.detections[i].source_id);
      EXPECT_EQ(back.detections[i].frame, t.detections[i].frame);
      EXPECT_EQ(back.detections[i].position, t.detections[i].position);
      EXPECT_EQ(back.detections[i].properties, t.detections[i].properties);
    }
  }
}

TEST(GraphJson, RoundTripIsIdentity) {
  auto g = split_graph();
  auto back = graph_from_json(nlohmann::json::parse(graph_to_json(g).dump()));
  EXPECT_EQ(back.frame_count(), g.frame_count());
  EXPECT_EQ(back.edges(), g.edges());
  ASSERT_EQ(back.node_count(), g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    EXPECT_EQ(back.detection(i).source_id, g.detection(i).source_id);
    EXPECT_EQ(back.detection(i).position, g.detection(i).position);
    EXPECT_EQ(back.detection(i).properties, g.detection(i).properties);
  }
  EXPECT_EQ(graph_to_json(back).dump(), graph_to_json(g).dump());
}

TEST(GraphJson, RejectsMalformedInput) {
  EXPECT_THROW(graph_from_json(nlohmann::json::parse("{\"nodes\": 3}")), Error);
  auto j = nlohmann::json::parse(graph_to_json(split_graph()).dump());
  j["edges"][0]["from"] = "nowhere";
  EXPECT_THROW(graph_from_json(j), Error);
  // Edge rules are enforced on load.
  auto k = nlohmann::json::parse(graph_to_json(split_graph()).dump());
  k["edges"].push_back({{"from", 2}, {"to", 0}, {"p", 0.5}});
  EXPECT_THROW(graph_from_json(k), Error);
}

TEST(Dot, OneArrowPerEdge) {
  auto g = split_graph();
  std::ostringstream s;
  write_graph_dot(s, g);
  EXPECT_EQ(count_of(s.str(), "->"), g.edge_count());
  EXPECT_NE(s.str().find("entry -> n0"), std::string::npos);
}

TEST(GraphMl, NodesAndEdges) {
  auto g = split_graph();
  std::ostringstream s;
  write_graph_graphml(s, g);
  EXPECT_EQ(count_of(s.str(), "<node "), g.node_count() + 2);
  EXPECT_EQ(count_of(s.str(), "<edge "), g.edge_count());
  EXPECT_NE(s.str().find("<data key=\"source_id\">fp</data>"), std::string::npos);
}

TEST(Trajectories, TableAnnotatesEventsAndIsolation) {
  auto g = split_graph();
  std::ostringstream s;
  write_trajectories_csv(s, g);
  std::istringstream lines(s.str());
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header, "trajectory,family,frame,node,id,x,y,area,events,isolated");
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (line.back() == ',') cells.emplace_back();
    ASSERT_EQ(cells.size(), 10u) << line;
    rows[cells[4]] = cells;
  }
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows["b"][8], "split:0");
  EXPECT_EQ(rows["c"][8], "split:0");
  EXPECT_EQ(rows["d"][8], "split:0");
  EXPECT_EQ(rows["a"][8], "");
  EXPECT_EQ(rows["fp"][9], "1");
  EXPECT_EQ(rows["a"][9], "0");
  // a and b share one trajectory; the children and the spurious node do not.
  EXPECT_EQ(rows["a"][0], rows["b"][0]);
  EXPECT_NE(rows["c"][0], rows["d"][0]);
  EXPECT_EQ(rows["a"][1], rows["c"][1]);
  EXPECT_NE(rows["a"][1], rows["fp"][1]);
}

TEST(Files, OutputsAreByteIdentical) {
  TempDir dir;
  auto g = split_graph();
  for (const std::string ext : {".json", ".graphml", ".dot"}) {
    write_graph(dir / ("a" + ext), g);
    write_graph(dir / ("b" + ext), read_graph_json(dir / "a.json"));
    EXPECT_EQ(slurp(dir / ("a" + ext)), slurp(dir / ("b" + ext))) << ext;
  }
  write_trajectories(dir / "t1.csv", g);
  write_trajectories(dir / "t2.csv", read_graph_json(dir / "a.json"));
  EXPECT_EQ(slurp(dir / "t1.csv"), slurp(dir / "t2.csv"));

  DetectionTable t{g.detections(), g.frame_count()};
  write_detections(dir / "d1.csv", t);
  write_detections(dir / "d2.csv", read_detections(dir / "d1.csv"));
  EXPECT_EQ(slurp(dir / "d1.csv"), slurp(dir / "d2.csv"));
}

TEST(Files, FailedWriteLeavesNothingBehind) {
  TempDir dir;
  EXPECT_THROW(write_graph(dir / "missing" / "g.json", split_graph()), Error);
  EXPECT_FALSE(fs::exists(dir / "missing"));
  EXPECT_THROW(write_graph(dir / "g.txt", split_graph()), Error);
  EXPECT_TRUE(fs::is_empty(dir.path()));
  EXPECT_THROW(read_detections(dir / "absent.csv"), Error);
  EXPECT_THROW(read_detections(dir / "table.xlsx"), Error);
}
