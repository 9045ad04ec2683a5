#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace ectrack {

using Vector = Eigen::VectorXd;

/// Raised for invalid input data or violated contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kArea = "area";
inline constexpr std::string_view kVolume = "volume";

/// One measured object at one frame.
struct Detection {
  int frame = 0;
  Vector position;
  std::map<std::string, double, std::less<>> properties;
  std::string source_id;

  bool has_property(std::string_view name) const {
    return properties.find(name) != properties.end();
  }

  double property(std::string_view name) const {
    auto it = properties.find(name);
    if (it == properties.end()) {
      throw Error("unknown property '" + std::string(name) + "'");
    }
    return it->second;
  }

  double area() const { return property(kArea); }

  /// Effective radius used for gating: circle-equivalent radius of the
  /// projected area, or sphere-equivalent radius of the volume in 3-D.
  double effective_radius() const {
    if (position.size() == 3 && has_property(kVolume)) {
      return std::cbrt(3.0 * property(kVolume) / (4.0 * std::numbers::pi));
    }
    return std::sqrt(area() / std::numbers::pi);
  }
};

inline void validate(const Detection& d, int frame_count) {
  if (d.frame < 1 || d.frame > frame_count) {
    throw Error("detection '" + d.source_id + "' has frame " + std::to_string(d.frame) +
                " outside [1, " + std::to_string(frame_count) + "]");
  }
  if (d.position.size() < 1) {
    throw Error("detection '" + d.source_id + "' has no position");
  }
  for (Eigen::Index i = 0; i < d.position.size(); ++i) {
    if (!std::isfinite(d.position[i])) {
      throw Error("detection '" + d.source_id + "' has a non-finite position");
    }
  }
  if (!d.has_property(kArea)) {
    throw Error("detection '" + d.source_id + "' lacks the area property");
  }
  for (const auto& [name, value] : d.properties) {
    if (!std::isfinite(value)) {
      throw Error("detection '" + d.source_id + "' property '" + name + "' is not finite");
    }
  }
  if (!(d.area() > 0.0)) {
    throw Error("detection '" + d.source_id + "' area must be positive");
  }
}

/// Graph vertex: one of the two special nodes or a measurement.
struct NodeRef {
  // Declaration order doubles as the sort order used for stable output.
  enum class Kind : std::uint8_t { Entry, Measurement, Exit };

  Kind kind = Kind::Measurement;
  std::size_t index = 0;

  static constexpr NodeRef entry() { return {Kind::Entry, 0}; }
  static constexpr NodeRef exit() { return {Kind::Exit, 0}; }
  static constexpr NodeRef measurement(std::size_t i) { return {Kind::Measurement, i}; }

  constexpr bool is_entry() const { return kind == Kind::Entry; }
  constexpr bool is_exit() const { return kind == Kind::Exit; }
  constexpr bool is_special() const { return kind != Kind::Measurement; }
  constexpr bool is_measurement() const { return kind == Kind::Measurement; }

  friend constexpr auto operator<=>(const NodeRef&, const NodeRef&) = default;
  friend constexpr bool operator==(const NodeRef&, const NodeRef&) = default;
};

inline std::string to_string(NodeRef n) {
  switch (n.kind) {
    case NodeRef::Kind::Entry:
      return "entry";
    case NodeRef::Kind::Exit:
      return "exit";
    case NodeRef::Kind::Measurement:
      break;
  }
  return "n" + std::to_string(n.index);
}

}  // namespace ectrack
