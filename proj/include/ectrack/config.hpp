#pragma once

#include <charconv>
#include <concepts>
#include <optional>
#include <type_traits>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ectrack/detection.hpp"
#include "ectrack/sweep.hpp"
#include "ectrack/synth.hpp"

namespace ectrack {

/// Bad configuration, as opposed to bad data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Flat "key = value" text with [section] headers and '#' comments. Keys
/// are addressed as "section.key". Values may be quoted.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& origin = "config") {
    KeyValueFile kv;
    kv.origin_ = origin;
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(kv.where(number) + ": unterminated section header");
        section = line.substr(1, line.size() - 2);
        trim(section);
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(kv.where(number) + ": expected key = value");
      std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      trim(key);
      trim(value);
      if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
          value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
      }
      if (key.empty()) throw ConfigError(kv.where(number) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (!kv.entries_.emplace(full, Entry{value, number, false}).second) {
        throw ConfigError(kv.where(number) + ": duplicate key '" + full + "'");
      }
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse(in, path.string());
  }

  bool has(const std::string& key) const { return entries_.contains(key); }

  /// Keys under "section." not yet consumed, for prefix-style keys.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) {
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
  }

  template <class T>
  void read(const std::string& key, T& target) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return;
    it->second.used = true;
    convert(key, it->second, target);
  }

  template <class T>
  void require(const std::string& key, T& target) {
    if (!has(key)) throw ConfigError(origin_ + ": missing mandatory key '" + key + "'");
    read(key, target);
  }

  /// Throws for the first key nobody consumed.
  void reject_unknown() const {
    for (const auto& [k, e] : entries_) {
      if (!e.used) throw ConfigError(where(e.line) + ": unknown key '" + k + "'");
    }
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };

  static void trim(std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
      s.clear();
      return;
    }
    s = s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
  }

  std::string where(int line) const { return origin_ + ":" + std::to_string(line); }

  [[noreturn]] void bad(const std::string& key, const Entry& e, const char* what) const {
    throw ConfigError(where(e.line) + ": key '" + key + "' expects " + what + ", got '" + e.value +
                      "'");
  }

  template <class Num>
  Num number(const std::string& key, const Entry& e, const char* what) const {
    Num v{};
    const char* end = e.value.data() + e.value.size();
    auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
    if (e.value.empty() || ec != std::errc() || ptr != end) bad(key, e, what);
    return v;
  }

  void convert(const std::string& key, const Entry& e, double& out) const {
    out = number<double>(key, e, "a number");
  }
  template <std::integral Int>
    requires(!std::is_same_v<Int, bool>)
  void convert(const std::string& key, const Entry& e, Int& out) const {
    out = number<Int>(key, e, std::is_signed_v<Int> ? "an integer" : "a non-negative integer");
  }
  void convert(const std::string& key, const Entry& e, bool& out) const {
    if (e.value == "true" || e.value == "1") {
      out = true;
    } else if (e.value == "false" || e.value == "0") {
      out = false;
    } else {
      bad(key, e, "true or false");
    }
  }
  void convert(const std::string&, const Entry& e, std::string& out) const { out = e.value; }
  void convert(const std::string& key, const Entry& e, Vector& out) const {
    std::string s = e.value;
    for (char& c : s) {
      if (c == '[' || c == ']' || c == ',') c = ' ';
    }
    std::istringstream in(s);
    std::vector<double> values;
    std::string tok;
    while (in >> tok) {
      Entry part{tok, e.line, true};
      values.push_back(number<double>(key, part, "a list of numbers"));
    }
    if (values.empty()) bad(key, e, "a list of numbers");
    out = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

/// Tracker configuration from a key-value file. The six geometric gates
/// are mandatory; everything else has a default.
inline TrackerConfig load_tracker_config(KeyValueFile& kv) {
  TrackerConfig c;
  auto& a = c.association;
  kv.require("association.gamma", a.gamma);
  kv.require("association.soi_scale", a.soi_scale);
  kv.require("association.soi_min_radius", a.soi_min_radius);
  kv.require("association.max_displacement", a.max_displacement);
  kv.require("association.max_acceleration", a.max_acceleration);
  kv.require("association.direction_scale", a.direction_scale);
  kv.read("association.direction_slack", a.direction_slack);
  kv.read("association.translation_mass_threshold", a.translation_mass_threshold);
  kv.read("association.split_mass_threshold", a.split_mass_threshold);
  kv.read("association.split_pool", a.split_pool);

  auto& l = c.likelihood;
  kv.read("likelihood.alpha", l.alpha);
  kv.read("likelihood.beta", l.beta);
  kv.read("likelihood.entry_slope", l.entry_slope);
  kv.read("likelihood.entry_midpoint", l.entry_midpoint);
  kv.read("likelihood.exit_slope", l.exit_slope);
  kv.read("likelihood.exit_midpoint", l.exit_midpoint);
  kv.read("likelihood.vertical_axis", l.vertical_axis);
  kv.read("likelihood.position_sigma_floor", l.position_sigma_floor);
  kv.read("likelihood.floor", l.floor);
  kv.read("likelihood.ceiling", l.ceiling);

  auto& m = c.motion;
  kv.read("motion.offset", m.offset);
  kv.read("motion.fit_window", m.fit_window);
  kv.read("motion.interpolate_max_nodes", m.interpolate_max_nodes);
  kv.read("motion.noise_sigma", m.noise_sigma);
  kv.read("motion.smoothing", m.smoothing);
  kv.read("motion.sigma_floor_fraction", m.sigma_floor_fraction);

  auto& s = c.sweep;
  kv.read("sweep.max_window", s.max_window);
  kv.read("sweep.quantile", s.quantile);
  kv.read("sweep.max_covers", s.max_covers);
  kv.read("sweep.threads", s.threads);
  // Per-width quantiles: sweep.quantile_<dt> = q
  for (const auto& key : kv.keys_with_prefix("sweep.quantile_")) {
    const std::string suffix = key.substr(std::string("sweep.quantile_").size());
    int dt = 0;
    auto [ptr, ec] = std::from_chars(suffix.data(), suffix.data() + suffix.size(), dt);
    if (ec != std::errc() || ptr != suffix.data() + suffix.size()) continue;  // left for reject_unknown
    double q = 0.0;
    kv.read(key, q);
    s.quantile_overrides[dt] = q;
  }
  kv.reject_unknown();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline TrackerConfig load_tracker_config(const std::filesystem::path& path) {
  auto kv = KeyValueFile::load(path);
  return load_tracker_config(kv);
}

namespace detail {

// "split:3@20 merge:5@31" -> scheduled events (object index @ frame).
inline std::vector<ScheduledEvent> parse_events(const std::string& text) {
  std::vector<ScheduledEvent> out;
  std::string s = text;
  for (char& c : s) {
    if (c == ',' || c == ';') c = ' ';
  }
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    auto colon = tok.find(':');
    auto at = tok.find('@');
    if (colon == std::string::npos || at == std::string::npos || at < colon) {
      throw ConfigError("malformed event '" + tok + "' (expected kind:object@frame)");
    }
    ScheduledEvent e;
    const std::string kind = tok.substr(0, colon);
    if (kind == "split") {
      e.kind = ScheduledEvent::Kind::Split;
    } else if (kind == "merge") {
      e.kind = ScheduledEvent::Kind::Merge;
    } else {
      throw ConfigError("unknown event kind '" + kind + "'");
    }
    try {
      e.object = std::stoul(tok.substr(colon + 1, at - colon - 1));
      e.frame = std::stoi(tok.substr(at + 1));
    } catch (const std::exception&) {
      throw ConfigError("malformed event '" + tok + "'");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace detail

struct SynthConfig {
  SceneParams scene;
  /// Present when the file has a [corruption] section.
  std::optional<Corruption> corruption;
};

inline SynthConfig load_synth_config(KeyValueFile& kv) {
  SynthConfig c;
  auto& p = c.scene;
  kv.read("scene.objects", p.objects);
  kv.read("scene.frames", p.frames);
  kv.read("scene.box_min", p.box_min);
  kv.read("scene.box_max", p.box_max);
  std::string field;
  kv.read("scene.field", field);
  if (!field.empty()) {
    try {
      p.field = parse_velocity_field(field);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  kv.read("scene.velocity", p.velocity);
  kv.read("scene.angular_speed", p.angular_speed);
  kv.read("scene.rise_speed", p.rise_speed);
  kv.read("scene.sway_amplitude", p.sway_amplitude);
  kv.read("scene.sway_period", p.sway_period);
  kv.read("scene.speed_jitter", p.speed_jitter);
  kv.read("scene.start_low", p.start_low);
  kv.read("scene.start_high", p.start_high);
  kv.read("scene.area_min", p.area_min);
  kv.read("scene.area_max", p.area_max);
  kv.read("scene.splits", p.splits);
  kv.read("scene.merges", p.merges);
  std::string events;
  kv.read("scene.events", events);
  if (!events.empty()) p.events = detail::parse_events(events);
  kv.read("scene.event_margin", p.event_margin);
  kv.read("scene.split_fraction_min", p.split_fraction_min);
  kv.read("scene.split_fraction_max", p.split_fraction_max);
  kv.read("scene.separation", p.separation);
  kv.read("scene.max_half_width", p.max_half_width);
  kv.read("scene.seed", p.seed);

  if (!kv.keys_with_prefix("corruption.").empty()) {
    Corruption k;
    kv.read("corruption.dropout", k.dropout);
    kv.read("corruption.fp_rate", k.fp_rate);
    kv.read("corruption.fixed_fp_count", k.fixed_fp_count);
    kv.read("corruption.fp_min_distance", k.fp_min_distance);
    kv.read("corruption.fp_frame_window", k.fp_frame_window);
    kv.read("corruption.position_sigma", k.position_sigma);
    kv.read("corruption.area_sigma", k.area_sigma);
    kv.read("corruption.box_min", k.box_min);
    kv.read("corruption.box_max", k.box_max);
    kv.read("corruption.seed", k.seed);
    c.corruption = k;
  }
  kv.reject_unknown();
  try {
    validate(c.scene);
    if (c.corruption) c.corruption->validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline SynthConfig load_synth_config(const std::filesystem::path& path) {
  auto kv = KeyValueFile::load(path);
  return load_synth_config(kv);
}

}  // namespace ectrack
