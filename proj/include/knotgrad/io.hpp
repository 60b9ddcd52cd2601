#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "knotgrad/dynamics.hpp"
#include "knotgrad/energy.hpp"
#include "knotgrad/knot.hpp"
#include "knotgrad/thickness.hpp"

namespace knotgrad {

/// Malformed or unreadable knot/trace file.
class FileFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KnotFormat { structured, plain };

inline KnotFormat parse_knot_format(std::string_view s) {
  if (s == "structured" || s == "json") return KnotFormat::structured;
  if (s == "plain" || s == "text") return KnotFormat::plain;
  throw std::invalid_argument("unknown knot format '" + std::string(s) + "'");
}

/// Decimal with `digits` significant digits (printf %g semantics).
inline std::string format_real(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Shortest decimal that reads back to exactly `v`.
inline std::string format_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// `v` rounded to `digits` significant digits, for structured output that
/// must agree with the CSV/text printing.
inline double round_sig(double v, int digits = 12) { return std::strtod(format_real(v, digits).c_str(), nullptr); }

// ---------------------------------------------------------------------------
// Knot files

inline nlohmann::json knot_to_json(const PolyKnot& k, const nlohmann::json& meta = nullptr) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t c = 0; c < k.component_count(); ++c) {
    nlohmann::json loop = nlohmann::json::array();
    for (const auto& v : k.component(c)) loop.push_back({v.x, v.y, v.z});
    comps.push_back(std::move(loop));
  }
  nlohmann::json j = {{"components", std::move(comps)}, {"rest_edge_length", k.rest_edge_length()}};
  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

inline PolyKnot knot_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("components") || !j["components"].is_array()) {
    throw FileFormatError("structured knot: expected an object with a 'components' array");
  }
  std::vector<PolyKnot::Loop> loops;
  const auto& comps = j["components"];
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (!comps[c].is_array()) throw FileFormatError("structured knot: component " + std::to_string(c) + " is not a list");
    PolyKnot::Loop loop;
    for (std::size_t i = 0; i < comps[c].size(); ++i) {
      const auto& p = comps[c][i];
      if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
        throw FileFormatError("structured knot: loop " + std::to_string(c) + " vertex " + std::to_string(i) +
                              " is not an [x,y,z] triple");
      }
      loop.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    loops.push_back(std::move(loop));
  }
  if (loops.empty()) throw FileFormatError("structured knot: no components");
  double rest = 0.0;
  if (j.contains("rest_edge_length")) {
    if (!j["rest_edge_length"].is_number()) throw FileFormatError("structured knot: rest_edge_length is not a number");
    rest = j["rest_edge_length"].get<double>();
  }
  if (rest == 0.0) {
    // Missing rest length defaults to the mean edge length.
    const PolyKnot probe(loops, 1.0);
    rest = probe.total_length() / static_cast<double>(probe.vertex_count());
  }
  return PolyKnot(loops, rest);
}

inline std::string knot_to_plain(const PolyKnot& k) {
  std::ostringstream out;
  out << "# rest_edge_length " << format_exact(k.rest_edge_length()) << "\n";
  for (std::size_t c = 0; c < k.component_count(); ++c) {
    if (c > 0) out << "\n";
    for (const auto& v : k.component(c)) {
      out << format_exact(v.x) << ' ' << format_exact(v.y) << ' ' << format_exact(v.z) << '\n';
    }
  }
  return out.str();
}

/// Plain text: `x y z` per line, blank line between components, `#` comments.
/// A `# rest_edge_length <value>` comment sets the rest length; otherwise it
/// is the mean edge length.
inline PolyKnot knot_from_plain(std::string_view text) {
  std::vector<PolyKnot::Loop> loops(1);
  double rest = 0.0;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
      if (!loops.back().empty()) loops.emplace_back();
      continue;
    }
    if (line[first] == '#') {
      std::istringstream c(line.substr(first + 1));
      std::string key;
      double value = 0.0;
      if (c >> key && key == "rest_edge_length" && c >> value) rest = value;
      continue;
    }
    std::istringstream fields(line);
    double x, y, z;
    std::string extra;
    if (!(fields >> x >> y >> z) || (fields >> extra)) {
      throw FileFormatError("plain knot: line " + std::to_string(lineno) + " is not 'x y z'");
    }
    loops.back().push_back({x, y, z});
  }
  if (loops.back().empty()) loops.pop_back();
  if (loops.empty()) throw FileFormatError("plain knot: no vertices");
  if (rest == 0.0) {
    PolyKnot probe(loops, 1.0);
    rest = probe.total_length() / static_cast<double>(probe.vertex_count());
  }
  return PolyKnot(loops, rest);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileFormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot write " + path.string());
  out << content;
}

/// Parses either format; the structured one is recognised by a leading '{'.
inline PolyKnot parse_knot(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FileFormatError(std::string("structured knot: ") + e.what());
    }
    return knot_from_json(j);
  }
  return knot_from_plain(text);
}

inline PolyKnot load_knot(const std::filesystem::path& path) { return parse_knot(read_file(path)); }

inline void save_knot(const PolyKnot& k, const std::filesystem::path& path, KnotFormat format = KnotFormat::structured,
                      const nlohmann::json& meta = nullptr) {
  write_file(path, format == KnotFormat::structured ? knot_to_json(k, meta).dump(1) + "\n" : knot_to_plain(k));
}

// ---------------------------------------------------------------------------
// Traces and reports

inline constexpr std::string_view trace_csv_header = "step,simon_energy,spring_energy,min_clearance,mode,total_length";

inline std::string trace_to_csv(const EnergyTrace& trace) {
  std::string out(trace_csv_header);
  out += '\n';
  for (const auto& r : trace) {
    out += std::to_string(r.step) + ',' + format_real(r.simon_energy) + ',' + format_real(r.spring_energy) + ',' +
           format_real(r.min_clearance) + ',' + std::string(to_string(r.mode)) + ',' + format_real(r.total_length) +
           '\n';
  }
  return out;
}

inline nlohmann::json record_to_json(const EnergyRecord& r) {
  return {{"step", r.step},
          {"simon_energy", round_sig(r.simon_energy)},
          {"spring_energy", round_sig(r.spring_energy)},
          {"min_clearance", round_sig(r.min_clearance)},
          {"mode", to_string(r.mode)},
          {"total_length", round_sig(r.total_length)}};
}

inline nlohmann::json trace_to_json(const EnergyTrace& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : trace) arr.push_back(record_to_json(r));
  return arr;
}

inline EnergyTrace trace_from_csv(std::string_view text, double gauge = 0.0) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != trace_csv_header) throw FileFormatError("trace csv: bad header");
  EnergyTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string cell[6];
    for (auto& c : cell) {
      if (!std::getline(f, c, ',')) throw FileFormatError("trace csv: short row '" + line + "'");
    }
    EnergyRecord r;
    r.step = std::stol(cell[0]);
    r.simon_energy = std::stod(cell[1]);
    r.spring_energy = std::stod(cell[2]);
    r.min_clearance = std::stod(cell[3]);
    r.mode = parse_mode(cell[4]);
    r.total_length = std::stod(cell[5]);
    r.gauge = gauge > 0.0 ? gauge : r.total_length;
    trace.push_back(r);
  }
  return trace;
}

inline nlohmann::json params_to_json(const SimParams& p) {
  return {{"exponent", p.force_field.exponent},
          {"repulsion_strength", p.force_field.repulsion_strength},
          {"spring_constant", p.force_field.spring_constant},
          {"dt", p.dt},
          {"mass", p.mass},
          {"mode", to_string(p.mode)},
          {"velocity_damping", p.velocity_damping},
          {"safety_fraction", p.safety_fraction},
          {"stability_window", p.stability_window},
          {"stability_epsilon", p.stability_epsilon},
          {"record_interval", p.record_interval},
          {"projection_rounds", p.projection_rounds},
          {"rng_seed", p.rng_seed}};
}

/// Missing fields keep their defaults; the result is validated.
inline SimParams params_from_json(const nlohmann::json& j, SimParams p = {}) {
  if (!j.is_object()) throw FileFormatError("params: expected an object");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("exponent", p.force_field.exponent);
    get("repulsion_strength", p.force_field.repulsion_strength);
    get("spring_constant", p.force_field.spring_constant);
    get("dt", p.dt);
    get("mass", p.mass);
    if (j.contains("mode")) p.mode = parse_mode(j["mode"].get<std::string>());
    get("velocity_damping", p.velocity_damping);
    get("safety_fraction", p.safety_fraction);
    get("stability_window", p.stability_window);
    get("stability_epsilon", p.stability_epsilon);
    get("record_interval", p.record_interval);
    get("projection_rounds", p.projection_rounds);
    get("rng_seed", p.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("params: ") + e.what());
  }
  p.validate();
  return p;
}

inline nlohmann::json report_to_json(const EnergyReport& e) {
  return {{"simon_energy", round_sig(e.simon_energy)},
          {"potential_energy_d", round_sig(e.potential_energy_d)},
          {"spring_energy", round_sig(e.spring_energy)},
          {"min_clearance", round_sig(e.min_clearance)}};
}

inline nlohmann::json report_to_json(const ThicknessReport& t) {
  return {{"tube_radius", round_sig(t.tube_radius)},
          {"binding_constraint", to_string(t.binding_constraint)},
          {"total_length", round_sig(t.total_length)},
          {"ropelength", round_sig(t.ropelength)},
          {"skip", t.skip},
          {"distance_radius", round_sig(t.distance_radius)},
          {"curvature_radius", round_sig(t.curvature_radius)}};
}

}  // namespace knotgrad
