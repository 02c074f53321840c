#pragma once

// Trajectory CSV and SystemSpec JSON serialization.
//
// CSV header: frame,time,particle,type,x0,x1[,x2],v0,v1[,v2]
// Numbers are written with 17 significant digits so a round trip is exact.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdl/core_state.hpp"

namespace hdl {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json edges_to_json(const std::vector<Edge>& edges) {
  nlohmann::json j = nlohmann::json::array();
  for (const Edge& e : edges) j.push_back({e.a, e.b});
  return j;
}

inline std::vector<Edge> edges_from_json(const nlohmann::json& j) {
  std::vector<Edge> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw FormatError("edge entries must be [a, b] pairs");
    out.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return out;
}

inline nlohmann::json to_json(const SystemSpec& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["dim"] = s.dim;
  j["masses"] = s.masses;
  j["types"] = s.types;
  j["edges"] = edges_to_json(s.edges);
  j["kind"] = to_string(s.kind);
  j["constants"] = s.constants;
  j["pbc"] = s.pbc;
  j["constraint_count"] = s.constraint_count;
  if (!s.parts.empty()) {
    nlohmann::json parts = nlohmann::json::array();
    for (const HybridPart& p : s.parts) {
      parts.push_back({{"kind", to_string(p.kind)},
                       {"particles", p.particles},
                       {"edges", edges_to_json(p.edges)},
                       {"kinetic", p.kinetic}});
    }
    j["parts"] = parts;
  }
  return j;
}

inline SystemSpec spec_from_json(const nlohmann::json& j) {
  SystemSpec s;
  try {
    s.n = j.at("n").get<int>();
    s.dim = j.at("dim").get<int>();
    s.masses = j.at("masses").get<std::vector<double>>();
    s.types = j.at("types").get<std::vector<int>>();
    s.edges = edges_from_json(j.at("edges"));
    s.kind = parse_kind(j.at("kind").get<std::string>());
    s.constants = j.at("constants").get<std::map<std::string, double>>();
    s.pbc = j.at("pbc").get<bool>();
    s.constraint_count = j.at("constraint_count").get<int>();
    if (j.contains("parts")) {
      for (const auto& pj : j.at("parts")) {
        HybridPart p;
        p.kind = parse_kind(pj.at("kind").get<std::string>());
        p.particles = pj.at("particles").get<std::vector<int>>();
        p.edges = edges_from_json(pj.at("edges"));
        p.kinetic = pj.at("kinetic").get<std::vector<int>>();
        s.parts.push_back(std::move(p));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed system spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline std::string csv_header(int dim) {
  std::string h = "frame,time,particle,type";
  for (int k = 0; k < dim; ++k) h += ",x" + std::to_string(k);
  for (int k = 0; k < dim; ++k) h += ",v" + std::to_string(k);
  return h;
}

inline void write_frames_csv(std::ostream& os, const SystemSpec& spec,
                             const std::vector<PhaseState>& frames) {
  os << csv_header(spec.dim) << '\n';
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const PhaseState& s = frames[f];
    for (int i = 0; i < spec.n; ++i) {
      os << f << ',' << format_double(s.time) << ',' << i << ',' << spec.types[i];
      for (int k = 0; k < spec.dim; ++k) os << ',' << format_double(s.x[i * spec.dim + k]);
      for (int k = 0; k < spec.dim; ++k) os << ',' << format_double(s.v[i * spec.dim + k]);
      os << '\n';
    }
  }
}

inline void write_frames_csv(const std::string& path, const SystemSpec& spec,
                             const std::vector<PhaseState>& frames) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_frames_csv(os, spec, frames);
}

inline std::vector<PhaseState> read_frames_csv(const std::string& path, const SystemSpec& spec) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != csv_header(spec.dim))
    throw FormatError("'" + path + "': unexpected CSV header");
  std::vector<PhaseState> frames;
  std::vector<double> x, v;
  long current = -1;
  double time = 0.0;
  int row = 0;
  auto flush = [&] {
    if (current < 0) return;
    if (x.size() != spec.coords()) throw FormatError("'" + path + "': incomplete frame");
    frames.push_back(make_state(spec, x, v, time));
    x.clear();
    v.clear();
  };
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<std::size_t>(4 + 2 * spec.dim))
      throw FormatError("'" + path + "': wrong column count on row " + std::to_string(row));
    try {
      const long frame = std::stol(cells[0]);
      if (frame != current) {
        flush();
        current = frame;
        time = std::stod(cells[1]);
      }
      for (int k = 0; k < spec.dim; ++k) x.push_back(std::stod(cells[4 + k]));
      for (int k = 0; k < spec.dim; ++k) v.push_back(std::stod(cells[4 + spec.dim + k]));
    } catch (const std::logic_error&) {
      throw FormatError("'" + path + "': unparsable number on row " + std::to_string(row));
    }
  }
  flush();
  return frames;
}

}  // namespace hdl
