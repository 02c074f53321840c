#pragma once

// Value types shared by every module: phase-space states, system
// descriptions and recorded trajectories.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hdl/errors.hpp"

namespace hdl {

enum class SystemKind { Pendulum, Spring, Gravitational, BinaryLJ, Hybrid };

inline std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::Pendulum: return "pendulum";
    case SystemKind::Spring: return "spring";
    case SystemKind::Gravitational: return "gravitational";
    case SystemKind::BinaryLJ: return "lj";
    case SystemKind::Hybrid: return "hybrid";
  }
  return "unknown";
}

inline SystemKind parse_kind(const std::string& s) {
  if (s == "pendulum") return SystemKind::Pendulum;
  if (s == "spring") return SystemKind::Spring;
  if (s == "gravitational" || s == "gravity") return SystemKind::Gravitational;
  if (s == "lj" || s == "binary_lj" || s == "binarylj") return SystemKind::BinaryLJ;
  if (s == "hybrid") return SystemKind::Hybrid;
  throw DomainError("unknown system kind '" + s + "'");
}

struct Edge {
  int a = 0;
  int b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// One sub-system of a hybrid. Particle and edge indices are global.
// For a pendulum part, `particles` is the chain order with particles[0]
// hanging from the origin.
struct HybridPart {
  SystemKind kind = SystemKind::Spring;
  std::vector<int> particles;
  std::vector<Edge> edges;
  std::vector<int> kinetic;  // particles whose kinetic energy this part owns
};

struct SystemSpec {
  int n = 0;
  int dim = 2;
  std::vector<double> masses;
  std::vector<int> types;
  std::vector<Edge> edges;
  SystemKind kind = SystemKind::Spring;
  std::map<std::string, double> constants;
  bool pbc = false;
  int constraint_count = 0;
  std::vector<HybridPart> parts;  // Hybrid only

  std::size_t coords() const { return static_cast<std::size_t>(n) * dim; }

  double constant(const std::string& name) const {
    auto it = constants.find(name);
    if (it == constants.end()) throw DomainError("system constant '" + name + "' missing");
    return it->second;
  }

  double box() const { return constant("box"); }

  void validate() const {
    if (n <= 0) throw ShapeError("system must contain at least one particle");
    if (dim != 2 && dim != 3) throw ShapeError("dimension must be 2 or 3");
    if (masses.size() != static_cast<std::size_t>(n) || types.size() != masses.size())
      throw ShapeError("masses/types must have one entry per particle");
    for (double m : masses)
      if (!(m > 0.0)) throw DomainError("masses must be positive");
    for (const Edge& e : edges) {
      if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n)
        throw ShapeError("edge references an invalid particle");
      if (e.a == e.b) throw ShapeError("self-edges are not allowed");
    }
    if (pbc && !(box() > 0.0)) throw DomainError("periodic box length must be positive");
    if (kind == SystemKind::Pendulum && constraint_count != n)
      throw DomainError("a pendulum chain carries one rod per bob");
  }
};

struct PhaseState {
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> p;
  double time = 0.0;
};

inline std::vector<double> momentum_of(const SystemSpec& spec, std::span<const double> v) {
  if (v.size() != spec.coords()) throw ShapeError("velocity shape does not match system");
  std::vector<double> p(v.size());
  for (int i = 0; i < spec.n; ++i)
    for (int k = 0; k < spec.dim; ++k) p[i * spec.dim + k] = spec.masses[i] * v[i * spec.dim + k];
  return p;
}

inline std::vector<double> velocity_of(const SystemSpec& spec, std::span<const double> p) {
  if (p.size() != spec.coords()) throw ShapeError("momentum shape does not match system");
  std::vector<double> v(p.size());
  for (int i = 0; i < spec.n; ++i)
    for (int k = 0; k < spec.dim; ++k) v[i * spec.dim + k] = p[i * spec.dim + k] / spec.masses[i];
  return v;
}

inline PhaseState make_state(const SystemSpec& spec, std::vector<double> x, std::vector<double> v,
                             double time = 0.0) {
  if (x.size() != spec.coords()) throw ShapeError("position shape does not match system");
  PhaseState s;
  s.p = momentum_of(spec, v);
  s.x = std::move(x);
  s.v = std::move(v);
  s.time = time;
  return s;
}

inline PhaseState state_from_momenta(const SystemSpec& spec, std::vector<double> x,
                                     std::vector<double> p, double time = 0.0) {
  if (x.size() != spec.coords()) throw ShapeError("position shape does not match system");
  PhaseState s;
  s.v = velocity_of(spec, p);
  s.x = std::move(x);
  s.p = std::move(p);
  s.time = time;
  return s;
}

inline std::vector<double> total_momentum(const PhaseState& s, int dim) {
  std::vector<double> m(dim, 0.0);
  for (std::size_t i = 0; i < s.p.size(); ++i) m[i % dim] += s.p[i];
  return m;
}

// Wraps a displacement component into [-box/2, box/2).
inline double minimum_image(double dx, double box) {
  return dx - box * std::floor(dx / box + 0.5);
}

struct Trajectory {
  SystemSpec spec;
  std::vector<PhaseState> frames;
  double dt = 0.0;
  int stride = 1;
  // Optional one-step successors of each frame (same length as frames).
  std::vector<PhaseState> successors;
};

}  // namespace hdl
