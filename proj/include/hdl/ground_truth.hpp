#pragma once

// Analytic benchmark systems: specs with default constants, Hamiltonians
// templated on the scalar type, constraint builders, samplers and
// trajectory generation.

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/constraints.hpp"
#include "hdl/core_state.hpp"
#include "hdl/dynamics.hpp"
#include "hdl/errors.hpp"

namespace hdl {

inline double default_dt(SystemKind k) {
  switch (k) {
    case SystemKind::Pendulum: return 1e-5;
    case SystemKind::BinaryLJ: return 1e-4;
    default: return 1e-3;
  }
}

// Closed loop 0-1-...-(n-1)-0; two particles share a single edge.
inline std::vector<Edge> loop_edges(int n) {
  std::vector<Edge> e;
  if (n == 2) return {{0, 1}};
  if (n < 2) return e;
  for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
  return e;
}

inline std::vector<Edge> chain_edges(int n) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return e;
}

inline void add_lj_constants(std::map<std::string, double>& c) {
  c["eps_00"] = 1.0;
  c["eps_01"] = 1.5;
  c["eps_11"] = 0.5;
  c["sigma_00"] = 1.00;
  c["sigma_01"] = 0.80;
  c["sigma_11"] = 0.88;
  c["rc_00"] = 2.5;
  c["rc_01"] = 2.0;
  c["rc_11"] = 2.2;
  c["box"] = 3.968;
  c["temperature"] = 1.2;
}

inline SystemSpec make_spec(SystemKind kind, int n) {
  if (n <= 0) throw DomainError("particle count must be positive");
  SystemSpec s;
  s.n = n;
  s.kind = kind;
  s.masses.assign(n, 1.0);
  s.types.assign(n, 0);
  switch (kind) {
    case SystemKind::Pendulum:
      s.dim = 2;
      s.edges = chain_edges(n);
      s.constants = {{"g", 10.0}, {"l", 1.0}};
      s.constraint_count = n;
      break;
    case SystemKind::Spring:
      if (n < 2) throw DomainError("a spring system needs at least two particles");
      s.dim = 2;
      s.edges = loop_edges(n);
      s.constants = {{"k", 1.0}, {"r0", 1.0}};
      break;
    case SystemKind::Gravitational:
      if (n < 2 || n % 2 != 0) throw DomainError("the gravitational system is built from particle pairs");
      s.dim = 2;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) s.edges.push_back({i, j});
      s.constants = {{"G", 1.0}};
      break;
    case SystemKind::BinaryLJ: {
      s.dim = 3;
      s.pbc = true;
      add_lj_constants(s.constants);
      const int majority = static_cast<int>(std::lround(0.8 * n));
      for (int i = majority; i < n; ++i) s.types[i] = 1;
      break;
    }
    case SystemKind::Hybrid:
      throw DomainError("use make_hybrid for hybrid systems");
  }
  s.validate();
  return s;
}

// Pendulum chain 0..np-1 hanging from the origin, followed by a spring
// chain np..np+ns-1 attached to the last bob.
inline SystemSpec make_hybrid(int np = 3, int ns = 3) {
  if (np < 1 || ns < 1) throw DomainError("hybrid needs at least one bob and one spring particle");
  SystemSpec s;
  s.n = np + ns;
  s.dim = 2;
  s.kind = SystemKind::Hybrid;
  s.masses.assign(s.n, 1.0);
  s.types.assign(s.n, 0);
  s.constants = {{"g", 10.0}, {"l", 1.0}, {"k", 1.0}, {"r0", 1.0}};
  s.constraint_count = np;
  HybridPart pend{SystemKind::Pendulum, {}, {}, {}};
  for (int i = 0; i < np; ++i) {
    pend.particles.push_back(i);
    pend.kinetic.push_back(i);
  }
  pend.edges = chain_edges(np);
  HybridPart spring{SystemKind::Spring, {}, {}, {}};
  for (int i = np - 1; i < s.n; ++i) spring.particles.push_back(i);
  for (int i = np; i < s.n; ++i) spring.kinetic.push_back(i);
  for (int i = np - 1; i + 1 < s.n; ++i) spring.edges.push_back({i, i + 1});
  s.edges = pend.edges;
  s.edges.insert(s.edges.end(), spring.edges.begin(), spring.edges.end());
  s.parts = {pend, spring};
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Energies.

template <class S>
S minimum_image_s(const S& dx, double box) {
  return dx - S(box * std::floor(ad::value_of(dx) / box + 0.5));
}

template <class S>
S kinetic_energy(const SystemSpec& spec, std::span<const S> p) {
  S acc(0.0);
  for (int i = 0; i < spec.n; ++i) {
    S pp(0.0);
    for (int k = 0; k < spec.dim; ++k) {
      const S& c = p[static_cast<std::size_t>(i) * spec.dim + k];
      pp += c * c;
    }
    acc += pp * S(0.5 / spec.masses[i]);
  }
  return acc;
}

template <class S>
S gravity_potential(const SystemSpec& spec, std::span<const S> x, std::span<const int> particles) {
  const double g = spec.constant("g");
  S acc(0.0);
  for (int i : particles) acc -= x[static_cast<std::size_t>(i) * spec.dim + 1] * S(spec.masses[i] * g);
  return acc;
}

template <class S>
S pair_distance(const SystemSpec& spec, std::span<const S> x, int i, int j) {
  using std::sqrt;
  S r2(0.0);
  for (int k = 0; k < spec.dim; ++k) {
    const S d = x[static_cast<std::size_t>(j) * spec.dim + k] - x[static_cast<std::size_t>(i) * spec.dim + k];
    r2 += d * d;
  }
  return sqrt(r2);
}

template <class S>
S spring_potential(const SystemSpec& spec, std::span<const S> x, std::span<const Edge> edges) {
  const double k = spec.constant("k");
  const double r0 = spec.constant("r0");
  S acc(0.0);
  for (const Edge& e : edges) {
    const S dr = pair_distance(spec, x, e.a, e.b) - S(r0);
    acc += dr * dr * S(0.5 * k);
  }
  return acc;
}

template <class S>
S gravitational_potential(const SystemSpec& spec, std::span<const S> x) {
  const double G = spec.constant("G");
  S acc(0.0);
  for (int i = 0; i < spec.n; ++i)
    for (int j = i + 1; j < spec.n; ++j) {
      const S r = pair_distance(spec, x, i, j);
      if (ad::value_of(r) == 0.0) throw DomainError("coincident particles in gravitational potential");
      // Ordered pairs (i, j) and (j, i) both contribute.
      acc += S(2.0 * G * spec.masses[i] * spec.masses[j]) / r;
    }
  return acc;
}

struct LJTable {
  double eps[2][2];
  double sigma[2][2];
  double rc[2][2];
  double box;

  static LJTable from(const SystemSpec& spec) {
    LJTable t{};
    const char* tag[2][2] = {{"00", "01"}, {"01", "11"}};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        t.eps[a][b] = spec.constant(std::string("eps_") + tag[a][b]);
        t.sigma[a][b] = spec.constant(std::string("sigma_") + tag[a][b]);
        t.rc[a][b] = spec.constant(std::string("rc_") + tag[a][b]);
      }
    t.box = spec.box();
    return t;
  }
};

inline const LJTable& kob_andersen() {
  static const LJTable t = [] {
    SystemSpec s;
    add_lj_constants(s.constants);
    return LJTable::from(s);
  }();
  return t;
}

inline void check_species(int t) {
  if (t < 0 || t > 1) throw DomainError("species label must be 0 or 1");
}

// 4 eps [(sigma/r)^12 - (sigma/r)^6] from the squared distance, zero
// beyond the species-pair cutoff.
template <class S>
S lj_pair_from_r2(const LJTable& t, int a, int b, const S& r2) {
  if (!(ad::value_of(r2) < t.rc[a][b] * t.rc[a][b])) return S(0.0);
  const S s2 = S(t.sigma[a][b] * t.sigma[a][b]) / r2;
  const S s6 = s2 * s2 * s2;
  return S(4.0 * t.eps[a][b]) * (s6 * s6 - s6);
}

inline double lj_pair_energy(int type_a, int type_b, double r, const LJTable& t = kob_andersen()) {
  check_species(type_a);
  check_species(type_b);
  if (!(r > 0.0)) throw DomainError("pair distance must be positive");
  return lj_pair_from_r2(t, type_a, type_b, r * r);
}

template <class S>
S lj_potential(const SystemSpec& spec, std::span<const S> x) {
  const LJTable t = LJTable::from(spec);
  const int d = spec.dim;
  S acc(0.0);
  for (int i = 0; i < spec.n; ++i) {
    check_species(spec.types[i]);
    for (int j = i + 1; j < spec.n; ++j) {
      S r2(0.0);
      for (int k = 0; k < d; ++k) {
        const S dx = minimum_image_s(x[static_cast<std::size_t>(j) * d + k] - x[static_cast<std::size_t>(i) * d + k], t.box);
        r2 += dx * dx;
      }
      if (ad::value_of(r2) == 0.0) throw DomainError("coincident particles in LJ potential");
      acc += lj_pair_from_r2(t, spec.types[i], spec.types[j], r2);
    }
  }
  return acc;
}

// Directed edges (both orientations) between pairs closer than their
// species cutoff under the minimum image.
inline std::vector<Edge> lj_cutoff_edges(const SystemSpec& spec, std::span<const double> x) {
  const LJTable t = LJTable::from(spec);
  const int d = spec.dim;
  std::vector<Edge> out;
  for (int i = 0; i < spec.n; ++i)
    for (int j = i + 1; j < spec.n; ++j) {
      double r2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double dx = minimum_image(x[j * d + k] - x[i * d + k], t.box);
        r2 += dx * dx;
      }
      const double rc = t.rc[spec.types[i]][spec.types[j]];
      if (r2 < rc * rc) {
        out.push_back({i, j});
        out.push_back({j, i});
      }
    }
  return out;
}

template <class S>
S potential_energy(const SystemSpec& spec, std::span<const S> x) {
  switch (spec.kind) {
    case SystemKind::Pendulum: {
      std::vector<int> all(spec.n);
      for (int i = 0; i < spec.n; ++i) all[i] = i;
      return gravity_potential<S>(spec, x, all);
    }
    case SystemKind::Spring: return spring_potential<S>(spec, x, spec.edges);
    case SystemKind::Gravitational: return gravitational_potential<S>(spec, x);
    case SystemKind::BinaryLJ: return lj_potential<S>(spec, x);
    case SystemKind::Hybrid: {
      S acc(0.0);
      for (const HybridPart& part : spec.parts) {
        if (part.kind == SystemKind::Pendulum) acc += gravity_potential<S>(spec, x, part.particles);
        else if (part.kind == SystemKind::Spring) acc += spring_potential<S>(spec, x, part.edges);
        else throw DomainError("hybrid parts must be pendulum or spring");
      }
      return acc;
    }
  }
  throw DomainError("unsupported system kind");
}

inline double hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  return kinetic_energy<double>(spec, s.p) + potential_energy<double>(spec, s.x);
}

namespace detail {
inline double checked_hamiltonian(const SystemSpec& spec, const PhaseState& s, SystemKind want) {
  if (spec.kind != want) throw DomainError("expected a " + to_string(want) + " system, got " + to_string(spec.kind));
  if (s.x.size() != spec.coords() || s.p.size() != spec.coords())
    throw ShapeError("state shape does not match system");
  return hamiltonian(spec, s);
}
}  // namespace detail

inline double pendulum_hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  if (spec.dim != 2) throw ShapeError("pendulum is planar");
  return detail::checked_hamiltonian(spec, s, SystemKind::Pendulum);
}
inline double spring_hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  return detail::checked_hamiltonian(spec, s, SystemKind::Spring);
}
inline double gravitational_hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  return detail::checked_hamiltonian(spec, s, SystemKind::Gravitational);
}
inline double lj_hamiltonian(const SystemSpec& spec, const PhaseState& s) {
  if (!spec.pbc || spec.dim != 3) throw DomainError("LJ system must be periodic and three dimensional");
  return detail::checked_hamiltonian(spec, s, SystemKind::BinaryLJ);
}

// ---------------------------------------------------------------------------
// Constraints.

inline std::vector<Rod> chain_rods(std::span<const int> chain, double length) {
  std::vector<Rod> rods;
  int prev = -1;
  for (int i : chain) {
    rods.push_back({prev, i, length});
    prev = i;
  }
  return rods;
}

inline ConstraintSet pendulum_constraints(const SystemSpec& spec) {
  const double l = spec.constant("l");
  if (spec.kind == SystemKind::Pendulum) {
    std::vector<int> chain(spec.n);
    for (int i = 0; i < spec.n; ++i) chain[i] = i;
    return ConstraintSet(chain_rods(chain, l), spec.masses, spec.dim);
  }
  if (spec.kind == SystemKind::Hybrid) {
    std::vector<Rod> rods;
    for (const HybridPart& part : spec.parts)
      if (part.kind == SystemKind::Pendulum) {
        auto r = chain_rods(part.particles, l);
        rods.insert(rods.end(), r.begin(), r.end());
      }
    return ConstraintSet(std::move(rods), spec.masses, spec.dim);
  }
  throw DomainError("pendulum constraints need a pendulum or hybrid system");
}

inline ConstraintSet constraints_for(const SystemSpec& spec) {
  if (spec.kind == SystemKind::Pendulum || spec.kind == SystemKind::Hybrid) return pendulum_constraints(spec);
  return ConstraintSet({}, spec.masses, spec.dim);
}

// ---------------------------------------------------------------------------
// Analytic model and system.

class AnalyticModel {
 public:
  explicit AnalyticModel(SystemSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  template <class S>
  S kinetic(std::span<const S> p) const {
    return kinetic_energy<S>(spec_, p);
  }
  template <class S>
  S potential(std::span<const S> x) const {
    return potential_energy<S>(spec_, x);
  }
  const std::vector<double>& masses() const { return spec_.masses; }
  int dim() const { return spec_.dim; }
  const SystemSpec& spec() const { return spec_; }

 private:
  SystemSpec spec_;
};

struct AnalyticSystem {
  SystemSpec spec;
  ConstraintSet constraints;
  HamiltonianField<AnalyticModel> field;

  explicit AnalyticSystem(const SystemSpec& s)
      : spec(s), constraints(constraints_for(s)), field(AnalyticModel(s)) {}

  double hamiltonian(const PhaseState& st) const { return hdl::hamiltonian(spec, st); }
};

// ---------------------------------------------------------------------------
// Samplers.

inline double instantaneous_temperature(const SystemSpec& spec, const PhaseState& s) {
  return 2.0 * kinetic_energy<double>(spec, s.p) / (spec.dim * spec.n);
}

namespace detail {

inline void rescale_to_temperature(const SystemSpec& spec, PhaseState& s, double target) {
  const double t = instantaneous_temperature(spec, s);
  if (!(t > 0.0)) return;
  const double f = std::sqrt(target / t);
  for (double& v : s.v) v *= f;
  s.p = momentum_of(spec, s.v);
}

inline PhaseState sample_pendulum(const SystemSpec& spec, std::mt19937_64& rng) {
  const double l = spec.constant("l");
  std::uniform_real_distribution<double> angle(-std::numbers::pi / 2, std::numbers::pi / 2);
  std::vector<double> x(spec.coords(), 0.0);
  double px = 0.0, py = 0.0;
  for (int i = 0; i < spec.n; ++i) {
    const double th = angle(rng);
    px += l * std::sin(th);
    py -= l * std::cos(th);
    x[2 * i] = px;
    x[2 * i + 1] = py;
  }
  return make_state(spec, std::move(x), std::vector<double>(spec.coords(), 0.0));
}

inline PhaseState sample_spring(const SystemSpec& spec, std::mt19937_64& rng) {
  const double r0 = spec.constant("r0");
  const int n = spec.n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> center(-5.0, 5.0);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::normal_distribution<double> vel(0.0, 0.5);
  const double radius = r0 / (2.0 * std::sin(std::numbers::pi / n));
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double cx = center(rng), cy = center(rng);
  std::vector<double> x(spec.coords()), v(spec.coords());
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / n;
    x[2 * i] = cx + radius * std::cos(a) + jitter(rng);
    x[2 * i + 1] = cy + radius * std::sin(a) + jitter(rng);
  }
  for (double& vi : v) vi = vel(rng);
  return make_state(spec, std::move(x), std::move(v));
}

// Counter-rotating pairs on unit circles, pair centers 4 apart.
inline PhaseState sample_gravitational(const SystemSpec& spec, std::mt19937_64& rng) {
  const int pairs = spec.n / 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-0.02, 0.02);
  const double speed = 0.5;
  std::vector<double> x(spec.coords()), v(spec.coords());
  for (int k = 0; k < pairs; ++k) {
    const double cx = 4.0 * k - 2.0 * (pairs - 1);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double dir = (k % 2 == 0) ? -1.0 : 1.0;  // even pairs clockwise
    for (int m = 0; m < 2; ++m) {
      const int i = 2 * k + m;
      const double a = phase + std::numbers::pi * m;
      x[2 * i] = cx + std::cos(a) + noise(rng);
      x[2 * i + 1] = std::sin(a) + noise(rng);
      v[2 * i] = -dir * speed * std::sin(a) + noise(rng);
      v[2 * i + 1] = dir * speed * std::cos(a) + noise(rng);
    }
  }
  return make_state(spec, std::move(x), std::move(v));
}

inline PhaseState sample_lj(const SystemSpec& spec, std::mt19937_64& rng) {
  const LJTable t = LJTable::from(spec);
  const double sigma_min = std::min({t.sigma[0][0], t.sigma[0][1], t.sigma[1][1]});
  const double dmin2 = std::pow(0.85 * sigma_min, 2);
  const int d = spec.dim;
  std::uniform_real_distribution<double> pos(0.0, t.box);
  std::vector<double> x;
  x.reserve(spec.coords());
  long attempts = 0;
  while (static_cast<int>(x.size()) < spec.n * d) {
    if (++attempts > 1000000) throw DomainError("LJ placement failed after 10^6 attempts");
    std::array<double, 3> c{};
    for (int k = 0; k < d; ++k) c[k] = pos(rng);
    bool ok = true;
    for (std::size_t j = 0; ok && j < x.size(); j += d) {
      double r2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double dx = minimum_image(c[k] - x[j + k], t.box);
        r2 += dx * dx;
      }
      ok = r2 >= dmin2;
    }
    if (ok) x.insert(x.end(), c.begin(), c.begin() + d);
  }
  std::normal_distribution<double> vel(0.0, 1.0);
  std::vector<double> v(spec.coords());
  for (double& vi : v) vi = vel(rng);
  // Zero the centre-of-mass velocity.
  double mtot = 0.0;
  for (double m : spec.masses) mtot += m;
  for (int k = 0; k < d; ++k) {
    double pk = 0.0;
    for (int i = 0; i < spec.n; ++i) pk += spec.masses[i] * v[i * d + k];
    for (int i = 0; i < spec.n; ++i) v[i * d + k] -= pk / mtot;
  }
  PhaseState s = make_state(spec, std::move(x), std::move(v));
  rescale_to_temperature(spec, s, spec.constant("temperature"));
  return s;
}

inline PhaseState sample_hybrid(const SystemSpec& spec, std::mt19937_64& rng) {
  const double l = spec.constant("l");
  const double r0 = spec.constant("r0");
  std::uniform_real_distribution<double> angle(-std::numbers::pi / 2, std::numbers::pi / 2);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::normal_distribution<double> vel(0.0, 0.3);
  std::vector<double> x(spec.coords(), 0.0), v(spec.coords(), 0.0);
  const HybridPart* pend = nullptr;
  const HybridPart* spring = nullptr;
  for (const HybridPart& p : spec.parts) (p.kind == SystemKind::Pendulum ? pend : spring) = &p;
  if (!pend || !spring) throw DomainError("hybrid sampler needs one pendulum and one spring part");
  double px = 0.0, py = 0.0;
  for (int i : pend->particles) {
    const double th = angle(rng);
    px += l * std::sin(th);
    py -= l * std::cos(th);
    x[2 * i] = px;
    x[2 * i + 1] = py;
  }
  const double heading = angle(rng);
  for (int i : spring->kinetic) {
    px += r0 * std::cos(heading) + jitter(rng);
    py += r0 * std::sin(heading) + jitter(rng);
    x[2 * i] = px;
    x[2 * i + 1] = py;
    v[2 * i] = vel(rng);
    v[2 * i + 1] = vel(rng);
  }
  return make_state(spec, std::move(x), std::move(v));
}

}  // namespace detail

inline PhaseState sample_initial(const SystemSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case SystemKind::Pendulum: return detail::sample_pendulum(spec, rng);
    case SystemKind::Spring: return detail::sample_spring(spec, rng);
    case SystemKind::Gravitational: return detail::sample_gravitational(spec, rng);
    case SystemKind::BinaryLJ: return detail::sample_lj(spec, rng);
    case SystemKind::Hybrid: return detail::sample_hybrid(spec, rng);
  }
  throw DomainError("unsupported system kind");
}

// Velocity-Verlet at dt = 1e-4; velocities are rescaled to the target
// temperature every 100 steps during the first half only.
inline PhaseState equilibrate_lj(const SystemSpec& spec, PhaseState state, long steps, double dt = 1e-4) {
  if (spec.kind != SystemKind::BinaryLJ) throw DomainError("equilibrate_lj needs an LJ system");
  const AnalyticSystem sys(spec);
  const double target = spec.constant("temperature");
  for (long step = 1; step <= steps; ++step) {
    state = verlet_step(sys.field, sys.constraints, state, dt);
    if (step <= steps / 2 && step % 100 == 0) detail::rescale_to_temperature(spec, state, target);
    if (step % 100 == 0 || step == steps) {
      const double h = sys.hamiltonian(state);
      if (!(std::abs(h) <= 1e6))
        throw NumericalError("LJ equilibration diverged at step " + std::to_string(step) + " (bad initial placement)");
    }
  }
  return state;
}

inline Trajectory generate_trajectory(const AnalyticSystem& sys, const PhaseState& init, double dt, long steps,
                                      int stride, bool record_successors = false) {
  return rollout(sys.field, sys.constraints, sys.spec, init, dt, steps, stride,
                 RolloutOptions{record_successors});
}

}  // namespace hdl
