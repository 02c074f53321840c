#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hdl/ground_truth.hpp"

using namespace hdl;

namespace {

std::vector<double> fd_potential_gradient(const SystemSpec& spec, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = potential_energy<double>(spec, std::span<const double>(x));
    x[i] = x0 - h;
    const double dn = potential_energy<double>(spec, std::span<const double>(x));
    x[i] = x0;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST(GroundTruth, SpringHamiltonianExample) {
  SystemSpec s = make_spec(SystemKind::Spring, 2);
  const PhaseState st = make_state(s, {0.0, 0.0, 2.0, 0.0}, {0.0, 0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(spring_hamiltonian(s, st), 0.5);
  const PhaseState moving = make_state(s, {0.0, 0.0, 1.0, 0.0}, {1.0, 0.0, 0.0, 2.0});
  EXPECT_DOUBLE_EQ(spring_hamiltonian(s, moving), 0.5 + 2.0);
}

TEST(GroundTruth, PendulumHamiltonianExamples) {
  const SystemSpec s = make_spec(SystemKind::Pendulum, 2);
  const PhaseState st = make_state(s, {0.0, -1.0, 0.0, -2.0}, {1.0, 0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(pendulum_hamiltonian(s, st), 0.5 - 10.0 * (-1.0 - 2.0));
  const SystemSpec one = make_spec(SystemKind::Pendulum, 1);
  EXPECT_DOUBLE_EQ(pendulum_hamiltonian(one, make_state(one, {0.0, -1.0}, {0.0, 0.0})), 10.0);
  EXPECT_DOUBLE_EQ(pendulum_hamiltonian(one, make_state(one, {1.0, 0.0}, {0.0, 1.0})), 0.5);
}

TEST(GroundTruth, GravitationalPairEnergy) {
  const SystemSpec s = make_spec(SystemKind::Gravitational, 2);
  const PhaseState st = make_state(s, {0.0, 0.0, 2.0, 0.0}, {0.0, 0.0, 0.0, 0.0});
  // Repulsive, and each unordered pair contributes twice.
  EXPECT_DOUBLE_EQ(gravitational_hamiltonian(s, st), 2.0 * 1.0 / 2.0);
  const PhaseState overlap = make_state(s, {1.0, 1.0, 1.0, 1.0}, {0.0, 0.0, 0.0, 0.0});
  EXPECT_THROW(gravitational_hamiltonian(s, overlap), DomainError);
}

TEST(GroundTruth, LjPairEnergyAtSigmaAndMinimum) {
  const LJTable& t = kob_andersen();
  EXPECT_NEAR(lj_pair_energy(0, 0, 1.0), 0.0, 1e-15);
  const double rmin = std::pow(2.0, 1.0 / 6.0);
  EXPECT_NEAR(lj_pair_energy(0, 0, rmin), -t.eps[0][0], 1e-14);
  EXPECT_NEAR(lj_pair_energy(1, 1, 0.88 * rmin), -0.5, 1e-14);
  EXPECT_NEAR(lj_pair_energy(0, 1, 0.8 * rmin), -1.5, 1e-14);
  EXPECT_EQ(lj_pair_energy(0, 0, 2.6), 0.0);
  EXPECT_THROW(lj_pair_energy(0, 0, 0.0), DomainError);
  EXPECT_THROW(lj_pair_energy(0, 2, 1.0), DomainError);
}

TEST(GroundTruth, LjPeriodicImagesAreEquivalent) {
  const SystemSpec s = make_spec(SystemKind::BinaryLJ, 10);
  PhaseState st = sample_initial(s, 5);
  const double h0 = lj_hamiltonian(s, st);
  for (std::size_t i = 0; i < st.x.size(); i += 4) st.x[i] += s.box();
  EXPECT_NEAR(lj_hamiltonian(s, st), h0, 1e-13 * std::abs(h0));
}

TEST(GroundTruth, KindChecksOnNamedHamiltonians) {
  const SystemSpec s = make_spec(SystemKind::Spring, 3);
  EXPECT_THROW(lj_hamiltonian(s, sample_initial(s, 0)), DomainError);
}

TEST(GroundTruth, ForcesMatchFiniteDifferences) {
  for (SystemKind k : {SystemKind::Pendulum, SystemKind::Spring, SystemKind::Gravitational, SystemKind::BinaryLJ}) {
    const SystemSpec spec = make_spec(k, k == SystemKind::BinaryLJ ? 20 : 4);
    const AnalyticSystem sys(spec);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const PhaseState st = sample_initial(spec, seed);
      const auto g = sys.field.grad_x<double>(st.x);
      EXPECT_LT(rel_err(g, fd_potential_gradient(spec, st.x)), 1e-6) << to_string(k) << " seed " << seed;
    }
  }
}

TEST(GroundTruth, KineticGradientIsVelocity) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 3);
  const AnalyticSystem sys(spec);
  const PhaseState st = sample_initial(spec, 4);
  const auto gp = sys.field.grad_p<double>(st.p);
  for (std::size_t i = 0; i < gp.size(); ++i) EXPECT_NEAR(gp[i], st.v[i], 1e-15);
}

TEST(GroundTruth, SamplersAreSeedDeterministic) {
  for (SystemKind k : {SystemKind::Pendulum, SystemKind::Spring, SystemKind::Gravitational, SystemKind::BinaryLJ}) {
    const SystemSpec spec = make_spec(k, 6);
    const PhaseState a = sample_initial(spec, 42), b = sample_initial(spec, 42), c = sample_initial(spec, 43);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.v, b.v);
    EXPECT_NE(a.x, c.x);
  }
}

TEST(GroundTruth, PendulumSamplerSatisfiesRods) {
  const SystemSpec spec = make_spec(SystemKind::Pendulum, 4);
  const ConstraintSet cs = constraints_for(spec);
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(cs.max_length_violation(sample_initial(spec, seed).x), 1e-14);
}

TEST(GroundTruth, SpringSamplerStartsNearRestLength) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 5);
  const PhaseState st = sample_initial(spec, 3);
  for (const Edge& e : spec.edges) {
    const double r = std::hypot(st.x[2 * e.a] - st.x[2 * e.b], st.x[2 * e.a + 1] - st.x[2 * e.b + 1]);
    EXPECT_NEAR(r, 1.0, 0.3);
  }
}

TEST(GroundTruth, LjSamplerHitsTargetTemperatureWithZeroMomentum) {
  const SystemSpec spec = make_spec(SystemKind::BinaryLJ, 30);
  const PhaseState st = sample_initial(spec, 8);
  EXPECT_NEAR(instantaneous_temperature(spec, st), 1.2, 1e-12);
  for (double m : total_momentum(st, 3)) EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_EQ(std::count(spec.types.begin(), spec.types.end(), 0), 24);
}

TEST(GroundTruth, GravitationalSamplerNeedsPairs) {
  EXPECT_THROW(make_spec(SystemKind::Gravitational, 3), DomainError);
}

TEST(GroundTruth, HybridLayout) {
  const SystemSpec s = make_hybrid(3, 3);
  ASSERT_EQ(s.parts.size(), 2u);
  EXPECT_EQ(s.parts[0].particles, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(s.parts[1].particles, (std::vector<int>{2, 3, 4, 5}));
  EXPECT_EQ(s.parts[1].kinetic, (std::vector<int>{3, 4, 5}));
  const PhaseState st = sample_initial(s, 1);
  // Hybrid energy is the sum of the part energies with T counted once.
  double t = 0.0;
  for (std::size_t i = 0; i < st.p.size(); ++i) t += 0.5 * st.p[i] * st.v[i];
  double v = 0.0;
  for (int i = 0; i < 3; ++i) v -= 10.0 * st.x[2 * i + 1];
  for (const Edge& e : s.parts[1].edges) {
    const double r = std::hypot(st.x[2 * e.a] - st.x[2 * e.b], st.x[2 * e.a + 1] - st.x[2 * e.b + 1]);
    v += 0.5 * (r - 1.0) * (r - 1.0);
  }
  EXPECT_NEAR(hamiltonian(s, st), t + v, 1e-12);
}

TEST(GroundTruth, EquilibrationKeepsEnergyFinite) {
  const SystemSpec spec = make_spec(SystemKind::BinaryLJ, 20);
  const PhaseState st = equilibrate_lj(spec, sample_initial(spec, 2), 400);
  EXPECT_TRUE(std::isfinite(lj_hamiltonian(spec, st)));
  EXPECT_GT(instantaneous_temperature(spec, st), 0.0);
}

TEST(GroundTruth, TrajectoryFrameCount) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 5);
  const AnalyticSystem sys(spec);
  const Trajectory tr = generate_trajectory(sys, sample_initial(spec, 7), 1e-3, 1000, 10, true);
  EXPECT_EQ(tr.frames.size(), 101u);
  EXPECT_EQ(tr.successors.size(), 101u);
  EXPECT_NEAR(tr.frames.back().time, 1.0, 1e-12);
  EXPECT_NEAR(tr.successors[3].time - tr.frames[3].time, 1e-3, 1e-15);
}
