#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "hdl/dynamics.hpp"
#include "hdl/ground_truth.hpp"
#include "hdl/hgnn.hpp"

using namespace hdl;

namespace {

using Field = HamiltonianField<HgnnModel<double>>;

Field make_field(const SystemSpec& spec, std::uint64_t seed, int layers = 1) {
  HyperParams hp;
  hp.dim = spec.dim;
  hp.layers = layers;
  return Field(HgnnModel<double>(HgnnNet<double>::from(init_params(hp, seed)), spec));
}

std::vector<double> fd_grad(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                            double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double dn = f(x);
    x[i] = x0;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST(Hgnn, ParameterCountForDefaultLayout) {
  HyperParams hp;
  EXPECT_EQ(make_layout(hp).size, 718u);
  const ParamLayout lay = make_layout(hp);
  std::size_t total = 0;
  for (const TensorInfo& t : lay.tensors) {
    EXPECT_EQ(t.offset, total) << t.name;
    total += t.size;
  }
  EXPECT_EQ(total, lay.size);
  hp.dim = 4;
  EXPECT_THROW(make_layout(hp), DomainError);
}

TEST(Hgnn, InitIsSeededAndBounded) {
  HyperParams hp;
  const ModelParams a = init_params(hp, 5), b = init_params(hp, 5), c = init_params(hp, 6);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  for (const TensorInfo& t : make_layout(hp).tensors) {
    const double lim = std::sqrt(6.0 / (t.fan_in + t.fan_out));
    for (std::size_t k = 0; k < t.size; ++k) {
      const double v = a.values[t.offset + k];
      if (t.bias) EXPECT_EQ(v, 0.0);
      else EXPECT_LT(std::abs(v), lim);
    }
  }
}

TEST(Hgnn, ForwardPassIsFiniteAndVaries) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 5);
  const Field f = make_field(spec, 1);
  const PhaseState a = sample_initial(spec, 1), b = sample_initial(spec, 2);
  const double ha = hamiltonian(f.model(), a).H, hb = hamiltonian(f.model(), b).H;
  EXPECT_TRUE(std::isfinite(ha));
  EXPECT_NE(ha, hb);
  EXPECT_DOUBLE_EQ(f.value<double>(a.x, a.p), f.kinetic<double>(a.p) + f.potential<double>(a.x));
}

TEST(Hgnn, StructuredGradientsMatchGenericAutodiff) {
  for (SystemKind k : {SystemKind::Spring, SystemKind::Pendulum, SystemKind::BinaryLJ}) {
    const SystemSpec spec = make_spec(k, k == SystemKind::BinaryLJ ? 12 : 4);
    const Field f = make_field(spec, 3, default_layers(k));
    const PhaseState st = sample_initial(spec, 7);
    const auto gx = f.grad_x<double>(st.x), ggx = f.generic_grad_x<double>(st.x);
    const auto gp = f.grad_p<double>(st.p), ggp = f.generic_grad_p<double>(st.p);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      EXPECT_NEAR(gx[i], ggx[i], 1e-12) << to_string(k);
      EXPECT_NEAR(gp[i], ggp[i], 1e-12) << to_string(k);
    }
  }
}

TEST(Hgnn, GradientsMatchFiniteDifferences) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 4);
  const Field f = make_field(spec, 9);
  const PhaseState st = sample_initial(spec, 3);
  const auto gx = f.grad_x<double>(st.x);
  const auto fx = fd_grad([&](std::span<const double> x) { return f.potential<double>(x); }, st.x);
  for (std::size_t i = 0; i < gx.size(); ++i) EXPECT_NEAR(gx[i], fx[i], 1e-7);
  const auto gp = f.grad_p<double>(st.p);
  const auto fp = fd_grad([&](std::span<const double> p) { return f.kinetic<double>(p); }, st.p);
  for (std::size_t i = 0; i < gp.size(); ++i) EXPECT_NEAR(gp[i], fp[i], 1e-7);
}

TEST(Hgnn, EnergySplitsAreIndependent) {
  // Joint gradient of H over (x, p) splits into grad V and grad T.
  const SystemSpec spec = make_spec(SystemKind::Spring, 3);
  const Field f = make_field(spec, 2);
  const PhaseState st = sample_initial(spec, 1);
  const std::size_t n = st.x.size();
  std::vector<double> z = st.x;
  z.insert(z.end(), st.p.begin(), st.p.end());
  const auto vg = ad::value_and_grad(
      [&](std::span<const ad::Var> zs) { return f.value<ad::Var>(zs.subspan(0, n), zs.subspan(n)); }, z);
  const auto gx = f.grad_x<double>(st.x), gp = f.grad_p<double>(st.p);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(vg.grad[i], gx[i], 1e-13);
    EXPECT_NEAR(vg.grad[n + i], gp[i], 1e-13);
  }
}

TEST(Hgnn, PermutationInvarianceIsExact) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const SystemKind k = trial % 2 ? SystemKind::Spring : SystemKind::BinaryLJ;
    const SystemSpec spec = make_spec(k, k == SystemKind::BinaryLJ ? 10 : 5);
    const Field f = make_field(spec, trial);
    const PhaseState st = sample_initial(spec, 100 + trial);
    std::vector<int> perm(spec.n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    // New particle perm[i] is old particle i.
    SystemSpec ps = spec;
    std::vector<double> x(st.x.size()), p(st.p.size());
    for (int i = 0; i < spec.n; ++i) {
      ps.types[perm[i]] = spec.types[i];
      ps.masses[perm[i]] = spec.masses[i];
      for (int d = 0; d < spec.dim; ++d) {
        x[perm[i] * spec.dim + d] = st.x[i * spec.dim + d];
        p[perm[i] * spec.dim + d] = st.p[i * spec.dim + d];
      }
    }
    for (Edge& e : ps.edges) e = {perm[e.a], perm[e.b]};
    const Field g(HgnnModel<double>(f.model().net(), ps));
    EXPECT_EQ(f.value<double>(st.x, st.p), g.value<double>(x, p)) << trial;
  }
}

TEST(Hgnn, EdgeTermsAreTranslationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> grid(-256, 256), shift(-64, 64);
  const SystemSpec spec = make_spec(SystemKind::Spring, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const Field f = make_field(spec, trial);
    std::vector<double> x(spec.coords());
    for (double& v : x) v = grid(rng) / 64.0;
    std::vector<double> y = x;
    const double sx = shift(rng) / 8.0, sy = shift(rng) / 8.0;
    for (int i = 0; i < spec.n; ++i) {
      y[2 * i] += sx;
      y[2 * i + 1] += sy;
    }
    const auto a = f.model().potential_parts<double>(x).second;
    const auto b = f.model().potential_parts<double>(y).second;
    EXPECT_EQ(a, b);
  }
}

TEST(Hgnn, NodePotentialDependsOnPosition) {
  const SystemSpec spec = make_spec(SystemKind::Pendulum, 2);
  const Field f = make_field(spec, 4, 2);
  const std::vector<double> x = {0.0, -1.0, 0.5, -1.8};
  std::vector<double> y = x;
  y[1] -= 0.5;
  EXPECT_NE(f.model().potential_parts<double>(x).first, f.model().potential_parts<double>(y).first);
}

TEST(Hgnn, SizeTransferNeedsNoNewParameters) {
  HyperParams hp;
  const ModelParams mp = init_params(hp, 3);
  for (int n : {5, 10, 50}) {
    const SystemSpec spec = make_spec(SystemKind::Spring, n);
    const Field f(HgnnModel<double>(HgnnNet<double>::from(mp), spec));
    const PhaseState st = sample_initial(spec, 1);
    EXPECT_TRUE(std::isfinite(f.value<double>(st.x, st.p)));
    EXPECT_EQ(f.grad_x<double>(st.x).size(), spec.coords());
  }
  HyperParams hp3;
  hp3.dim = 3;
  const SystemSpec lj = make_spec(SystemKind::BinaryLJ, 100);
  const Field g(HgnnModel<double>(HgnnNet<double>::from(init_params(hp3, 1)), lj));
  const PhaseState st = sample_initial(lj, 2);
  EXPECT_TRUE(std::isfinite(g.value<double>(st.x, st.p)));
}

TEST(Hgnn, RejectsMismatchedShapes) {
  HyperParams hp;
  EXPECT_THROW(HgnnModel<double>(HgnnNet<double>::from(init_params(hp, 1)), make_spec(SystemKind::BinaryLJ, 10)),
               ShapeError);
  ModelParams bad = init_params(hp, 1);
  bad.values.pop_back();
  EXPECT_THROW(HgnnNet<double>::from(bad), Error);
}

TEST(Hgnn, LjEdgesFollowCutoff) {
  const SystemSpec spec = make_spec(SystemKind::BinaryLJ, 20);
  const Field f = make_field(spec, 1);
  const PhaseState st = sample_initial(spec, 3);
  const auto edges = f.model().edges_at<double>(st.x);
  const LJTable& t = kob_andersen();
  EXPECT_FALSE(edges.empty());
  EXPECT_EQ(edges.size() % 2, 0u);
  for (const Edge& e : edges) {
    double r2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = minimum_image(st.x[3 * e.a + k] - st.x[3 * e.b + k], spec.box());
      r2 += d * d;
    }
    const double rc = t.rc[spec.types[e.a]][spec.types[e.b]];
    EXPECT_LT(r2, rc * rc);
  }
}

TEST(Hgnn, HybridKineticOwnershipIsValidated) {
  const SystemSpec spec = make_hybrid(3, 3);
  HyperParams hp;
  const HgnnNet<double> spring = HgnnNet<double>::from(init_params(hp, 1));
  hp.layers = 2;
  const HgnnNet<double> pend = HgnnNet<double>::from(init_params(hp, 2));
  const auto field = compose_hybrid<double>({pend, spring}, spec);
  const PhaseState st = sample_initial(spec, 3);
  // Kinetic energy equals the sum over parts of their owned particles.
  std::vector<int> owned_p = {0, 1, 2}, owned_s = {3, 4, 5};
  const double t_p = detail::canonical_sum(pend.kinetic_terms<double>(st.p, spec.types, spec.masses, owned_p));
  const double t_s = detail::canonical_sum(spring.kinetic_terms<double>(st.p, spec.types, spec.masses, owned_s));
  EXPECT_NEAR(field.kinetic<double>(st.p), t_p + t_s, 1e-12);
  SystemSpec broken = spec;
  broken.parts[1].kinetic.push_back(2);
  EXPECT_THROW((compose_hybrid<double>({pend, spring}, broken)), Error);
  EXPECT_THROW((compose_hybrid<double>({pend}, spec)), ShapeError);
}

TEST(Hgnn, HybridGradientsMatchGeneric) {
  const SystemSpec spec = make_hybrid(3, 3);
  HyperParams hp;
  const HgnnNet<double> spring = HgnnNet<double>::from(init_params(hp, 4));
  hp.layers = 2;
  const HgnnNet<double> pend = HgnnNet<double>::from(init_params(hp, 5));
  const auto field = compose_hybrid<double>({pend, spring}, spec);
  const PhaseState st = sample_initial(spec, 6);
  const auto gx = field.grad_x<double>(st.x), ggx = field.generic_grad_x<double>(st.x);
  for (std::size_t i = 0; i < gx.size(); ++i) EXPECT_NEAR(gx[i], ggx[i], 1e-12);
  const auto gp = field.grad_p<double>(st.p), ggp = field.generic_grad_p<double>(st.p);
  for (std::size_t i = 0; i < gp.size(); ++i) EXPECT_NEAR(gp[i], ggp[i], 1e-12);
}
