#include <gtest/gtest.h>

#include <cmath>

#include "hdl/evaluation.hpp"

using namespace hdl;

namespace {

struct Shifted {
  const AnalyticSystem* s;
  const std::vector<double>& masses() const { return s->spec.masses; }
  int dim() const { return s->spec.dim; }
  template <class S>
  S kinetic(std::span<const S> p) const {
    return s->field.kinetic<S>(p);
  }
  template <class S>
  S potential(std::span<const S> x) const {
    return s->field.potential<S>(x) + S(7.0);
  }
};

}  // namespace

TEST(Evaluation, EnergyViolationFormula) {
  const std::vector<double> t = {1.0, -2.0, 0.0, 3.0};
  const std::vector<double> p = {1.5, -2.0, 0.0, -3.0};
  const auto ee = energy_violation(t, p);
  EXPECT_DOUBLE_EQ(ee[0], 0.5 / 2.5);
  EXPECT_DOUBLE_EQ(ee[1], 0.0);
  EXPECT_DOUBLE_EQ(ee[2], 0.0);
  EXPECT_DOUBLE_EQ(ee[3], 1.0);
  EXPECT_THROW(energy_violation(t, std::vector<double>{1.0}), ShapeError);
}

TEST(Evaluation, MomentumErrorUsesEuclideanNorms) {
  const auto me = momentum_error({{3.0, 4.0}, {0.0, 0.0}}, {{0.0, 0.0}, {0.0, 0.0}});
  EXPECT_DOUBLE_EQ(me[0], 1.0);
  EXPECT_DOUBLE_EQ(me[1], 0.0);
  const auto me2 = momentum_error({{1.0, 0.0}}, {{0.0, 1.0}});
  EXPECT_NEAR(me2[0], std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(Evaluation, MedianOddEvenEmpty) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(Evaluation, ComparingTruthWithItselfGivesZero) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 4);
  const AnalyticSystem sys(spec);
  const Trajectory tr = generate_trajectory(sys, sample_initial(spec, 1), 1e-3, 100, 10);
  const MetricSeries m = compare_quantities(sys.field, sys, tr);
  EXPECT_EQ(m.force_mse, 0.0);
  EXPECT_EQ(m.T_centered_mae, 0.0);
  EXPECT_EQ(m.V_centered_mae, 0.0);
  EXPECT_EQ(m.H_true, m.H_pred);
  ASSERT_EQ(m.times.size(), 11u);
}

TEST(Evaluation, CenteredMaeIgnoresOffsets) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 3);
  const AnalyticSystem sys(spec);
  const Trajectory tr = generate_trajectory(sys, sample_initial(spec, 2), 1e-3, 200, 20);
  // A constant shift of V changes no force and no centered error.
  const HamiltonianField<Shifted> shifted(Shifted{&sys});
  const MetricSeries m = compare_quantities(shifted, sys, tr);
  EXPECT_NEAR(m.V_centered_mae, 0.0, 1e-14);
  EXPECT_NEAR(m.force_mse, 0.0, 1e-24);
}

TEST(Evaluation, TruthRolloutHasZeroViolation) {
  const SystemSpec spec = make_spec(SystemKind::Gravitational, 4);
  const AnalyticSystem sys(spec);
  const RolloutMetrics r = rollout_metrics(sys.field, sys, sample_initial(spec, 3), 1e-3, 200, 10);
  for (double e : r.EE) EXPECT_EQ(e, 0.0);
  for (double e : r.ME) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(r.times.size(), 21u);
}

TEST(Evaluation, HarnessOrdersBySeedAndIgnoresWorkers) {
  const SystemSpec spec = make_spec(SystemKind::Spring, 3);
  HyperParams hp;
  const ModelParams mp = init_params(hp, 1);
  const std::vector<std::uint64_t> seeds = {9, 2, 5, 7};
  TransferOptions opt;
  opt.steps = 50;
  opt.stride = 10;
  const TransferReport a = transfer_harness(hgnn_field_factory(mp), spec, seeds, opt);
  opt.workers = 3;
  const TransferReport b = transfer_harness(hgnn_field_factory(mp), spec, seeds, opt);
  ASSERT_EQ(a.seeds.size(), 4u);
  for (std::size_t k = 1; k < a.seeds.size(); ++k) EXPECT_LT(a.seeds[k - 1].seed, a.seeds[k].seed);
  for (std::size_t k = 0; k < a.seeds.size(); ++k) {
    EXPECT_EQ(a.seeds[k].ee_median, b.seeds[k].ee_median);
    EXPECT_EQ(a.seeds[k].force_mse, b.seeds[k].force_mse);
  }
  EXPECT_EQ(a.ee_median, b.ee_median);
  EXPECT_GT(a.force_mse_median, 0.0);
}

TEST(Evaluation, TruthFieldTransfersPerfectly) {
  const SystemSpec spec = make_spec(SystemKind::Pendulum, 2);
  const std::vector<std::uint64_t> seeds = {1, 2};
  TransferOptions opt;
  opt.steps = 200;
  opt.stride = 20;
  opt.dt = 1e-4;
  const TransferReport rep =
      transfer_harness([](const SystemSpec& s) { return AnalyticSystem(s).field; }, spec, seeds, opt);
  EXPECT_EQ(rep.ee_median, 0.0);
  EXPECT_EQ(rep.force_mse_median, 0.0);
  EXPECT_LT(rep.max_rod_violation, 1e-6);
}
