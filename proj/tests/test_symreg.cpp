#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hdl/symreg.hpp"

using namespace hdl;
using namespace hdl::sr;

namespace {

Node cst(double c) { return {Op::Const, 0, c}; }
Node var() { return {Op::Var, 0, 0.0}; }
Node add() { return {Op::Add, 0, 0.0}; }
Node mul() { return {Op::Mul, 0, 0.0}; }
Node pw(int k) { return {Op::Pow, k, 0.0}; }

FrontEntry entry(int c, double loss, double score = 0.0) {
  FrontEntry e;
  e.complexity = c;
  e.loss = loss;
  e.score = score;
  return e;
}

GpConfig quick(std::uint64_t seed) {
  GpConfig cfg;
  cfg.population = 128;
  cfg.generations = 40;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Symreg, EvaluateExamples) {
  EXPECT_DOUBLE_EQ(evaluate_expr({{mul(), cst(0.5), pw(2), var()}}, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(evaluate_expr({{cst(3.0)}}, 17.0), 3.0);
  const ExprTree lj{{add(), mul(), cst(2.0), pw(-12), var(), mul(), cst(-2.0), pw(-6), var()}};
  EXPECT_DOUBLE_EQ(evaluate_expr(lj, 1.0), 0.0);
  EXPECT_NEAR(evaluate_expr(lj, 1.5), 2.0 * std::pow(1.5, -12) - 2.0 * std::pow(1.5, -6), 1e-15);
  EXPECT_THROW(evaluate_expr({{pw(-2), var()}}, 0.0), DomainError);
  EXPECT_THROW(evaluate_expr({{add(), var()}}, 1.0), FormatError);
}

TEST(Symreg, StructureHelpers) {
  const std::vector<Node> t = {add(), mul(), cst(0.5), pw(2), var(), cst(1.0)};
  EXPECT_TRUE(well_formed(t));
  EXPECT_EQ(subtree_end(t, 1), 5u);
  EXPECT_EQ(depth_of(t), 4);
  EXPECT_EQ(constant_count(t), 2);
  std::vector<Node> u = t;
  u[2].c = 9.0;
  EXPECT_EQ(structure_key(t), structure_key(u));
  u[3].k = 3;
  EXPECT_NE(structure_key(t), structure_key(u));
  EXPECT_FALSE(well_formed({add(), var()}));
}

TEST(Symreg, SimplifyFoldsConstants) {
  const std::vector<Node> t = {add(), mul(), cst(2.0), cst(3.0), var()};
  const std::vector<Node> s = simplify(t);
  EXPECT_LT(s.size(), t.size());
  for (double x : {-1.0, 0.5, 4.0}) EXPECT_DOUBLE_EQ(evaluate_expr({s}, x), evaluate_expr({t}, x));
}

TEST(Symreg, ScoreOnReferenceFront) {
  const ParetoFront scored = score_front({entry(3, 5.69), entry(4, 7.96e-10)});
  ASSERT_EQ(scored.size(), 2u);
  EXPECT_EQ(scored[0].complexity, 4);
  EXPECT_NEAR(scored[0].score, 22.7, 0.227);
  EXPECT_NEAR(scored[0].score, std::log(5.69 / 7.96e-10), 1e-12);
  EXPECT_EQ(scored[1].score, 0.0);
}

TEST(Symreg, ScoreEdgeCases) {
  EXPECT_EQ(score_front({entry(5, 0.3)})[0].score, 0.0);
  const ParetoFront same = score_front({entry(3, 0.2), entry(5, 0.2)});
  for (const FrontEntry& e : same) EXPECT_EQ(e.score, 0.0);
  const ParetoFront exact = score_front({entry(3, 1.0), entry(5, 0.0)});
  EXPECT_NEAR(exact[0].score, -std::log(1e-30) / 2.0, 1e-12);
  EXPECT_THROW(score_front({}), DomainError);
}

TEST(Symreg, SelectBestUsesScoreThenSimplicity) {
  const ParetoFront f = {entry(7, 1e-6, 3.15), entry(5, 1e-3, 1.30), entry(9, 1e-7, 1.01)};
  EXPECT_EQ(select_best(f).complexity, 7);
  const ParetoFront tie = {entry(9, 1e-4, 2.0), entry(5, 1e-3, 2.0), entry(5, 1e-5, 2.0)};
  const FrontEntry best = select_best(tie);
  EXPECT_EQ(best.complexity, 5);
  EXPECT_EQ(best.loss, 1e-5);
  EXPECT_THROW(select_best({}), DomainError);
}

TEST(Symreg, ParetoFilterIsMonotone) {
  const ParetoFront f =
      pareto_filter({entry(5, 0.1), entry(3, 0.5), entry(5, 0.05), entry(7, 0.2), entry(9, 0.01), entry(4, INFINITY)});
  ASSERT_EQ(f.size(), 3u);
  for (std::size_t i = 1; i < f.size(); ++i) {
    EXPECT_GT(f[i].complexity, f[i - 1].complexity);
    EXPECT_LT(f[i].loss, f[i - 1].loss);
  }
  EXPECT_EQ(f[1].loss, 0.05);
}

TEST(Symreg, LaurentExpansion) {
  // 0.5 (x + -1)^2 + 0.25
  const std::vector<Node> t = {add(), mul(), cst(0.5), pw(2), add(), var(), cst(-1.0), cst(0.25)};
  const auto l = expand(t);
  ASSERT_TRUE(l.has_value());
  EXPECT_DOUBLE_EQ(l->at(2), 0.5);
  EXPECT_DOUBLE_EQ(l->at(1), -1.0);
  EXPECT_DOUBLE_EQ(l->at(0), 0.75);
  const auto q = as_quadratic(*l);
  ASSERT_TRUE(q.has_value());
  EXPECT_DOUBLE_EQ(q->a, 0.5);
  EXPECT_DOUBLE_EQ(q->x0, 1.0);
  EXPECT_DOUBLE_EQ(q->b, 0.25);
  const auto inv = expand({mul(), cst(3.0), pw(-6), var()});
  ASSERT_TRUE(inv.has_value());
  EXPECT_DOUBLE_EQ(inv->at(-6), 3.0);
  EXPECT_FALSE(as_quadratic(*inv).has_value());
}

TEST(Symreg, ConstantFitting) {
  const HeadSpec h;
  const SampleSet s = sample_head([](double) { return 3.0; }, h, 0.0, 1.0, 50, GridKind::Uniform, std::nullopt, 0.5);
  // Targets are differences from the reference value.
  for (double y : s.y) EXPECT_EQ(y, 0.0);
  const SampleSet q = sample_head([](double x) { return 0.5 * x * x; }, h, -2.0, 2.0, 200);
  std::mt19937_64 rng(1);
  const FitResult f = fit_constants({mul(), cst(1.7), pw(2), var()}, q, rng);
  ASSERT_EQ(f.constants.size(), 1u);
  EXPECT_NEAR(f.constants[0], 0.5, 1e-10);
  EXPECT_LT(f.loss, 1e-20);
  const FitResult g = fit_constants({add(), cst(0.0), mul(), cst(1.0), pw(2), add(), var(), cst(0.3)}, q, rng);
  EXPECT_LT(g.loss, 1e-16);
}

TEST(Symreg, AnalyticStandInsHaveExactTargets) {
  const HeadSpec edge = parse_head("edge:0-0");
  const SampleSet s = sample_head(analytic_head(SystemKind::Spring, edge), edge, 0.8, 1.3, 11);
  EXPECT_DOUBLE_EQ(s.reference, 1.3);
  for (std::size_t i = 0; i < s.x.size(); ++i)
    EXPECT_NEAR(s.y[i], 0.5 * (s.x[i] - 1.0) * (s.x[i] - 1.0) - 0.5 * 0.09, 1e-15);
  const HeadSpec lj = parse_head("edge:1-1");
  const auto f = analytic_head(SystemKind::BinaryLJ, lj);
  EXPECT_NEAR(f(0.88), 0.0, 1e-15);
  EXPECT_NEAR(f(0.88 * std::pow(2.0, 1.0 / 6.0)), -0.5 * 0.5, 1e-14);
  EXPECT_DOUBLE_EQ(analytic_head(SystemKind::Pendulum, parse_head("node"))(-2.0), 20.0);
}

TEST(Symreg, SamplingGridsAndDomain) {
  const HeadSpec h;
  auto f = [](double x) { return x; };
  const SampleSet u = sample_head(f, h, 1.0, 2.0, 5, GridKind::DenseLow);
  for (std::size_t i = 1; i < u.x.size(); ++i) {
    EXPECT_GT(u.x[i], u.x[i - 1]);
    if (i > 1) EXPECT_GT(u.x[i] - u.x[i - 1], u.x[i - 1] - u.x[i - 2]);
  }
  EXPECT_DOUBLE_EQ(u.x.front(), 1.0);
  EXPECT_DOUBLE_EQ(u.x.back(), 2.0);
  const SampleSet one = sample_head(f, h, 1.0, 2.0, 1);
  ASSERT_EQ(one.x.size(), 1u);
  EXPECT_DOUBLE_EQ(one.x[0], 1.5);
  EXPECT_THROW(sample_head(f, h, 0.5, 2.0, 10, GridKind::Uniform, std::make_pair(0.8, 2.5)), DomainError);
  EXPECT_THROW(sample_head(f, h, 1.0, 2.0, 0), DomainError);
  EXPECT_THROW(sample_head(f, h, 2.0, 2.0, 5), DomainError);
}

TEST(Symreg, HeadNamesRoundTrip) {
  for (const char* s : {"kinetic", "node", "edge:0-1", "edge:1-1"}) EXPECT_EQ(head_name(parse_head(s)), s);
  EXPECT_THROW(parse_head("edge:0-2"), DomainError);
  EXPECT_THROW(parse_head("vertex"), DomainError);
}

TEST(Symreg, RecoversKineticQuadratic) {
  const HeadSpec h;
  const SampleSet s = sample_head(analytic_head(SystemKind::Spring, h), h, 0.0, 2.0, 200);
  const DistillReport r = distill(s, quick(3));
  ASSERT_TRUE(r.coefficients.has_value());
  EXPECT_NEAR(r.coefficients->at(2), 0.5, 0.002);
  for (std::size_t i = 1; i < r.scored.size(); ++i) EXPECT_GE(r.scored[i - 1].score, r.scored[i].score);
  const nlohmann::json j = report_to_json(r);
  EXPECT_EQ(j.at("head"), "kinetic");
  EXPECT_TRUE(j.at("selected").contains("coefficients_by_power"));
}

TEST(Symreg, FitIsSeedDeterministicAndWorkerIndependent) {
  const HeadSpec h;
  const SampleSet s = sample_head([](double x) { return 0.3 * x * x * x + x; }, h, -1.0, 1.0, 100);
  GpConfig cfg = quick(5);
  cfg.generations = 10;
  const FitReport a = fit(s, cfg);
  cfg.workers = 2;
  const FitReport b = fit(s, cfg);
  ASSERT_EQ(a.front.size(), b.front.size());
  for (std::size_t i = 0; i < a.front.size(); ++i) {
    EXPECT_EQ(a.front[i].equation, b.front[i].equation);
    EXPECT_EQ(a.front[i].loss, b.front[i].loss);
  }
  for (std::size_t i = 1; i < a.front.size(); ++i) EXPECT_LT(a.front[i].loss, a.front[i - 1].loss);
}

TEST(Symreg, EmptyPowerSetStillFits) {
  const HeadSpec h;
  const SampleSet s = sample_head([](double x) { return 2.0 * x - 1.0; }, h, 0.0, 1.0, 50);
  GpConfig cfg = quick(2);
  cfg.powers.clear();
  const FitReport r = fit(s, cfg);
  ASSERT_FALSE(r.front.empty());
  EXPECT_LT(r.front.back().loss, 1e-20);
  for (const FrontEntry& e : r.front)
    for (const Node& n : e.nodes) EXPECT_NE(n.op, Op::Pow);
}

TEST(Symreg, FitNeedsEnoughSamples) {
  const HeadSpec h;
  const SampleSet s = sample_head([](double x) { return x; }, h, 0.0, 1.0, 5);
  EXPECT_THROW(fit(s, quick(1)), DomainError);
}
