#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace mbprox;

namespace {

DriverConfig mp_config(std::size_t T, std::size_t b, double gamma) {
  DriverConfig c;
  c.method = Method::mp;
  c.T = T;
  c.b = b;
  c.gamma = gamma;
  c.inner.kind = InnerSolver::agd;
  c.inner.target = 1e-14;
  return c;
}

RunContext context(std::uint64_t seed) {
  RunContext ctx;
  ctx.seed = seed;
  ctx.run_id = "test";
  ctx.cost = {1.0, 0.01, 1};
  return ctx;
}

void expect_same_traces(const Trace& a, const Trace& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_numbers(a[i], b[i])) << "record " << i;
}

}  // namespace

TEST(Drivers, OneProxStepOnSquaredLossIsRidge) {
  const auto spec = oracle::make_spec(Family::squared, Design::gaussian, 5);
  const Problem p(spec);
  for (double gamma : {0.1, 1.0, 10.0}) {
    auto c = mp_config(1, 40, gamma);
    c.w0 = Vector::Constant(5, 0.3);
    const auto res = run_mp(p, c, context(21));
    ASSERT_EQ(res.status, RunStatus::ok);
    auto data = make_stream(21, StreamTag::data);
    const Batch batch = p.draw_batch(data, 40);
    const Vector ridge = oracle::ridge_solution(batch, *c.w0, gamma);
    EXPECT_LE((res.iterates[0] - ridge).norm(), 1e-6) << gamma;
    EXPECT_EQ(res.R, 1u);
  }
}

TEST(Drivers, QuadraticFamilyStepMatchesClosedForm) {
  const auto spec = oracle::make_spec(Family::quadratic, Design::gaussian, 4);
  const Problem p(spec);
  auto c = mp_config(3, 25, 2.0);
  const auto res = run_mp(p, c, context(22));
  auto data = make_stream(22, StreamTag::data);
  Vector w = Vector::Zero(4);
  for (std::size_t t = 0; t < 3; ++t) {
    w = oracle::quadratic_prox_solution(spec, p.draw_batch(data, 25), w, 2.0);
    EXPECT_LE((res.iterates[t] - w).norm(), 1e-6);
  }
}

TEST(Drivers, MinibatchProxWithZeroGammaAndOneStepIsSgd) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 6);
  const Problem p(spec);
  DriverConfig sgd;
  sgd.method = Method::sgd;
  sgd.T = 30;
  sgd.b = 16;
  sgd.lr = 0.5;
  DriverConfig mp = sgd;
  mp.method = Method::mp;
  mp.gamma = 0.0;
  mp.inner.kind = InnerSolver::gd_momentum;
  mp.inner.budget_mode = BudgetMode::fixed_steps;
  mp.inner.g = 1;
  mp.inner.step_size = 0.5;
  const auto a = run(p, sgd, context(23));
  const auto b = run(p, mp, context(23));
  ASSERT_EQ(a.iterates.size(), b.iterates.size());
  for (std::size_t t = 0; t < a.iterates.size(); ++t) EXPECT_EQ(a.iterates[t], b.iterates[t]);
  expect_same_traces(a.trace, b.trace);
  EXPECT_EQ(a.R, b.R);
}

TEST(Drivers, MemoryEfficientWithOneInnerStepIsBasic) {
  const auto spec = oracle::make_spec(Family::sigmoid, Design::gaussian, 4);
  const Problem p(spec);
  auto mp = mp_config(8, 20, 3.0);
  mp.inner.budget_mode = BudgetMode::fixed_steps;
  mp.inner.g = 5;
  auto mem = mp;
  mem.method = Method::mp_mem;
  mem.m = 20;
  mem.S = 1;
  const auto a = run(p, mp, context(24));
  const auto b = run(p, mem, context(24));
  for (std::size_t t = 0; t < a.iterates.size(); ++t) EXPECT_EQ(a.iterates[t], b.iterates[t]);
  expect_same_traces(a.trace, b.trace);
}

TEST(Drivers, SampleAccounting) {
  const auto spec = oracle::make_spec(Family::logistic, Design::bounded, 3);
  const Problem p(spec);
  const auto mp = run(p, mp_config(7, 13, 1.0), context(25));
  EXPECT_EQ(mp.samples_used, 7u * 13u);
  auto mem = mp_config(4, 1, 1.0);
  mem.method = Method::mp_mem;
  mem.m = 9;
  mem.S = 3;
  mem.inner.target.reset();
  mem.inner.budget_mode = BudgetMode::fixed_steps;
  mem.inner.g = 4;
  const auto r = run(p, mem, context(25));
  EXPECT_EQ(r.samples_used, 4u * 9u * 3u);
  EXPECT_EQ(r.trace.back().samples_used, r.samples_used);
  EXPECT_EQ(r.trace.back().batch_grad_evals, 4u * 3u * 4u);
  DriverConfig sgd;
  sgd.method = Method::sgd;
  sgd.T = 11;
  sgd.b = 5;
  const auto s = run(p, sgd, context(25));
  EXPECT_EQ(s.samples_used, 55u);
  EXPECT_DOUBLE_EQ(s.trace.back().energy, 55.0);
  EXPECT_DOUBLE_EQ(s.trace.back().sim_runtime, 11.0);
}

TEST(Drivers, TraceCadence) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 3);
  const Problem p(spec);
  DriverConfig sgd;
  sgd.method = Method::sgd;
  sgd.T = 1200;
  sgd.b = 2;
  sgd.lr = 0.05;
  const auto s = run(p, sgd, context(26));
  // every ceil(1200/500) = 3 steps, plus t = 0
  EXPECT_EQ(s.trace.size(), 401u);
  EXPECT_EQ(s.trace[1].t, 3u);
  auto mp = mp_config(10, 4, 1.0);
  mp.trace_every = 4;
  const auto m = run(p, mp, context(26));
  std::vector<std::size_t> ts;
  for (const auto& r : m.trace) ts.push_back(r.t);
  EXPECT_EQ(ts, (std::vector<std::size_t>{0, 4, 8, 10}));
}

TEST(Drivers, TraceCountersAreMonotone) {
  const auto spec = oracle::make_spec(Family::sigmoid, Design::bounded, 3);
  const Problem p(spec);
  auto c = mp_config(6, 10, spec.sigma + 2.0 * spec.beta);
  c.method = Method::mp_mem;
  c.m = 10;
  c.S = 3;
  c.inner.kind = InnerSolver::svrg;
  const auto r = run(p, c, context(27));
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_GE(r.trace[i].samples_used, r.trace[i - 1].samples_used);
    EXPECT_GE(r.trace[i].single_grad_evals, r.trace[i - 1].single_grad_evals);
    EXPECT_GE(r.trace[i].sim_runtime, r.trace[i - 1].sim_runtime);
  }
  EXPECT_GT(r.trace.back().single_grad_evals, 0u);
}

TEST(Drivers, ExactProxOnQuadraticDecreasesMeanObjective) {
  const auto spec = oracle::make_spec(Family::quadratic, Design::gaussian, 5);
  const Problem p(spec);
  auto c = mp_config(6, 200, 1.0);
  c.w0 = Vector::Constant(5, 3.0);
  std::vector<double> mean(7, 0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run(p, c, context(seed));
    mean[0] += oracle::quadratic_phi(spec, *c.w0) / 20.0;
    for (std::size_t t = 0; t < 6; ++t) mean[t + 1] += oracle::quadratic_phi(spec, r.iterates[t]) / 20.0;
  }
  for (std::size_t t = 1; t < mean.size(); ++t) EXPECT_LT(mean[t], mean[t - 1]);
}

TEST(Drivers, SeedDeterminismAndIndependence) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 4);
  const Problem p(spec);
  auto c = mp_config(5, 8, 1.0);
  c.inner.kind = InnerSolver::svrg;
  const auto a = run(p, c, context(28));
  const auto b = run(p, c, context(28));
  const auto d = run(p, c, context(29));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_NE(a.iterates.back(), d.iterates.back());
}

TEST(Drivers, InnerSolversAgreeOnProxSteps) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 4);
  const Problem p(spec);
  auto c = mp_config(4, 30, 1.0);
  const auto agd = run(p, c, context(30));
  c.inner.kind = InnerSolver::gd_momentum;
  const auto gd = run(p, c, context(30));
  c.inner.kind = InnerSolver::svrg;
  const auto sv = run(p, c, context(30));
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_LE((agd.iterates[t] - gd.iterates[t]).norm(), 1e-5);
    EXPECT_LE((agd.iterates[t] - sv.iterates[t]).norm(), 1e-5);
  }
}

TEST(Drivers, TheoremScheduleIsUsedAndReported) {
  const auto spec = oracle::make_spec(Family::squared, Design::gaussian, 3);
  const Problem p(spec);
  auto c = mp_config(20, 50, 0.0);
  c.gamma_mode = GammaMode::theorem1;
  c.Delta = 2.0;
  c.inner.target.reset();
  const auto r = run(p, c, context(31));
  const auto s = theorem1_schedule(spec.sigma, spec.beta, std::sqrt(spec.variance_bound), 20, 50, 2.0);
  EXPECT_DOUBLE_EQ(r.gamma, s.gamma);
  EXPECT_DOUBLE_EQ(r.target, s.delta);
  EXPECT_TRUE(r.schedule_valid);

  auto mem = c;
  mem.method = Method::mp_mem;
  mem.m = 10;
  mem.S = 5;
  const auto rm = run(p, mem, context(31));
  EXPECT_DOUBLE_EQ(rm.gamma, s.gamma);
}

TEST(Drivers, ConfigurationErrorsRaiseBeforeRunning) {
  const auto spec = oracle::make_spec(Family::sigmoid, Design::gaussian, 3);
  const Problem p(spec);
  auto c = mp_config(5, 5, 0.0);
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);  // gamma <= sigma with tolerance mode
  c = mp_config(0, 5, 1.0);
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);
  c = mp_config(5, 0, 1.0);
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);
  c = mp_config(5, 5, 1.0);
  c.w0 = Vector::Zero(2);
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);
  c = mp_config(2, 1, 1.0);
  c.gamma_mode = GammaMode::theorem1;
  c.Delta = 1e6;
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);  // schedule invalid at b = 1
  EXPECT_THROW(preflight(p, c, context(1)), InvalidInput);
  c = mp_config(2, 4, 2.0);
  c.method = Method::mp_mem;
  c.m = 1;
  c.S = 3;
  EXPECT_THROW(run(p, c, context(1)), InvalidInput);  // m below 2 (sigma + beta) / (gamma - sigma)
  DriverConfig sgd;
  sgd.method = Method::sgd;
  sgd.lr = 0.0;
  EXPECT_THROW(run(p, sgd, context(1)), InvalidInput);
}

TEST(Drivers, DivergenceKeepsPartialTrace) {
  const auto spec = oracle::make_spec(Family::squared, Design::gaussian, 4);
  const Problem p(spec);
  DriverConfig sgd;
  sgd.method = Method::sgd;
  sgd.T = 200;
  sgd.b = 4;
  sgd.lr = 50.0;
  sgd.trace_every = 1;
  const auto r = run(p, sgd, context(32));
  EXPECT_EQ(r.status, RunStatus::diverged);
  EXPECT_FALSE(r.message.empty());
  EXPECT_EQ(r.R, 0u);
  ASSERT_GE(r.trace.size(), 2u);
  EXPECT_EQ(r.trace.back().quality_flag, QualityFlag::diverged);
  EXPECT_EQ(r.trace.front().quality_flag, QualityFlag::ok);
  EXPECT_LT(r.trace.back().t, 200u);

  auto mp = mp_config(50, 4, 0.0);
  mp.inner.kind = InnerSolver::gd_momentum;
  mp.inner.budget_mode = BudgetMode::fixed_steps;
  mp.inner.g = 3;
  mp.inner.step_size = 50.0;
  const auto m = run(p, mp, context(32));
  EXPECT_EQ(m.status, RunStatus::diverged);
  EXPECT_EQ(m.trace.back().quality_flag, QualityFlag::diverged);
}

TEST(Drivers, ExhaustedInnerBudgetIsFlagged) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 4);
  const Problem p(spec);
  auto c = mp_config(3, 10, 0.01);
  c.inner.kind = InnerSolver::gd_momentum;
  c.inner.max_steps = 1;
  c.trace_every = 100;
  const auto r = run(p, c, context(33));
  ASSERT_EQ(r.status, RunStatus::ok);
  std::size_t flagged = 0;
  for (const auto& rec : r.trace) flagged += rec.quality_flag == QualityFlag::budget_exhausted;
  EXPECT_EQ(flagged, 3u);
}

TEST(Drivers, TraceAppendPolicies) {
  Trace trace;
  TraceRecord a;
  a.samples_used = 10;
  a.sim_runtime = 1.0;
  trace_append(trace, a);
  TraceRecord nan = a;
  nan.pop_obj_est = std::numeric_limits<double>::quiet_NaN();
  trace_append(trace, nan);
  EXPECT_EQ(trace.back().quality_flag, QualityFlag::nonfinite);
  TraceRecord div = a;
  div.quality_flag = QualityFlag::diverged;
  div.pop_obj_est = std::numeric_limits<double>::infinity();
  trace_append(trace, div);
  EXPECT_EQ(trace.back().quality_flag, QualityFlag::diverged);
  TraceRecord back = a;
  back.samples_used = 9;
  EXPECT_THROW(trace_append(trace, back), InvalidInput);
  TraceRecord slower = a;
  slower.sim_runtime = 0.5;
  EXPECT_THROW(trace_append(trace, slower), InvalidInput);
}

TEST(Drivers, SelectedIterateComesFromTheRun) {
  const auto spec = oracle::make_spec(Family::logistic, Design::gaussian, 3);
  const Problem p(spec);
  const auto r = run(p, mp_config(9, 6, 1.0), context(34));
  ASSERT_GE(r.R, 1u);
  ASSERT_LE(r.R, 9u);
  EXPECT_EQ(r.selected, r.iterates[r.R - 1]);
  EXPECT_EQ(r.at_last.objective, population_estimates(p, r.iterates.back(), [&] {
    auto rng = make_stream(34, StreamTag::holdout);
    return p.draw_batch(rng, spec.holdout_size);
  }()).objective);
}
