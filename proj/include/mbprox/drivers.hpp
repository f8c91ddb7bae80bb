#pragma once

#include "mbprox/cost_model.hpp"
#include "mbprox/problems.hpp"
#include "mbprox/prox.hpp"
#include "mbprox/solvers.hpp"
#include "mbprox/trace.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mbprox {

enum class Method { mp, mp_mem, sgd };
enum class InnerSolver { gd_momentum, agd, svrg };
enum class GammaMode { theorem1, fixed };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::mp: return "mp";
    case Method::mp_mem: return "mp_mem";
    case Method::sgd: return "sgd";
  }
  return "?";
}

inline std::string_view to_string(InnerSolver s) {
  switch (s) {
    case InnerSolver::gd_momentum: return "gd_momentum";
    case InnerSolver::agd: return "agd";
    case InnerSolver::svrg: return "svrg";
  }
  return "?";
}

struct InnerSolverConfig {
  InnerSolver kind = InnerSolver::agd;
  BudgetMode budget_mode = BudgetMode::tolerance;
  std::size_t g = 1;  // fixed_steps count (svrg: epochs)
  std::size_t max_steps = 100000;
  std::optional<double> step_size;  // gd_momentum; default 1/L
  double momentum = 0.0;            // gd_momentum
  std::optional<double> target;     // overrides the scheduled delta / eta_s
};

struct DriverConfig {
  Method method = Method::mp;
  std::size_t T = 1;
  std::size_t b = 1;  // mp, sgd
  std::size_t m = 1;  // mp_mem
  std::size_t S = 1;  // mp_mem
  GammaMode gamma_mode = GammaMode::fixed;
  double gamma = 0.0;
  std::optional<double> Delta;  // default: holdout objective at w0 minus phi_star_hint
  InnerSolverConfig inner;
  double lr = 0.1;        // sgd
  double momentum = 0.0;  // sgd
  std::size_t trace_every = 0;  // 0: every outer step for MP, ceil(T/500) for SGD
  std::optional<Vector> w0;
  double init_scale = 0.0;  // w0 ~ N(0, init_scale^2 I) when positive and w0 unset
};

struct RunContext {
  std::uint64_t seed = 0;
  std::string run_id;
  CostConstants cost;
  std::shared_ptr<const Batch> holdout;  // drawn from the seed when null
};

enum class RunStatus { ok, diverged };

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string message;
  Vector w0;
  std::vector<Vector> iterates;  // w_1 .. w_T
  std::size_t R = 0;             // 1-based; 0 when the run diverged
  Vector selected;
  Trace trace;
  std::vector<CostEvent> events;
  std::size_t samples_used = 0;
  double gamma = 0.0;
  double target = std::numeric_limits<double>::quiet_NaN();  // delta for mp
  bool schedule_valid = true;
  PopulationEstimate at_selected{std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
  PopulationEstimate at_last = at_selected;
};

namespace detail {

inline std::size_t samples_per_step(const DriverConfig& c) {
  return c.method == Method::mp_mem ? c.m * c.S : c.b;
}

inline void validate_driver(const DriverConfig& c) {
  require(c.T >= 1, "method.T must be positive");
  if (c.method == Method::mp_mem) {
    require(c.m >= 1 && c.S >= 1, "method.m and method.S must be positive");
  } else {
    require(c.b >= 1, "method.b must be positive");
  }
  if (c.method == Method::sgd) {
    require(c.lr > 0.0 && std::isfinite(c.lr), "method.lr must be positive");
    require(c.momentum >= 0.0 && c.momentum < 1.0, "method.momentum must lie in [0, 1)");
    return;
  }
  require(c.gamma >= 0.0 && std::isfinite(c.gamma), "method.gamma_value must be nonnegative");
  const auto& in = c.inner;
  if (in.budget_mode == BudgetMode::fixed_steps) require(in.g >= 1, "method.g must be positive");
  require(in.max_steps >= 1, "method.max_inner_steps must be positive");
  if (in.step_size) require(*in.step_size > 0.0, "method.inner_step_size must be positive");
  require(in.momentum >= 0.0 && in.momentum < 1.0, "method.inner_momentum must lie in [0, 1)");
  if (in.target) require(*in.target > 0.0, "method.inner_target must be positive");
}

/// Per-run state shared by the three drivers: counters, trace and holdout.
class RunRecorder {
 public:
  RunRecorder(const Problem& problem, const RunContext& ctx, std::string method, RunResult& out)
      : problem_(problem), ctx_(ctx), method_(std::move(method)), out_(out) {
    holdout_ = ctx.holdout;
    if (!holdout_) {
      auto rng = make_stream(ctx.seed, StreamTag::holdout);
      holdout_ = std::make_shared<const Batch>(problem.draw_batch(rng, problem.spec().holdout_size));
    }
  }

  const Batch& holdout() const { return *holdout_; }

  PopulationEstimate estimate(const Vector& w) const {
    return population_estimates(problem_, w, *holdout_);
  }

  void charge(const CostEvent& e, std::size_t samples) {
    out_.events.push_back(e);
    cost_ += account(e, ctx_.cost);
    batch_ += e.batch_grad_evals;
    single_ += e.single_grad_evals;
    out_.samples_used += samples;
  }

  void record(std::size_t t, std::size_t s, const PopulationEstimate& est, QualityFlag flag) {
    TraceRecord r;
    r.run_id = ctx_.run_id;
    r.seed = ctx_.seed;
    r.method = method_;
    r.t = t;
    r.s = s;
    r.samples_used = out_.samples_used;
    r.batch_grad_evals = batch_;
    r.single_grad_evals = single_;
    r.sim_runtime = cost_.runtime;
    r.energy = cost_.energy;
    r.pop_obj_est = est.objective;
    r.grad_norm_sq_est = est.grad_norm_sq;
    r.quality_flag = flag;
    trace_append(out_.trace, std::move(r));
  }

  void record(std::size_t t, std::size_t s, const Vector& w, QualityFlag flag) {
    record(t, s, estimate(w), flag);
  }

  void diverged(std::size_t t, const DivergenceError& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    record(t, 0, PopulationEstimate{nan, nan}, QualityFlag::diverged);
    out_.status = RunStatus::diverged;
    out_.message = e.what();
  }

  void finish() {
    if (out_.status != RunStatus::ok || out_.iterates.empty()) return;
    auto rng = make_stream(ctx_.seed, StreamTag::selection);
    auto [r, w] = select_random_iterate(out_.iterates, rng);
    out_.R = r;
    out_.selected = std::move(w);
    out_.at_selected = estimate(out_.selected);
    out_.at_last = estimate(out_.iterates.back());
  }

 private:
  const Problem& problem_;
  const RunContext& ctx_;
  std::string method_;
  RunResult& out_;
  std::shared_ptr<const Batch> holdout_;
  CostSummary cost_;
  std::size_t batch_ = 0;
  std::size_t single_ = 0;
};

inline Vector initial_point(const Problem& problem, const DriverConfig& c, std::uint64_t seed) {
  if (c.w0) {
    require_dim(*c.w0, problem.dim(), "initial point");
    return *c.w0;
  }
  Vector w = Vector::Zero(problem.dim());
  if (c.init_scale > 0.0) {
    auto rng = make_stream(seed, StreamTag::init);
    std::normal_distribution<double> normal(0.0, c.init_scale);
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = normal(rng);
  }
  return w;
}

inline bool trace_due(std::size_t t, std::size_t T, std::size_t every) {
  return t % every == 0 || t == T;
}

template <class F>
SolverReport solve_inner(const F& obj, const Vector& x0, const InnerSolverConfig& in, double target,
                         SeedStream& rng) {
  const SolverBudget budget = in.budget_mode == BudgetMode::fixed_steps
                                  ? SolverBudget::fixed(in.g)
                                  : SolverBudget::tolerance(target, in.max_steps);
  switch (in.kind) {
    case InnerSolver::gd_momentum:
      return gd_momentum(obj, x0, in.step_size.value_or(1.0 / obj.smoothness()), in.momentum,
                         budget);
    case InnerSolver::agd:
      return agd_strongly_convex(obj, x0, budget);
    case InnerSolver::svrg:
      return svrg(obj, x0, budget, rng);
  }
  return {};
}

// gamma from the config, or the closed-form schedule with batch size b_eff.
inline MPSchedule outer_schedule(const Problem& problem, const DriverConfig& c, std::size_t b_eff,
                                 double Delta) {
  const double v = std::sqrt(problem.variance_bound());
  if (c.gamma_mode == GammaMode::theorem1) {
    MPSchedule s = theorem1_schedule(problem.sigma(), problem.beta(), v, c.T, b_eff, Delta);
    require(s.valid,
            "theorem1 schedule is invalid (gamma = " + std::to_string(s.gamma) +
                "); the batch is below 2 (sigma + beta) / (gamma - sigma) or V = 0, use a fixed gamma");
    return s;
  }
  MPSchedule s;
  s.gamma = c.gamma;
  s.T = c.T;
  s.b = b_eff;
  s.Delta = Delta;
  s.delta = 8.0 * problem.variance_bound() / ((problem.beta() + c.gamma) * static_cast<double>(b_eff));
  const double margin = c.gamma - problem.sigma();
  s.valid = margin > 0.0 && static_cast<double>(b_eff) >= 2.0 * (problem.sigma() + problem.beta()) / margin;
  return s;
}

inline void require_inner_feasible(const Problem& problem, const DriverConfig& c, double gamma,
                                   double target) {
  const bool needs_convexity = c.inner.budget_mode == BudgetMode::tolerance ||
                               c.inner.kind != InnerSolver::gd_momentum;
  if (needs_convexity) {
    require(gamma > problem.sigma(), "inner solver needs gamma > sigma (strongly convex subproblems)");
  }
  if (c.inner.budget_mode == BudgetMode::tolerance) {
    require(target > 0.0 && std::isfinite(target),
            "inner tolerance is zero (V = 0); set method.inner_target");
  }
}

}  // namespace detail

namespace detail {

// Everything a prox driver settles before drawing training data.
struct Plan {
  Vector w0;
  PopulationEstimate start;
  MPSchedule schedule;
  InnerSchedule inner;  // mp_mem only
  double target = 0.0;
};

inline Plan plan_run(const Problem& problem, const DriverConfig& c, const RunRecorder& rec,
                     std::uint64_t seed) {
  validate_driver(c);
  Plan plan;
  plan.w0 = initial_point(problem, c, seed);
  plan.start = rec.estimate(plan.w0);
  if (c.method == Method::sgd) return plan;
  const double Delta = c.Delta.value_or(plan.start.objective - problem.spec().phi_star_hint);
  if (c.gamma_mode == GammaMode::theorem1) {
    require(Delta > 0.0, "Delta must be positive for the theorem1 schedule");
  }
  plan.schedule = outer_schedule(problem, c, samples_per_step(c), Delta);
  if (c.method == Method::mp_mem) {
    plan.inner = inner_schedules(plan.schedule.gamma, problem.sigma(), problem.beta(),
                                 std::sqrt(problem.variance_bound()), c.m, c.S);
    plan.target = c.inner.target.value_or(plan.inner.eta.back());
  } else {
    plan.target = c.inner.target.value_or(plan.schedule.delta);
  }
  require_inner_feasible(problem, c, plan.schedule.gamma, plan.target);
  return plan;
}

}  // namespace detail

/// Throws InvalidInput for any configuration problem a run would hit before
/// drawing training data (invalid schedule, infeasible inner budget, ...).
inline void preflight(const Problem& problem, const DriverConfig& c, const RunContext& ctx) {
  RunResult scratch;
  detail::RunRecorder rec(problem, ctx, std::string(to_string(c.method)), scratch);
  (void)detail::plan_run(problem, c, rec, ctx.seed);
}

/// Basic minibatch-prox: at each outer step draw b samples and solve
/// min_w (1/b) sum loss(w, xi_i) + gamma/2 ||w - w_prev||^2 to the inner budget.
inline RunResult run_mp(const Problem& problem, const DriverConfig& c, const RunContext& ctx) {
  require(c.method == Method::mp, "run_mp: method must be mp");
  RunResult out;
  detail::RunRecorder rec(problem, ctx, std::string(to_string(c.method)), out);
  const detail::Plan plan = detail::plan_run(problem, c, rec, ctx.seed);
  out.w0 = plan.w0;
  out.gamma = plan.schedule.gamma;
  out.target = plan.target;
  out.schedule_valid = plan.schedule.valid;

  const std::size_t every = c.trace_every ? c.trace_every : 1;
  auto data = make_stream(ctx.seed, StreamTag::data);
  auto solver_rng = make_stream(ctx.seed, StreamTag::solver);
  rec.record(0, 0, plan.start, QualityFlag::ok);
  Vector w_prev = out.w0;
  out.iterates.reserve(c.T);
  for (std::size_t t = 1; t <= c.T; ++t) {
    try {
      auto obj = make_prox_objective(problem, problem.draw_batch(data, c.b), w_prev, out.gamma);
      SolverReport rep = detail::solve_inner(obj, w_prev, c.inner, out.target, solver_rng);
      rec.charge({rep.batch_grad_evals, rep.single_grad_evals, c.b}, c.b);
      const QualityFlag flag = rep.budget_exhausted ? QualityFlag::budget_exhausted : QualityFlag::ok;
      out.iterates.push_back(rep.solution);
      if (detail::trace_due(t, c.T, every) || flag != QualityFlag::ok) {
        rec.record(t, 0, rep.solution, flag);
      }
      w_prev = std::move(rep.solution);
    } catch (const DivergenceError& e) {
      rec.diverged(t, e);
      return out;
    }
  }
  rec.finish();
  return out;
}

/// Memory-efficient minibatch-prox: each outer step runs S inner subproblems on
/// fresh batches of m samples with the extra proximal term rho_s/2 ||x - x_{s-1}||^2,
/// and returns the weighted average of the inner solutions. The closed-form
/// gamma schedule treats m S as the outer batch size.
inline RunResult run_mp_mem(const Problem& problem, const DriverConfig& c, const RunContext& ctx) {
  require(c.method == Method::mp_mem, "run_mp_mem: method must be mp_mem");
  RunResult out;
  detail::RunRecorder rec(problem, ctx, std::string(to_string(c.method)), out);
  const detail::Plan plan = detail::plan_run(problem, c, rec, ctx.seed);
  out.w0 = plan.w0;
  out.gamma = plan.schedule.gamma;
  out.target = plan.target;
  out.schedule_valid = plan.schedule.valid;
  const InnerSchedule& inner = plan.inner;

  const std::size_t every = c.trace_every ? c.trace_every : 1;
  auto data = make_stream(ctx.seed, StreamTag::data);
  auto solver_rng = make_stream(ctx.seed, StreamTag::solver);
  rec.record(0, 0, plan.start, QualityFlag::ok);
  Vector w_prev = out.w0;
  out.iterates.reserve(c.T);
  for (std::size_t t = 1; t <= c.T; ++t) {
    try {
      Vector x_prev = w_prev;
      Vector average = Vector::Zero(problem.dim());
      for (std::size_t s = 1; s <= c.S; ++s) {
        const double rho = inner.rho[s - 1];
        auto obj = make_prox_objective(problem, problem.draw_batch(data, c.m), w_prev, out.gamma,
                                       std::optional<Vector>(x_prev), rho);
        const double target = c.inner.target.value_or(inner.eta[s - 1]);
        SolverReport rep = detail::solve_inner(obj, x_prev, c.inner, target, solver_rng);
        rec.charge({rep.batch_grad_evals, rep.single_grad_evals, c.m}, c.m);
        average += inner.weights[s - 1] * rep.solution;
        if (rep.budget_exhausted) rec.record(t, s, rep.solution, QualityFlag::budget_exhausted);
        x_prev = std::move(rep.solution);
      }
      out.iterates.push_back(average);
      if (detail::trace_due(t, c.T, every)) rec.record(t, 0, average, QualityFlag::ok);
      w_prev = std::move(average);
    } catch (const DivergenceError& e) {
      rec.diverged(t, e);
      return out;
    }
  }
  rec.finish();
  return out;
}

/// Minibatch SGD with heavy-ball momentum and random-iterate output.
inline RunResult run_minibatch_sgd(const Problem& problem, const DriverConfig& c,
                                   const RunContext& ctx) {
  require(c.method == Method::sgd, "run_minibatch_sgd: method must be sgd");
  RunResult out;
  detail::RunRecorder rec(problem, ctx, std::string(to_string(c.method)), out);
  const detail::Plan plan = detail::plan_run(problem, c, rec, ctx.seed);
  out.w0 = plan.w0;
  out.gamma = 0.0;
  const std::size_t every = c.trace_every ? c.trace_every : (c.T + 499) / 500;
  auto data = make_stream(ctx.seed, StreamTag::data);
  rec.record(0, 0, plan.start, QualityFlag::ok);
  detail::DivergenceGuard guard;
  Vector w = out.w0;
  Vector w_prev = out.w0;
  out.iterates.reserve(c.T);
  for (std::size_t t = 1; t <= c.T; ++t) {
    try {
      const Batch batch = problem.draw_batch(data, c.b);
      auto [value, g] = batch_value_grad(problem, batch, w);
      guard.check(t - 1, value);
      heavy_ball_step(w, w_prev, g, c.lr, c.momentum);
      rec.charge({1, 0, c.b}, c.b);
      if (!w.allFinite()) throw DivergenceError(t, std::numeric_limits<double>::infinity());
      out.iterates.push_back(w);
      if (detail::trace_due(t, c.T, every)) rec.record(t, 0, w, QualityFlag::ok);
    } catch (const DivergenceError& e) {
      rec.diverged(t, e);
      return out;
    }
  }
  rec.finish();
  return out;
}

inline RunResult run(const Problem& problem, const DriverConfig& c, const RunContext& ctx) {
  switch (c.method) {
    case Method::mp: return run_mp(problem, c, ctx);
    case Method::mp_mem: return run_mp_mem(problem, c, ctx);
    case Method::sgd: return run_minibatch_sgd(problem, c, ctx);
  }
  return {};
}

}  // namespace mbprox
