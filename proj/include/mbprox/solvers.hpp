#pragma once

#include "mbprox/core.hpp"

#include <concepts>
#include <limits>
#include <utility>

namespace mbprox {

/// What the solvers need from a subproblem: a finite sum with known curvature interval.
template <class F>
concept SmoothObjective = requires(const F& f, const Vector& w, std::size_t i) {
  { f.dim() } -> std::convertible_to<Eigen::Index>;
  { f.size() } -> std::convertible_to<std::size_t>;
  { f.value_grad(w) } -> std::same_as<std::pair<double, Vector>>;
  { f.component_grad(i, w) } -> std::same_as<Vector>;
  { f.strong_convexity() } -> std::convertible_to<double>;
  { f.smoothness() } -> std::convertible_to<double>;
};

enum class BudgetMode { tolerance, fixed_steps };

/// tolerance: stop once ||grad||^2 <= 2 lambda target_subopt, or after max_steps.
/// fixed_steps: run exactly fixed_steps steps (SVRG: epochs) with no certificate.
struct SolverBudget {
  BudgetMode mode = BudgetMode::tolerance;
  double target_subopt = 1e-8;
  std::size_t max_steps = 100000;
  std::size_t fixed_steps = 1;

  static SolverBudget tolerance(double target, std::size_t max_steps = 100000) {
    return {BudgetMode::tolerance, target, max_steps, 0};
  }
  static SolverBudget fixed(std::size_t steps) {
    return {BudgetMode::fixed_steps, 0.0, steps, steps};
  }
};

struct SolverReport {
  Vector solution;
  std::size_t steps_taken = 0;
  std::size_t batch_grad_evals = 0;
  std::size_t single_grad_evals = 0;
  double final_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double certified_subopt_bound = std::numeric_limits<double>::infinity();
  bool certified = false;
  bool budget_exhausted = false;
};

inline double condition_number(double gamma, double rho, double sigma, double beta) {
  const double margin = gamma + rho - sigma;
  require(margin > 0.0, "condition number: gamma + rho must exceed sigma");
  return (beta + gamma + rho) / margin;
}

namespace detail {

inline void validate_budget(const SolverBudget& budget) {
  if (budget.mode == BudgetMode::tolerance) {
    require(budget.target_subopt > 0.0, "solver budget: target must be positive");
    require(budget.max_steps >= 1, "solver budget: max_steps must be positive");
  } else {
    require(budget.fixed_steps >= 1, "solver budget: fixed step count must be positive");
  }
}

// Blow-up relative to the first evaluated objective value.
class DivergenceGuard {
 public:
  void check(std::size_t step, double value) {
    if (!std::isfinite(value)) throw DivergenceError(step, value);
    if (!initialized_) {
      limit_ = 1e6 * std::max(std::abs(value), 1.0);
      initialized_ = true;
    } else if (value > limit_) {
      throw DivergenceError(step, value);
    }
  }

 private:
  bool initialized_ = false;
  double limit_ = 0.0;
};

inline void finish(SolverReport& r, double grad_norm_sq, double lambda) {
  r.final_grad_norm_sq = grad_norm_sq;
  r.certified_subopt_bound =
      lambda > 0.0 ? grad_norm_sq / (2.0 * lambda) : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// w <- w - step * g + momentum * (w - w_prev), with w_prev <- old w.
/// Shared by the solvers and the SGD driver so both produce identical bits.
inline void heavy_ball_step(Vector& w, Vector& w_prev, const Vector& g, double step,
                            double momentum) {
  Vector next = w - step * g;
  if (momentum != 0.0) next += momentum * (w - w_prev);
  w_prev = std::move(w);
  w = std::move(next);
}

/// Heavy-ball gradient descent: w+ = w - step * grad(w) + momentum * (w - w_prev).
template <SmoothObjective F>
SolverReport gd_momentum(const F& obj, const Vector& w0, double step_size, double momentum,
                         const SolverBudget& budget) {
  require(step_size > 0.0 && std::isfinite(step_size), "gd_momentum: step size must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "gd_momentum: momentum must lie in [0, 1)");
  require_dim(w0, obj.dim(), "initial point");
  detail::validate_budget(budget);
  const bool fixed = budget.mode == BudgetMode::fixed_steps;
  const double lambda = obj.strong_convexity();
  if (!fixed) require(lambda > 0.0, "gd_momentum: tolerance mode needs a strongly convex objective");

  SolverReport r;
  detail::DivergenceGuard guard;
  Vector w = w0;
  Vector w_prev = w0;
  for (std::size_t k = 0;; ++k) {
    if (fixed && k == budget.fixed_steps) break;
    auto [value, g] = obj.value_grad(w);
    ++r.batch_grad_evals;
    guard.check(k, value);
    if (!fixed) {
      const double gn = g.squaredNorm();
      if (gn <= 2.0 * lambda * budget.target_subopt) {
        r.certified = true;
        detail::finish(r, gn, lambda);
        break;
      }
      if (k == budget.max_steps) {
        r.budget_exhausted = true;
        detail::finish(r, gn, lambda);
        break;
      }
    }
    heavy_ball_step(w, w_prev, g, step_size, momentum);
    ++r.steps_taken;
  }
  r.solution = std::move(w);
  return r;
}

/// Overload with the default step 1/L.
template <SmoothObjective F>
SolverReport gd_momentum(const F& obj, const Vector& w0, const SolverBudget& budget,
                         double momentum = 0.0) {
  return gd_momentum(obj, w0, 1.0 / obj.smoothness(), momentum, budget);
}

/// Nesterov's constant-momentum scheme for strongly convex objectives:
///   x+ = y - grad(y)/L,  y+ = x+ + q (x+ - x),  q = (sqrt(kappa) - 1)/(sqrt(kappa) + 1).
/// The certificate is checked at y, which is then the returned point.
template <SmoothObjective F>
SolverReport agd_strongly_convex(const F& obj, const Vector& w0, const SolverBudget& budget) {
  require_dim(w0, obj.dim(), "initial point");
  detail::validate_budget(budget);
  const double lambda = obj.strong_convexity();
  const double L = obj.smoothness();
  require(lambda > 0.0, "agd: objective must be strongly convex");
  const double root = std::sqrt(L / lambda);
  const double q = (root - 1.0) / (root + 1.0);
  const bool fixed = budget.mode == BudgetMode::fixed_steps;

  SolverReport r;
  detail::DivergenceGuard guard;
  Vector x = w0;
  Vector y = w0;
  for (std::size_t k = 0;; ++k) {
    if (fixed && k == budget.fixed_steps) {
      r.solution = std::move(x);
      return r;
    }
    auto [value, g] = obj.value_grad(y);
    ++r.batch_grad_evals;
    guard.check(k, value);
    if (!fixed) {
      const double gn = g.squaredNorm();
      const bool done = gn <= 2.0 * lambda * budget.target_subopt;
      if (done || k == budget.max_steps) {
        r.certified = done;
        r.budget_exhausted = !done;
        detail::finish(r, gn, lambda);
        r.solution = std::move(y);
        return r;
      }
    }
    Vector x_next = y - g / L;
    y = x_next + q * (x_next - x);
    x = std::move(x_next);
    ++r.steps_taken;
  }
}

/// Variance-reduced direction grad_i(w) - grad_i(anchor) + full(anchor).
template <SmoothObjective F>
Vector variance_reduced_gradient(const F& obj, std::size_t i, const Vector& w,
                                 const Vector& anchor, const Vector& full_at_anchor) {
  Vector d = obj.component_grad(i, w) - obj.component_grad(i, anchor);
  d += full_at_anchor;
  return d;
}

/// SVRG with step 1/(10 L) and epoch length max(2 ceil(kappa), n). The
/// certificate is checked on the full gradient at each anchor. In fixed_steps
/// mode the count is in epochs.
template <SmoothObjective F>
SolverReport svrg(const F& obj, const Vector& w0, const SolverBudget& budget, SeedStream& rng) {
  require_dim(w0, obj.dim(), "initial point");
  detail::validate_budget(budget);
  const double lambda = obj.strong_convexity();
  const double L = obj.smoothness();
  require(lambda > 0.0, "svrg: objective must be strongly convex");
  const std::size_t n = obj.size();
  require(n >= 1, "svrg: empty finite sum");
  const double step = 1.0 / (10.0 * L);
  const auto kappa_steps = static_cast<std::size_t>(2.0 * std::ceil(L / lambda));
  const std::size_t epoch_len = std::max(kappa_steps, n);
  const bool fixed = budget.mode == BudgetMode::fixed_steps;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  SolverReport r;
  detail::DivergenceGuard guard;
  Vector w = w0;
  for (std::size_t epoch = 0;; ++epoch) {
    if (fixed && epoch == budget.fixed_steps) break;
    auto [value, full] = obj.value_grad(w);
    ++r.batch_grad_evals;
    guard.check(r.steps_taken, value);
    if (!fixed) {
      const double gn = full.squaredNorm();
      const bool done = gn <= 2.0 * lambda * budget.target_subopt;
      if (done || r.steps_taken >= budget.max_steps) {
        r.certified = done;
        r.budget_exhausted = !done;
        detail::finish(r, gn, lambda);
        break;
      }
    }
    const Vector anchor = w;
    for (std::size_t j = 0; j < epoch_len; ++j) {
      const std::size_t i = pick(rng);
      w -= step * variance_reduced_gradient(obj, i, w, anchor, full);
      ++r.single_grad_evals;
      ++r.steps_taken;
    }
    if (!w.allFinite()) throw DivergenceError(r.steps_taken, std::numeric_limits<double>::infinity());
  }
  r.solution = std::move(w);
  return r;
}

}  // namespace mbprox
