#pragma once

#include "mbprox/core.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mbprox {

struct CostConstants {
  double tau_b = 1.0;  // one gradient over a minibatch, distributed
  double tau_1 = 1.0;  // one serial single-sample step
  std::size_t machines = 1;
};

inline void validate(const CostConstants& c) {
  require(c.tau_b > 0.0 && std::isfinite(c.tau_b), "cost.tau_b must be positive");
  require(c.tau_1 > 0.0 && std::isfinite(c.tau_1), "cost.tau_1 must be positive");
  require(c.machines >= 1, "cost.machines must be positive");
}

/// One accounted unit of work, e.g. a single solver call on a batch of batch_size samples.
struct CostEvent {
  std::size_t batch_grad_evals = 0;
  std::size_t single_grad_evals = 0;
  std::size_t batch_size = 0;
};

/// runtime = batch evals * tau_b + single steps * tau_1;
/// energy  = single-sample gradients = batch_size * batch evals + single steps.
struct CostSummary {
  double runtime = 0.0;
  double energy = 0.0;

  CostSummary& operator+=(const CostSummary& o) {
    runtime += o.runtime;
    energy += o.energy;
    return *this;
  }
  friend CostSummary operator+(CostSummary a, const CostSummary& b) { return a += b; }
};

inline CostSummary account(const CostEvent& e, const CostConstants& c) {
  return {static_cast<double>(e.batch_grad_evals) * c.tau_b +
              static_cast<double>(e.single_grad_evals) * c.tau_1,
          static_cast<double>(e.batch_size) * static_cast<double>(e.batch_grad_evals) +
              static_cast<double>(e.single_grad_evals)};
}

inline CostSummary account(std::span<const CostEvent> events, const CostConstants& c) {
  CostSummary total;
  for (const auto& e : events) total += account(e, c);
  return total;
}

enum class RegimeMethod { sgd, mp_agd, mp_svrg };

inline std::string_view to_string(RegimeMethod m) {
  switch (m) {
    case RegimeMethod::sgd: return "minibatch_sgd";
    case RegimeMethod::mp_agd: return "mp_agd";
    case RegimeMethod::mp_svrg: return "mp_svrg";
  }
  return "?";
}

/// One row of the asymptotic comparison. Expressions use unit constants; MP rows
/// carry an extra ln(1/epsilon) for the inner solves. `batch_steps` and
/// `serial_steps` are the coefficients of tau_b and tau_1 in the runtime.
struct RegimeRow {
  RegimeMethod method = RegimeMethod::sgd;
  double b = 0.0;
  std::string regime;  // efficient | saturated | below_min_batch
  double batch_steps = 0.0;
  double serial_steps = 0.0;
  double runtime = 0.0;
  double energy = 0.0;
  bool sample_efficient = false;
};

struct RegimeInputs {
  double sigma = 0.0;
  double beta = 1.0;
  double V = 1.0;
  double Delta = 1.0;
  double epsilon = 0.1;
};

inline void validate(const RegimeInputs& in) {
  require(in.sigma >= 0.0 && in.sigma <= in.beta, "regime: need 0 <= sigma <= beta");
  require(in.beta > 0.0, "regime: beta must be positive");
  require(in.V > 0.0, "regime: V must be positive");
  require(in.Delta > 0.0, "regime: Delta must be positive");
  require(in.epsilon > 0.0 && in.epsilon < 1.0, "regime: epsilon must lie in (0, 1)");
}

/// Sample count N = V^2 beta Delta / epsilon^4.
inline double sample_complexity(const RegimeInputs& in) {
  return in.V * in.V * in.beta * in.Delta / std::pow(in.epsilon, 4);
}

/// Largest sample-efficient minibatch: V^2/eps^2 for SGD, beta V^2/(sigma eps^2)
/// for MP (infinite when sigma = 0).
inline double max_efficient_batch(RegimeMethod m, const RegimeInputs& in) {
  const double base = in.V * in.V / (in.epsilon * in.epsilon);
  if (m == RegimeMethod::sgd) return base;
  if (in.sigma == 0.0) return std::numeric_limits<double>::infinity();
  return base * in.beta / in.sigma;
}

namespace detail {

// Relative slack so that b equal to a threshold computed in floating point lands inside.
inline bool at_most(double b, double threshold) { return b <= threshold * (1.0 + 1e-9); }

}  // namespace detail

inline RegimeRow regime_row(RegimeMethod m, double b, const RegimeInputs& in,
                            const CostConstants& c) {
  validate(in);
  require(b >= 1.0, "regime: b must be at least 1");
  const double eps2 = in.epsilon * in.epsilon;
  const double v2 = in.V * in.V;
  const double N = sample_complexity(in);
  const double log_factor = std::log(1.0 / in.epsilon);
  const double b_sgd = max_efficient_batch(RegimeMethod::sgd, in);
  const double b_mp = max_efficient_batch(m, in);
  const double load = b * eps2 / v2;  // b / b_sgd
  RegimeRow row;
  row.method = m;
  row.b = b;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  if (m == RegimeMethod::sgd) {
    row.sample_efficient = detail::at_most(b, b_sgd);
    row.regime = row.sample_efficient ? "efficient" : "saturated";
    row.batch_steps = row.sample_efficient ? N / b : in.beta * in.Delta / eps2;
    row.energy = row.sample_efficient ? N : load * N;
  } else if (!detail::at_most(b_sgd, b)) {
    row.regime = "below_min_batch";
    row.batch_steps = row.serial_steps = row.energy = nan;
  } else {
    row.sample_efficient = detail::at_most(b, b_mp);
    row.regime = row.sample_efficient ? "efficient" : "saturated";
    const double ratio = in.sigma / in.beta;
    if (m == RegimeMethod::mp_agd) {
      if (row.sample_efficient) {
        row.batch_steps = std::sqrt(eps2 / (v2 * b)) * N;
        row.energy = std::sqrt(load) * N;
      } else {
        row.batch_steps = std::pow(load, 0.25) * std::pow(in.sigma, 0.75) *
                          std::pow(in.beta, 0.25) * in.Delta / eps2;
        row.energy = std::pow(load, 1.25) * std::pow(ratio, 0.75) * N;
      }
    } else {
      if (row.sample_efficient) {
        row.batch_steps = N / b;
        row.serial_steps = eps2 / v2 * N;
        row.energy = N;
      } else {
        row.batch_steps = in.sigma * in.Delta / eps2;
        row.serial_steps = std::sqrt(load) * std::sqrt(in.sigma * in.beta) * in.Delta / eps2;
        row.energy = load * ratio * N;
      }
    }
    row.batch_steps *= log_factor;
    row.serial_steps *= log_factor;
    row.energy *= log_factor;
  }
  row.runtime = row.batch_steps * c.tau_b + row.serial_steps * c.tau_1;
  return row;
}

/// Rows for every method at every b in the grid, method-major.
inline std::vector<RegimeRow> regime_table(const RegimeInputs& in, std::span<const double> b_grid,
                                           const CostConstants& c = {}) {
  std::vector<RegimeRow> rows;
  for (RegimeMethod m : {RegimeMethod::sgd, RegimeMethod::mp_agd, RegimeMethod::mp_svrg}) {
    for (double b : b_grid) rows.push_back(regime_row(m, b, in, c));
  }
  return rows;
}

}  // namespace mbprox
