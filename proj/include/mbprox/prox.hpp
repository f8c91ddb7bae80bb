#pragma once

#include "mbprox/problems.hpp"

#include <limits>
#include <optional>
#include <span>

namespace mbprox {

template <class L>
concept RegularLoss = StochasticLoss<L> && requires(const L& loss) {
  { loss.sigma() } -> std::convertible_to<double>;
  { loss.beta() } -> std::convertible_to<double>;
};

/// Regularized empirical subproblem
///   F(w) = (1/n) sum_i loss(w, xi_i) + gamma/2 ||w - c||^2 + rho/2 ||w - c_rho||^2.
/// Holds a non-owning reference to the loss; the loss must outlive the objective.
template <RegularLoss L>
class ProxObjective {
 public:
  ProxObjective(const L& loss, Batch batch, Vector center_gamma, double gamma,
                std::optional<Vector> center_rho = std::nullopt, double rho = 0.0)
      : loss_(&loss),
        batch_(std::move(batch)),
        center_gamma_(std::move(center_gamma)),
        gamma_(gamma),
        center_rho_(std::move(center_rho)),
        rho_(rho) {
    require(!batch_.empty(), "prox objective: batch must be nonempty");
    require(gamma_ >= 0.0 && std::isfinite(gamma_), "prox objective: gamma must be nonnegative");
    require(rho_ >= 0.0 && std::isfinite(rho_), "prox objective: rho must be nonnegative");
    require_dim(center_gamma_, loss.dim(), "prox objective center");
    if (rho_ > 0.0) {
      require(center_rho_.has_value(), "prox objective: rho > 0 requires a rho center");
    }
    if (center_rho_) require_dim(*center_rho_, loss.dim(), "prox objective rho center");
  }

  Eigen::Index dim() const noexcept { return loss_->dim(); }
  std::size_t size() const noexcept { return batch_.size(); }
  const Batch& batch() const noexcept { return batch_; }
  const L& loss() const noexcept { return *loss_; }
  const Vector& center_gamma() const noexcept { return center_gamma_; }
  const std::optional<Vector>& center_rho() const noexcept { return center_rho_; }
  double gamma() const noexcept { return gamma_; }
  double rho() const noexcept { return rho_; }

  /// Curvature interval [gamma + rho - sigma, gamma + rho + beta].
  double strong_convexity() const { return gamma_ + rho_ - loss_->sigma(); }
  double smoothness() const { return gamma_ + rho_ + loss_->beta(); }

  std::pair<double, Vector> value_grad(const Vector& w) const {
    require_dim(w, dim(), "weights");
    auto [value, g] = batch_value_grad(*loss_, batch_, w);
    add_regularizers(w, value, g);
    return {value, std::move(g)};
  }

  double value(const Vector& w) const { return value_grad(w).first; }
  Vector gradient(const Vector& w) const { return value_grad(w).second; }

  /// Gradient of loss(w, xi_i) plus the quadratic terms.
  Vector component_grad(std::size_t i, const Vector& w) const {
    Vector g = Vector::Zero(dim());
    loss_->accumulate(w, batch_[i], 1.0, g);
    double unused = 0.0;
    add_regularizers(w, unused, g);
    return g;
  }

 private:
  void add_regularizers(const Vector& w, double& value, Vector& g) const {
    if (gamma_ != 0.0) {
      const Vector diff = w - center_gamma_;
      value += 0.5 * gamma_ * diff.squaredNorm();
      g.noalias() += gamma_ * diff;
    }
    if (rho_ != 0.0) {
      const Vector diff = w - *center_rho_;
      value += 0.5 * rho_ * diff.squaredNorm();
      g.noalias() += rho_ * diff;
    }
  }

  const L* loss_;
  Batch batch_;
  Vector center_gamma_;
  double gamma_;
  std::optional<Vector> center_rho_;
  double rho_;
};

template <RegularLoss L>
ProxObjective<L> make_prox_objective(const L& loss, Batch batch, Vector center_gamma, double gamma,
                                     std::optional<Vector> center_rho = std::nullopt,
                                     double rho = 0.0) {
  return ProxObjective<L>(loss, std::move(batch), std::move(center_gamma), gamma,
                          std::move(center_rho), rho);
}

/// Outer schedule for basic minibatch-prox.
///
/// gamma = sigma + sqrt(32 (beta + 2 sigma) V^2 T / (Delta b)) and
/// delta = 8 V^2 / ((beta + gamma) b). Delta is an upper bound on
/// phi(w0) - phi*, so gamma only errs on the large side. `valid` records the
/// batch-size condition b >= 2 (sigma + beta) / (gamma - sigma); with V = 0 the
/// formula degenerates to gamma = sigma and the schedule is never valid.
struct MPSchedule {
  double gamma = 0.0;
  std::size_t T = 0;
  std::size_t b = 0;
  double delta = 0.0;
  double Delta = 0.0;
  bool valid = false;
};

inline MPSchedule theorem1_schedule(double sigma, double beta, double V, std::size_t T,
                                    std::size_t b, double Delta) {
  require(sigma >= 0.0, "schedule: sigma must be nonnegative");
  require(beta > 0.0, "schedule: beta must be positive");
  require(V >= 0.0, "schedule: V must be nonnegative");
  require(T >= 1 && b >= 1, "schedule: T and b must be positive");
  require(Delta > 0.0 && std::isfinite(Delta), "schedule: Delta must be positive");
  const double v2 = V * V;
  const double bd = static_cast<double>(b);
  MPSchedule s;
  s.T = T;
  s.b = b;
  s.Delta = Delta;
  s.gamma = sigma + std::sqrt(32.0 * (beta + 2.0 * sigma) * v2 * static_cast<double>(T) /
                              (Delta * bd));
  s.delta = 8.0 * v2 / ((beta + s.gamma) * bd);
  const double margin = s.gamma - sigma;
  s.valid = margin > 0.0 && bd >= 2.0 * (sigma + beta) / margin;
  return s;
}

/// Uniform R in {1, ..., T}; returns the 1-based index and a copy of that iterate.
inline std::pair<std::size_t, Vector> select_random_iterate(std::span<const Vector> iterates,
                                                            SeedStream& rng) {
  require(!iterates.empty(), "select_random_iterate: no iterates");
  std::uniform_int_distribution<std::size_t> pick(1, iterates.size());
  const std::size_t r = pick(rng);
  return {r, iterates[r - 1]};
}

/// Inner-loop schedules of the memory-efficient variant, indexed s = 1..S at [s-1]:
///   rho_s = (gamma - sigma)(s - 1)/2
///   eta_s = V^2 S / ((beta + gamma) m s^5)
///   q_s   = 2 s / (S (S + 1))      weights of the averaged output
struct InnerSchedule {
  std::vector<double> rho;
  std::vector<double> eta;
  std::vector<double> weights;
};

inline double min_inner_batch(double gamma, double sigma, double beta) {
  require(gamma > sigma, "gamma must exceed sigma");
  return 2.0 * (sigma + beta) / (gamma - sigma);
}

inline InnerSchedule inner_schedules(double gamma, double sigma, double beta, double V,
                                     std::size_t m, std::size_t S) {
  require(S >= 1, "inner_schedules: S must be positive");
  require(m >= 1, "inner_schedules: m must be positive");
  require(static_cast<double>(m) >= min_inner_batch(gamma, sigma, beta),
          "inner_schedules: m below 2 (sigma + beta) / (gamma - sigma)");
  InnerSchedule out;
  out.rho.resize(S);
  out.eta.resize(S);
  out.weights.resize(S);
  const double sd = static_cast<double>(S);
  const double v2 = V * V;
  for (std::size_t i = 0; i < S; ++i) {
    const double s = static_cast<double>(i + 1);
    out.rho[i] = (gamma - sigma) * (s - 1.0) / 2.0;
    out.eta[i] = v2 * sd / ((beta + gamma) * static_cast<double>(m) * std::pow(s, 5));
    out.weights[i] = 2.0 * s / (sd * (sd + 1.0));
  }
  return out;
}

}  // namespace mbprox
