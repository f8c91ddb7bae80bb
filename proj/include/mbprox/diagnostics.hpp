#pragma once

#include "mbprox/problems.hpp"

#include <vector>

namespace mbprox {

/// Probe layout shared by the estimators.
///
/// Each probe is a pair (w, w') with w uniform in [-box, box]^d, or, with
/// probability trajectory_fraction when trajectory points are given, a
/// trajectory point plus N(0, trajectory_radius^2 / d) noise per coordinate.
/// w' = w + r u with u a random unit direction and r log-uniform in
/// [1e-3 box, box], clipped to the box. `averaging` > 1 replaces the single
/// sample by the mean loss over that many samples, probing the population
/// curvature instead of the per-sample curvature.
struct ProbeOptions {
  std::size_t probes = 200;
  double box = 3.0;
  std::vector<Vector> trajectory;
  double trajectory_radius = 0.5;
  double trajectory_fraction = 0.5;
  std::size_t averaging = 1;
};

struct ConstantEstimates {
  double beta_hat = 0.0;
  double sigma_hat = 0.0;
  double V_sq_hat = 0.0;
  std::size_t probe_count = 0;
  double probe_box = 0.0;
};

namespace detail {

struct ProbePair {
  Vector w;
  Vector w2;
  Batch samples;
};

// Deterministic probe sequence: probe k depends only on (seed, k), so results
// over the first n probes are a prefix of results over more probes.
template <StochasticLoss L>
ProbePair make_probe(const L& loss, const ProbeOptions& opt, std::uint64_t seed, std::size_t k) {
  auto rng = make_stream(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1)), StreamTag::probes);
  const Eigen::Index d = loss.dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> in_box(-opt.box, opt.box);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProbePair p;
  p.w.resize(d);
  const bool local = !opt.trajectory.empty() && unit(rng) < opt.trajectory_fraction;
  if (local) {
    std::uniform_int_distribution<std::size_t> pick(0, opt.trajectory.size() - 1);
    const Vector& base = opt.trajectory[pick(rng)];
    require_dim(base, d, "trajectory point");
    const double scale = opt.trajectory_radius / std::sqrt(static_cast<double>(d));
    for (Eigen::Index j = 0; j < d; ++j) p.w[j] = base[j] + scale * normal(rng);
  } else {
    for (Eigen::Index j = 0; j < d; ++j) p.w[j] = in_box(rng);
  }
  Vector u(d);
  for (Eigen::Index j = 0; j < d; ++j) u[j] = normal(rng);
  const double un = u.norm();
  if (un > 0.0) u /= un;
  const double r = opt.box * std::pow(10.0, -3.0 * unit(rng));
  p.w2 = p.w + r * u;
  if (!local) p.w2 = p.w2.cwiseMax(-opt.box).cwiseMin(opt.box);
  if (p.w2 == p.w) p.w2[0] += r;
  const std::size_t n = std::max<std::size_t>(opt.averaging, 1);
  p.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) p.samples.push_back(loss.sample(rng));
  return p;
}

inline void validate_probes(const ProbeOptions& opt) {
  require(opt.probes >= 2, "diagnostics: probes must be at least 2");
  require(opt.box > 0.0, "diagnostics: probe box must be positive");
  require(opt.trajectory_fraction >= 0.0 && opt.trajectory_fraction <= 1.0,
          "diagnostics: trajectory fraction must lie in [0, 1]");
}

}  // namespace detail

/// max over probes of ||grad(w) - grad(w')|| / ||w - w'||. A lower bound on beta.
template <StochasticLoss L>
double estimate_smoothness(const L& loss, const ProbeOptions& opt, std::uint64_t seed) {
  detail::validate_probes(opt);
  double best = 0.0;
  for (std::size_t k = 0; k < opt.probes; ++k) {
    const auto p = detail::make_probe(loss, opt, seed, k);
    const Vector g1 = batch_value_grad(loss, p.samples, p.w).second;
    const Vector g2 = batch_value_grad(loss, p.samples, p.w2).second;
    best = std::max(best, (g1 - g2).norm() / (p.w - p.w2).norm());
  }
  return best;
}

/// max over probes of 2 max(0, -Bregman gap) / ||w - w'||^2, symmetrized over
/// the pair. A lower bound on sigma.
template <StochasticLoss L>
double estimate_almost_convexity(const L& loss, const ProbeOptions& opt, std::uint64_t seed) {
  detail::validate_probes(opt);
  double best = 0.0;
  for (std::size_t k = 0; k < opt.probes; ++k) {
    const auto p = detail::make_probe(loss, opt, seed, k);
    const auto [f1, g1] = batch_value_grad(loss, p.samples, p.w);
    const auto [f2, g2] = batch_value_grad(loss, p.samples, p.w2);
    const Vector diff = p.w - p.w2;
    const double dist2 = diff.squaredNorm();
    const double gap12 = f1 - f2 - g2.dot(diff);
    const double gap21 = f2 - f1 + g1.dot(diff);
    best = std::max(best, 2.0 * std::max(0.0, -std::min(gap12, gap21)) / dist2);
  }
  return best;
}

/// Unbiased sample variance of single-sample gradients at w:
/// sum_i ||g_i - mean||^2 / (n - 1).
template <StochasticLoss L>
double gradient_variance_at(const L& loss, const Vector& w, std::size_t n_samples, SeedStream& rng) {
  require(n_samples >= 2, "diagnostics: n_samples must be at least 2");
  require_dim(w, loss.dim(), "probe point");
  const Eigen::Index d = loss.dim();
  Matrix grads(d, static_cast<Eigen::Index>(n_samples));
  for (std::size_t i = 0; i < n_samples; ++i) {
    Vector g = Vector::Zero(d);
    loss.accumulate(w, loss.sample(rng), 1.0, g);
    grads.col(static_cast<Eigen::Index>(i)) = g;
  }
  const Vector mean = grads.rowwise().mean();
  return (grads.colwise() - mean).squaredNorm() / static_cast<double>(n_samples - 1);
}

/// max over probe points of the gradient variance.
template <StochasticLoss L>
double estimate_variance(const L& loss, const std::vector<Vector>& probe_points,
                         std::size_t n_samples, std::uint64_t seed) {
  require(!probe_points.empty(), "diagnostics: need at least one probe point");
  double best = 0.0;
  for (std::size_t k = 0; k < probe_points.size(); ++k) {
    auto rng = make_stream(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1)), StreamTag::probes);
    best = std::max(best, gradient_variance_at(loss, probe_points[k], n_samples, rng));
  }
  return best;
}

/// Probe points for estimate_variance: uniform in the box, or near the trajectory.
template <StochasticLoss L>
std::vector<Vector> variance_probe_points(const L& loss, const ProbeOptions& opt, std::uint64_t seed) {
  detail::validate_probes(opt);
  ProbeOptions light = opt;
  light.averaging = 1;
  std::vector<Vector> points;
  points.reserve(opt.probes);
  for (std::size_t k = 0; k < opt.probes; ++k) points.push_back(detail::make_probe(loss, light, seed, k).w);
  return points;
}

template <StochasticLoss L>
ConstantEstimates estimate_constants(const L& loss, const ProbeOptions& opt,
                                     std::size_t variance_points, std::size_t n_samples,
                                     std::uint64_t seed) {
  ConstantEstimates out;
  out.beta_hat = estimate_smoothness(loss, opt, seed);
  out.sigma_hat = std::min(estimate_almost_convexity(loss, opt, seed), out.beta_hat);
  ProbeOptions vopt = opt;
  vopt.probes = std::max<std::size_t>(variance_points, 2);
  const auto points = variance_probe_points(loss, vopt, seed + 1);
  out.V_sq_hat = estimate_variance(loss, points, n_samples, seed + 2);
  out.probe_count = opt.probes;
  out.probe_box = opt.box;
  return out;
}

/// max_j |analytic_j - central difference_j| / (|analytic_j| + h).
template <StochasticLoss L>
double gradient_check(const L& loss, const Vector& w, const Sample& xi, double h) {
  require(h > 0.0, "gradient_check: h must be positive");
  require_dim(w, loss.dim(), "weights");
  Vector g = Vector::Zero(loss.dim());
  loss.accumulate(w, xi, 1.0, g);
  double worst = 0.0;
  Vector wp = w;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    wp[j] = w[j] + h;
    const double fp = loss.loss_unchecked(wp, xi);
    wp[j] = w[j] - h;
    const double fm = loss.loss_unchecked(wp, xi);
    wp[j] = w[j];
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(g[j] - fd) / (std::abs(g[j]) + h));
  }
  return worst;
}

}  // namespace mbprox
