#pragma once

#include "mbprox/core.hpp"

#include <algorithm>
#include <concepts>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace mbprox {

enum class Family { logistic, squared, sigmoid, two_layer, quadratic };

/// gaussian: x ~ N(0, s^2 I), label noise ~ N(0, nu^2).
/// bounded:  x uniform on the sphere of radius s*sqrt(p) (so E[xx^T] = s^2 I),
///           label noise uniform with standard deviation nu.
enum class Design { gaussian, bounded };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::logistic: return "logistic";
    case Family::squared: return "squared";
    case Family::sigmoid: return "sigmoid";
    case Family::two_layer: return "two_layer";
    case Family::quadratic: return "quadratic";
  }
  return "?";
}

inline std::optional<Family> family_from_string(std::string_view s) {
  if (s == "logistic") return Family::logistic;
  if (s == "squared") return Family::squared;
  if (s == "sigmoid") return Family::sigmoid;
  if (s == "two_layer") return Family::two_layer;
  if (s == "quadratic") return Family::quadratic;
  return std::nullopt;
}

inline std::string_view to_string(Design d) { return d == Design::gaussian ? "gaussian" : "bounded"; }

inline std::optional<Design> design_from_string(std::string_view s) {
  if (s == "gaussian") return Design::gaussian;
  if (s == "bounded") return Design::bounded;
  return std::nullopt;
}

/// A stochastic objective phi(w) = E[loss(w, xi)] together with the regularity
/// constants the schedules consume.
///
/// Losses per family, with z = <w, x>:
///   logistic   log(1 + exp(-y z)),  y in {-1, +1}, P(y = 1) = logistic(<w_true, x>)
///   squared    (z - y)^2 / 2,        y = <w_true, x> + noise
///   sigmoid    (tanh z - y)^2,       y = tanh(<w_true, x>) + noise
///   two_layer  (f(w, x) - y)^2 / 2,  f = sum_j v_j softplus(<W_j, x>), teacher w_true
///   quadratic  sum_j h_j (w_j - xi_j)^2 / 2,  xi = w_true + noise
struct ProblemSpec {
  Family family = Family::squared;
  int dim = 1;
  int input_dim = 0;  // two_layer only: feature dimension p
  int hidden = 0;     // two_layer only
  Design design = Design::gaussian;
  Vector w_true;
  double feature_scale = 1.0;
  double noise_std = 0.0;
  Vector curvature;  // quadratic only; empty means all ones

  double sigma = 0.0;
  double beta = 1.0;
  double variance_bound = 1.0;  // V^2
  double phi_star_hint = 0.0;
  std::size_t holdout_size = 100000;
};

inline int feature_dim(const ProblemSpec& spec) {
  return spec.family == Family::two_layer ? spec.input_dim : spec.dim;
}

inline void validate(const ProblemSpec& spec) {
  require(spec.dim >= 1, "problem.dim must be positive");
  require(spec.w_true.size() == spec.dim, "problem.w_true must have dim entries");
  require(spec.w_true.allFinite(), "problem.w_true must be finite");
  require(spec.feature_scale > 0.0 && std::isfinite(spec.feature_scale),
          "problem.feature_scale must be positive");
  require(spec.noise_std >= 0.0 && std::isfinite(spec.noise_std),
          "problem.noise_std must be nonnegative");
  require(spec.sigma >= 0.0, "problem.sigma must be nonnegative");
  require(spec.sigma <= spec.beta, "problem.sigma must not exceed problem.beta");
  require(spec.variance_bound >= 0.0, "problem.variance_bound must be nonnegative");
  require(spec.holdout_size >= 1, "problem.holdout_size must be positive");
  switch (spec.family) {
    case Family::logistic:
    case Family::squared:
      require(spec.sigma == 0.0, "convex families require sigma = 0");
      break;
    case Family::quadratic:
      require(spec.sigma == 0.0, "convex families require sigma = 0");
      if (spec.curvature.size() != 0) {
        require(spec.curvature.size() == spec.dim, "problem.curvature must have dim entries");
        require((spec.curvature.array() >= 0.0).all() && spec.curvature.allFinite(),
                "problem.curvature must be nonnegative");
      }
      break;
    case Family::two_layer:
      require(spec.input_dim >= 1 && spec.hidden >= 1,
              "two_layer requires positive input_dim and hidden");
      require(spec.dim == spec.hidden * (spec.input_dim + 1),
              "two_layer requires dim = hidden * (input_dim + 1)");
      require(spec.dim <= 64, "two_layer is limited to 64 parameters");
      break;
    case Family::sigmoid:
      break;
  }
}

/// Immutable after construction; safe to share between replicas.
class Problem {
 public:
  explicit Problem(ProblemSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    if (spec_.family == Family::quadratic && spec_.curvature.size() == 0) {
      spec_.curvature = Vector::Ones(spec_.dim);
    }
  }

  const ProblemSpec& spec() const noexcept { return spec_; }
  Eigen::Index dim() const noexcept { return spec_.dim; }
  double sigma() const noexcept { return spec_.sigma; }
  double beta() const noexcept { return spec_.beta; }
  double variance_bound() const noexcept { return spec_.variance_bound; }

  Sample sample(SeedStream& rng) const {
    const int p = feature_dim(spec_);
    std::normal_distribution<double> normal(0.0, 1.0);
    Sample xi;
    if (spec_.family == Family::quadratic) {
      xi.x.resize(p);
      for (int j = 0; j < p; ++j) xi.x[j] = spec_.w_true[j] + noise(rng);
      return xi;
    }
    xi.x.resize(p);
    for (int j = 0; j < p; ++j) xi.x[j] = normal(rng);
    if (spec_.design == Design::gaussian) {
      xi.x *= spec_.feature_scale;
    } else {
      const double n = xi.x.norm();
      xi.x *= spec_.feature_scale * std::sqrt(static_cast<double>(p)) / (n > 0.0 ? n : 1.0);
    }
    switch (spec_.family) {
      case Family::logistic: {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        xi.y = unif(rng) < logistic(spec_.w_true.dot(xi.x)) ? 1.0 : -1.0;
        break;
      }
      case Family::squared:
        xi.y = spec_.w_true.dot(xi.x) + noise(rng);
        break;
      case Family::sigmoid:
        xi.y = std::tanh(spec_.w_true.dot(xi.x)) + noise(rng);
        break;
      case Family::two_layer:
        xi.y = network_output(spec_.w_true, xi.x) + noise(rng);
        break;
      case Family::quadratic:
        break;
    }
    return xi;
  }

  Batch draw_batch(SeedStream& rng, std::size_t n) const {
    require(n >= 1, "draw_batch: n must be at least 1");
    Batch batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(sample(rng));
    return batch;
  }

  double loss(const Vector& w, const Sample& xi) const {
    check(w, xi);
    return loss_unchecked(w, xi);
  }

  Vector grad(const Vector& w, const Sample& xi) const {
    check(w, xi);
    Vector g = Vector::Zero(spec_.dim);
    accumulate(w, xi, 1.0, g);
    return g;
  }

  /// Adds weight * grad loss(w, xi) into g and returns loss(w, xi). No checks.
  double accumulate(const Vector& w, const Sample& xi, double weight, Vector& g) const {
    switch (spec_.family) {
      case Family::logistic: {
        const double yz = xi.y * w.dot(xi.x);
        g.noalias() += (-weight * xi.y * logistic(-yz)) * xi.x;
        return softplus(-yz);
      }
      case Family::squared: {
        const double r = w.dot(xi.x) - xi.y;
        g.noalias() += (weight * r) * xi.x;
        return 0.5 * r * r;
      }
      case Family::sigmoid: {
        const double u = std::tanh(w.dot(xi.x));
        const double r = u - xi.y;
        g.noalias() += (weight * 2.0 * r * (1.0 - u * u)) * xi.x;
        return r * r;
      }
      case Family::two_layer:
        return network_accumulate(w, xi, weight, g);
      case Family::quadratic: {
        const auto diff = (w - xi.x).array();
        g.array() += weight * spec_.curvature.array() * diff;
        return 0.5 * (spec_.curvature.array() * diff.square()).sum();
      }
    }
    return 0.0;
  }

  double loss_unchecked(const Vector& w, const Sample& xi) const {
    switch (spec_.family) {
      case Family::logistic:
        return softplus(-xi.y * w.dot(xi.x));
      case Family::squared: {
        const double r = w.dot(xi.x) - xi.y;
        return 0.5 * r * r;
      }
      case Family::sigmoid: {
        const double r = std::tanh(w.dot(xi.x)) - xi.y;
        return r * r;
      }
      case Family::two_layer: {
        const double r = network_output(w, xi.x) - xi.y;
        return 0.5 * r * r;
      }
      case Family::quadratic:
        return 0.5 * (spec_.curvature.array() * (w - xi.x).array().square()).sum();
    }
    return 0.0;
  }

 private:
  void check(const Vector& w, const Sample& xi) const {
    require_dim(w, spec_.dim, "weights");
    require_dim(xi.x, feature_dim(spec_), "sample features");
  }

  double noise(SeedStream& rng) const {
    if (spec_.noise_std == 0.0) return 0.0;
    if (spec_.design == Design::gaussian) {
      std::normal_distribution<double> normal(0.0, spec_.noise_std);
      return normal(rng);
    }
    const double half = std::sqrt(3.0) * spec_.noise_std;
    std::uniform_real_distribution<double> unif(-half, half);
    return unif(rng);
  }

  // Layout: W (hidden x input_dim, row-major) followed by v (hidden).
  double network_output(const Vector& w, const Vector& x) const {
    const int h = spec_.hidden;
    const int p = spec_.input_dim;
    double f = 0.0;
    for (int j = 0; j < h; ++j) {
      const double a = w.segment(j * p, p).dot(x);
      f += w[h * p + j] * softplus(a);
    }
    return f;
  }

  double network_accumulate(const Vector& w, const Sample& xi, double weight, Vector& g) const {
    const int h = spec_.hidden;
    const int p = spec_.input_dim;
    double f = 0.0;
    Vector act(h);
    Vector pre(h);
    for (int j = 0; j < h; ++j) {
      pre[j] = w.segment(j * p, p).dot(xi.x);
      act[j] = softplus(pre[j]);
      f += w[h * p + j] * act[j];
    }
    const double r = f - xi.y;
    for (int j = 0; j < h; ++j) {
      const double v = w[h * p + j];
      g.segment(j * p, p).noalias() += (weight * r * v * logistic(pre[j])) * xi.x;
      g[h * p + j] += weight * r * act[j];
    }
    return 0.5 * r * r;
  }

  ProblemSpec spec_;
};

/// The minimal surface the solvers, prox objectives and diagnostics need.
template <class L>
concept StochasticLoss = requires(const L& loss, const Vector& w, const Sample& xi, Vector& g,
                                  SeedStream& rng) {
  { loss.dim() } -> std::convertible_to<Eigen::Index>;
  { loss.sample(rng) } -> std::same_as<Sample>;
  { loss.loss_unchecked(w, xi) } -> std::convertible_to<double>;
  { loss.accumulate(w, xi, 1.0, g) } -> std::convertible_to<double>;
};

/// Mean loss and mean gradient over a batch, summed in batch order.
template <StochasticLoss L>
std::pair<double, Vector> batch_value_grad(const L& loss, const Batch& batch, const Vector& w) {
  require(!batch.empty(), "batch must be nonempty");
  Vector g = Vector::Zero(loss.dim());
  double value = 0.0;
  for (const Sample& xi : batch) value += loss.accumulate(w, xi, 1.0, g);
  const double n = static_cast<double>(batch.size());
  g /= n;
  return {value / n, std::move(g)};
}

struct PopulationEstimate {
  double objective = 0.0;
  double grad_norm_sq = 0.0;
};

/// Empirical objective and squared norm of the empirical mean gradient on a holdout.
template <StochasticLoss L>
PopulationEstimate population_estimates(const L& loss, const Vector& w, const Batch& holdout) {
  require(!holdout.empty(), "population_estimates: holdout must be nonempty");
  require_dim(w, loss.dim(), "weights");
  auto [value, g] = batch_value_grad(loss, holdout, w);
  return {value, g.squaredNorm()};
}

/// Closed-form constants where the family admits them.
///
/// For the bounded design beta and sigma bound the per-sample curvature
/// (||x||^2 = s^2 p exactly). For the gaussian design per-sample curvature is
/// unbounded; beta and sigma are then curvature factors times the top
/// eigenvalue s^2 of E[xx^T], and the sigmoid label range uses a 3-sigma
/// noise cap. variance_bound is a sup over the box [-box, box]^d when it
/// depends on w.
struct AnalyticConstants {
  std::optional<double> sigma;
  std::optional<double> beta;
  std::optional<double> variance_bound;
  bool per_sample = false;
};

namespace detail {

// Extremes of the sigmoid-regression curvature factor
// c(u, y) = 2 (1 - u^2)(1 - 3u^2 + 2uy), u = tanh z, over u in (-1, 1), |y| <= y_max,
// and of |(u - y)(1 - u^2)|. Both are polynomial in u and linear in y.
struct SigmoidFactors {
  double c_max = 0.0;
  double c_neg = 0.0;
  double grad_factor = 0.0;
};

inline SigmoidFactors sigmoid_factors(double y_max) {
  SigmoidFactors out;
  constexpr int n = 200000;
  for (int i = 0; i <= n; ++i) {
    const double u = -1.0 + 2.0 * i / n;
    const double tp = 1.0 - u * u;
    for (double y : {-y_max, y_max}) {
      const double c = 2.0 * tp * (1.0 - 3.0 * u * u + 2.0 * u * y);
      out.c_max = std::max(out.c_max, c);
      out.c_neg = std::max(out.c_neg, -c);
      out.grad_factor = std::max(out.grad_factor, std::abs((u - y) * tp));
    }
  }
  // grid resolution margin
  out.c_max *= 1.0 + 1e-6;
  out.c_neg *= 1.0 + 1e-6;
  out.grad_factor *= 1.0 + 1e-6;
  return out;
}

}  // namespace detail

inline AnalyticConstants analytic_constants(const ProblemSpec& spec, double box = 3.0) {
  AnalyticConstants out;
  const double s2 = spec.feature_scale * spec.feature_scale;
  const double p = feature_dim(spec);
  const double nu2 = spec.noise_std * spec.noise_std;
  out.per_sample = spec.design == Design::bounded;
  const double radius2 = spec.design == Design::bounded ? s2 * p : s2;
  switch (spec.family) {
    case Family::logistic:
      out.sigma = 0.0;
      out.beta = radius2 / 4.0;
      out.variance_bound = s2 * p;
      break;
    case Family::squared: {
      out.sigma = 0.0;
      out.beta = radius2;
      double max_dist2 = 0.0;
      for (int j = 0; j < spec.dim; ++j) {
        const double d = box + std::abs(spec.w_true[j]);
        max_dist2 += d * d;
      }
      const double factor = spec.design == Design::gaussian ? p + 1.0 : p - 1.0;
      out.variance_bound = s2 * s2 * factor * max_dist2 + nu2 * s2 * p;
      break;
    }
    case Family::sigmoid: {
      const double cap = spec.design == Design::bounded ? std::sqrt(3.0) : 3.0;
      const auto f = detail::sigmoid_factors(1.0 + cap * spec.noise_std);
      out.sigma = f.c_neg * radius2;
      out.beta = f.c_max * radius2;
      out.variance_bound = 4.0 * f.grad_factor * f.grad_factor * s2 * p;
      break;
    }
    case Family::quadratic: {
      const Vector h = spec.curvature.size() ? spec.curvature : Vector::Ones(spec.dim);
      out.sigma = 0.0;
      out.beta = h.maxCoeff();
      out.variance_bound = nu2 * h.squaredNorm();
      out.per_sample = true;
      break;
    }
    case Family::two_layer:
      break;
  }
  return out;
}

}  // namespace mbprox
