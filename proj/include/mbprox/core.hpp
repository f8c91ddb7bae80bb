#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbprox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One observation xi = (features, label). For the location-quadratic family
/// the features hold the random center and the label is unused.
struct Sample {
  Vector x;
  double y = 0.0;
};

using Batch = std::vector<Sample>;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the solvers and the SGD driver when the objective blows up.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, double value)
      : std::runtime_error("objective diverged at step " + std::to_string(step) +
                           " (value " + std::to_string(value) + ")"),
        step_(step),
        value_(value) {}

  std::size_t step() const noexcept { return step_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t step_;
  double value_;
};

using SeedStream = std::mt19937_64;

/// Independent named streams per replica, e.g. data draws vs. iterate selection.
enum class StreamTag : std::uint64_t {
  data = 1,
  selection = 2,
  solver = 3,
  holdout = 4,
  init = 5,
  probes = 6,
  truth = 7,
};

inline SeedStream make_stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    0x6d62u};
  return SeedStream(seq);
}

inline SeedStream make_stream(std::uint64_t seed, StreamTag tag) {
  return make_stream(seed, static_cast<std::uint64_t>(tag));
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

inline void require_dim(const Vector& w, Eigen::Index dim, const char* what) {
  if (w.size() != dim) {
    throw InvalidInput(std::string(what) + ": dimension mismatch (got " + std::to_string(w.size()) +
                       ", expected " + std::to_string(dim) + ")");
  }
}

/// log(1 + exp(a)) without overflow.
inline double softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

inline double logistic(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace mbprox
