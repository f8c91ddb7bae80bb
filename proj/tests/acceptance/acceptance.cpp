// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "support/oracles.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

using namespace mbprox;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double time_limit_s;
  std::function<Verdict()> check;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

RunContext context(std::uint64_t seed, std::shared_ptr<const Batch> holdout = nullptr) {
  RunContext c;
  c.seed = seed;
  c.run_id = "acceptance";
  c.holdout = std::move(holdout);
  return c;
}

// ---------------------------------------------------------------------------

constexpr double kGradTol = 1e-5;
constexpr double kGradStep = 1e-5;

Verdict gradient_correctness() {
  double worst = 0.0;
  std::string worst_family;
  for (Family f : {Family::logistic, Family::squared, Family::sigmoid, Family::two_layer,
                   Family::quadratic}) {
    for (Design d : {Design::gaussian, Design::bounded}) {
      const auto spec = oracle::make_spec(f, d, 6);
      const Problem p(spec);
      auto rng = make_stream(1, StreamTag::probes);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int k = 0; k < 100; ++k) {
        Vector w(p.dim());
        for (auto& x : w) x = normal(rng);
        const double e = gradient_check(p, w, p.sample(rng), kGradStep);
        if (e > worst) {
          worst = e;
          worst_family = std::string(to_string(f));
        }
      }
    }
  }
  return {worst <= kGradTol, "max rel err " + fmt(worst) + " (" + worst_family + ") tol " +
                                 fmt(kGradTol)};
}

// ---------------------------------------------------------------------------

constexpr double kSolveTol = 1e-6;
constexpr double kCertificateRounding = 1e-9;

Verdict solver_equivalence() {
  auto rng = make_stream(2, StreamTag::data);
  std::uniform_int_distribution<int> dim(2, 20);
  std::uniform_int_distribution<std::size_t> count(1, 30);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_dist = 0.0;
  double worst_ratio = 0.0;  // true suboptimality / certificate
  int uncertified = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    const double lambda = 0.1 + unit(rng);
    const double kappa = std::pow(10.0, 3.0 * unit(rng));
    const auto q = oracle::random_quadratic(rng, d, count(rng), lambda, kappa);
    const Vector exact = q.solution();
    Vector w0(d);
    for (auto& x : w0) x = 4.0 * unit(rng) - 2.0;
    auto srng = make_stream(trial, StreamTag::solver);
    const auto tight = SolverBudget::tolerance(1e-18, 10000000);
    for (const auto& r : {agd_strongly_convex(q, w0, tight), svrg(q, w0, tight, srng)}) {
      if (!r.certified) ++uncertified;
      worst_dist = std::max(worst_dist, (r.solution - exact).norm());
    }
    for (double target : {1e-2, 1e-5, 1e-8}) {
      const auto budget = SolverBudget::tolerance(target, 10000000);
      for (const auto& r : {agd_strongly_convex(q, w0, budget), svrg(q, w0, budget, srng)}) {
        if (!r.certified) {
          ++uncertified;
          continue;
        }
        // exact for a quadratic: f(w) - f* = <w - w*, grad f(w)> / 2
        const double sub = 0.5 * (r.solution - exact).dot(q.value_grad(r.solution).second);
        worst_ratio = std::max(worst_ratio, sub / r.certified_subopt_bound);
      }
    }
  }
  const bool pass = worst_dist <= kSolveTol && worst_ratio <= 1.0 + kCertificateRounding && uncertified == 0;
  return {pass, "max dist " + fmt(worst_dist) + " tol " + fmt(kSolveTol) +
                    ", max subopt/certificate " + fmt(worst_ratio, 12) + ", uncertified " +
                    std::to_string(uncertified)};
}

// ---------------------------------------------------------------------------

Verdict sgd_equivalence() {
  std::size_t compared = 0;
  bool identical = true;
  for (Family f : {Family::logistic, Family::sigmoid, Family::squared}) {
    const auto spec = oracle::make_spec(f, Design::gaussian, 8);
    const Problem p(spec);
    for (double init : {0.0, 0.5}) {
      DriverConfig sgd;
      sgd.method = Method::sgd;
      sgd.T = 200;
      sgd.b = 32;
      sgd.lr = 0.7;
      sgd.momentum = 0.0;
      sgd.trace_every = 1;
      sgd.init_scale = init;
      DriverConfig mp = sgd;
      mp.method = Method::mp;
      mp.gamma = 0.0;
      mp.inner.kind = InnerSolver::gd_momentum;
      mp.inner.budget_mode = BudgetMode::fixed_steps;
      mp.inner.g = 1;
      mp.inner.step_size = sgd.lr;
      const auto a = run(p, sgd, context(3));
      const auto b = run(p, mp, context(3));
      identical = identical && a.iterates.size() == b.iterates.size() &&
                  a.trace.size() == b.trace.size() && a.R == b.R && a.selected == b.selected;
      for (std::size_t t = 0; identical && t < a.iterates.size(); ++t) {
        identical = a.iterates[t] == b.iterates[t];
      }
      for (std::size_t i = 0; identical && i < a.trace.size(); ++i) {
        identical = same_numbers(a.trace[i], b.trace[i]);
      }
      compared += a.iterates.size();
    }
  }
  return {identical, std::to_string(compared) + " iterates compared, exact equality " +
                         (identical ? "holds" : "violated")};
}

// ---------------------------------------------------------------------------

constexpr double kGradBoundSlack = 1.2;

Verdict gradient_norm_inequality() {
  auto spec = oracle::make_spec(Family::quadratic, Design::gaussian, 5, 1.0);
  spec.curvature = (Vector(5) << 0.5, 1.0, 1.5, 2.0, 2.5).finished();
  spec.beta = 2.5;
  spec.variance_bound = spec.curvature.squaredNorm();
  const Problem p(spec);
  const double gamma = 1.0;
  DriverConfig c;
  c.method = Method::mp;
  c.T = 200;
  c.b = 16;
  c.gamma = gamma;
  c.inner.kind = InnerSolver::agd;
  c.inner.target = 1e-6;
  const auto r = run(p, c, context(4));
  if (r.status != RunStatus::ok) return {false, "run diverged"};
  const Vector& h = spec.curvature;
  double grad = 0.0;
  double move = 0.0;
  double eps = 0.0;
  Vector prev = r.w0;
  for (const Vector& w : r.iterates) {
    grad += oracle::quadratic_grad(spec, w).squaredNorm();
    move += (prev - w).squaredNorm();
    // suboptimality in phi(w) + gamma/2 ||w - prev||^2, exact for the quadratic family
    const Vector center = (h.cwiseProduct(spec.w_true) + gamma * prev).array() / (h.array() + gamma);
    eps += 0.5 * ((h.array() + gamma) * (w - center).array().square()).sum();
    prev = w;
  }
  const double n = static_cast<double>(r.iterates.size());
  grad /= n;
  move /= n;
  eps /= n;
  const double rhs = kGradBoundSlack * (2.0 * gamma * gamma * move + 4.0 * (spec.beta + gamma) * eps);
  return {grad <= rhs, "mean grad^2 " + fmt(grad) + " <= " + fmt(rhs) + " (eps " + fmt(eps) +
                           ", inner target " + fmt(r.target) + ")"};
}

// ---------------------------------------------------------------------------

constexpr double kStabilitySlack = 1.2;

Verdict stability_bound() {
  const auto spec = oracle::make_spec(Family::quadratic, Design::gaussian, 2, 1.0);
  const Problem p(spec);
  const double gamma = 1.0;
  const double v2 = spec.variance_bound;
  const Vector center = Vector::Zero(2);
  std::vector<double> gaps;
  bool within = true;
  std::string detail;
  for (std::size_t b : {8, 32, 128}) {
    auto rng = make_stream(5 + b, StreamTag::data);
    double sum = 0.0;
    const int reps = 10000;
    for (int k = 0; k < reps; ++k) {
      auto obj = make_prox_objective(p, p.draw_batch(rng, b), center, gamma);
      const auto sol = agd_strongly_convex(obj, center, SolverBudget::tolerance(1e-20));
      const double empirical = batch_value_grad(p, obj.batch(), sol.solution).first;
      sum += oracle::quadratic_phi(spec, sol.solution) - empirical;
    }
    const double gap = sum / reps;
    const double bound = kStabilitySlack * 8.0 * v2 / ((gamma - spec.sigma) * static_cast<double>(b));
    within = within && gap <= bound;
    gaps.push_back(gap);
    detail += "b=" + std::to_string(b) + ": " + fmt(gap) + " <= " + fmt(bound) + "; ";
  }
  const bool ordered = gaps[0] > gaps[1] && gaps[1] > gaps[2];
  return {within && ordered, detail + (ordered ? "strictly decreasing" : "not decreasing")};
}

// ---------------------------------------------------------------------------

constexpr double kInnerSlack = 2.0;
constexpr double kInnerConstant = 200.0;

Verdict inner_loop_bound() {
  const auto spec = oracle::make_spec(Family::quadratic, Design::gaussian, 5, 1.0);
  const Problem p(spec);
  const double gamma = 1.0;
  const std::size_t m = 8;
  std::map<std::size_t, double> medians;
  bool within = true;
  std::string detail;
  for (std::size_t S : {4, 16}) {
    DriverConfig c;
    c.method = Method::mp_mem;
    c.T = 1;
    c.m = m;
    c.S = S;
    c.gamma = gamma;
    c.inner.kind = InnerSolver::agd;
    std::vector<double> subopt;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const auto r = run(p, c, context(seed));
      const Vector h = oracle::curvature_of(spec);
      const Vector target = (h.cwiseProduct(spec.w_true) + gamma * r.w0).array() / (h.array() + gamma);
      subopt.push_back(0.5 * ((h.array() + gamma) * (r.iterates[0] - target).array().square()).sum());
    }
    medians[S] = median(subopt);
    const double bound = kInnerSlack * kInnerConstant * spec.variance_bound /
                         ((gamma - spec.sigma) * static_cast<double>(m * S));
    within = within && medians[S] <= bound;
    detail += "S=" + std::to_string(S) + ": " + fmt(medians[S]) + " <= " + fmt(bound) + "; ";
  }
  const bool improves = medians[16] < medians[4];
  return {within && improves, detail + (improves ? "S=16 below S=4" : "S=16 not below S=4")};
}

// ---------------------------------------------------------------------------

constexpr double kLargeBatchGap = 0.10;
constexpr std::size_t kBudget = 200000;

Verdict large_batch_trend() {
  auto cfg = load_config(std::string(MBPROX_CONFIG_DIR) + "/diagnose_sigmoid.json");
  const Problem analytic(cfg.problem);
  auto hrng = make_stream(999, StreamTag::holdout);
  const auto holdout = std::make_shared<const Batch>(analytic.draw_batch(hrng, 100000));

  // SGD: learning rate and momentum chosen per batch size on pilot seeds.
  auto tune = [&](std::size_t b, RunResult* pilot) {
    double best = std::numeric_limits<double>::infinity();
    DriverConfig chosen;
    for (double lr : {0.001, 0.01, 0.05, 0.1, 0.5}) {
      for (double mom : {0.0, 0.5, 0.8, 0.9, 0.99, 0.995}) {
        DriverConfig d;
        d.method = Method::sgd;
        d.b = b;
        d.T = kBudget / b;
        d.lr = lr;
        d.momentum = mom;
        d.trace_every = d.T;
        double total = 0.0;
        RunResult last;
        for (std::uint64_t s : {101, 102, 103}) {
          last = run(analytic, d, context(s, holdout));
          total += last.status == RunStatus::ok ? last.at_last.objective
                                                : std::numeric_limits<double>::infinity();
        }
        if (total < best) {
          best = total;
          chosen = d;
          if (pilot) *pilot = std::move(last);
        }
      }
    }
    return chosen;
  };
  RunResult pilot;
  const DriverConfig small = tune(200, &pilot);
  const DriverConfig large = tune(10000, nullptr);

  // Curvature and noise levels measured along the tuned pilot trajectory.
  ProbeOptions po;
  po.probes = 200;
  po.averaging = 200;
  po.trajectory_fraction = 1.0;
  po.trajectory = {pilot.w0};
  for (std::size_t i = 99; i < pilot.iterates.size(); i += 100) po.trajectory.push_back(pilot.iterates[i]);
  ProblemSpec measured = cfg.problem;
  measured.sigma = estimate_almost_convexity(analytic, po, 1);
  measured.variance_bound = estimate_variance(analytic, po.trajectory, 20000, 2);
  const Problem p(measured);

  DriverConfig mp;
  mp.method = Method::mp;
  mp.b = 10000;
  mp.T = kBudget / mp.b;
  mp.gamma_mode = GammaMode::theorem1;
  mp.inner.kind = InnerSolver::agd;
  mp.trace_every = mp.T;
  std::vector<double> sgd_small, sgd_large, prox;
  double gamma = 0.0;
  bool valid = true;
  for (std::uint64_t seed = 1; seed <= 7; ++seed) {
    sgd_small.push_back(run(p, small, context(seed, holdout)).at_last.objective);
    sgd_large.push_back(run(p, large, context(seed, holdout)).at_last.objective);
    const auto r = run(p, mp, context(seed, holdout));
    gamma = r.gamma;
    valid = valid && r.schedule_valid && r.status == RunStatus::ok;
    prox.push_back(r.at_last.objective);
  }
  const double a = median(sgd_small);
  const double b = median(sgd_large);
  const double c = median(prox);
  const double gap = (c - a) / a;
  const bool degrades = b > a;
  const bool close = gap <= kLargeBatchGap;
  return {degrades && close && valid,
          "SGD b=200 (lr " + fmt(small.lr) + ", mom " + fmt(small.momentum) + ") " + fmt(a) +
              "; SGD b=1e4 (lr " + fmt(large.lr) + ", mom " + fmt(large.momentum) + ") " + fmt(b) +
              (degrades ? " worse" : " not worse") + "; MP b=1e4 (gamma " + fmt(gamma) + ") " +
              fmt(c) + ", gap " + fmt(100.0 * gap) + "% tol " + fmt(100.0 * kLargeBatchGap) + "%"};
}

// ---------------------------------------------------------------------------

Verdict regime_ordering() {
  const RegimeInputs in{0.01, 1.0, 1.0, 1.0, 0.1};
  const auto cfg = load_config(std::string(MBPROX_CONFIG_DIR) + "/regime.json");
  const RegimeInputs shipped = regime_inputs(cfg);
  const bool same_inputs = std::abs(shipped.sigma / shipped.beta - in.sigma / in.beta) < 1e-12 &&
                           shipped.V == in.V && shipped.Delta == in.Delta &&
                           shipped.epsilon == in.epsilon;
  const auto sgd = regime_row(RegimeMethod::sgd, max_efficient_batch(RegimeMethod::sgd, in), in, {});
  const auto mp = regime_row(RegimeMethod::mp_agd, max_efficient_batch(RegimeMethod::mp_agd, in), in, {});
  return {same_inputs && mp.batch_steps < sgd.batch_steps,
          "MP+AGD " + fmt(mp.batch_steps) + " steps at b=" + fmt(mp.b) + " < SGD " +
              fmt(sgd.batch_steps) + " steps at b=" + fmt(sgd.b) +
              (same_inputs ? "; shipped regime config matches" : "; shipped regime config differs")};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

Verdict determinism_and_accounting() {
  const fs::path scratch = fs::temp_directory_path() / ("mbprox_acceptance_" + std::to_string(::getpid()));
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(MBPROX_CONFIG_DIR)) {
    if (e.path().extension() == ".json") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());
  std::string failures;
  std::size_t rows = 0;
  for (const auto& path : configs) {
    const auto cfg = load_config(path);
    HarnessOptions opt;
    opt.out_dir = scratch.string();
    opt.quiet = true;
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
      fs::remove_all(scratch);
      const auto out = run_experiment(cfg, opt);
      const auto files = snapshot(scratch);
      if (pass == 0) {
        first = files;
        for (const auto& r : out.rows) {
          ++rows;
          const std::size_t expected = r.method == "mp_mem" ? r.m * r.S * r.T : r.b * r.T;
          if (r.samples_used != expected || r.status != "ok") {
            failures += " " + path.filename().string() + ":" + r.label + " samples";
          }
        }
      } else if (files != first) {
        failures += " " + path.filename().string() + " bytes";
      }
    }
  }
  fs::remove_all(scratch);
  return {failures.empty() && !configs.empty(),
          std::to_string(configs.size()) + " configs, " + std::to_string(rows) +
              " summary rows" + (failures.empty() ? ", reruns identical" : ", failures:" + failures)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "gradient correctness", 5, gradient_correctness},
      {"AC2", "solver oracle equivalence", 30, solver_equivalence},
      {"AC3", "SGD equivalence identity", 60, sgd_equivalence},
      {"AC4", "gradient-norm inequality", 60, gradient_norm_inequality},
      {"AC5", "stability bound", 120, stability_bound},
      {"AC6", "memory-efficient inner loop bound", 120, inner_loop_bound},
      {"AC7", "large-minibatch sample-efficiency trend", 600, large_batch_trend},
      {"AC8", "regime-table ordering", 1, regime_ordering},
      {"AC9", "determinism and accounting", 60, determinism_and_accounting},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.time_limit_s;
    const bool pass = v.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS " : "FAIL ") << c.id << " " << c.title << ": " << v.detail << " ["
              << fmt(secs) << " s, limit " << fmt(c.time_limit_s) << " s]" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
