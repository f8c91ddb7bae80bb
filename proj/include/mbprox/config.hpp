#pragma once

#include "mbprox/cost_model.hpp"
#include "mbprox/diagnostics.hpp"
#include "mbprox/drivers.hpp"
#include "mbprox/problems.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mbprox {

using json = nlohmann::json;

/// Malformed or inconsistent configuration. The message names the offending
/// location as a JSON pointer, or the line for syntax errors.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct RegimeBlock {
  double epsilon = 0.1;
  std::optional<double> Delta;
  std::vector<double> b_grid;
};

struct DiagnosticsBlock {
  ProbeOptions probes;
  std::size_t variance_points = 10;
  std::size_t n_samples = 2000;
  std::uint64_t seed = 1;
};

struct MethodEntry {
  DriverConfig driver;
  std::string label;  // used in run ids and file names
};

struct ExperimentConfig {
  ProblemSpec problem;
  json problem_canonical;  // resolved problem block, hashed into summaries
  std::vector<MethodEntry> methods;
  CostConstants cost;
  std::vector<std::uint64_t> seeds{1};
  std::size_t workers = 1;
  std::string output_dir;
  std::size_t trace_cadence = 0;
  std::optional<RegimeBlock> regime;
  DiagnosticsBlock diagnostics;
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed so that the
// rest can be rejected as unknown.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string where(const std::string& key = "") const {
    const std::string p = key.empty() ? path_ : path_ + "/" + key;
    return p.empty() ? "/" : p;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": required field missing");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
        return v.get<double>();
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0 &&
            std::is_unsigned_v<T>) {
          throw ConfigError(where(key) + ": expected a nonnegative integer");
        }
        return v.get<T>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
        return v.get<std::string>();
      } else {
        return v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  template <class T>
  std::optional<T> get_opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  Vector vector(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(where(key) + "/" + std::to_string(i) + ": expected a number");
      out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void check(bool cond, const std::string& where, const std::string& what) {
  if (!cond) throw ConfigError(where + ": " + what);
}

inline Vector ground_truth(std::uint64_t seed, int dim, double norm) {
  auto rng = make_stream(seed, StreamTag::truth);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(dim);
  for (int j = 0; j < dim; ++j) w[j] = normal(rng);
  return w * (norm / w.norm());
}

inline ProblemSpec parse_problem(const json& j, json& canonical) {
  StrictObject o(j, "/problem");
  ProblemSpec p;
  const std::string fam = o.get<std::string>("family");
  const auto family = family_from_string(fam);
  check(family.has_value(), o.where("family"),
        "unknown family '" + fam + "' (logistic, squared, sigmoid, two_layer, quadratic)");
  p.family = *family;
  p.dim = o.get<int>("dim");
  check(p.dim >= 1, o.where("dim"), "must be positive");
  p.input_dim = o.get_or<int>("input_dim", 0);
  p.hidden = o.get_or<int>("hidden", 0);
  if (o.has("design")) {
    const std::string d = o.get<std::string>("design");
    const auto design = design_from_string(d);
    check(design.has_value(), o.where("design"), "unknown design '" + d + "' (gaussian, bounded)");
    p.design = *design;
  }
  const json& wt = o.raw("w_true");
  if (wt.is_array()) {
    p.w_true = o.vector("w_true");
    check(p.w_true.size() == p.dim, o.where("w_true"), "must have dim entries");
  } else {
    StrictObject w(wt, o.where("w_true"));
    const auto seed = w.get<std::uint64_t>("seed");
    const double norm = w.get<double>("norm");
    check(norm >= 0.0, w.where("norm"), "must be nonnegative");
    w.finish();
    p.w_true = norm == 0.0 ? Vector::Zero(p.dim) : ground_truth(seed, p.dim, norm);
  }
  p.feature_scale = o.get_or<double>("feature_scale", 1.0);
  p.noise_std = o.get_or<double>("noise_std", 0.0);
  if (o.has("curvature")) p.curvature = o.vector("curvature");
  p.phi_star_hint = o.get_or<double>("phi_star_hint", 0.0);
  p.holdout_size = o.get_or<std::size_t>("holdout_size", 100000);
  check(p.holdout_size >= 1, o.where("holdout_size"), "must be positive");

  AnalyticConstants a;
  if (p.family != Family::two_layer || p.input_dim >= 1) a = analytic_constants(p);
  auto constant = [&](const char* key, const std::optional<double>& analytic) {
    if (o.has(key)) return o.get<double>(key);
    check(analytic.has_value(), o.where(key),
          "required for this family (no closed-form value); estimate it with `diagnose`");
    return *analytic;
  };
  p.sigma = constant("sigma", a.sigma);
  p.beta = constant("beta", a.beta);
  p.variance_bound = constant("variance_bound", a.variance_bound);
  o.finish();
  try {
    validate(p);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("/problem: ") + e.what());
  }

  canonical = json::object();
  canonical["family"] = to_string(p.family);
  canonical["dim"] = p.dim;
  canonical["input_dim"] = p.input_dim;
  canonical["hidden"] = p.hidden;
  canonical["design"] = to_string(p.design);
  canonical["w_true"] = std::vector<double>(p.w_true.data(), p.w_true.data() + p.w_true.size());
  canonical["feature_scale"] = p.feature_scale;
  canonical["noise_std"] = p.noise_std;
  if (p.curvature.size()) {
    canonical["curvature"] =
        std::vector<double>(p.curvature.data(), p.curvature.data() + p.curvature.size());
  }
  canonical["sigma"] = p.sigma;
  canonical["beta"] = p.beta;
  canonical["variance_bound"] = p.variance_bound;
  canonical["phi_star_hint"] = p.phi_star_hint;
  canonical["holdout_size"] = p.holdout_size;
  return p;
}

inline std::string format_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

inline MethodEntry parse_method(const json& j, const std::string& path) {
  StrictObject o(j, path);
  MethodEntry e;
  DriverConfig& c = e.driver;
  const std::string name = o.get<std::string>("name");
  if (name == "mp") c.method = Method::mp;
  else if (name == "mp_mem") c.method = Method::mp_mem;
  else if (name == "sgd") c.method = Method::sgd;
  else throw ConfigError(o.where("name") + ": unknown method '" + name + "' (mp, mp_mem, sgd)");
  c.T = o.get<std::size_t>("T");
  check(c.T >= 1, o.where("T"), "must be positive");
  if (c.method == Method::mp_mem) {
    c.m = o.get<std::size_t>("m");
    c.S = o.get<std::size_t>("S");
    check(c.m >= 1, o.where("m"), "must be positive");
    check(c.S >= 1, o.where("S"), "must be positive");
  } else {
    c.b = o.get<std::size_t>("b");
    check(c.b >= 1, o.where("b"), "must be positive");
  }
  c.init_scale = o.get_or<double>("init_scale", 0.0);
  check(c.init_scale >= 0.0, o.where("init_scale"), "must be nonnegative");
  std::ostringstream label;
  label << name;
  if (c.method == Method::sgd) {
    c.lr = o.get<double>("lr");
    check(c.lr > 0.0, o.where("lr"), "must be positive");
    c.momentum = o.get_or<double>("momentum", 0.0);
    check(c.momentum >= 0.0 && c.momentum < 1.0, o.where("momentum"), "must lie in [0, 1)");
    label << "_b" << c.b << "_lr" << format_number(c.lr);
    if (c.momentum != 0.0) label << "_mom" << format_number(c.momentum);
  } else {
    const std::string mode = o.get<std::string>("gamma_mode");
    if (mode == "theorem1") {
      c.gamma_mode = GammaMode::theorem1;
    } else if (mode == "fixed") {
      c.gamma_mode = GammaMode::fixed;
      c.gamma = o.get<double>("gamma_value");
      check(c.gamma >= 0.0, o.where("gamma_value"), "must be nonnegative");
    } else {
      throw ConfigError(o.where("gamma_mode") + ": expected theorem1 or fixed");
    }
    c.Delta = o.get_opt<double>("Delta");
    if (c.Delta) check(*c.Delta > 0.0, o.where("Delta"), "must be positive");
    const std::string solver = o.get_or<std::string>("inner_solver", "agd");
    if (solver == "agd") c.inner.kind = InnerSolver::agd;
    else if (solver == "svrg") c.inner.kind = InnerSolver::svrg;
    else if (solver == "gd_momentum") c.inner.kind = InnerSolver::gd_momentum;
    else throw ConfigError(o.where("inner_solver") + ": expected agd, svrg or gd_momentum");
    const std::string budget = o.get_or<std::string>("budget", "tolerance");
    if (budget == "tolerance") c.inner.budget_mode = BudgetMode::tolerance;
    else if (budget == "fixed_steps") c.inner.budget_mode = BudgetMode::fixed_steps;
    else throw ConfigError(o.where("budget") + ": expected tolerance or fixed_steps");
    if (c.inner.budget_mode == BudgetMode::fixed_steps) {
      c.inner.g = o.get<std::size_t>("g");
      check(c.inner.g >= 1, o.where("g"), "must be positive");
    }
    c.inner.max_steps = o.get_or<std::size_t>("max_inner_steps", 100000);
    check(c.inner.max_steps >= 1, o.where("max_inner_steps"), "must be positive");
    c.inner.step_size = o.get_opt<double>("inner_step_size");
    if (c.inner.step_size) check(*c.inner.step_size > 0.0, o.where("inner_step_size"), "must be positive");
    c.inner.momentum = o.get_or<double>("inner_momentum", 0.0);
    check(c.inner.momentum >= 0.0 && c.inner.momentum < 1.0, o.where("inner_momentum"),
          "must lie in [0, 1)");
    c.inner.target = o.get_opt<double>("inner_target");
    if (c.inner.target) check(*c.inner.target > 0.0, o.where("inner_target"), "must be positive");
    if (c.method == Method::mp_mem) label << "_m" << c.m << "_S" << c.S;
    else label << "_b" << c.b;
    if (c.gamma_mode == GammaMode::theorem1) label << "_gthm";
    else label << "_gamma" << format_number(c.gamma);
    label << "_" << solver;
    if (c.inner.budget_mode == BudgetMode::fixed_steps) label << "_g" << c.inner.g;
  }
  label << "_T" << c.T;
  e.label = o.get_or<std::string>("label", label.str());
  for (char ch : e.label) {
    check(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.',
          o.where("label"), "may only contain letters, digits, '_', '-' and '.'");
  }
  o.finish();
  return e;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
  detail::StrictObject o(root, "");
  ExperimentConfig cfg;
  cfg.problem = detail::parse_problem(o.raw("problem"), cfg.problem_canonical);

  const json& m = o.raw("method");
  if (m.is_array()) {
    detail::check(!m.empty(), "/method", "must not be empty");
    for (std::size_t i = 0; i < m.size(); ++i) {
      cfg.methods.push_back(detail::parse_method(m[i], "/method/" + std::to_string(i)));
    }
  } else {
    cfg.methods.push_back(detail::parse_method(m, "/method"));
  }
  std::set<std::string> labels;
  for (const auto& e : cfg.methods) {
    detail::check(labels.insert(e.label).second, "/method", "duplicate run label '" + e.label + "'");
  }

  if (o.has("cost")) {
    detail::StrictObject c(o.raw("cost"), "/cost");
    cfg.cost.tau_b = c.get_or<double>("tau_b", 1.0);
    cfg.cost.tau_1 = c.get_or<double>("tau_1", 1.0);
    cfg.cost.machines = c.get_or<std::size_t>("machines", 1);
    c.finish();
    try {
      validate(cfg.cost);
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("/cost: ") + e.what());
    }
  }

  if (o.has("replication")) {
    detail::StrictObject r(o.raw("replication"), "/replication");
    if (r.has("seeds")) cfg.seeds = r.get<std::vector<std::uint64_t>>("seeds");
    cfg.workers = r.get_or<std::size_t>("workers", 1);
    detail::check(cfg.workers >= 1, r.where("workers"), "must be positive");
    r.finish();
  }
  detail::check(!cfg.seeds.empty(), "/replication/seeds", "must not be empty");
  detail::check(std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() == cfg.seeds.size(),
                "/replication/seeds", "must be distinct");

  if (o.has("output")) {
    detail::StrictObject out(o.raw("output"), "/output");
    cfg.output_dir = out.get_or<std::string>("directory", "");
    cfg.trace_cadence = out.get_or<std::size_t>("trace_cadence", 0);
    out.finish();
  }
  for (auto& e : cfg.methods) e.driver.trace_every = cfg.trace_cadence;

  if (o.has("regime")) {
    detail::StrictObject r(o.raw("regime"), "/regime");
    RegimeBlock rb;
    rb.epsilon = r.get<double>("epsilon");
    detail::check(rb.epsilon > 0.0 && rb.epsilon < 1.0, r.where("epsilon"), "must lie in (0, 1)");
    rb.Delta = r.get_opt<double>("Delta");
    if (rb.Delta) detail::check(*rb.Delta > 0.0, r.where("Delta"), "must be positive");
    if (r.has("b_grid")) rb.b_grid = r.get<std::vector<double>>("b_grid");
    for (double b : rb.b_grid) detail::check(b >= 1.0, r.where("b_grid"), "entries must be at least 1");
    r.finish();
    cfg.regime = rb;
  }

  if (o.has("diagnostics")) {
    detail::StrictObject d(o.raw("diagnostics"), "/diagnostics");
    auto& db = cfg.diagnostics;
    db.probes.probes = d.get_or<std::size_t>("probes", db.probes.probes);
    db.probes.box = d.get_or<double>("box", db.probes.box);
    db.probes.averaging = d.get_or<std::size_t>("averaging", db.probes.averaging);
    db.variance_points = d.get_or<std::size_t>("variance_points", db.variance_points);
    db.n_samples = d.get_or<std::size_t>("n_samples", db.n_samples);
    db.seed = d.get_or<std::uint64_t>("seed", db.seed);
    d.finish();
    detail::check(db.probes.probes >= 2, "/diagnostics/probes", "must be at least 2");
    detail::check(db.probes.box > 0.0, "/diagnostics/box", "must be positive");
    detail::check(db.n_samples >= 2, "/diagnostics/n_samples", "must be at least 2");
  }
  o.finish();
  return cfg;
}

inline json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "at line L, column C"
    throw ConfigError(std::string("syntax error: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(parse_json_text(ss.str()));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// FNV-1a over the canonical problem block.
inline std::string problem_hash(const json& canonical) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << h;
  return s.str();
}

}  // namespace mbprox
