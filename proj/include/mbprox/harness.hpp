#pragma once

#include "mbprox/config.hpp"
#include "mbprox/csv.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>

namespace mbprox {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_divergence = 3 };

struct HarnessOptions {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool quiet = false;
};

/// --out, then the config's output directory, then $MBPROX_OUT_DIR, then ./mbprox_out.
inline fs::path resolve_out_dir(const ExperimentConfig& cfg, const HarnessOptions& opt) {
  if (opt.out_dir) return *opt.out_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("MBPROX_OUT_DIR"); env && *env) return env;
  return "mbprox_out";
}

namespace detail {

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

inline csv::SummaryRow summarize(const MethodEntry& e, std::uint64_t seed, const RunResult& r,
                                 const std::string& hash, const std::string& trace_file) {
  const DriverConfig& c = e.driver;
  csv::SummaryRow row;
  row.run_id = e.label + "_seed" + std::to_string(seed);
  row.label = e.label;
  row.method = std::string(to_string(c.method));
  row.seed = seed;
  row.b = c.method == Method::mp_mem ? 0 : c.b;
  row.m = c.method == Method::mp_mem ? c.m : 0;
  row.S = c.method == Method::mp_mem ? c.S : 0;
  row.T = c.T;
  if (c.method == Method::sgd) {
    row.gamma_setting = "0";
    row.lr = c.lr;
  } else {
    row.gamma_setting = c.gamma_mode == GammaMode::theorem1 ? "theorem1" : csv::number(c.gamma);
    row.inner_solver = std::string(to_string(c.inner.kind));
    if (c.inner.budget_mode == BudgetMode::fixed_steps) row.g = c.inner.g;
  }
  row.gamma = r.gamma;
  row.samples_used = r.samples_used;
  if (!r.trace.empty()) {
    const auto& last = r.trace.back();
    row.batch_grad_evals = last.batch_grad_evals;
    row.single_grad_evals = last.single_grad_evals;
    row.sim_runtime = last.sim_runtime;
    row.energy = last.energy;
  }
  row.R = r.R;
  row.obj_at_R = r.at_selected.objective;
  row.grad_norm_sq_at_R = r.at_selected.grad_norm_sq;
  row.obj_last = r.at_last.objective;
  row.grad_norm_sq_last = r.at_last.grad_norm_sq;
  row.status = r.status == RunStatus::ok ? "ok" : "diverged";
  row.problem_hash = hash;
  row.trace_file = trace_file;
  return row;
}

inline std::string gnuplot_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "''";
    else out.push_back(ch);
  }
  return out + "'";
}

/// Objective against fresh samples and against batch-gradient updates, one curve per file.
inline std::string plot_script(const std::vector<std::pair<std::string, std::string>>& curves,
                               const std::string& image) {
  std::ostringstream gp;
  gp << "# gnuplot script: holdout objective vs. fresh samples and vs. updates\n";
  gp << "set datafile separator ','\n";
  gp << "set terminal pngcairo size 1400,550\n";
  gp << "set output " << gnuplot_quote(image) << "\n";
  gp << "set multiplot layout 1,2\n";
  gp << "set logscale x\nset key outside bottom center\nset ylabel 'holdout objective'\n";
  const std::pair<const char*, int> panels[] = {{"# fresh samples", 6}, {"# batch gradient updates", 7}};
  for (const auto& [xlabel, col] : panels) {
    gp << "set xlabel '" << xlabel << "'\n";
    gp << "plot ";
    for (std::size_t i = 0; i < curves.size(); ++i) {
      if (i) gp << ", \\\n     ";
      gp << gnuplot_quote(curves[i].first) << " every ::2 using " << col
         << ":11 with lines title " << gnuplot_quote(curves[i].second);
    }
    gp << "\n";
  }
  gp << "unset multiplot\n";
  return gp.str();
}

}  // namespace detail

struct RunOutcome {
  int exit_code = exit_ok;
  fs::path out_dir;
  std::vector<fs::path> trace_files;
  fs::path summary_file;
  fs::path plot_file;
  std::vector<csv::SummaryRow> rows;
  std::vector<std::string> messages;
};

/// Runs every (method, seed) replica, writes one trace CSV per replica, one
/// summary CSV and a plot script. Replicas may run concurrently; output is
/// merged in (method, seed) order.
inline RunOutcome run_experiment(const ExperimentConfig& cfg_in, const HarnessOptions& opt) {
  ExperimentConfig cfg = cfg_in;
  if (opt.seeds) {
    require(!opt.seeds->empty(), "--seeds must not be empty");
    require(std::set<std::uint64_t>(opt.seeds->begin(), opt.seeds->end()).size() == opt.seeds->size(),
            "--seeds must be distinct");
    cfg.seeds = *opt.seeds;
  }
  RunOutcome outcome;
  outcome.out_dir = resolve_out_dir(cfg, opt);
  fs::create_directories(outcome.out_dir);
  const Problem problem(cfg.problem);
  const std::string hash = problem_hash(cfg.problem_canonical);

  struct Job {
    const MethodEntry* entry;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& e : cfg.methods) {
    for (auto seed : cfg.seeds) jobs.push_back({&e, seed});
  }
  auto run_job = [&problem, &cfg](const Job& j) {
    RunContext ctx;
    ctx.seed = j.seed;
    ctx.cost = cfg.cost;
    ctx.run_id = j.entry->label + "_seed" + std::to_string(j.seed);
    return run(problem, j.entry->driver, ctx);
  };
  // Configuration errors surface before any replica writes output.
  for (const auto& e : cfg.methods) {
    RunContext ctx;
    ctx.seed = cfg.seeds.front();
    ctx.cost = cfg.cost;
    preflight(problem, e.driver, ctx);
  }
  std::vector<RunResult> results(jobs.size());
  for (std::size_t start = 0; start < jobs.size(); start += cfg.workers) {
    const std::size_t stop = std::min(jobs.size(), start + cfg.workers);
    std::vector<std::future<RunResult>> wave;
    for (std::size_t i = start; i < stop; ++i) {
      wave.push_back(std::async(cfg.workers > 1 ? std::launch::async : std::launch::deferred,
                                run_job, jobs[i]));
    }
    for (std::size_t i = start; i < stop; ++i) results[i] = wave[i - start].get();
  }

  std::vector<std::pair<std::string, std::string>> curves;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& r = results[i];
    const std::string run_id = jobs[i].entry->label + "_seed" + std::to_string(jobs[i].seed);
    const std::string trace_name = "trace_" + run_id + ".csv";
    std::ostringstream body;
    csv::write_trace(body, r.trace);
    detail::write_file(outcome.out_dir / trace_name, body.str());
    outcome.trace_files.push_back(outcome.out_dir / trace_name);
    outcome.rows.push_back(detail::summarize(*jobs[i].entry, jobs[i].seed, r, hash, trace_name));
    curves.emplace_back(trace_name, run_id);
    if (r.status == RunStatus::diverged) {
      outcome.exit_code = exit_divergence;
      outcome.messages.push_back(run_id + ": " + r.message);
    }
  }
  std::ostringstream summary;
  csv::write_summary(summary, outcome.rows);
  outcome.summary_file = outcome.out_dir / "summary.csv";
  detail::write_file(outcome.summary_file, summary.str());
  outcome.plot_file = outcome.out_dir / "plot.gp";
  detail::write_file(outcome.plot_file, detail::plot_script(curves, "plot.png"));
  return outcome;
}

struct ComparisonRow {
  std::string label;
  std::string method;
  std::size_t b = 0;
  std::size_t m = 0;
  std::size_t S = 0;
  std::string gamma_setting;
  std::string inner_solver;
  std::size_t g = 0;
  double lr = 0.0;
  std::size_t seeds = 0;
  double median_obj_at_R = 0.0;
  double median_grad_norm_sq_at_R = 0.0;
  double median_obj_last = 0.0;
  double median_grad_norm_sq_last = 0.0;
  double median_samples_used = 0.0;
  double median_batch_grad_evals = 0.0;
  double median_sim_runtime = 0.0;
  double median_energy = 0.0;
  std::size_t rank = 0;
  std::string example_trace;  // first seed's trace, for the plot
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end(), [](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return a < b;
  });
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Medians over seeds keyed by (label, method, b, m, S, gamma setting, inner solver, g, lr), ranked
/// by the median objective at the last iterate. Throws InvalidInput if the
/// summaries describe different problems.
inline std::vector<ComparisonRow> compare_rows(
    const std::vector<std::pair<fs::path, std::vector<csv::SummaryRow>>>& summaries) {
  require(!summaries.empty(), "compare: no summaries given");
  std::string hash;
  using Key = std::tuple<std::string, std::string, std::size_t, std::size_t, std::size_t, std::string,
                         std::string, std::size_t, double>;
  std::map<Key, std::vector<std::pair<const csv::SummaryRow*, fs::path>>> groups;
  std::vector<Key> order;
  for (const auto& [path, rows] : summaries) {
    for (const auto& r : rows) {
      if (hash.empty()) hash = r.problem_hash;
      require(r.problem_hash == hash, "compare: summaries describe different problems (" + hash +
                                          " vs " + r.problem_hash + " in " + path.string() + ")");
      Key k{r.label, r.method, r.b, r.m, r.S, r.gamma_setting, r.inner_solver, r.g, r.lr};
      auto [it, fresh] = groups.try_emplace(k);
      if (fresh) order.push_back(k);
      it->second.emplace_back(&r, path.parent_path() / r.trace_file);
    }
  }
  std::vector<ComparisonRow> out;
  for (const auto& k : order) {
    const auto& members = groups.at(k);
    ComparisonRow c;
    std::tie(c.label, c.method, c.b, c.m, c.S, c.gamma_setting, c.inner_solver, c.g, c.lr) = k;
    c.seeds = members.size();
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& [r, p] : members) v.push_back(static_cast<double>(field(*r)));
      return median(std::move(v));
    };
    c.median_obj_at_R = med([](const auto& r) { return r.obj_at_R; });
    c.median_grad_norm_sq_at_R = med([](const auto& r) { return r.grad_norm_sq_at_R; });
    c.median_obj_last = med([](const auto& r) { return r.obj_last; });
    c.median_grad_norm_sq_last = med([](const auto& r) { return r.grad_norm_sq_last; });
    c.median_samples_used = med([](const auto& r) { return r.samples_used; });
    c.median_batch_grad_evals = med([](const auto& r) { return r.batch_grad_evals; });
    c.median_sim_runtime = med([](const auto& r) { return r.sim_runtime; });
    c.median_energy = med([](const auto& r) { return r.energy; });
    c.example_trace = members.front().second.string();
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (std::isnan(a.median_obj_last)) return false;
    if (std::isnan(b.median_obj_last)) return true;
    return a.median_obj_last < b.median_obj_last;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

inline void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "rank,label,method,b,m,S,gamma_setting,inner_solver,g,lr,seeds,median_obj_at_R,median_grad_norm_sq_at_R,"
         "median_obj_last,median_grad_norm_sq_last,median_samples_used,median_batch_grad_evals,"
         "median_sim_runtime,median_energy\n";
  for (const auto& r : rows) {
    out << r.rank << ',' << r.label << ',' << r.method << ',' << r.b << ',' << r.m << ',' << r.S << ','
        << r.gamma_setting << ',' << r.inner_solver << ',' << r.g << ',' << csv::number(r.lr) << ',' << r.seeds << ','
        << csv::number(r.median_obj_at_R) << ',' << csv::number(r.median_grad_norm_sq_at_R) << ','
        << csv::number(r.median_obj_last) << ',' << csv::number(r.median_grad_norm_sq_last) << ','
        << csv::number(r.median_samples_used) << ',' << csv::number(r.median_batch_grad_evals)
        << ',' << csv::number(r.median_sim_runtime) << ',' << csv::number(r.median_energy) << '\n';
  }
}

inline std::vector<csv::SummaryRow> load_summary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open summary '" + path.string() + "'");
  return csv::read_summary(in);
}

/// Writes compare.csv and compare.gp into out_dir.
inline std::vector<ComparisonRow> compare(const std::vector<fs::path>& summary_paths,
                                          const fs::path& out_dir) {
  require(summary_paths.size() >= 2, "compare: need at least two summary files");
  std::vector<std::pair<fs::path, std::vector<csv::SummaryRow>>> summaries;
  for (const auto& p : summary_paths) summaries.emplace_back(fs::absolute(p), load_summary(p));
  auto rows = compare_rows(summaries);
  fs::create_directories(out_dir);
  std::ostringstream table;
  write_comparison(table, rows);
  detail::write_file(out_dir / "compare.csv", table.str());
  std::vector<std::pair<std::string, std::string>> curves;
  for (const auto& r : rows) {
    std::ostringstream title;
    title << r.method << " b=" << (r.method == "mp_mem" ? r.m : r.b) << " gamma=" << r.gamma_setting
          << " g=" << r.g;
    if (r.method == "sgd") title << " lr=" << csv::number(r.lr);
    curves.emplace_back(r.example_trace, title.str());
  }
  detail::write_file(out_dir / "compare.gp", detail::plot_script(curves, "compare.png"));
  return rows;
}

struct DiagnosticsReport {
  json report;
  bool consistent = true;
};

/// Estimates the regularity constants and checks them against the configured
/// ones; also runs the finite-difference gradient check on 100 random probes.
inline DiagnosticsReport diagnose(const ExperimentConfig& cfg) {
  const Problem problem(cfg.problem);
  const auto& d = cfg.diagnostics;
  const ConstantEstimates est =
      estimate_constants(problem, d.probes, d.variance_points, d.n_samples, d.seed);
  const AnalyticConstants analytic = analytic_constants(cfg.problem, d.probes.box);

  auto rng = make_stream(d.seed, StreamTag::probes);
  std::uniform_real_distribution<double> in_box(-d.probes.box, d.probes.box);
  double grad_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector w(problem.dim());
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = in_box(rng);
    grad_err = std::max(grad_err, gradient_check(problem, w, problem.sample(rng), 1e-5));
  }

  DiagnosticsReport out;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  const auto& p = cfg.problem;
  out.report["family"] = to_string(p.family);
  out.report["design"] = to_string(p.design);
  out.report["configured"] = {{"sigma", p.sigma}, {"beta", p.beta}, {"variance_bound", p.variance_bound}};
  out.report["analytic"] = {{"sigma", opt(analytic.sigma)},
                            {"beta", opt(analytic.beta)},
                            {"variance_bound", opt(analytic.variance_bound)},
                            {"per_sample", analytic.per_sample}};
  out.report["estimates"] = {{"beta_hat", est.beta_hat},
                             {"sigma_hat", est.sigma_hat},
                             {"V_sq_hat", est.V_sq_hat},
                             {"probe_count", est.probe_count},
                             {"probe_box", est.probe_box},
                             {"averaging", d.probes.averaging}};
  out.report["gradient_check_max_error"] = grad_err;
  const bool beta_ok = est.beta_hat <= p.beta * 1.01;
  const bool sigma_ok = est.sigma_hat <= p.sigma * 1.01 + 1e-12;
  const bool var_ok = est.V_sq_hat <= p.variance_bound * 1.2;
  out.report["checks"] = {{"beta_hat_within_beta", beta_ok},
                          {"sigma_hat_within_sigma", sigma_ok},
                          {"V_sq_hat_within_variance_bound", var_ok},
                          {"gradient_check_passed", grad_err <= 1e-5}};
  out.consistent = beta_ok && sigma_ok && var_ok && grad_err <= 1e-5;
  out.report["consistent"] = out.consistent;
  out.report["constant_scale"] = analytic.per_sample ? "per_sample" : "population";
  std::string note = "max-based estimates are lower bounds on the global constants over the probe region";
  if (!analytic.per_sample && d.probes.averaging <= 1) {
    note += "; this design has population-scale constants but the probes measure single-sample "
            "curvature, so raise diagnostics.averaging before reading the beta and sigma checks";
  }
  out.report["note"] = note;
  return out;
}

/// Regime inputs from the problem constants and the regime block; Delta
/// defaults to the holdout objective at zero minus phi_star_hint.
inline RegimeInputs regime_inputs(const ExperimentConfig& cfg) {
  require(cfg.regime.has_value(), "config has no regime block");
  RegimeInputs in;
  in.sigma = cfg.problem.sigma;
  in.beta = cfg.problem.beta;
  in.V = std::sqrt(cfg.problem.variance_bound);
  in.epsilon = cfg.regime->epsilon;
  if (cfg.regime->Delta) {
    in.Delta = *cfg.regime->Delta;
  } else {
    const Problem problem(cfg.problem);
    auto rng = make_stream(cfg.seeds.front(), StreamTag::holdout);
    const Batch holdout = problem.draw_batch(rng, cfg.problem.holdout_size);
    in.Delta = population_estimates(problem, Vector::Zero(problem.dim()), holdout).objective -
               cfg.problem.phi_star_hint;
    require(in.Delta > 0.0, "regime: estimated Delta is not positive; set regime.Delta");
  }
  return in;
}

/// Default grid: powers of ten up to ten times the largest finite threshold, plus the thresholds.
inline std::vector<double> default_b_grid(const RegimeInputs& in) {
  const double b_sgd = max_efficient_batch(RegimeMethod::sgd, in);
  const double b_mp = max_efficient_batch(RegimeMethod::mp_agd, in);
  const double top = 10.0 * (std::isfinite(b_mp) ? b_mp : b_sgd);
  std::vector<double> grid;
  for (double b = 1.0; b <= top; b *= 10.0) grid.push_back(b);
  grid.push_back(std::max(1.0, b_sgd));
  if (std::isfinite(b_mp)) grid.push_back(std::max(1.0, b_mp));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(a - b) <= 1e-9 * b; }),
             grid.end());
  return grid;
}

inline std::string regime_table_csv(const ExperimentConfig& cfg) {
  const RegimeInputs in = regime_inputs(cfg);
  const std::vector<double> grid =
      cfg.regime->b_grid.empty() ? default_b_grid(in) : cfg.regime->b_grid;
  const auto rows = regime_table(in, grid, cfg.cost);
  std::ostringstream out;
  csv::write_regime_table(out, in, rows, cfg.cost);
  return out.str();
}

}  // namespace mbprox
