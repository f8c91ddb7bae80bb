#pragma once

#include "mbprox/cost_model.hpp"
#include "mbprox/trace.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mbprox::csv {

/// 17 significant digits: doubles survive a write/read round trip exactly.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw InvalidInput("csv: not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end == s.c_str() || *end != '\0' || s[0] == '-') {
    throw InvalidInput("csv: not a nonnegative integer: '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  return out;
}

template <class Range>
std::string join(const Range& fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out.push_back(',');
    out += f;
    first = false;
  }
  return out;
}

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{
      "run_id",      "seed",          "method",           "t",
      "s",           "samples_used",  "batch_grad_evals", "single_grad_evals",
      "sim_runtime", "energy",        "pop_obj_est",      "grad_norm_sq_est",
      "quality_flag"};
  return cols;
}

inline void write_trace(std::ostream& out, const Trace& trace) {
  out << join(trace_columns()) << '\n';
  for (const auto& r : trace) {
    out << r.run_id << ',' << r.seed << ',' << r.method << ',' << r.t << ',' << r.s << ','
        << r.samples_used << ',' << r.batch_grad_evals << ',' << r.single_grad_evals << ','
        << number(r.sim_runtime) << ',' << number(r.energy) << ',' << number(r.pop_obj_est) << ','
        << number(r.grad_norm_sq_est) << ',' << to_string(r.quality_flag) << '\n';
  }
}

inline Trace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split(line) != trace_columns()) {
    throw InvalidInput("csv: trace header does not match the expected columns");
  }
  Trace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != trace_columns().size()) throw InvalidInput("csv: wrong field count in trace row");
    TraceRecord r;
    r.run_id = f[0];
    r.seed = parse_uint(f[1]);
    r.method = f[2];
    r.t = parse_uint(f[3]);
    r.s = parse_uint(f[4]);
    r.samples_used = parse_uint(f[5]);
    r.batch_grad_evals = parse_uint(f[6]);
    r.single_grad_evals = parse_uint(f[7]);
    r.sim_runtime = parse_double(f[8]);
    r.energy = parse_double(f[9]);
    r.pop_obj_est = parse_double(f[10]);
    r.grad_norm_sq_est = parse_double(f[11]);
    const auto flag = quality_flag_from_string(f[12]);
    if (!flag) throw InvalidInput("csv: unknown quality flag '" + f[12] + "'");
    r.quality_flag = *flag;
    trace.push_back(std::move(r));
  }
  return trace;
}

/// One replica of one configured method.
struct SummaryRow {
  std::string run_id;
  std::string label;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t b = 0;
  std::size_t m = 0;
  std::size_t S = 0;
  std::size_t T = 0;
  std::string gamma_setting;  // "theorem1" or the fixed value
  double gamma = 0.0;
  std::size_t g = 0;          // 0 unless the inner budget is a fixed step count
  std::string inner_solver;   // empty for sgd
  double lr = 0.0;            // sgd only
  std::size_t samples_used = 0;
  std::size_t batch_grad_evals = 0;
  std::size_t single_grad_evals = 0;
  double sim_runtime = 0.0;
  double energy = 0.0;
  std::size_t R = 0;
  double obj_at_R = 0.0;
  double grad_norm_sq_at_R = 0.0;
  double obj_last = 0.0;
  double grad_norm_sq_last = 0.0;
  std::string status;
  std::string problem_hash;
  std::string trace_file;

  bool operator==(const SummaryRow&) const = default;
};

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{
      "run_id",        "label",       "method",           "seed",
      "b",             "m",           "S",                "T",
      "gamma_setting", "gamma",       "g",                "inner_solver",
      "lr",            "samples_used", "batch_grad_evals", "single_grad_evals",
      "sim_runtime",   "energy",      "R",                "obj_at_R",
      "grad_norm_sq_at_R", "obj_last", "grad_norm_sq_last", "status",
      "problem_hash",  "trace_file"};
  return cols;
}

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << join(summary_columns()) << '\n';
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.label << ',' << r.method << ',' << r.seed << ',' << r.b << ','
        << r.m << ',' << r.S << ',' << r.T << ',' << r.gamma_setting << ',' << number(r.gamma)
        << ',' << r.g << ',' << r.inner_solver << ',' << number(r.lr) << ',' << r.samples_used
        << ',' << r.batch_grad_evals << ',' << r.single_grad_evals << ',' << number(r.sim_runtime)
        << ',' << number(r.energy) << ',' << r.R << ',' << number(r.obj_at_R) << ','
        << number(r.grad_norm_sq_at_R) << ',' << number(r.obj_last) << ','
        << number(r.grad_norm_sq_last) << ',' << r.status << ',' << r.problem_hash << ','
        << r.trace_file << '\n';
  }
}

inline std::vector<SummaryRow> read_summary(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split(line) != summary_columns()) {
    throw InvalidInput("csv: summary header does not match the expected columns");
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != summary_columns().size()) throw InvalidInput("csv: wrong field count in summary row");
    SummaryRow r;
    std::size_t i = 0;
    r.run_id = f[i++];
    r.label = f[i++];
    r.method = f[i++];
    r.seed = parse_uint(f[i++]);
    r.b = parse_uint(f[i++]);
    r.m = parse_uint(f[i++]);
    r.S = parse_uint(f[i++]);
    r.T = parse_uint(f[i++]);
    r.gamma_setting = f[i++];
    r.gamma = parse_double(f[i++]);
    r.g = parse_uint(f[i++]);
    r.inner_solver = f[i++];
    r.lr = parse_double(f[i++]);
    r.samples_used = parse_uint(f[i++]);
    r.batch_grad_evals = parse_uint(f[i++]);
    r.single_grad_evals = parse_uint(f[i++]);
    r.sim_runtime = parse_double(f[i++]);
    r.energy = parse_double(f[i++]);
    r.R = parse_uint(f[i++]);
    r.obj_at_R = parse_double(f[i++]);
    r.grad_norm_sq_at_R = parse_double(f[i++]);
    r.obj_last = parse_double(f[i++]);
    r.grad_norm_sq_last = parse_double(f[i++]);
    r.status = f[i++];
    r.problem_hash = f[i++];
    r.trace_file = f[i++];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_regime_table(std::ostream& out, const RegimeInputs& in,
                               const std::vector<RegimeRow>& rows, const CostConstants& c) {
  out << "# asymptotic units: constants set to 1, MP rows carry log factor ln(1/epsilon)\n";
  out << "# runtime = batch_steps * tau_b + serial_steps * tau_1; energy in single-sample gradients\n";
  out << "# sigma=" << number(in.sigma) << " beta=" << number(in.beta) << " V=" << number(in.V)
      << " Delta=" << number(in.Delta) << " epsilon=" << number(in.epsilon)
      << " tau_b=" << number(c.tau_b) << " tau_1=" << number(c.tau_1) << '\n';
  out << "# b_sgd_max=" << number(max_efficient_batch(RegimeMethod::sgd, in))
      << " b_mp_max=" << number(max_efficient_batch(RegimeMethod::mp_agd, in)) << '\n';
  out << "method,b,regime,batch_steps,serial_steps,runtime,energy,sample_efficient\n";
  for (const auto& r : rows) {
    out << to_string(r.method) << ',' << number(r.b) << ',' << r.regime << ','
        << number(r.batch_steps) << ',' << number(r.serial_steps) << ',' << number(r.runtime)
        << ',' << number(r.energy) << ',' << (r.sample_efficient ? "true" : "false") << '\n';
  }
}

}  // namespace mbprox::csv
