#pragma once

#include "mbprox/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbprox {

enum class QualityFlag { ok, nonfinite, budget_exhausted, diverged };

inline std::string_view to_string(QualityFlag f) {
  switch (f) {
    case QualityFlag::ok: return "ok";
    case QualityFlag::nonfinite: return "nonfinite";
    case QualityFlag::budget_exhausted: return "budget_exhausted";
    case QualityFlag::diverged: return "diverged";
  }
  return "?";
}

inline std::optional<QualityFlag> quality_flag_from_string(std::string_view s) {
  if (s == "ok") return QualityFlag::ok;
  if (s == "nonfinite") return QualityFlag::nonfinite;
  if (s == "budget_exhausted") return QualityFlag::budget_exhausted;
  if (s == "diverged") return QualityFlag::diverged;
  return std::nullopt;
}

/// Counters are cumulative from the start of the run. s is the inner index
/// of the memory-efficient driver and 0 otherwise.
struct TraceRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string method;
  std::size_t t = 0;
  std::size_t s = 0;
  std::size_t samples_used = 0;
  std::size_t batch_grad_evals = 0;
  std::size_t single_grad_evals = 0;
  double sim_runtime = 0.0;
  double energy = 0.0;
  double pop_obj_est = 0.0;
  double grad_norm_sq_est = 0.0;
  QualityFlag quality_flag = QualityFlag::ok;

  bool operator==(const TraceRecord&) const = default;
};

using Trace = std::vector<TraceRecord>;

/// Numeric content only; run_id and method labels are ignored.
inline bool same_numbers(const TraceRecord& a, const TraceRecord& b) {
  return a.seed == b.seed && a.t == b.t && a.s == b.s && a.samples_used == b.samples_used &&
         a.batch_grad_evals == b.batch_grad_evals && a.single_grad_evals == b.single_grad_evals &&
         a.sim_runtime == b.sim_runtime && a.energy == b.energy &&
         a.pop_obj_est == b.pop_obj_est && a.grad_norm_sq_est == b.grad_norm_sq_est &&
         a.quality_flag == b.quality_flag;
}

/// Appends a record. Non-finite values are kept and flagged; counters going
/// backwards is a caller error.
inline void trace_append(Trace& trace, TraceRecord record) {
  const bool finite = std::isfinite(record.sim_runtime) && std::isfinite(record.energy) &&
                      std::isfinite(record.pop_obj_est) && std::isfinite(record.grad_norm_sq_est);
  if (!finite && record.quality_flag == QualityFlag::ok) record.quality_flag = QualityFlag::nonfinite;
  if (!trace.empty()) {
    const TraceRecord& last = trace.back();
    require(record.samples_used >= last.samples_used &&
                record.batch_grad_evals >= last.batch_grad_evals &&
                record.single_grad_evals >= last.single_grad_evals &&
                !(record.sim_runtime < last.sim_runtime) && !(record.energy < last.energy),
            "trace_append: counters must be monotone");
  }
  trace.push_back(std::move(record));
}

}  // namespace mbprox
