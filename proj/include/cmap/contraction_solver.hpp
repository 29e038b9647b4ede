#pragma once

// Anchored fixed-point refinement of a position prior:
//
//   M_{t+1} = g(alpha * g(P M_t) + (1 - alpha) * M_0)
//   g(v)    = (v - min v) / (max(max v - min v, delta) + epsilon)
//
// The map is a contraction when alpha / (delta + epsilon)^2 < 1; solve refuses
// configurations that fail that bound.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/structure_graph.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

/// Per-iteration convergence record. Index t of residuals/ranges belongs to
/// iteration t+1; contraction_ratios[t] = residuals[t+1] / residuals[t].
struct SolverTrace {
  std::size_t iterations = 0;
  std::vector<double> residuals;
  std::vector<double> ranges;
  std::vector<double> contraction_ratios;
  double lipschitz_bound = 0.0;
  bool converged = false;

  double final_residual() const {
    return residuals.empty() ? std::numeric_limits<double>::infinity() : residuals.back();
  }
};

struct FixedPrior {
  Prior prior;
  SolverTrace trace;
};

struct IterationStep {
  Prior next;
  double residual;  // ||next - current||_inf
  double range;     // max - min of the combination before the outer g
};

namespace detail {

inline std::pair<double, double> min_max(std::span<const float> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

inline void normalize_into(std::span<const float> v, double delta, double epsilon,
                           std::span<float> out) {
  const auto [lo, hi] = min_max(v);
  const double denom = std::max(hi - lo, delta) + epsilon;
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>((static_cast<double>(v[i]) - lo) / denom);
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace detail

/// Range-floored min-max normalization. Output lies in [0, 1); a range below
/// delta is compressed rather than stretched to full scale.
inline Tensor normalize_g(const Tensor& v, double delta, double epsilon) {
  if (!(delta > 0.0)) throw ValueError("delta must be > 0");
  if (!(epsilon >= 0.0)) throw ValueError("epsilon must be >= 0");
  std::vector<float> out(v.size());
  detail::normalize_into(v.data(), delta, epsilon, out);
  std::vector<std::size_t> dims(v.dims().begin(), v.dims().end());
  return Tensor(std::move(dims), std::move(out));
}

/// Reusable buffers for repeated iteration steps on the same grid.
class IterationWorkspace {
public:
  explicit IterationWorkspace(std::size_t n) : propagated_(n), normalized_(n), combined_(n), next_(n) {}

  template <TransferOperator Op>
  IterationStep step(std::span<const float> current, const Prior& anchor, const Op& transfer,
                     const SolverConfig& cfg, std::size_t height, std::size_t width) {
    const std::size_t n = current.size();
    transfer.apply(current, propagated_);
    detail::normalize_into(propagated_, cfg.delta, cfg.epsilon, normalized_);
    const double a = cfg.alpha, b = 1.0 - cfg.alpha;
    for (std::size_t i = 0; i < n; ++i)
      combined_[i] = static_cast<float>(a * normalized_[i] + b * anchor[i]);
    const auto [lo, hi] = detail::min_max(combined_);
    detail::normalize_into(combined_, cfg.delta, cfg.epsilon, next_);
    const double residual = detail::max_abs_diff(next_, current);
    return IterationStep{Prior(height, width, next_), residual, hi - lo};
  }

private:
  std::vector<float> propagated_, normalized_, combined_, next_;
};

/// One application of the iteration map to `current`.
template <TransferOperator Op>
IterationStep iterate_once(const Prior& current, const Prior& anchor, const Op& transfer,
                           const SolverConfig& cfg) {
  if (!current.same_shape(anchor))
    throw ShapeError("iterate and anchor shapes differ");
  if (transfer.size() != current.size())
    throw ShapeError("transfer matrix N=" + std::to_string(transfer.size()) + " vs prior size " +
                     std::to_string(current.size()));
  IterationWorkspace ws(current.size());
  return ws.step(current.values(), anchor, transfer, cfg, current.height(), current.width());
}

/// Called after every iteration with the 1-based iteration number and iterate.
using IterateObserver = std::function<void(std::size_t, const Prior&)>;

/// Iterates from `start` (default: the anchor) until the sup-norm step falls
/// below cfg.tol or cfg.max_iters is reached. Running out of iterations is
/// reported through trace.converged, not thrown.
template <TransferOperator Op>
FixedPrior solve_fixed_point(const Prior& anchor, const Op& transfer, const SolverConfig& cfg,
                             const std::optional<Prior>& start = std::nullopt,
                             const IterateObserver& observer = {}) {
  cfg.certify();
  if (transfer.size() != anchor.size())
    throw ShapeError("transfer matrix N=" + std::to_string(transfer.size()) + " vs prior size " +
                     std::to_string(anchor.size()));
  if (start && !start->same_shape(anchor)) throw ShapeError("start iterate shape differs from anchor");

  SolverTrace trace;
  trace.lipschitz_bound = cfg.lipschitz_bound();
  Prior current = start ? *start : anchor;
  IterationWorkspace ws(anchor.size());

  for (std::size_t t = 1; t <= cfg.max_iters; ++t) {
    auto step = ws.step(current.values(), anchor, transfer, cfg, anchor.height(), anchor.width());
    if (!trace.residuals.empty())
      trace.contraction_ratios.push_back(
          trace.residuals.back() > 0.0 ? step.residual / trace.residuals.back() : 0.0);
    trace.residuals.push_back(step.residual);
    trace.ranges.push_back(step.range);
    trace.iterations = t;
    current = std::move(step.next);
    if (observer) observer(t, current);
    if (step.residual < cfg.tol) {
      trace.converged = true;
      break;
    }
  }
  return FixedPrior{std::move(current), std::move(trace)};
}

/// CSV with header iter,residual,range,ratio; ratio is empty on the first row.
inline void write_trace_csv(const SolverTrace& trace, std::ostream& os) {
  os << "iter,residual,range,ratio\n";
  char buf[160];
  for (std::size_t t = 0; t < trace.residuals.size(); ++t) {
    if (t == 0) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,\n", t + 1, trace.residuals[t], trace.ranges[t]);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", t + 1, trace.residuals[t],
                    trace.ranges[t], trace.contraction_ratios[t - 1]);
    }
    os << buf;
  }
}

inline void write_trace_csv(const SolverTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  write_trace_csv(trace, out);
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace cmap
