#pragma once

// Sparse vs dense transfer-matrix timing harness. Each cell reports the
// median over `reps` repetitions of the wall time to build the matrix and the
// mean time of one iteration step.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cmap/contraction_solver.hpp"
#include "cmap/structure_graph.hpp"
#include "cmap/synthetic.hpp"

namespace cmap::bench {

enum class Mode { sparse, dense, both };

struct Options {
  std::vector<std::size_t> sides;  // feature-map side lengths; N = side^2
  std::size_t top_k = 8;
  Mode mode = Mode::sparse;
  std::size_t channels = 32;
  std::size_t iters = 50;  // iteration steps timed per repetition
  std::size_t reps = 5;
  std::uint64_t seed = synthetic::kDefaultSeed;
  SolverConfig solver{};
};

struct Row {
  std::string mode;
  std::size_t n = 0;
  double build_ms = 0.0;
  double iter_ms = 0.0;
  double total_ms = 0.0;
};

/// Sparse/dense agreement at one size (only filled in `both` mode).
struct Agreement {
  std::size_t n = 0;
  double matrix_max_abs = 0.0;
  double solution_max_abs = 0.0;
};

struct Result {
  std::vector<Row> rows;
  std::vector<Agreement> agreements;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Throws OracleLimitError before doing any work if a dense cell would exceed
/// the oracle cap.
inline void check_dense_cap(const Options& opt) {
  if (opt.mode == Mode::sparse) return;
  for (auto side : opt.sides)
    if (side * side > kDenseOracleLimit)
      throw OracleLimitError("dense mode capped at N <= " + std::to_string(kDenseOracleLimit) +
                             ", side " + std::to_string(side) + " gives N=" + std::to_string(side * side));
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class BuildFn>
Row time_cell(const std::string& mode, const synthetic::SolverInstance& inst, const Options& opt,
              BuildFn&& build) {
  std::vector<double> builds, steps;
  for (std::size_t r = 0; r < opt.reps; ++r) {
    auto t0 = Clock::now();
    const auto op = build();
    builds.push_back(ms_since(t0));

    IterationWorkspace ws(inst.anchor.size());
    Prior current = inst.anchor;
    t0 = Clock::now();
    for (std::size_t i = 0; i < opt.iters; ++i)
      current = ws.step(current.values(), inst.anchor, op, opt.solver, current.height(), current.width()).next;
    steps.push_back(ms_since(t0) / static_cast<double>(opt.iters));
  }
  Row row{mode, inst.anchor.size(), median(builds), median(steps), 0.0};
  row.total_ms = row.build_ms + static_cast<double>(opt.iters) * row.iter_ms;
  return row;
}

}  // namespace detail

inline Result run(const Options& opt) {
  check_dense_cap(opt);
  opt.solver.certify();
  Result res;
  for (auto side : opt.sides) {
    const auto inst = synthetic::random_instance(opt.channels, side, opt.seed + side);
    const std::size_t k = std::min(opt.top_k, inst.anchor.size());
    const double t = opt.solver.temperature;
    const auto sim = opt.solver.similarity;
    if (opt.mode != Mode::dense)
      res.rows.push_back(detail::time_cell("sparse", inst, opt, [&] { return build_transfer(inst.query, k, t, sim); }));
    if (opt.mode != Mode::sparse)
      res.rows.push_back(
          detail::time_cell("dense", inst, opt, [&] { return dense_transfer_oracle(inst.query, k, t, sim); }));
    if (opt.mode == Mode::both) {
      const auto sp = build_transfer(inst.query, k, t, sim);
      const auto de = dense_transfer_oracle(inst.query, k, t, sim);
      Agreement a{inst.anchor.size(), 0.0, 0.0};
      const auto sd = sp.to_dense();
      for (std::size_t i = 0; i < sd.size(); ++i)
        a.matrix_max_abs = std::max(a.matrix_max_abs, std::abs(double(sd.data()[i]) - de.weights()[i]));
      const auto ms = solve_fixed_point(inst.anchor, sp, opt.solver);
      const auto md = solve_fixed_point(inst.anchor, de, opt.solver);
      a.solution_max_abs = cmap::detail::max_abs_diff(ms.prior.values(), md.prior.values());
      res.agreements.push_back(a);
    }
  }
  return res;
}

inline void write_csv(const std::vector<Row>& rows, std::ostream& os) {
  os << "mode,n,build_ms,iter_ms,total_ms\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f\n", r.mode.c_str(), r.n, r.build_ms, r.iter_ms,
                  r.total_ms);
    os << buf;
  }
}

}  // namespace cmap::bench
