#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmap/cmap.hpp"

namespace cmap::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kFormat = 2,
  kEmptyMask = 3,
  kNotConverged = 4,
  kCertification = 5,
  kBenchCap = 6,
};

namespace detail {

/// Solver flags shared by propagate and pipeline. Values start at the
/// SolverConfig defaults; apply() copies only the flags given on the command
/// line so they can override a config file.
struct SolverFlags {
  SolverConfig values{};
  std::string similarity = "dot";
  std::vector<CLI::Option*> opts;
  CLI::Option* similarity_opt = nullptr;

  void add_to(CLI::App& app) {
    opts.push_back(app.add_option("--alpha", values.alpha, "Propagation weight in (0,1]")->capture_default_str());
    opts.push_back(app.add_option("--delta", values.delta, "Dynamic-range floor of the normalization")->capture_default_str());
    opts.push_back(app.add_option("--epsilon", values.epsilon, "Normalization stabilizer")->capture_default_str());
    opts.push_back(app.add_option("--temperature", values.temperature, "Similarity temperature")->capture_default_str());
    opts.push_back(app.add_option("--top-k", values.top_k, "Neighbors kept per pixel")->capture_default_str());
    opts.push_back(app.add_option("--max-iters", values.max_iters, "Iteration cap")->capture_default_str());
    opts.push_back(app.add_option("--tol", values.tol, "Sup-norm step tolerance")->capture_default_str());
    opts.push_back(app.add_option("--threshold", values.threshold, "Binarization threshold (strict >)")->capture_default_str());
    similarity_opt = app.add_option("--similarity", similarity, "Pixel similarity for the transfer matrix")
                         ->check(CLI::IsMember({"dot", "cosine"}))
                         ->capture_default_str();
  }

  SolverConfig apply(SolverConfig base) const {
    const SolverConfig& v = values;
    auto given = [&](std::size_t i) { return opts[i]->count() > 0; };
    if (given(0)) base.alpha = v.alpha;
    if (given(1)) base.delta = v.delta;
    if (given(2)) base.epsilon = v.epsilon;
    if (given(3)) base.temperature = v.temperature;
    if (given(4)) base.top_k = v.top_k;
    if (given(5)) base.max_iters = v.max_iters;
    if (given(6)) base.tol = v.tol;
    if (given(7)) base.threshold = v.threshold;
    if (similarity_opt->count() > 0) base.similarity = similarity == "cosine" ? Similarity::cosine : Similarity::dot;
    return base;
  }
};

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace detail

struct PriorArgs {
  std::string support_feat, support_mask, query_feat, out;
};

inline int cmd_prior(const PriorArgs& a, std::ostream& out) {
  const FeatureMap support(read_tensor(a.support_feat));
  const FeatureMap query(read_tensor(a.query_feat));
  const Prior mask = read_soft_mask(a.support_mask);
  const Prior m0 = initial_prior(support, mask, query);
  detail::ensure_parent(a.out);
  write_tensor(m0.to_tensor(), a.out);
  out << "wrote prior " << m0.height() << "x" << m0.width() << " to " << a.out << "\n";
  return kOk;
}

struct PropagateArgs {
  std::string query_feat, prior, out, trace_out, config, dump_transfer;
};

inline int cmd_propagate(const PropagateArgs& a, const SolverConfig& cfg, std::ostream& out) {
  cfg.certify();
  const FeatureMap query(read_tensor(a.query_feat));
  const Prior m0 = Prior::from_tensor(read_tensor(a.prior));
  if (m0.height() != query.height() || m0.width() != query.width())
    throw ShapeError("prior " + std::to_string(m0.height()) + "x" + std::to_string(m0.width()) +
                     " vs query features " + std::to_string(query.height()) + "x" + std::to_string(query.width()));
  const auto transfer = build_transfer(query, cfg.top_k, cfg.temperature, cfg.similarity);
  if (!a.dump_transfer.empty()) {
    detail::ensure_parent(a.dump_transfer);
    write_tensor(transfer.to_dense(), a.dump_transfer);
  }
  const auto fixed = solve_fixed_point(m0, transfer, cfg);
  detail::ensure_parent(a.out);
  write_tensor(fixed.prior.to_tensor(), a.out);
  if (!a.trace_out.empty()) {
    detail::ensure_parent(a.trace_out);
    write_trace_csv(fixed.trace, std::filesystem::path(a.trace_out));
  }
  out << "iterations=" << fixed.trace.iterations << " residual=" << fixed.trace.final_residual()
      << " converged=" << (fixed.trace.converged ? "true" : "false")
      << " lipschitz_bound=" << fixed.trace.lipschitz_bound << "\n";
  return fixed.trace.converged ? kOk : kNotConverged;
}

struct PipelineArgs {
  std::string episode, config, out_dir;
};

inline int cmd_pipeline(const PipelineArgs& a, const SolverConfig& cfg, std::ostream& out) {
  const auto spec = read_episode_spec(a.episode);
  const auto run = run_episode(spec, cfg);
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);

  const auto& r = run.result;
  write_tensor(r.fused.to_tensor(), dir / "prior.cmpt");
  write_tensor(r.fused_initial.to_tensor(), dir / "initial_prior.cmpt");
  write_mask_pgm(r.mask, dir / "mask.pgm");
  write_mask_pgm(r.initial_mask, dir / "initial_mask.pgm");
  for (std::size_t k = 0; k < r.solved.size(); ++k)
    write_trace_csv(r.solved[k].trace, dir / ("trace_shot" + std::to_string(k + 1) + ".csv"));
  if (run.report) {
    std::ofstream rep(dir / "report.txt", std::ios::trunc);
    write_report(*run.report, rep);
    std::ofstream rep0(dir / "report_initial.txt", std::ios::trunc);
    write_report(*run.initial_report, rep0);
    if (!rep || !rep0) throw IoError((dir / "report.txt").string(), "write failed");
    write_report(*run.report, out);
  }
  return r.all_converged() ? kOk : kNotConverged;
}

struct BenchArgs {
  std::vector<std::size_t> sizes;
  std::size_t top_k = 8;
  std::string mode = "sparse";
  std::string csv_out;
  std::size_t channels = 32;
  std::size_t iters = 50;
  std::size_t reps = 5;
  std::uint64_t seed = synthetic::kDefaultSeed;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  bench::Options opt;
  opt.sides = a.sizes;
  opt.top_k = a.top_k;
  opt.mode = a.mode == "dense" ? bench::Mode::dense : a.mode == "both" ? bench::Mode::both : bench::Mode::sparse;
  opt.channels = a.channels;
  opt.iters = a.iters;
  opt.reps = a.reps;
  opt.seed = a.seed;
  const auto res = bench::run(opt);
  if (a.csv_out.empty()) {
    bench::write_csv(res.rows, out);
  } else {
    detail::ensure_parent(a.csv_out);
    std::ofstream f(a.csv_out, std::ios::trunc);
    if (!f) throw IoError(a.csv_out, "cannot open for writing");
    bench::write_csv(res.rows, f);
  }
  int code = kOk;
  for (const auto& ag : res.agreements) {
    err << "agree n=" << ag.n << " matrix_max_abs=" << ag.matrix_max_abs
        << " solution_max_abs=" << ag.solution_max_abs << "\n";
    if (ag.matrix_max_abs > 1e-5 || ag.solution_max_abs > 1e-5) code = kFailure;
  }
  return code;
}

struct EvalArgs {
  std::string pred, gt;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto pred = read_mask_pgm(a.pred);
  const auto gt = read_mask_pgm(a.gt);
  out << "iou=" << detail::fmt_metric(iou(pred, gt)) << " fbiou=" << detail::fmt_metric(fb_iou(pred, gt)) << "\n";
  return kOk;
}

/// Maps library exceptions onto the documented exit codes.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const EmptyMaskError& e) {
    err << "error: " << e.what() << "\n";
    return kEmptyMask;
  } catch (const ContractionError& e) {
    err << "error: " << e.what() << "\n";
    return kCertification;
  } catch (const OracleLimitError& e) {
    err << "error: " << e.what() << "\n";
    return kBenchCap;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

/// Entry point shared by main() and the tests. `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Contraction-mapping position priors for few-shot segmentation", "cmap"};
  app.require_subcommand(1);

  PriorArgs prior_args;
  auto* prior = app.add_subcommand("prior", "Build the initial prior from support features, mask and query features");
  prior->add_option("--support-feat", prior_args.support_feat, "Support features (CMPT, CxHxW)")->required();
  prior->add_option("--support-mask", prior_args.support_mask, "Support mask (PGM P5 or soft CMPT)")->required();
  prior->add_option("--query-feat", prior_args.query_feat, "Query features (CMPT, CxHxW)")->required();
  prior->add_option("--out", prior_args.out, "Output prior (CMPT, 1xHxW)")->required();

  PropagateArgs prop_args;
  detail::SolverFlags prop_flags;
  auto* prop = app.add_subcommand("propagate", "Refine a prior by the anchored fixed-point iteration");
  prop->add_option("--query-feat", prop_args.query_feat, "Query features (CMPT, CxHxW)")->required();
  prop->add_option("--prior", prop_args.prior, "Initial prior (CMPT, 1xHxW)")->required();
  prop->add_option("--out", prop_args.out, "Output fixed prior (CMPT, 1xHxW)")->required();
  prop->add_option("--trace-out", prop_args.trace_out, "Convergence trace CSV");
  prop->add_option("--config", prop_args.config, "key=value config file; flags override it");
  prop->add_option("--dump-transfer", prop_args.dump_transfer, "Write the transfer matrix densely (CMPT, N<=4096)");
  prop_flags.add_to(*prop);

  PipelineArgs pipe_args;
  detail::SolverFlags pipe_flags;
  auto* pipe = app.add_subcommand("pipeline", "Run a full K-shot episode from a spec file");
  pipe->add_option("--episode", pipe_args.episode, "Episode spec file")->required();
  pipe->add_option("--config", pipe_args.config, "key=value config file; flags override it");
  pipe->add_option("--out-dir", pipe_args.out_dir, "Output directory")->required();
  pipe_flags.add_to(*pipe);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time sparse vs dense transfer matrices across sizes");
  bench->add_option("--sizes", bench_args.sizes, "Feature-map side lengths")->delimiter(',')->required();
  bench->add_option("--top-k", bench_args.top_k, "Neighbors kept per pixel")->capture_default_str();
  bench->add_option("--mode", bench_args.mode, "sparse, dense or both")
      ->check(CLI::IsMember({"sparse", "dense", "both"}))
      ->capture_default_str();
  bench->add_option("--csv-out", bench_args.csv_out, "CSV output path (stdout when omitted)");
  bench->add_option("--channels", bench_args.channels, "Feature channels of the synthetic input")->capture_default_str();
  bench->add_option("--iters", bench_args.iters, "Iteration steps timed per repetition")->capture_default_str();
  bench->add_option("--reps", bench_args.reps, "Repetitions per cell (median reported)")->capture_default_str();
  bench->add_option("--seed", bench_args.seed, "Seed of the synthetic input")->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "IoU and FB-IoU of a predicted mask");
  eval->add_option("--pred", eval_args.pred, "Predicted mask (PGM P5)")->required();
  eval->add_option("--gt", eval_args.gt, "Ground-truth mask (PGM P5)")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kFormat;
  }

  auto solver_config = [](const std::string& config_path, const detail::SolverFlags& flags) {
    SolverConfig base;
    if (!config_path.empty()) base = read_config_file(config_path, base);
    return flags.apply(base);
  };

  return guarded(
      [&]() -> int {
        if (*prior) return cmd_prior(prior_args, out);
        if (*prop) return cmd_propagate(prop_args, solver_config(prop_args.config, prop_flags), out);
        if (*pipe) return cmd_pipeline(pipe_args, solver_config(pipe_args.config, pipe_flags), out);
        if (*bench) {
          if (bench_args.reps == 0 || bench_args.iters == 0 || bench_args.channels == 0)
            throw ValueError("reps, iters and channels must be positive");
          return cmd_bench(bench_args, out, err);
        }
        return cmd_eval(eval_args, out);
      },
      err);
}

}  // namespace cmap::cli
