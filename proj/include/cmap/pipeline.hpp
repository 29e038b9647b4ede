#pragma once

// Episode spec and key=value config parsing, and the end-to-end K-shot
// pipeline: per-shot initial prior, shared query transfer matrix, per-shot
// fixed-point solve, mean fusion, binarization, optional evaluation.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cmap/contraction_solver.hpp"
#include "cmap/errors.hpp"
#include "cmap/fusion_metrics.hpp"
#include "cmap/io.hpp"
#include "cmap/prior_init.hpp"
#include "cmap/structure_graph.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

/// Parse failure in a line-oriented text input; line is 1-based, 0 when the
/// problem is not tied to one line.
class ParseError : public FormatError {
public:
  ParseError(std::size_t line, const std::string& what)
      : FormatError(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

struct SupportEntry {
  std::filesystem::path features;
  std::filesystem::path mask;
};

struct EpisodeSpec {
  std::vector<SupportEntry> supports;
  std::filesystem::path query;
  std::optional<std::filesystem::path> gt;
  int class_id = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Calls fn(line_no, key, value) for each non-blank, non-comment line.
template <class Fn>
void for_each_kv_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    fn(line_no, std::string(key), std::string(value));
  }
}

template <class T>
T parse_number(std::size_t line, const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty())
    throw ParseError(line, "invalid value '" + value + "' for " + key);
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Lines `support=<feat>,<mask>` (one per shot), `query=<feat>`, optional
/// `gt=<mask>` and `class=<id>`. Relative paths resolve against base_dir.
inline EpisodeSpec parse_episode_spec(std::string_view text, const std::filesystem::path& base_dir = {}) {
  EpisodeSpec spec;
  bool have_query = false;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  detail::for_each_kv_line(text, [&](std::size_t line, const std::string& key, const std::string& value) {
    if (value.empty()) throw ParseError(line, "empty value for " + key);
    if (key == "support") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) throw ParseError(line, "support needs <features>,<mask>");
      const auto feat = std::string(detail::trim(std::string_view(value).substr(0, comma)));
      const auto mask = std::string(detail::trim(std::string_view(value).substr(comma + 1)));
      if (feat.empty() || mask.empty() || mask.find(',') != std::string::npos)
        throw ParseError(line, "support needs exactly <features>,<mask>");
      spec.supports.push_back({resolve(feat), resolve(mask)});
    } else if (key == "query") {
      if (have_query) throw ParseError(line, "duplicate query");
      spec.query = resolve(value);
      have_query = true;
    } else if (key == "gt") {
      if (spec.gt) throw ParseError(line, "duplicate gt");
      spec.gt = resolve(value);
    } else if (key == "class") {
      spec.class_id = detail::parse_number<int>(line, key, value);
    } else {
      throw ParseError(line, "unknown key '" + key + "'");
    }
  });
  if (spec.supports.empty()) throw ParseError(0, "episode needs at least one support line");
  if (!have_query) throw ParseError(0, "episode needs a query line");
  return spec;
}

inline EpisodeSpec read_episode_spec(const std::filesystem::path& path) {
  return parse_episode_spec(detail::read_text(path), path.parent_path());
}

/// Applies key=value overrides to `cfg`. Keys mirror the SolverConfig fields.
inline void apply_config_text(std::string_view text, SolverConfig& cfg) {
  detail::for_each_kv_line(text, [&](std::size_t line, const std::string& key, const std::string& value) {
    if (key == "alpha") cfg.alpha = detail::parse_number<double>(line, key, value);
    else if (key == "delta") cfg.delta = detail::parse_number<double>(line, key, value);
    else if (key == "epsilon") cfg.epsilon = detail::parse_number<double>(line, key, value);
    else if (key == "temperature") cfg.temperature = detail::parse_number<double>(line, key, value);
    else if (key == "top_k") cfg.top_k = detail::parse_number<std::size_t>(line, key, value);
    else if (key == "max_iters") cfg.max_iters = detail::parse_number<std::size_t>(line, key, value);
    else if (key == "tol") cfg.tol = detail::parse_number<double>(line, key, value);
    else if (key == "threshold") cfg.threshold = detail::parse_number<double>(line, key, value);
    else if (key == "similarity") {
      if (value == "dot") cfg.similarity = Similarity::dot;
      else if (value == "cosine") cfg.similarity = Similarity::cosine;
      else throw ParseError(line, "similarity must be dot or cosine");
    } else {
      throw ParseError(line, "unknown config key '" + key + "'");
    }
  });
}

inline SolverConfig read_config_file(const std::filesystem::path& path, SolverConfig base = {}) {
  apply_config_text(detail::read_text(path), base);
  return base;
}

struct ShotInput {
  FeatureMap features;
  Prior mask;  // any resolution; resampled to the feature grid
};

struct EpisodeResult {
  std::vector<Prior> initial_priors;  // per shot
  std::vector<FixedPrior> solved;     // per shot
  Prior fused_initial;
  Prior fused;
  BinaryMask initial_mask;
  BinaryMask mask;

  bool all_converged() const {
    for (const auto& s : solved)
      if (!s.trace.converged) return false;
    return true;
  }
};

/// In-memory K-shot episode.
inline EpisodeResult solve_episode(const std::vector<ShotInput>& shots, const FeatureMap& query,
                                   const SolverConfig& cfg) {
  if (shots.empty()) throw ValueError("episode needs at least one support shot");
  cfg.certify();
  const auto transfer = build_transfer(query, cfg.top_k, cfg.temperature, cfg.similarity);

  EpisodeResult r;
  for (const auto& shot : shots) {
    r.initial_priors.push_back(initial_prior(shot.features, shot.mask, query));
    r.solved.push_back(solve_fixed_point(r.initial_priors.back(), transfer, cfg));
  }
  std::vector<Prior> finals;
  for (const auto& s : r.solved) finals.push_back(s.prior);
  r.fused_initial = kshot_fuse(r.initial_priors);
  r.fused = kshot_fuse(finals);
  r.initial_mask = binarize(r.fused_initial, cfg.threshold);
  r.mask = binarize(r.fused, cfg.threshold);
  return r;
}

/// Ground truth on the prediction grid: area-resampled and thresholded at 0.5
/// when the resolutions differ.
inline BinaryMask align_ground_truth(const Prior& gt, std::size_t height, std::size_t width) {
  if (gt.height() == height && gt.width() == width) return binarize(gt, 0.5);
  return binarize(area_resample(gt, height, width), 0.5);
}

struct EpisodeRun {
  EpisodeResult result;
  std::optional<EvalReport> report;          // refined prediction vs gt
  std::optional<EvalReport> initial_report;  // binarized initial prior vs gt
};

inline EpisodeRun run_episode(const EpisodeSpec& spec, const SolverConfig& cfg) {
  const FeatureMap query(read_tensor(spec.query));
  std::vector<ShotInput> shots;
  for (const auto& s : spec.supports)
    shots.push_back({FeatureMap(read_tensor(s.features)), read_soft_mask(s.mask)});

  EpisodeRun run{solve_episode(shots, query, cfg), std::nullopt, std::nullopt};
  if (spec.gt) {
    const auto gt = align_ground_truth(read_soft_mask(*spec.gt), query.height(), query.width());
    run.report = evaluate_episodes({Episode{run.result.mask, gt, spec.class_id}});
    run.initial_report = evaluate_episodes({Episode{run.result.initial_mask, gt, spec.class_id}});
  }
  return run;
}

}  // namespace cmap
