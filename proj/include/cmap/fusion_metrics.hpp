#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

struct DualPrior {
  Prior foreground;
  Prior background;
};

/// Pairs the foreground prior with a background prior; without one the
/// background is the complement 1 - foreground.
inline DualPrior make_dual_prior(const Prior& foreground, const std::optional<Prior>& background = std::nullopt) {
  if (background) {
    if (!background->same_shape(foreground)) throw ShapeError("background prior shape differs");
    return DualPrior{foreground, *background};
  }
  std::vector<float> bg(foreground.size());
  for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = 1.0f - foreground[i];
  return DualPrior{foreground, Prior(foreground.height(), foreground.width(), std::move(bg))};
}

/// 1 where m > threshold (strict), else 0.
inline BinaryMask binarize(const Prior& m, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValueError("threshold must be in (0,1)");
  std::vector<std::uint8_t> v(m.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(m[i]) > threshold ? 1 : 0;
  return BinaryMask(m.height(), m.width(), std::move(v));
}

/// Pixelwise mean of K priors.
inline Prior kshot_fuse(const std::vector<Prior>& priors) {
  if (priors.empty()) throw ValueError("kshot_fuse needs at least one prior");
  const Prior& first = priors.front();
  std::vector<double> acc(first.size(), 0.0);
  for (const auto& p : priors) {
    if (!p.same_shape(first)) throw ShapeError("k-shot priors differ in shape");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  const double k = static_cast<double>(priors.size());
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(std::min(acc[i] / k, 1.0));
  return Prior(first.height(), first.width(), std::move(out));
}

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t union_ = 0;

  /// Both-empty counts as perfect agreement.
  double iou() const {
    return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
  }
};

inline OverlapCounts overlap(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt))
    throw ShapeError("prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                     " vs ground truth " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  OverlapCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i], g = gt[i];
    c.intersection += (p && g) ? 1 : 0;
    c.union_ += (p || g) ? 1 : 0;
  }
  return c;
}

inline double iou(const BinaryMask& pred, const BinaryMask& gt) { return overlap(pred, gt).iou(); }

/// Mean of foreground and background IoU.
inline double fb_iou(const BinaryMask& pred, const BinaryMask& gt) {
  return 0.5 * (iou(pred, gt) + iou(pred.complement(), gt.complement()));
}

struct Episode {
  BinaryMask pred;
  BinaryMask gt;
  int class_id = 0;
};

struct EvalReport {
  std::map<int, double> per_class_iou;
  double miou = 0.0;
  double fb_iou = 0.0;
};

/// Per-class IoU from intersections and unions summed over that class's
/// episodes; mIoU is the unweighted class mean, FB-IoU the episode mean.
inline EvalReport evaluate_episodes(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw ValueError("evaluate_episodes needs at least one episode");
  std::map<int, OverlapCounts> per_class;
  double fb_sum = 0.0;
  for (const auto& ep : episodes) {
    const auto c = overlap(ep.pred, ep.gt);
    auto& acc = per_class[ep.class_id];
    acc.intersection += c.intersection;
    acc.union_ += c.union_;
    fb_sum += fb_iou(ep.pred, ep.gt);
  }
  EvalReport r;
  double sum = 0.0;
  for (const auto& [cls, counts] : per_class) {
    r.per_class_iou[cls] = counts.iou();
    sum += counts.iou();
  }
  r.miou = sum / static_cast<double>(per_class.size());
  r.fb_iou = fb_sum / static_cast<double>(episodes.size());
  return r;
}

/// `class=<id> iou=<v>` per class, then `miou=<v>` and `fbiou=<v>`.
inline void write_report(const EvalReport& r, std::ostream& os) {
  char buf[96];
  for (const auto& [cls, v] : r.per_class_iou) {
    std::snprintf(buf, sizeof buf, "class=%d iou=%.6f\n", cls, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "miou=%.6f\nfbiou=%.6f\n", r.miou, r.fb_iou);
  os << buf;
}

}  // namespace cmap
