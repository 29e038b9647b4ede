#pragma once

// Dice and binary cross-entropy with analytic gradients, and the two-stage
// weighted total. The span overloads are generic over the floating type so
// gradient checks can run in double; the Prior overloads forward to them.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

inline constexpr double kDiceGuard = 1e-8;
inline constexpr double kBceClamp = 1e-7;

struct LossWithGrad {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred, one per pixel
};

/// 1 - 2 sum(y p) / (sum y^2 + sum p^2 + guard)
template <std::floating_point T>
LossWithGrad dice_loss(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) throw ShapeError("dice: prediction and target sizes differ");
  double inter = 0.0, denom = kDiceGuard;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], y = gt[i];
    inter += y * p;
    denom += y * y + p * p;
  }
  LossWithGrad out;
  out.value = 1.0 - 2.0 * inter / denom;
  out.grad.resize(pred.size());
  // d/dp_i of -2S/D = -2 (y_i D - S 2 p_i) / D^2
  const double d2 = denom * denom;
  for (std::size_t i = 0; i < pred.size(); ++i)
    out.grad[i] = -2.0 * (static_cast<double>(gt[i]) * denom - 2.0 * inter * pred[i]) / d2;
  return out;
}

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7];
/// the gradient is zero where the clamp is active.
template <std::floating_point T>
LossWithGrad bce_loss(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) throw ShapeError("bce: prediction and target sizes differ");
  if (pred.empty()) throw ShapeError("bce: empty input");
  const double n = static_cast<double>(pred.size());
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  LossWithGrad out;
  out.grad.resize(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i], y = gt[i];
    const double p = std::clamp(raw, lo, hi);
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    out.grad[i] = (raw < lo || raw > hi) ? 0.0 : -(y / p - (1.0 - y) / (1.0 - p)) / n;
  }
  out.value = -sum / n;
  return out;
}

namespace detail {

inline void require_same_shape(const Prior& pred, const BinaryMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ShapeError("prediction and ground truth shapes differ");
}

inline std::vector<float> mask_as_float(const BinaryMask& gt) {
  return std::vector<float>(gt.values().begin(), gt.values().end());
}

}  // namespace detail

inline LossWithGrad dice_loss(const Prior& pred, const BinaryMask& gt) {
  detail::require_same_shape(pred, gt);
  const auto y = detail::mask_as_float(gt);
  return dice_loss<float>(pred.values(), y);
}

inline LossWithGrad bce_loss(const Prior& pred, const BinaryMask& gt) {
  detail::require_same_shape(pred, gt);
  const auto y = detail::mask_as_float(gt);
  return bce_loss<float>(pred.values(), y);
}

struct StageLoss {
  double dice = 0.0;
  double bce = 0.0;
  double sum() const { return dice + bce; }
};

/// Two-stage objective. `dice` and `bce` hold the stage-weighted components,
/// so total == dice + bce.
struct LossValue {
  double total = 0.0;
  double dice = 0.0;
  double bce = 0.0;
  StageLoss initial;
  StageLoss refined;
  std::vector<double> grad_initial;  // d total / d initial prediction
  std::vector<double> grad_refined;  // d total / d refined prediction
};

inline LossValue total_loss(const Prior& initial_pred, const Prior& refined_pred, const BinaryMask& gt,
                            double w_init = 0.3, double w_refine = 0.7) {
  if (!(w_init >= 0.0) || !(w_refine >= 0.0)) throw ValueError("loss weights must be >= 0");
  const auto di = dice_loss(initial_pred, gt), bi = bce_loss(initial_pred, gt);
  const auto dr = dice_loss(refined_pred, gt), br = bce_loss(refined_pred, gt);

  LossValue v;
  v.initial = {di.value, bi.value};
  v.refined = {dr.value, br.value};
  v.dice = w_init * di.value + w_refine * dr.value;
  v.bce = w_init * bi.value + w_refine * br.value;
  v.total = w_init * v.initial.sum() + w_refine * v.refined.sum();
  v.grad_initial.resize(di.grad.size());
  v.grad_refined.resize(dr.grad.size());
  for (std::size_t i = 0; i < di.grad.size(); ++i) v.grad_initial[i] = w_init * (di.grad[i] + bi.grad[i]);
  for (std::size_t i = 0; i < dr.grad.size(); ++i) v.grad_refined[i] = w_refine * (dr.grad[i] + br.grad[i]);
  return v;
}

}  // namespace cmap
