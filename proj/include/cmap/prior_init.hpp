#pragma once

// Initial position prior: masked-average prototype, cosine similarity against
// the query, min-max normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

/// Class prototype: one C-vector, finite and non-zero.
class Prototype {
public:
  explicit Prototype(std::vector<float> channels) : channels_(std::move(channels)) {
    if (channels_.empty()) throw ShapeError("prototype needs at least one channel");
    detail::require_finite(channels_, "prototype");
    if (norm() == 0.0) throw ValueError("prototype is the zero vector");
  }

  std::size_t size() const noexcept { return channels_.size(); }
  std::span<const float> channels() const noexcept { return channels_; }
  float operator[](std::size_t c) const { return channels_[c]; }

  double norm() const {
    double s = 0.0;
    for (float v : channels_) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }

private:
  std::vector<float> channels_;
};

/// Resamples a soft mask to `height` x `width` by exact area averaging: each
/// output cell is the mean of the input over the rectangle it covers, with
/// partially covered input pixels weighted by overlap.
inline Prior area_resample(const Prior& in, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resample target must be non-empty");
  if (in.height() == height && in.width() == width) return in;

  // Overlap weights along one axis: for each output cell, (input index, weight) pairs.
  auto axis_weights = [](std::size_t n_in, std::size_t n_out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(n_out);
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      auto first = static_cast<std::size_t>(std::floor(lo));
      for (std::size_t i = first; i < n_in && static_cast<double>(i) < hi; ++i) {
        const double overlap = std::min<double>(hi, i + 1.0) - std::max<double>(lo, i);
        if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
      }
    }
    return w;
  };
  const auto wy = axis_weights(in.height(), height);
  const auto wx = axis_weights(in.width(), width);

  std::vector<float> out(height * width);
  for (std::size_t oy = 0; oy < height; ++oy) {
    for (std::size_t ox = 0; ox < width; ++ox) {
      double acc = 0.0;
      for (auto [iy, fy] : wy[oy])
        for (auto [ix, fx] : wx[ox]) acc += fy * fx * in.at(iy, ix);
      out[oy * width + ox] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return Prior(height, width, std::move(out));
}

/// prototype[c] = sum_hw f[c,h,w] * m[h,w] / sum_hw m[h,w]
inline Prototype masked_average_pool(const FeatureMap& support, const Prior& mask) {
  if (support.height() != mask.height() || support.width() != mask.width())
    throw ShapeError("support features " + std::to_string(support.height()) + "x" +
                     std::to_string(support.width()) + " vs mask " + std::to_string(mask.height()) +
                     "x" + std::to_string(mask.width()));
  double mass = 0.0;
  for (float m : mask.values()) mass += m;
  if (mass <= 1e-12) throw EmptyMaskError();

  std::vector<float> proto(support.channels());
  for (std::size_t c = 0; c < support.channels(); ++c) {
    const auto plane = support.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < plane.size(); ++i) acc += static_cast<double>(plane[i]) * mask[i];
    proto[c] = static_cast<float>(acc / mass);
  }
  return Prototype(std::move(proto));
}

/// Per-pixel cosine similarity to the prototype, HxW in [-1, 1]. Zero-norm
/// query pixels score 0.
inline Tensor cosine_prior(const FeatureMap& query, const Prototype& proto) {
  if (query.channels() != proto.size())
    throw ShapeError("query has " + std::to_string(query.channels()) + " channels, prototype " +
                     std::to_string(proto.size()));
  const std::size_t n = query.pixels();
  std::vector<double> dot(n, 0.0), sq(n, 0.0);
  for (std::size_t c = 0; c < query.channels(); ++c) {
    const auto plane = query.channel(c);
    const double p = proto[c];
    for (std::size_t i = 0; i < n; ++i) {
      const double f = plane[i];
      dot[i] += f * p;
      sq[i] += f * f;
    }
  }
  const double pnorm = proto.norm();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double qn = std::sqrt(sq[i]);
    out[i] = qn == 0.0 ? 0.0f : static_cast<float>(std::clamp(dot[i] / (qn * pnorm), -1.0, 1.0));
  }
  return Tensor({query.height(), query.width()}, std::move(out));
}

/// (raw - min) / (max - min) over the whole map; a constant map gives zeros.
inline Prior minmax_normalize(const Tensor& raw) {
  std::size_t h = 0, w = 0;
  if (raw.ndim() == 2) {
    h = raw.dim(0);
    w = raw.dim(1);
  } else if (raw.ndim() == 3 && raw.dim(0) == 1) {
    h = raw.dim(1);
    w = raw.dim(2);
  } else {
    throw ShapeError("minmax_normalize expects HxW, got " + detail::dims_string(raw.dims()));
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.data().begin(), raw.data().end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<float> out(raw.size(), 0.0f);
  if (hi > lo + 1e-12) {
    const double span = hi - lo;
    for (std::size_t i = 0; i < raw.size(); ++i)
      out[i] = static_cast<float>(std::clamp((raw.data()[i] - lo) / span, 0.0, 1.0));
  }
  return Prior(h, w, std::move(out));
}

/// Full initial-prior pipeline for one support/query pair. The support mask is
/// area-resampled to the support feature grid when the sizes differ.
inline Prior initial_prior(const FeatureMap& support, const Prior& support_mask,
                           const FeatureMap& query) {
  if (support.channels() != query.channels())
    throw ShapeError("support has " + std::to_string(support.channels()) +
                     " channels, query " + std::to_string(query.channels()));
  const Prior mask = area_resample(support_mask, support.height(), support.width());
  return minmax_normalize(cosine_prior(query, masked_average_pool(support, mask)));
}

}  // namespace cmap
