#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmap/errors.hpp"

namespace cmap {

namespace detail {

inline std::string dims_string(std::span<const std::size_t> dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

inline void require_finite(std::span<const float> data, const char* what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]))
      throw ValueError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
  }
}

}  // namespace detail

/// Dense row-major float32 array. Immutable apart from element access through
/// mutable_data(), which callers use only while building a fresh tensor.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims)
      : dims_(std::move(dims)), data_(checked_count(dims_), 0.0f) {}

  Tensor(std::vector<std::size_t> dims, std::vector<float> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != checked_count(dims_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + detail::dims_string(dims_));
    detail::require_finite(data_, "tensor");
  }

  std::span<const std::size_t> dims() const noexcept { return dims_; }
  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> mutable_data() noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  static std::size_t checked_count(std::span<const std::size_t> dims) {
    if (dims.empty()) throw ShapeError("tensor needs at least one dimension");
    std::size_t n = 1;
    for (std::size_t d : dims) {
      if (d == 0) throw ShapeError("tensor dimension of size zero in " + detail::dims_string(dims));
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

/// C x H x W per-pixel embeddings. A leading batch axis of size one is dropped.
class FeatureMap {
public:
  explicit FeatureMap(Tensor t) : tensor_(std::move(t)) {
    if (tensor_.ndim() == 4 && tensor_.dim(0) == 1) {
      std::vector<std::size_t> d(tensor_.dims().begin() + 1, tensor_.dims().end());
      std::vector<float> v(tensor_.data().begin(), tensor_.data().end());
      tensor_ = Tensor(std::move(d), std::move(v));
    }
    if (tensor_.ndim() != 3)
      throw ShapeError("feature map must be CxHxW, got " + detail::dims_string(tensor_.dims()));
  }

  FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
      : FeatureMap(Tensor({channels, height, width}, std::move(data))) {}

  std::size_t channels() const noexcept { return tensor_.dim(0); }
  std::size_t height() const noexcept { return tensor_.dim(1); }
  std::size_t width() const noexcept { return tensor_.dim(2); }
  std::size_t pixels() const noexcept { return height() * width(); }

  float at(std::size_t c, std::size_t h, std::size_t w) const {
    return tensor_.data()[(c * height() + h) * width() + w];
  }
  /// Contiguous plane of one channel, length pixels().
  std::span<const float> channel(std::size_t c) const {
    return tensor_.data().subspan(c * pixels(), pixels());
  }

  const Tensor& tensor() const noexcept { return tensor_; }

private:
  Tensor tensor_;
};

/// H x W map with every value in [0, 1].
class Prior {
public:
  static constexpr double kClampTolerance = 1e-6;

  Prior() = default;

  Prior(std::size_t height, std::size_t width, std::vector<float> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (height_ == 0 || width_ == 0) throw ShapeError("prior must be non-empty");
    if (values_.size() != height_ * width_)
      throw ShapeError("prior has " + std::to_string(values_.size()) + " values for " +
                       std::to_string(height_) + "x" + std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const float v = values_[i];
      if (!(v >= 0.0f && v <= 1.0f))
        throw ValueError("prior value " + std::to_string(v) + " outside [0,1] at index " +
                         std::to_string(i));
    }
  }

  static Prior filled(std::size_t height, std::size_t width, float value) {
    return Prior(height, width, std::vector<float>(height * width, value));
  }

  /// Accepts HxW or 1xHxW. Values within kClampTolerance of [0,1] are clamped,
  /// anything further out is rejected.
  static Prior from_tensor(const Tensor& t) {
    std::size_t h = 0, w = 0;
    if (t.ndim() == 2) {
      h = t.dim(0);
      w = t.dim(1);
    } else if (t.ndim() == 3 && t.dim(0) == 1) {
      h = t.dim(1);
      w = t.dim(2);
    } else {
      throw ShapeError("prior tensor must be HxW or 1xHxW, got " + detail::dims_string(t.dims()));
    }
    std::vector<float> v(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = v[i];
      if (x < -kClampTolerance || x > 1.0 + kClampTolerance || !std::isfinite(x))
        throw ValueError("prior value " + std::to_string(x) + " outside [0,1] at index " +
                         std::to_string(i));
      v[i] = std::clamp(v[i], 0.0f, 1.0f);
    }
    return Prior(h, w, std::move(v));
  }

  Tensor to_tensor() const { return Tensor({1, height_, width_}, values_); }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  float at(std::size_t h, std::size_t w) const { return values_[h * width_ + w]; }

  bool same_shape(const Prior& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Prior&, const Prior&) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

/// H x W map of exact zeros and ones.
class BinaryMask {
public:
  BinaryMask() = default;

  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (height_ == 0 || width_ == 0) throw ShapeError("mask must be non-empty");
    if (values_.size() != height_ * width_)
      throw ShapeError("mask has " + std::to_string(values_.size()) + " values for " +
                       std::to_string(height_) + "x" + std::to_string(width_));
    for (auto v : values_)
      if (v > 1) throw ValueError("mask value must be 0 or 1");
  }

  static BinaryMask filled(std::size_t height, std::size_t width, bool on) {
    return BinaryMask(height, width, std::vector<std::uint8_t>(height * width, on ? 1 : 0));
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  bool operator[](std::size_t i) const { return values_[i] != 0; }
  bool at(std::size_t h, std::size_t w) const { return values_[h * width_ + w] != 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
  }

  BinaryMask complement() const {
    std::vector<std::uint8_t> v(values_.size());
    std::transform(values_.begin(), values_.end(), v.begin(),
                   [](std::uint8_t x) -> std::uint8_t { return x ? 0 : 1; });
    return BinaryMask(height_, width_, std::move(v));
  }

  /// Soft view of the mask as a prior (0.0 / 1.0).
  Prior to_prior() const {
    std::vector<float> v(values_.begin(), values_.end());
    return Prior(height_, width_, std::move(v));
  }

  bool same_shape(const BinaryMask& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Pixel similarity used for the structure graph. Dot is the default; cosine
/// normalizes each pixel embedding first.
enum class Similarity { dot, cosine };

struct SolverConfig {
  double alpha = 0.03;
  double delta = 0.2;
  double epsilon = 1e-8;
  double temperature = 0.1;
  std::size_t top_k = 8;
  std::size_t max_iters = 200;
  double tol = 1e-6;
  double threshold = 0.5;
  Similarity similarity = Similarity::dot;

  /// alpha / (delta + epsilon)^2, the Lipschitz constant of one iteration step.
  double lipschitz_bound() const noexcept {
    const double d = delta + epsilon;
    return alpha / (d * d);
  }

  /// Range checks on every field; throws ValueError.
  void validate() const {
    auto fail = [](const std::string& m) { throw ValueError("invalid solver config: " + m); };
    if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must be in (0,1]");
    if (!(delta > 0.0)) fail("delta must be > 0");
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (!(temperature > 0.0)) fail("temperature must be > 0");
    if (top_k == 0) fail("top_k must be positive");
    if (max_iters == 0) fail("max_iters must be positive");
    if (!(tol > 0.0)) fail("tol must be > 0");
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must be in (0,1)");
  }

  /// validate() plus the contraction condition; throws ContractionError.
  void certify() const {
    validate();
    const double bound = lipschitz_bound();
    if (!(bound < 1.0)) throw ContractionError(bound);
  }
};

}  // namespace cmap
