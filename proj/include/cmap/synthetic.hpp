#pragma once

// Seeded synthetic fixtures: clustered feature maps, random priors and
// two-blob segmentation episodes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <random>
#include <vector>

#include "cmap/prior_init.hpp"
#include "cmap/tensor.hpp"

namespace cmap::synthetic {

inline constexpr std::uint64_t kDefaultSeed = 42;

namespace detail {

inline std::vector<double> random_unit(std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(c);
  double s = 0.0;
  for (auto& x : v) {
    x = n01(rng);
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

/// Per-pixel region labels from a Voronoi partition of `regions` random sites.
inline std::vector<std::size_t> voronoi_labels(std::size_t h, std::size_t w, std::size_t regions,
                                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h));
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w));
  std::vector<std::pair<double, double>> sites(regions);
  for (auto& s : sites) s = {uy(rng), ux(rng)};
  std::vector<std::size_t> label(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < regions; ++r) {
        const double dy = y + 0.5 - sites[r].first, dx = x + 0.5 - sites[r].second;
        const double d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          label[y * w + x] = r;
        }
      }
    }
  }
  return label;
}

/// Features = centers[label] + isotropic noise with per-channel std noise/sqrt(C).
inline FeatureMap features_from_labels(const std::vector<std::size_t>& labels,
                                       const std::vector<std::vector<double>>& centers, std::size_t h,
                                       std::size_t w, double noise, std::mt19937_64& rng) {
  const std::size_t c_count = centers.front().size(), n = h * w;
  std::normal_distribution<double> n01(0.0, 1.0);
  const double sigma = noise / std::sqrt(static_cast<double>(c_count));
  std::vector<float> data(c_count * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < c_count; ++c)
      data[c * n + i] = static_cast<float>(centers[labels[i]][c] + sigma * n01(rng));
  return FeatureMap(c_count, h, w, std::move(data));
}

inline std::vector<std::uint8_t> disks(std::size_t h, std::size_t w, std::size_t count,
                                       std::mt19937_64& rng) {
  std::vector<std::uint8_t> m(h * w, 0);
  const double side = static_cast<double>(std::min(h, w));
  std::uniform_real_distribution<double> radius(0.12 * side, 0.22 * side);
  for (std::size_t d = 0; d < count; ++d) {
    const double r = radius(rng);
    std::uniform_real_distribution<double> cy(r, static_cast<double>(h) - r);
    std::uniform_real_distribution<double> cx(r, static_cast<double>(w) - r);
    const double y0 = cy(rng), x0 = cx(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = y + 0.5 - y0, dx = x + 0.5 - x0;
        if (dy * dy + dx * dx <= r * r) m[y * w + x] = 1;
      }
  }
  return m;
}

}  // namespace detail

/// C x H x W map made of `regions` Voronoi cells, each with its own unit-norm
/// center embedding plus Gaussian noise.
inline FeatureMap clustered_features(std::size_t channels, std::size_t height, std::size_t width,
                                     std::uint64_t seed, std::size_t regions = 6, double noise = 0.5) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centers(regions);
  for (auto& c : centers) c = detail::random_unit(channels, rng);
  const auto labels = detail::voronoi_labels(height, width, regions, rng);
  return detail::features_from_labels(labels, centers, height, width, noise, rng);
}

/// Uniform random values in [0, 1].
inline Prior random_prior(std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(height * width);
  for (auto& x : v) x = u(rng);
  return Prior(height, width, std::move(v));
}

/// Query features plus an initial prior computed against a support image drawn
/// from the same cluster centers with a random blob mask.
struct SolverInstance {
  FeatureMap query;
  Prior anchor;
};

inline SolverInstance random_instance(std::size_t channels, std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t regions = 6;
  std::vector<std::vector<double>> centers(regions);
  for (auto& c : centers) c = detail::random_unit(channels, rng);
  const auto ql = detail::voronoi_labels(side, side, regions, rng);
  auto query = detail::features_from_labels(ql, centers, side, side, 0.5, rng);
  const auto sl = detail::voronoi_labels(side, side, regions, rng);
  auto support = detail::features_from_labels(sl, centers, side, side, 0.5, rng);
  auto mask = detail::disks(side, side, 1, rng);
  if (std::count(mask.begin(), mask.end(), std::uint8_t{1}) == 0) mask[0] = 1;
  const Prior m(side, side, std::vector<float>(mask.begin(), mask.end()));
  Prior anchor = initial_prior(support, m, query);
  return SolverInstance{std::move(query), std::move(anchor)};
}

struct TwoBlobEpisode {
  FeatureMap support;
  BinaryMask support_mask;
  FeatureMap query;
  BinaryMask query_gt;
};

/// Foreground = two disks sharing one cluster embedding; background = a few
/// Voronoi regions with their own embeddings. Both images carry Gaussian noise.
inline TwoBlobEpisode two_blob_episode(std::uint64_t seed, std::size_t side = 32, std::size_t channels = 16,
                                       double noise = 0.9) {
  std::mt19937_64 rng(seed);
  const std::size_t bg_regions = 3;
  std::vector<std::vector<double>> centers(bg_regions + 1);
  for (auto& c : centers) c = detail::random_unit(channels, rng);

  auto make_image = [&](std::vector<std::uint8_t>& fg) {
    auto labels = detail::voronoi_labels(side, side, bg_regions, rng);
    fg = detail::disks(side, side, 2, rng);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (fg[i]) labels[i] = bg_regions;
    return detail::features_from_labels(labels, centers, side, side, noise, rng);
  };
  std::vector<std::uint8_t> sfg, qfg;
  auto support = make_image(sfg);
  auto query = make_image(qfg);
  return TwoBlobEpisode{std::move(support), BinaryMask(side, side, std::move(sfg)), std::move(query),
                        BinaryMask(side, side, std::move(qfg))};
}

}  // namespace cmap::synthetic
