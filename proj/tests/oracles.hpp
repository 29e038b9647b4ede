#pragma once

// Independent scalar-loop reference computations used by the tests. Nothing
// here calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "cmap/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline std::vector<double> masked_pool(const cmap::FeatureMap& f, const std::vector<double>& mask) {
  std::vector<double> proto(f.channels(), 0.0);
  double mass = 0.0;
  for (std::size_t h = 0; h < f.height(); ++h)
    for (std::size_t w = 0; w < f.width(); ++w) mass += mask[h * f.width() + w];
  for (std::size_t c = 0; c < f.channels(); ++c) {
    double acc = 0.0;
    for (std::size_t h = 0; h < f.height(); ++h)
      for (std::size_t w = 0; w < f.width(); ++w) acc += f.at(c, h, w) * mask[h * f.width() + w];
    proto[c] = acc / mass;
  }
  return proto;
}

inline std::vector<double> cosine(const cmap::FeatureMap& f, const std::vector<double>& proto) {
  std::vector<double> out(f.pixels());
  double pn = 0.0;
  for (double p : proto) pn += p * p;
  pn = std::sqrt(pn);
  for (std::size_t h = 0; h < f.height(); ++h)
    for (std::size_t w = 0; w < f.width(); ++w) {
      double dot = 0.0, qn = 0.0;
      for (std::size_t c = 0; c < f.channels(); ++c) {
        dot += f.at(c, h, w) * proto[c];
        qn += double(f.at(c, h, w)) * f.at(c, h, w);
      }
      out[h * f.width() + w] = qn == 0.0 ? 0.0 : dot / (std::sqrt(qn) * pn);
    }
  return out;
}

inline std::vector<double> minmax(const std::vector<double>& v) {
  const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (hi - lo > 1e-12)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
  return out;
}

/// Literal guarded normalization in double.
inline std::vector<double> g(const std::vector<double>& v, double delta, double eps) {
  const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (std::max(hi - lo, delta) + eps);
  return out;
}

inline std::vector<double> matvec(const Matrix& p, const std::vector<double>& v) {
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += p[i][j] * v[j];
  return out;
}

/// One full iteration step with a dense matrix, all in double.
inline std::vector<double> iterate(const Matrix& p, const std::vector<double>& m, const std::vector<double>& m0,
                                   double alpha, double delta, double eps) {
  const auto a = g(matvec(p, m), delta, eps);
  std::vector<double> comb(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) comb[i] = alpha * a[i] + (1 - alpha) * m0[i];
  return g(comb, delta, eps);
}

/// Dense scores <f_i, f_j> / t.
inline Matrix scores(const cmap::FeatureMap& f, double t) {
  const std::size_t n = f.pixels();
  Matrix s(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < f.channels(); ++c) d += double(f.channel(c)[i]) * f.channel(c)[j];
      s[i][j] = d / t;
    }
  return s;
}

template <class T>
std::vector<double> to_double(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

/// Central finite difference of f at x, step h.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

/// Largest elementwise |a - n| / max(|a|, |n|, floor).
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-6) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), floor}));
  return m;
}

inline cmap::FeatureMap random_features(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                                        double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, scale);
  std::vector<float> v(c * h * w);
  for (auto& x : v) x = static_cast<float>(n01(rng));
  return cmap::FeatureMap(c, h, w, std::move(v));
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace oracle
