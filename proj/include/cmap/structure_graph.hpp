#pragma once

// Structure transfer matrix: temperature-scaled pixel similarity over the
// query features, top-k sparsified per row and softmax-normalized. Stored as
// compressed sparse rows; a dense literal construction is kept alongside as a
// test and benchmark oracle.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cmap/errors.hpp"
#include "cmap/tensor.hpp"

namespace cmap {

/// Anything that maps an N-vector to an N-vector like a row-stochastic matrix.
template <class Op>
concept TransferOperator = requires(const Op& op, std::span<const float> in, std::span<float> out) {
  { op.size() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
};

/// Largest N the dense oracle will materialize.
inline constexpr std::size_t kDenseOracleLimit = 4096;

/// Row-stochastic N x N matrix in CSR form, at most k strictly positive
/// entries per row with strictly increasing column ids.
class TransferMatrix {
public:
  static constexpr double kRowSumTolerance = 1e-5;

  TransferMatrix(std::size_t n, std::vector<std::size_t> row_offsets,
                 std::vector<std::uint32_t> col_indices, std::vector<float> weights)
      : n_(n),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        weights_(std::move(weights)) {
    validate();
  }

  static TransferMatrix identity(std::size_t n) {
    std::vector<std::size_t> off(n + 1);
    std::iota(off.begin(), off.end(), std::size_t{0});
    std::vector<std::uint32_t> cols(n);
    std::iota(cols.begin(), cols.end(), 0u);
    return TransferMatrix(n, std::move(off), std::move(cols), std::vector<float>(n, 1.0f));
  }

  /// Every row uniform 1/n over all columns.
  static TransferMatrix uniform(std::size_t n) {
    std::vector<std::size_t> off(n + 1);
    for (std::size_t i = 0; i <= n; ++i) off[i] = i * n;
    std::vector<std::uint32_t> cols(n * n);
    for (std::size_t i = 0; i < n * n; ++i) cols[i] = static_cast<std::uint32_t>(i % n);
    return TransferMatrix(n, std::move(off), std::move(cols),
                          std::vector<float>(n * n, static_cast<float>(1.0 / n)));
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return weights_.size(); }
  std::size_t max_row_entries() const noexcept {
    std::size_t m = 0;
    for (std::size_t i = 0; i < n_; ++i) m = std::max(m, row_offsets_[i + 1] - row_offsets_[i]);
    return m;
  }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::uint32_t> col_indices() const noexcept { return col_indices_; }
  std::span<const float> weights() const noexcept { return weights_; }

  std::span<const std::uint32_t> row_cols(std::size_t i) const {
    return std::span(col_indices_).subspan(row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]);
  }
  std::span<const float> row_weights(std::size_t i) const {
    return std::span(weights_).subspan(row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]);
  }

  /// out = P * in, accumulated in double per row.
  void apply(std::span<const float> in, std::span<float> out) const {
    if (in.size() != n_ || out.size() != n_)
      throw ShapeError("transfer matrix is " + std::to_string(n_) + "x" + std::to_string(n_) +
                       ", vector has " + std::to_string(in.size()));
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t e = row_offsets_[i]; e < row_offsets_[i + 1]; ++e)
        acc += static_cast<double>(weights_[e]) * in[col_indices_[e]];
      out[i] = static_cast<float>(acc);
    }
  }

  /// Dense N x N copy for cross-checking; refuses above kDenseOracleLimit.
  Tensor to_dense() const {
    if (n_ > kDenseOracleLimit)
      throw OracleLimitError("dense dump refused for N=" + std::to_string(n_));
    std::vector<float> d(n_ * n_, 0.0f);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t e = row_offsets_[i]; e < row_offsets_[i + 1]; ++e)
        d[i * n_ + col_indices_[e]] = weights_[e];
    return Tensor({n_, n_}, std::move(d));
  }

private:
  void validate() const {
    if (n_ == 0) throw ShapeError("transfer matrix must be non-empty");
    if (row_offsets_.size() != n_ + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != col_indices_.size() || col_indices_.size() != weights_.size())
      throw ShapeError("inconsistent CSR arrays");
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t b = row_offsets_[i], e = row_offsets_[i + 1];
      if (e <= b) throw ValueError("row " + std::to_string(i) + " has no entries");
      double sum = 0.0;
      for (std::size_t p = b; p < e; ++p) {
        if (col_indices_[p] >= n_) throw ValueError("column index out of range in row " + std::to_string(i));
        if (p > b && col_indices_[p] <= col_indices_[p - 1])
          throw ValueError("columns not strictly increasing in row " + std::to_string(i));
        if (!(weights_[p] > 0.0f) || !std::isfinite(weights_[p]))
          throw ValueError("non-positive weight in row " + std::to_string(i));
        sum += weights_[p];
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ValueError("row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }

  std::size_t n_;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::vector<float> weights_;
};

namespace detail {

/// Channel-major copy of the features as doubles, optionally L2-normalized
/// per pixel (zero-norm pixels stay zero).
inline std::vector<double> similarity_features(const FeatureMap& f, Similarity sim) {
  const std::size_t n = f.pixels(), c_count = f.channels();
  std::vector<double> x(c_count * n);
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto plane = f.channel(c);
    std::copy(plane.begin(), plane.end(), x.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  if (sim == Similarity::cosine) {
    std::vector<double> sq(n, 0.0);
    for (std::size_t c = 0; c < c_count; ++c)
      for (std::size_t j = 0; j < n; ++j) sq[j] += x[c * n + j] * x[c * n + j];
    for (std::size_t j = 0; j < n; ++j) {
      const double inv = sq[j] > 0.0 ? 1.0 / std::sqrt(sq[j]) : 0.0;
      for (std::size_t c = 0; c < c_count; ++c) x[c * n + j] *= inv;
    }
  }
  return x;
}

inline void check_graph_args(std::size_t n, std::size_t k, double temperature) {
  if (k == 0) throw ValueError("k must be at least 1");
  if (k > n)
    throw ValueError("k exceeds pixel count (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
  if (!(temperature > 0.0)) throw ValueError("temperature must be > 0");
}

}  // namespace detail

/// Sparse transfer matrix over the query pixels. Row i keeps the k largest
/// scores <f_i, f_j> / t (ties to the lower column), softmax-normalized.
inline TransferMatrix build_transfer(const FeatureMap& query, std::size_t k, double temperature,
                                     Similarity sim = Similarity::dot) {
  const std::size_t n = query.pixels(), channels = query.channels();
  detail::check_graph_args(n, k, temperature);
  const auto x = detail::similarity_features(query, sim);

  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::uint32_t> cols(n * k);
  std::vector<float> weights(n * k);
  std::vector<double> scores(n);
  std::vector<std::uint32_t> order(n);
  std::vector<double> kept(k);

  for (std::size_t i = 0; i < n; ++i) {
    std::fill(scores.begin(), scores.end(), 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      const double fi = x[c * n + i];
      const double* row = x.data() + c * n;
      for (std::size_t j = 0; j < n; ++j) scores[j] += fi * row[j];
    }
    for (auto& s : scores) s /= temperature;

    std::iota(order.begin(), order.end(), 0u);
    auto better = [&](std::uint32_t a, std::uint32_t b) {
      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    if (k < n) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), better);
    // nth_element leaves [0, k) holding the k best in unspecified order.
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < k; ++e) peak = std::max(peak, scores[order[e]]);
    double z = 0.0;
    for (std::size_t e = 0; e < k; ++e) {
      kept[e] = std::exp(scores[order[e]] - peak);
      z += kept[e];
    }
    offsets[i] = i * k;
    for (std::size_t e = 0; e < k; ++e) {
      cols[i * k + e] = order[e];
      weights[i * k + e] = static_cast<float>(kept[e] / z);
    }
  }
  offsets[n] = n * k;

  // Entries whose softmax weight underflows float are dropped; exp(s - peak)
  // is exactly 1 for the row maximum, so each row keeps at least one entry.
  std::vector<std::size_t> off2(n + 1, 0);
  std::vector<std::uint32_t> cols2;
  std::vector<float> w2;
  cols2.reserve(n * k);
  w2.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      if (weights[e] > 0.0f) {
        cols2.push_back(cols[e]);
        w2.push_back(weights[e]);
      }
    }
    off2[i + 1] = cols2.size();
  }
  return TransferMatrix(n, std::move(off2), std::move(cols2), std::move(w2));
}

/// Dense N x N transfer matrix computed literally: full score matrix, every
/// non-top-k entry set to -inf, row softmax.
class DenseTransfer {
public:
  DenseTransfer(std::size_t n, std::vector<float> weights) : n_(n), weights_(std::move(weights)) {
    if (weights_.size() != n_ * n_) throw ShapeError("dense transfer weights must be N*N");
  }

  std::size_t size() const noexcept { return n_; }
  float at(std::size_t i, std::size_t j) const { return weights_[i * n_ + j]; }
  std::span<const float> weights() const noexcept { return weights_; }

  void apply(std::span<const float> in, std::span<float> out) const {
    if (in.size() != n_ || out.size() != n_) throw ShapeError("dense transfer size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      const float* row = weights_.data() + i * n_;
      double acc = 0.0;
      for (std::size_t j = 0; j < n_; ++j) acc += static_cast<double>(row[j]) * in[j];
      out[i] = static_cast<float>(acc);
    }
  }

  Tensor to_tensor() const { return Tensor({n_, n_}, weights_); }

private:
  std::size_t n_;
  std::vector<float> weights_;
};

inline DenseTransfer dense_transfer_oracle(const FeatureMap& query, std::size_t k, double temperature,
                                           Similarity sim = Similarity::dot) {
  const std::size_t n = query.pixels(), channels = query.channels();
  if (n > kDenseOracleLimit)
    throw OracleLimitError("dense oracle limited to N <= " + std::to_string(kDenseOracleLimit) +
                           ", got N=" + std::to_string(n));
  detail::check_graph_args(n, k, temperature);
  const auto x = detail::similarity_features(query, sim);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<float> dense(n * n);
  std::vector<double> row(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < channels; ++c) dot += x[c * n + i] * x[c * n + j];
      row[j] = dot / temperature;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t r = k; r < n; ++r) row[order[r]] = kNegInf;

    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& s : row) {
      s = std::exp(s - peak);
      z += s;
    }
    for (std::size_t j = 0; j < n; ++j) dense[i * n + j] = static_cast<float>(row[j] / z);
  }
  return DenseTransfer(n, std::move(dense));
}

/// P * m, reshaped to the prior's H x W.
template <TransferOperator Op>
Tensor spmv(const Op& transfer, const Prior& m) {
  if (transfer.size() != m.size())
    throw ShapeError("transfer matrix N=" + std::to_string(transfer.size()) + " vs prior " +
                     std::to_string(m.height()) + "x" + std::to_string(m.width()));
  std::vector<float> out(m.size());
  transfer.apply(m.values(), out);
  return Tensor({m.height(), m.width()}, std::move(out));
}

}  // namespace cmap
