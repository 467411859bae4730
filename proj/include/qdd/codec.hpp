#pragma once

// Quantile action codec. Continuous action chunks are normalized per
// dimension (quantile range by default, mean/std as the alternative) and
// uniformly bucketed into K bins over [-1, 1]; values outside the range
// saturate into the edge bins. Decoding emits bin centers, so round-trip
// error inside the fitted range is bounded by half a bin width in
// normalized space. Normalization itself never clamps: tails survive until
// tokenization so the affine map stays invertible.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "qdd/common.hpp"

namespace qdd {

struct ChunkLayout {
  int horizon = 8;
  int action_dim = 7;

  int positions() const { return horizon * action_dim; }
};

inline void validate_layout(const ChunkLayout& layout) {
  require(layout.horizon > 0, "shape-mismatch",
          "chunk horizon must be positive, got " + std::to_string(layout.horizon));
  require(layout.action_dim > 0, "shape-mismatch",
          "action dim must be positive, got " + std::to_string(layout.action_dim));
}

// Dense H x D block of continuous actions, row-major over time.
struct ActionChunk {
  ChunkLayout layout;
  Vec values;  // layout.positions() entries

  double& at(int t, int d) { return values[static_cast<std::size_t>(t) * layout.action_dim + d]; }
  double at(int t, int d) const {
    return values[static_cast<std::size_t>(t) * layout.action_dim + d];
  }
};

inline ActionChunk make_chunk(const ChunkLayout& layout) {
  validate_layout(layout);
  return ActionChunk{layout, Vec(static_cast<std::size_t>(layout.positions()), 0.0)};
}

struct TokenGrid {
  ChunkLayout layout;
  int bins = 0;
  std::vector<int> indices;  // layout.positions() entries, each in [0, bins)
};

// Scaled one-hot stack: one row of K entries per chunk position, with the
// selected bin set to `alpha` and everything else exactly zero.
struct OneHotTensor {
  ChunkLayout layout;
  int bins = 0;
  double alpha = 0.1;
  Vec data;  // positions() * bins, position-major

  double at(int pos, int k) const { return data[static_cast<std::size_t>(pos) * bins + k]; }
};

enum class NormMode { quantile, mean_std };

inline std::string to_string(NormMode mode) {
  return mode == NormMode::quantile ? "quantile" : "mean_std";
}

inline NormMode norm_mode_from_string(const std::string& s) {
  if (s == "quantile") return NormMode::quantile;
  if (s == "mean_std") return NormMode::mean_std;
  fail("invalid-argument", "unknown normalization mode '" + s + "'");
}

// Per-dimension statistics fitted on a demo corpus. Both normalizers keep
// their stats here so a single file describes the codec.
struct QuantileCodec {
  int dims = 0;
  int bins = 0;
  Vec q_lo;   // per-dim lower percentile
  Vec q_hi;   // per-dim upper percentile
  Vec mean;   // per-dim mean
  Vec stdev;  // per-dim standard deviation
};

inline void validate_codec(const QuantileCodec& codec) {
  require(codec.dims > 0, "shape-mismatch", "codec has no dimensions");
  require(codec.bins >= 2, "invalid-argument",
          "codec needs at least 2 bins, got " + std::to_string(codec.bins));
  auto expect_dims = [&](const Vec& v, const char* name) {
    require(static_cast<int>(v.size()) == codec.dims, "shape-mismatch",
            std::string(name) + " has " + std::to_string(v.size()) + " entries, expected " +
                std::to_string(codec.dims));
  };
  expect_dims(codec.q_lo, "q_lo");
  expect_dims(codec.q_hi, "q_hi");
  expect_dims(codec.mean, "mean");
  expect_dims(codec.stdev, "stdev");
  for (int d = 0; d < codec.dims; ++d) {
    if (!(codec.q_lo[d] < codec.q_hi[d]))
      fail("degenerate-dimension",
           "dimension " + std::to_string(d) + " has empty quantile range [" +
               std::to_string(codec.q_lo[d]) + ", " + std::to_string(codec.q_hi[d]) + "]");
  }
}

namespace detail {

// Percentile with linear interpolation between order statistics.
// `sorted` must be ascending, p in [0, 1].
inline double percentile_sorted(const Vec& sorted, double p) {
  if (sorted.size() == 1) return sorted[0];
  double h = p * static_cast<double>(sorted.size() - 1);
  auto i = static_cast<std::size_t>(h);
  if (i + 1 >= sorted.size()) return sorted.back();
  double frac = h - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

constexpr double kNormEps = 1e-6;

}  // namespace detail

// Fit per-dimension stats over every timestep of every chunk in the corpus.
inline QuantileCodec fit_stats(std::span<const ActionChunk> dataset, double lo_pct, double hi_pct,
                               int bins) {
  require(!dataset.empty(), "invalid-argument", "cannot fit codec stats on an empty dataset");
  require(lo_pct >= 0.0 && hi_pct <= 1.0 && lo_pct < hi_pct, "invalid-argument",
          "percentiles must satisfy 0 <= lo < hi <= 1");
  require(bins >= 2, "invalid-argument", "codec needs at least 2 bins");

  const int dims = dataset.front().layout.action_dim;
  for (const auto& chunk : dataset)
    require(chunk.layout.action_dim == dims, "shape-mismatch",
            "chunks in the dataset disagree on action dim");

  QuantileCodec codec;
  codec.dims = dims;
  codec.bins = bins;
  codec.q_lo.resize(dims);
  codec.q_hi.resize(dims);
  codec.mean.resize(dims);
  codec.stdev.resize(dims);

  Vec column;
  for (int d = 0; d < dims; ++d) {
    column.clear();
    for (const auto& chunk : dataset)
      for (int t = 0; t < chunk.layout.horizon; ++t) {
        double x = chunk.at(t, d);
        if (!std::isfinite(x))
          fail("invalid-action", "non-finite value in dimension " + std::to_string(d));
        column.push_back(x);
      }
    std::sort(column.begin(), column.end());
    codec.q_lo[d] = detail::percentile_sorted(column, lo_pct);
    codec.q_hi[d] = detail::percentile_sorted(column, hi_pct);
    if (!(codec.q_lo[d] < codec.q_hi[d]))
      fail("degenerate-dimension",
           "dimension " + std::to_string(d) + " has no spread between the fitted percentiles");

    double sum = 0.0;
    for (double x : column) sum += x;
    double mu = sum / static_cast<double>(column.size());
    double ss = 0.0;
    for (double x : column) ss += (x - mu) * (x - mu);
    double var = column.size() > 1 ? ss / static_cast<double>(column.size() - 1) : 0.0;
    codec.mean[d] = mu;
    codec.stdev[d] = std::sqrt(var);
  }
  return codec;
}

inline double normalize_value(double x, const QuantileCodec& codec, int d, NormMode mode) {
  if (mode == NormMode::quantile)
    return 2.0 * (x - codec.q_lo[d]) / ((codec.q_hi[d] - codec.q_lo[d]) + detail::kNormEps) - 1.0;
  return (x - codec.mean[d]) / (codec.stdev[d] + detail::kNormEps);
}

inline double denormalize_value(double z, const QuantileCodec& codec, int d, NormMode mode) {
  if (mode == NormMode::quantile)
    return (z + 1.0) * 0.5 * ((codec.q_hi[d] - codec.q_lo[d]) + detail::kNormEps) + codec.q_lo[d];
  return z * (codec.stdev[d] + detail::kNormEps) + codec.mean[d];
}

inline ActionChunk normalize(const ActionChunk& chunk, const QuantileCodec& codec,
                             NormMode mode = NormMode::quantile) {
  validate_codec(codec);
  require(chunk.layout.action_dim == codec.dims, "shape-mismatch",
          "chunk action dim does not match codec");
  ActionChunk out = chunk;
  for (int t = 0; t < chunk.layout.horizon; ++t)
    for (int d = 0; d < codec.dims; ++d) {
      double x = chunk.at(t, d);
      if (!std::isfinite(x))
        fail("invalid-action", "non-finite action value at t=" + std::to_string(t) +
                                   " d=" + std::to_string(d));
      out.at(t, d) = normalize_value(x, codec, d, mode);
    }
  return out;
}

inline ActionChunk denormalize(const ActionChunk& chunk, const QuantileCodec& codec,
                               NormMode mode = NormMode::quantile) {
  validate_codec(codec);
  require(chunk.layout.action_dim == codec.dims, "shape-mismatch",
          "chunk action dim does not match codec");
  ActionChunk out = chunk;
  for (int t = 0; t < chunk.layout.horizon; ++t)
    for (int d = 0; d < codec.dims; ++d)
      out.at(t, d) = denormalize_value(chunk.at(t, d), codec, d, mode);
  return out;
}

// Map a normalized value in [-1, 1] to a bin index in [0, K).
inline int token_of_normalized(double z, int bins) {
  int k = static_cast<int>(std::floor((z + 1.0) * 0.5 * static_cast<double>(bins)));
  if (k >= bins) k = bins - 1;  // z == 1.0 lands here
  if (k < 0) k = 0;
  return k;
}

// Bin center of index k in normalized coordinates.
inline double bin_center(int k, int bins) {
  return (static_cast<double>(k) + 0.5) * 2.0 / static_cast<double>(bins) - 1.0;
}

inline TokenGrid tokenize(const ActionChunk& chunk, const QuantileCodec& codec,
                          NormMode mode = NormMode::quantile) {
  ActionChunk normed = normalize(chunk, codec, mode);
  TokenGrid grid;
  grid.layout = chunk.layout;
  grid.bins = codec.bins;
  grid.indices.resize(static_cast<std::size_t>(chunk.layout.positions()));
  for (int t = 0; t < chunk.layout.horizon; ++t)
    for (int d = 0; d < codec.dims; ++d)
      grid.indices[static_cast<std::size_t>(t) * codec.dims + d] =
          token_of_normalized(normed.at(t, d), codec.bins);
  return grid;
}

inline ActionChunk detokenize(const TokenGrid& grid, const QuantileCodec& codec,
                              NormMode mode = NormMode::quantile) {
  validate_codec(codec);
  require(grid.layout.action_dim == codec.dims, "shape-mismatch",
          "token grid action dim does not match codec");
  require(grid.bins == codec.bins, "shape-mismatch", "token grid bin count does not match codec");
  ActionChunk out = make_chunk(grid.layout);
  for (int t = 0; t < grid.layout.horizon; ++t)
    for (int d = 0; d < codec.dims; ++d) {
      int k = grid.indices[static_cast<std::size_t>(t) * codec.dims + d];
      if (k < 0 || k >= codec.bins)
        fail("invalid-token", "token " + std::to_string(k) + " outside [0, " +
                                  std::to_string(codec.bins) + ")");
      out.at(t, d) = denormalize_value(bin_center(k, codec.bins), codec, d, mode);
    }
  return out;
}

// Expand tokens into the scaled one-hot stack the diffusion process runs on.
inline OneHotTensor one_hot_smooth(const TokenGrid& grid, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, "invalid-smoothing",
          "smoothing scale must lie in (0, 1], got " + std::to_string(alpha));
  require(grid.bins >= 2, "invalid-argument", "token grid needs at least 2 bins");
  OneHotTensor out;
  out.layout = grid.layout;
  out.bins = grid.bins;
  out.alpha = alpha;
  out.data.assign(static_cast<std::size_t>(grid.layout.positions()) * grid.bins, 0.0);
  for (std::size_t pos = 0; pos < grid.indices.size(); ++pos) {
    int k = grid.indices[pos];
    if (k < 0 || k >= grid.bins)
      fail("invalid-token",
           "token " + std::to_string(k) + " outside [0, " + std::to_string(grid.bins) + ")");
    out.data[pos * grid.bins + k] = alpha;
  }
  return out;
}

}  // namespace qdd
