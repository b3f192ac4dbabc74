#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace psloss {

/** Monotone alignment from (0, 0) to (n-1, m-1), in forward order. */
using WarpingPath = std::vector<std::pair<std::size_t, std::size_t>>;

struct DtwResult {
  double cost = 0.0;
  WarpingPath path;
};

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  double dtw = 0.0;
  double tdi = 0.0;
  double pcc = 0.0;
};

/**
 * Dynamic time warping with squared-Euclidean local cost over the full
 * alignment lattice. The returned path is recovered by backtracking; when
 * predecessors tie, the diagonal step is preferred, then the vertical step
 * (advance in `a`), then the horizontal step (advance in `b`).
 *
 * @throws ShapeError when either series is empty
 */
inline DtwResult dtw(const std::vector<double>& a,
                     const std::vector<double>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0)
    throw ShapeError("dtw requires non-empty series");

  std::vector<double> dp(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double diff = a[i] - b[j];
      double best = 0.0;
      if (i > 0 && j > 0) {
        best = dp[(i - 1) * m + (j - 1)];
        best = std::min(best, dp[(i - 1) * m + j]);
        best = std::min(best, dp[i * m + (j - 1)]);
      } else if (i > 0) {
        best = dp[(i - 1) * m + j];
      } else if (j > 0) {
        best = dp[i * m + (j - 1)];
      }
      dp[i * m + j] = diff * diff + best;
    }

  DtwResult res;
  res.cost = dp[n * m - 1];
  std::size_t i = n - 1, j = m - 1;
  res.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    const double inf = std::numeric_limits<double>::infinity();
    const double diag = (i > 0 && j > 0) ? dp[(i - 1) * m + (j - 1)] : inf;
    const double vert = i > 0 ? dp[(i - 1) * m + j] : inf;
    const double horz = j > 0 ? dp[i * m + (j - 1)] : inf;
    if (diag <= vert && diag <= horz) {
      --i;
      --j;
    } else if (vert <= horz) {
      --i;
    } else {
      --j;
    }
    res.path.emplace_back(i, j);
  }
  std::reverse(res.path.begin(), res.path.end());
  return res;
}

/**
 * Temporal distortion index of an alignment: Sum[(i - j)^2] over the path,
 * normalized by horizon^2. Zero for the pure diagonal.
 */
inline double tdi(const WarpingPath& path, std::size_t horizon) {
  if (horizon == 0) throw ShapeError("tdi requires a positive horizon");
  double acc = 0.0;
  for (const auto& [i, j] : path) {
    const double d = static_cast<double>(i) - static_cast<double>(j);
    acc += d * d;
  }
  return acc / (static_cast<double>(horizon) * static_cast<double>(horizon));
}

/**
 * Pearson correlation coefficient; 0 when either side is constant.
 *
 * @throws ShapeError when lengths differ or are zero
 */
inline double pcc(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError("pcc requires equal-length non-empty series");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  const double denom = std::sqrt(va) * std::sqrt(vb);
  return denom > 0.0 ? cov / denom : 0.0;
}

/**
 * Forecast quality report over (B, C, T) batches: MSE and MAE over all
 * elements; DTW cost, temporal distortion, and correlation computed per
 * (batch, channel) series and averaged uniformly.
 */
inline MetricsReport evaluate(const Tensor& truth, const Tensor& pred) {
  if (truth.shape() != pred.shape())
    throw ShapeError("evaluate: shapes differ, " + shape_str(truth.shape()) +
                     " vs " + shape_str(pred.shape()));
  if (truth.rank() != 3)
    throw ShapeError("evaluate expects (batch, channel, time), got " +
                     shape_str(truth.shape()));
  const std::size_t n_series = truth.shape()[0] * truth.shape()[1];
  const std::size_t t_len = truth.shape()[2];
  const auto& tv = truth.values();
  const auto& pv = pred.values();

  MetricsReport rep;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    const double d = pv[i] - tv[i];
    rep.mse += d * d;
    rep.mae += std::fabs(d);
  }
  rep.mse /= static_cast<double>(tv.size());
  rep.mae /= static_cast<double>(tv.size());

  std::vector<double> a(t_len), b(t_len);
  for (std::size_t s = 0; s < n_series; ++s) {
    std::copy(tv.begin() + static_cast<std::ptrdiff_t>(s * t_len),
              tv.begin() + static_cast<std::ptrdiff_t>((s + 1) * t_len),
              a.begin());
    std::copy(pv.begin() + static_cast<std::ptrdiff_t>(s * t_len),
              pv.begin() + static_cast<std::ptrdiff_t>((s + 1) * t_len),
              b.begin());
    DtwResult r = dtw(a, b);
    rep.dtw += r.cost;
    rep.tdi += tdi(r.path, t_len);
    rep.pcc += pcc(a, b);
  }
  rep.dtw /= static_cast<double>(n_series);
  rep.tdi /= static_cast<double>(n_series);
  rep.pcc /= static_cast<double>(n_series);
  return rep;
}

}  // namespace psloss
