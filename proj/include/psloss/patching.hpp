#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "tensor.hpp"

namespace psloss {

/** Amplitude spectrum of a batch of series, averaged over batch and channel. */
struct SpectrumResult {
  /** |X_k| for k = 1..floor(T/2); index 0 holds k = 1 (DC is excluded). */
  std::vector<double> amplitudes;
  /** 1-based dominant frequency; ties resolve to the lowest k. */
  std::size_t dominant_frequency = 1;
};

/** Sliding-patch layout derived from the dominant frequency of a batch. */
struct PatchPlan {
  std::size_t period = 0;       // dominant period, floor(T / f)
  std::size_t patch_len = 0;    // P
  std::size_t stride = 0;       // S
  std::size_t patch_count = 0;  // N
  std::size_t max_len = 0;      // configured patch-length cap
};

/** Patched view of a batch: data has shape (B, C, N, P). */
struct PatchSet {
  Tensor data;
  PatchPlan plan;
};

/**
 * Amplitude spectrum of a (B, C, T) batch: per-series FFT magnitudes for
 * frequencies 1..floor(T/2), averaged uniformly over the B*C series. Runs
 * outside any gradient tape.
 *
 * @throws ShapeError  when series is not rank 3
 * @throws ConfigError when T < 4
 */
inline SpectrumResult real_fft_amplitudes(const Tensor& series) {
  if (series.rank() != 3)
    throw ShapeError("real_fft_amplitudes expects (batch, channel, time), got " +
                     shape_str(series.shape()));
  const std::size_t b_dim = series.shape()[0];
  const std::size_t c_dim = series.shape()[1];
  const std::size_t t_len = series.shape()[2];
  if (t_len < 4)
    throw ConfigError("series length " + std::to_string(t_len) +
                      " is too short for spectral analysis (need >= 4)");

  SpectrumResult result;
  result.amplitudes.assign(t_len / 2, 0.0);
  const auto& v = series.values();
  std::vector<std::complex<double>> buf(t_len);
  for (std::size_t s = 0; s < b_dim * c_dim; ++s) {
    for (std::size_t t = 0; t < t_len; ++t)
      buf[t] = {v[s * t_len + t], 0.0};
    detail::fft(buf);
    for (std::size_t k = 1; k <= t_len / 2; ++k)
      result.amplitudes[k - 1] += std::abs(buf[k]);
  }
  const double scale = 1.0 / static_cast<double>(b_dim * c_dim);
  for (auto& a : result.amplitudes) a *= scale;

  std::size_t best = 0;
  for (std::size_t k = 1; k < result.amplitudes.size(); ++k)
    if (result.amplitudes[k] > result.amplitudes[best]) best = k;
  result.dominant_frequency = best + 1;
  return result;
}

/**
 * Patch layout from a dominant frequency: period p = floor(T / f), patch
 * length P = min(floor(p / 2), max_len) clamped to >= 2, stride
 * S = floor(P / 2) clamped to >= 1, count N = floor((T - P) / S) + 1.
 *
 * @param horizon T, the series length the spectrum was computed from
 * @param max_len upper cap on the patch length; must be >= 2
 */
inline PatchPlan make_patch_plan(const SpectrumResult& spectrum,
                                 std::size_t horizon, std::size_t max_len) {
  if (max_len < 2)
    throw ConfigError("patch length cap must be >= 2, got " +
                      std::to_string(max_len));
  if (spectrum.dominant_frequency == 0 ||
      spectrum.dominant_frequency > horizon / 2)
    throw ConfigError("dominant frequency " +
                      std::to_string(spectrum.dominant_frequency) +
                      " is outside 1..floor(T/2) for T = " +
                      std::to_string(horizon));

  PatchPlan plan;
  plan.max_len = max_len;
  plan.period = horizon / spectrum.dominant_frequency;
  plan.patch_len = std::max<std::size_t>(
      2, std::min(plan.period / 2, max_len));
  plan.stride = std::max<std::size_t>(1, plan.patch_len / 2);
  plan.patch_count = (horizon - plan.patch_len) / plan.stride + 1;
  return plan;
}

/** Degenerate layout treating the whole horizon as one patch. */
inline PatchPlan single_patch_plan(std::size_t horizon) {
  PatchPlan plan;
  plan.period = horizon;
  plan.patch_len = horizon;
  plan.stride = horizon;
  plan.patch_count = 1;
  plan.max_len = horizon;
  return plan;
}

/**
 * Differentiable patch extraction: element (b, c, i, j) of the result reads
 * series (b, c, i*S + j). The backward pass scatter-adds, so positions
 * covered by several overlapping patches accumulate every contribution.
 *
 * @throws ShapeError when series is not rank 3 or the plan does not fit its
 *                    time dimension
 */
inline PatchSet segment(const Tensor& series, const PatchPlan& plan) {
  if (series.rank() != 3)
    throw ShapeError("segment expects (batch, channel, time), got " +
                     shape_str(series.shape()));
  const std::size_t b_dim = series.shape()[0];
  const std::size_t c_dim = series.shape()[1];
  const std::size_t t_len = series.shape()[2];
  const std::size_t p_len = plan.patch_len;
  const std::size_t stride = plan.stride;
  const std::size_t count = plan.patch_count;
  if (p_len < 1 || stride < 1 || count < 1 || p_len > t_len ||
      count != (t_len - p_len) / stride + 1)
    throw ShapeError("patch plan does not match series length " +
                     std::to_string(t_len));

  const auto& v = series.values();
  std::vector<double> out(b_dim * c_dim * count * p_len);
  for (std::size_t s = 0; s < b_dim * c_dim; ++s)
    for (std::size_t i = 0; i < count; ++i) {
      const double* src = v.data() + s * t_len + i * stride;
      double* dst = out.data() + (s * count + i) * p_len;
      std::copy(src, src + p_len, dst);
    }

  Shape out_shape{b_dim, c_dim, count, p_len};
  int node = -1;
  Tape* tape = series.tape();
  if (series.attached()) {
    const int na = series.node();
    const std::size_t n_series = b_dim * c_dim;
    node = tape->record(
        out_shape, {na},
        [na, n_series, t_len, p_len, stride, count](
            const std::vector<double>& g, Tape& t) {
          double* ga = t.grad_buf(na).data();
          for (std::size_t s = 0; s < n_series; ++s)
            for (std::size_t i = 0; i < count; ++i) {
              double* dst = ga + s * t_len + i * stride;
              const double* src = g.data() + (s * count + i) * p_len;
              for (std::size_t j = 0; j < p_len; ++j) dst[j] += src[j];
            }
        });
  }
  return PatchSet{Tensor::from_op(std::move(out_shape), std::move(out), tape,
                                  node),
                  plan};
}

}  // namespace psloss
