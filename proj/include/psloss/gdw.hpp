#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace psloss {

/** Epsilon guarding the weight ratios and scale factors. */
inline constexpr double kGdwEps = 1e-12;

/** Snapshot of one dynamic-weighting step, for tracing. */
struct WeightState {
  std::size_t step = 0;
  double g_corr = 0.0;
  double g_var = 0.0;
  double g_mean = 0.0;
  double g_bar = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double c = 1.0;
  double v = 1.0;
};

/** Correlation- and variance-based scale factors for the mean component. */
struct ScaleFactors {
  double c = 1.0;
  double v = 1.0;
};

/** Configuration for combining the base and structural losses. */
struct TotalLossConfig {
  double lambda = 1.0;
  bool gdw_enabled = true;
  std::array<double, 3> fixed_weights{1.0, 1.0, 1.0};
};

/**
 * L2 norm of the gradient of a scalar loss with respect to the given
 * parameter nodes, via one restricted backward pass. The pass reuses the
 * tape's recorded graph and zeroes its buffers, so any number of calls on
 * the same graph are independent.
 */
inline double grad_norm(Tape& tape, const Tensor& loss,
                        const std::vector<int>& wrt) {
  auto grads = tape.backward(loss, wrt);
  double acc = 0.0;
  for (const auto& [id, g] : grads)
    for (double x : g.values()) acc += x * x;
  return std::sqrt(acc);
}

/**
 * Gradient norms of the three structural components with respect to the
 * output-layer parameters, one backward pass per component.
 */
inline std::array<double, 3> grad_norms(Tape& tape, const Tensor& l_corr,
                                        const Tensor& l_var,
                                        const Tensor& l_mean,
                                        const std::vector<int>& wrt) {
  return {grad_norm(tape, l_corr, wrt), grad_norm(tape, l_var, wrt),
          grad_norm(tape, l_mean, wrt)};
}

/**
 * Scale factors computed from the flattened truth and prediction values
 * (both treated as constants):
 *   c = (1 + corr(Y, Yhat)) / 2, v = 2*sY*sYh / (sY^2 + sYh^2 + eps).
 * c is 1 at perfect correlation, 0 at perfect anti-correlation; v is 1 when
 * the two standard deviations agree.
 */
inline ScaleFactors scale_factors(const Tensor& truth, const Tensor& pred) {
  if (truth.shape() != pred.shape())
    throw ShapeError("scale_factors: shapes differ, " +
                     shape_str(truth.shape()) + " vs " +
                     shape_str(pred.shape()));
  const auto& y = truth.values();
  const auto& yh = pred.values();
  const double n = static_cast<double>(y.size());

  double my = 0.0, myh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    myh += yh[i];
  }
  my /= n;
  myh /= n;

  double cov = 0.0, vy = 0.0, vyh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dy = y[i] - my;
    const double dyh = yh[i] - myh;
    cov += dy * dyh;
    vy += dy * dy;
    vyh += dyh * dyh;
  }
  cov /= n;
  vy /= n;
  vyh /= n;

  const double sy = std::sqrt(vy);
  const double syh = std::sqrt(vyh);
  ScaleFactors f;
  f.c = 0.5 * (1.0 + cov / (sy * syh + kGdwEps));
  f.v = 2.0 * sy * syh / (vy + vyh + kGdwEps);
  return f;
}

/**
 * Balancing weights from component gradient norms: each active component is
 * weighted by g_bar / (g_i + eps) where g_bar is the mean norm over active
 * components; the mean component is additionally scaled by c*v. Inactive
 * components get weight 0. When every active norm is below eps the weights
 * fall back to 1 (c*v for the mean component). The result is a plain value;
 * no gradient flows through it.
 */
inline std::array<double, 3> compute_weights(
    const std::array<double, 3>& norms, double c, double v,
    const std::array<bool, 3>& active = {true, true, true}) {
  double g_bar = 0.0;
  std::size_t n_active = 0;
  bool degenerate = true;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!active[i]) continue;
    g_bar += norms[i];
    ++n_active;
    if (norms[i] >= kGdwEps) degenerate = false;
  }
  if (n_active == 0) return {0.0, 0.0, 0.0};
  g_bar /= static_cast<double>(n_active);

  std::array<double, 3> w{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!active[i]) continue;
    w[i] = degenerate ? 1.0 : g_bar / (norms[i] + kGdwEps);
  }
  if (active[2]) w[2] *= c * v;
  return w;
}

/**
 * Combined objective l_mse + lambda * l_ps.
 *
 * @throws ConfigError when lambda is negative
 * @throws ShapeError  when either loss is not scalar
 */
inline Tensor total_loss(const Tensor& l_mse, const Tensor& l_ps,
                         const TotalLossConfig& cfg) {
  if (cfg.lambda < 0.0)
    throw ConfigError("loss mixing weight lambda must be >= 0");
  if (l_mse.size() != 1 || l_ps.size() != 1)
    throw ShapeError("total_loss expects scalar losses");
  return add(l_mse, mul(l_ps, Tensor::scalar(cfg.lambda)));
}

}  // namespace psloss
