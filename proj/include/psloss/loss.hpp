#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace psloss {

/** Epsilon guarding the correlation denominator. */
inline constexpr double kCorrEps = 1e-8;
/** Probabilities below this floor are skipped in the divergence sum. */
inline constexpr double kProbFloor = 1e-300;

/** Per-patch first and second moments, shape (B, C, N). */
struct PatchStats {
  Tensor mean;
  Tensor std;  // population standard deviation; 0 for a constant patch
};

/** Structural loss components, each a scalar tensor. */
struct LossBreakdown {
  Tensor corr;
  Tensor var;
  Tensor mean;
  Tensor total;
};

namespace detail {

inline void require_patches(const Tensor& t, const char* who) {
  if (t.rank() != 4)
    throw ShapeError(std::string(who) +
                     " expects patches (batch, channel, patch, position), got " +
                     shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

/** Mean squared error; the first argument is treated as a constant. */
inline Tensor mse_loss(const Tensor& truth, const Tensor& pred) {
  detail::require_same_shape(truth, pred, "mse_loss");
  return mean(square(sub(pred, truth.detached())));
}

/**
 * Mean and population standard deviation along the patch axis of a
 * (B, C, N, P) tensor. Differentiable when the input is attached.
 */
inline PatchStats patch_stats(const Tensor& patches) {
  detail::require_patches(patches, "patch_stats");
  Tensor mu = mean(patches, 3, true);
  Tensor var = mean(square(sub(patches, mu)), 3, false);
  return PatchStats{mean(patches, 3, false), psloss::sqrt(var)};
}

/**
 * Mean over patches of (1 - rho), where rho is the epsilon-guarded Pearson
 * correlation between truth and prediction inside each patch. The truth side
 * is treated as constant; gradients flow through the prediction only.
 * Range is [0, 2]: 0 for positively affine agreement, 2 for anti-correlation;
 * a constant truth patch contributes the neutral value 1.
 */
inline Tensor corr_loss(const Tensor& truth_patches,
                        const Tensor& pred_patches) {
  detail::require_patches(truth_patches, "corr_loss");
  detail::require_same_shape(truth_patches, pred_patches, "corr_loss");
  const double p_len = static_cast<double>(truth_patches.shape()[3]);

  Tensor truth = truth_patches.detached();
  Tensor dev_t = sub(truth, mean(truth, 3, true));
  Tensor sigma_t = psloss::sqrt(mean(square(dev_t), 3, false));

  Tensor dev_p = sub(pred_patches, mean(pred_patches, 3, true));
  Tensor sigma_p = psloss::sqrt(mean(square(dev_p), 3, false));

  Tensor num = sum(mul(dev_t, dev_p), 3, false);
  Tensor denom = add(mul(mul(sigma_t, sigma_p), Tensor::scalar(p_len)),
                     Tensor::scalar(kCorrEps));
  Tensor rho = div(num, denom);
  return mean(sub(Tensor::scalar(1.0), rho));
}

/**
 * Mean over patches of KL(softmax(truth) || softmax(pred)) along the patch
 * axis, computed in log space. Truth-side probabilities below 1e-300 are
 * skipped. Invariant to adding a constant to either side within a patch.
 */
inline Tensor var_loss(const Tensor& truth_patches,
                       const Tensor& pred_patches) {
  detail::require_patches(truth_patches, "var_loss");
  detail::require_same_shape(truth_patches, pred_patches, "var_loss");

  Tensor t_prob = softmax(truth_patches.detached(), 3);
  const auto& tv = t_prob.values();
  std::vector<double> t_masked(tv.size()), t_log_t(tv.size());
  for (std::size_t i = 0; i < tv.size(); ++i) {
    if (tv[i] < kProbFloor) {
      t_masked[i] = 0.0;
      t_log_t[i] = 0.0;
    } else {
      t_masked[i] = tv[i];
      t_log_t[i] = tv[i] * std::log(tv[i]);
    }
  }
  Tensor t_const(t_prob.shape(), std::move(t_masked));
  Tensor entropy_const(t_prob.shape(), std::move(t_log_t));

  Tensor log_s = log_softmax(pred_patches, 3);
  Tensor kl = sum(sub(entropy_const, mul(t_const, log_s)), 3, false);
  return mean(kl);
}

/**
 * Mean absolute difference between per-patch means of truth and prediction.
 * The subgradient at an exact tie is 0.
 */
inline Tensor mean_loss(const Tensor& truth_patches,
                        const Tensor& pred_patches) {
  detail::require_patches(truth_patches, "mean_loss");
  detail::require_same_shape(truth_patches, pred_patches, "mean_loss");
  Tensor mu_t = mean(truth_patches.detached(), 3, false);
  Tensor mu_p = mean(pred_patches, 3, false);
  return mean(psloss::abs(sub(mu_t, mu_p)));
}

/**
 * Weighted structural loss over a pair of patch tensors:
 * total = alpha * corr + beta * var + gamma * mean.
 *
 * @throws ConfigError when any weight is negative
 */
inline LossBreakdown ps_loss(const Tensor& truth_patches,
                             const Tensor& pred_patches, double alpha,
                             double beta, double gamma) {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
    throw ConfigError("structural loss weights must be non-negative");
  LossBreakdown out{corr_loss(truth_patches, pred_patches),
                    var_loss(truth_patches, pred_patches),
                    mean_loss(truth_patches, pred_patches), Tensor()};
  out.total = add(add(mul(out.corr, Tensor::scalar(alpha)),
                      mul(out.var, Tensor::scalar(beta))),
                  mul(out.mean, Tensor::scalar(gamma)));
  return out;
}

}  // namespace psloss
