#pragma once

#include <Eigen/Core>
#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/nn/tensor.hpp"

namespace terrafill::diffusion {

enum class SigmaMode {
  beta,       // sigma_t^2 = beta_t
  posterior,  // sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
};

// Precomputed beta/alpha/alpha_bar/sigma tables for a linear beta schedule,
// 1-indexed by timestep t in 1..T (arrays store t-1). Kept in double; the
// cumulative product loses too much at T = 1000 in single precision.
struct DiffusionSchedule {
  int T = 0;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  SigmaMode sigma_mode = SigmaMode::beta;
  Eigen::ArrayXd beta;
  Eigen::ArrayXd alpha;
  Eigen::ArrayXd alpha_bar;
  Eigen::ArrayXd sigma;

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
  double sigma_at(int t) const { return sigma[t - 1]; }
};

// beta linear from beta_1 to beta_T over T steps; throws BadRange unless
// 0 < beta_1 < beta_T < 1 (T = 1 uses beta_1 alone).
DiffusionSchedule make_schedule(int T, double beta_1 = 1e-4, double beta_T = 0.02,
                                SigmaMode sigma_mode = SigmaMode::beta);

// The reference (1e-4, 0.02) endpoints assume T = 1000. Shorter chains keep
// the same total injected noise (sum beta ~ 10, so abar_T stays ~4e-5) by
// scaling the endpoints with 1000/T.
struct BetaRange {
  double beta_1;
  double beta_T;
};
inline BetaRange scaled_beta_range(int T) {
  const double f = 1000.0 / T;
  return {std::min(0.999, 1e-4 * f), std::min(0.999, 0.02 * f)};
}

// Closed-form forward corruption: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps,
// with one timestep per batch item. t = 0 returns x0 unchanged.
template <class S>
nn::Tensor<S> q_sample(const nn::Tensor<S>& x0, const std::vector<int>& t,
                       const nn::Tensor<S>& eps, const DiffusionSchedule& sched) {
  if (!x0.same_shape(eps)) {
    throw ShapeMismatch("q_sample: eps " + eps.shape_str() + " vs x0 " + x0.shape_str());
  }
  if (static_cast<int>(t.size()) != x0.dims[0]) {
    throw ShapeMismatch("q_sample: one timestep per batch item required");
  }
  nn::Tensor<S> out = x0;
  const Eigen::Index per_item = x0.size() / x0.dims[0];
  for (int n = 0; n < x0.dims[0]; ++n) {
    if (t[n] < 0 || t[n] > sched.T) throw BadRange("q_sample: timestep out of range");
    const double ab = t[n] == 0 ? 1.0 : sched.alpha_bar_at(t[n]);
    const S a = static_cast<S>(std::sqrt(ab));
    const S b = static_cast<S>(std::sqrt(1.0 - ab));
    out.data.segment(n * per_item, per_item) =
        a * x0.data.segment(n * per_item, per_item) + b * eps.data.segment(n * per_item, per_item);
  }
  return out;
}

}  // namespace terrafill::diffusion
