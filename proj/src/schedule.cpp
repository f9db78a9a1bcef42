#include "terrafill/diffusion/schedule.hpp"

#include <cmath>

namespace terrafill::diffusion {

DiffusionSchedule make_schedule(int T, double beta_1, double beta_T, SigmaMode sigma_mode) {
  if (T < 1) throw BadRange("make_schedule: T must be >= 1");
  if (!(beta_1 > 0.0) || !(beta_T < 1.0) || (T > 1 && !(beta_1 < beta_T)) ||
      (T == 1 && !(beta_1 <= beta_T))) {
    throw BadRange("make_schedule: need 0 < beta_1 < beta_T < 1");
  }
  DiffusionSchedule s;
  s.T = T;
  s.beta_1 = beta_1;
  s.beta_T = beta_T;
  s.sigma_mode = sigma_mode;
  s.beta.resize(T);
  for (int t = 1; t <= T; ++t) {
    s.beta[t - 1] = T == 1 ? beta_1 : beta_1 + (beta_T - beta_1) * (t - 1) / (T - 1);
  }
  s.alpha = 1.0 - s.beta;
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  s.sigma.resize(T);
  for (int t = 1; t <= T; ++t) {
    if (sigma_mode == SigmaMode::beta) {
      s.sigma[t - 1] = std::sqrt(s.beta[t - 1]);
    } else {
      const double ab_prev = t == 1 ? 1.0 : s.alpha_bar[t - 2];
      s.sigma[t - 1] =
          std::sqrt((1.0 - ab_prev) / (1.0 - s.alpha_bar[t - 1]) * s.beta[t - 1]);
    }
  }
  return s;
}

}  // namespace terrafill::diffusion
