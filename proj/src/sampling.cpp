#include "terrafill/diffusion/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace terrafill::diffusion {

namespace {

nn::Tensor<float> gaussian(int n, int c, int h, int w, Rng& rng) {
  nn::Tensor<float> out(n, c, h, w);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data[i] = static_cast<float>(rng.normal());
  }
  return out;
}

// One reverse transition from level t to t-1 for the whole batch.
void reverse_step(nn::UNet<float>& unet, const DiffusionSchedule& sched, int t,
                  nn::Tensor<float>& x, Rng& rng) {
  const std::vector<int> ts(x.dims[0], t);
  const nn::Tensor<float> eps_hat = unet.apply(x, ts);
  const double a = sched.alpha_at(t);
  const double ab = sched.alpha_bar_at(t);
  const float coef = static_cast<float>((1.0 - a) / std::sqrt(1.0 - ab));
  const float inv_sqrt_a = static_cast<float>(1.0 / std::sqrt(a));
  x.data = inv_sqrt_a * (x.data - coef * eps_hat.data);
  if (t > 1) {
    const float sig = static_cast<float>(sched.sigma_at(t));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data[i] += sig * static_cast<float>(rng.normal());
    }
  }
  if (!x.all_finite()) {
    throw NonFinite("reverse diffusion diverged at timestep " + std::to_string(t));
  }
}

}  // namespace

nn::Tensor<float> ddpm_sample(nn::UNet<float>& unet, const DiffusionSchedule& sched,
                              Rng& rng, int batch, int height, int width) {
  nn::Tensor<float> x = gaussian(batch, unet.config().in_channels, height, width, rng);
  for (int t = sched.T; t >= 1; --t) {
    reverse_step(unet, sched, t, x, rng);
  }
  return x;
}

std::vector<int> repaint_time_sequence(int T, int jump_length, int num_resamples) {
  if (T < 1 || jump_length < 1 || num_resamples < 1) {
    throw InvalidConfig("repaint_time_sequence: need T, j, r >= 1");
  }
  std::map<int, int> jumps;
  for (int t = 0; t < T - jump_length; t += jump_length) jumps[t] = num_resamples - 1;
  std::vector<int> seq{T};
  int t = T;
  while (t >= 1) {
    --t;
    seq.push_back(t);
    auto it = jumps.find(t);
    if (it != jumps.end() && it->second > 0) {
      --it->second;
      for (int i = 0; i < jump_length; ++i) {
        ++t;
        seq.push_back(t);
      }
    }
  }
  return seq;
}

nn::Tensor<float> to_tensor(const Heightmap& h) {
  nn::Tensor<float> t(1, 1, static_cast<int>(h.rows()), static_cast<int>(h.cols()));
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) t.at(0, 0, y, x) = h(y, x);
  }
  return t;
}

Heightmap to_heightmap(const nn::Tensor<float>& t) {
  Heightmap h(t.dims[2], t.dims[3]);
  for (int y = 0; y < t.dims[2]; ++y) {
    for (int x = 0; x < t.dims[3]; ++x) h(y, x) = t.at(0, 0, y, x);
  }
  return h;
}

Heightmap repaint_inpaint(nn::UNet<float>& unet, const DiffusionSchedule& sched_in,
                          const Heightmap& h, const Mask& m, const RepaintConfig& cfg,
                          Rng& rng, RepaintStats* stats) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeMismatch("repaint_inpaint: mask dims do not match raster");
  }
  const int H = static_cast<int>(h.rows());
  const int W = static_cast<int>(h.cols());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m(y, x) && !std::isfinite(h(y, x))) {
        throw ContainsNodata("repaint_inpaint: NaN outside the mask");
      }
    }
  }

  DiffusionSchedule sched = sched_in;
  if (cfg.T_inference > 0 && cfg.T_inference != sched.T) {
    sched = make_schedule(cfg.T_inference, sched.beta_1, sched.beta_T, sched.sigma_mode);
  }

  if (m.count() == 0) return h;  // nothing to inpaint

  const bool all_masked = m.all();
  if (all_masked) {
    std::fprintf(stderr,
                 "repaint_inpaint: warning: mask covers every pixel, "
                 "falling back to unconditional sampling\n");
  }

  // masked input values are never read; zero them so schedule arithmetic
  // stays NaN-free
  nn::Tensor<float> x0 = to_tensor(h);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (m(y, x)) x0.at(0, 0, y, x) = 0.0f;
    }
  }

  const std::vector<int> seq =
      repaint_time_sequence(sched.T, cfg.jump_length, cfg.num_resamples);
  nn::Tensor<float> x = gaussian(1, 1, H, W, rng);
  RepaintStats st;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const int from = seq[i - 1];
    const int to = seq[i];
    if (to == from - 1) {
      reverse_step(unet, sched, from, x, rng);
      ++st.denoise_steps;
      if (!all_masked) {
        // overwrite the known region with the forward-noised input at the
        // new level; level 0 keeps x0 itself
        nn::Tensor<float> eps = gaussian(1, 1, H, W, rng);
        const nn::Tensor<float> xk = q_sample(x0, {to}, eps, sched);
        for (int y = 0; y < H; ++y) {
          for (int xx = 0; xx < W; ++xx) {
            if (!m(y, xx)) x.at(0, 0, y, xx) = xk.at(0, 0, y, xx);
          }
        }
      }
    } else {
      // one-step forward noising from level from to to = from + 1
      const double beta = sched.beta_at(to);
      const float a = static_cast<float>(std::sqrt(1.0 - beta));
      const float b = static_cast<float>(std::sqrt(beta));
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        x.data[k] = a * x.data[k] + b * static_cast<float>(rng.normal());
      }
      ++st.renoise_steps;
    }
  }
  if (stats) *stats = st;

  Heightmap out = h;
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      if (m(y, xx) || all_masked) {
        out(y, xx) = std::clamp(x.at(0, 0, y, xx), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace terrafill::diffusion
