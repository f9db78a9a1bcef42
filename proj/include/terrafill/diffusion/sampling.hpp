#pragma once

#include <vector>

#include "terrafill/diffusion/schedule.hpp"
#include "terrafill/nn/unet.hpp"
#include "terrafill/rng.hpp"
#include "terrafill/types.hpp"

namespace terrafill::diffusion {

// Ancestral DDPM sampling from pure noise:
//   x_{t-1} = (x_t - (1 - a_t)/sqrt(1 - abar_t) * eps_hat) / sqrt(a_t) + sigma_t z
// with z = 0 at t = 1. Throws NonFinite (with the timestep) if the chain
// diverges.
nn::Tensor<float> ddpm_sample(nn::UNet<float>& unet, const DiffusionSchedule& sched,
                              Rng& rng, int batch, int height, int width);

struct RepaintConfig {
  int jump_length = 10;   // j
  int num_resamples = 10; // r
  int T_inference = 0;    // 0 = full schedule T
};

// Timestep value walk for the RePaint resampling loop: starts at T, ends at
// 0; a decreasing move is one reverse (denoise) step, an increasing move one
// forward (noising) step. Jumps of `jump_length` are taken `num_resamples - 1`
// times whenever the walk descends onto a multiple of jump_length below
// T - jump_length.
std::vector<int> repaint_time_sequence(int T, int jump_length, int num_resamples);

struct RepaintStats {
  long denoise_steps = 0;
  long renoise_steps = 0;
};

// Unconditional reverse diffusion constrained to the known region: after each
// denoise step the known pixels are overwritten with the forward-noised
// input at the matching level (with the input itself at level 0), so the
// final result equals the input bit-exactly outside the mask. Output clamped
// to [0, 1] on masked pixels.
Heightmap repaint_inpaint(nn::UNet<float>& unet, const DiffusionSchedule& sched,
                          const Heightmap& h, const Mask& m, const RepaintConfig& cfg,
                          Rng& rng, RepaintStats* stats = nullptr);

// Heightmap <-> (1, 1, H, W) tensor plumbing.
nn::Tensor<float> to_tensor(const Heightmap& h);
Heightmap to_heightmap(const nn::Tensor<float>& t);

}  // namespace terrafill::diffusion
