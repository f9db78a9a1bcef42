#pragma once

#include <functional>
#include <string>
#include <vector>

#include "terrafill/diffusion/schedule.hpp"
#include "terrafill/nn/unet.hpp"
#include "terrafill/types.hpp"

namespace terrafill::diffusion {

// Defaults are the full-scale configuration; CPU-scale runs override
// resolution / epochs / T via config files or flags.
struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  int T = 1000;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  int resolution = 128;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  SigmaMode sigma_mode = SigmaMode::beta;
  double ema_decay = 0.0;  // 0 disables the shadow average
};

struct TrainResult {
  nn::ParamStore<float> params;
  nn::ParamStore<float> ema_params;  // empty unless ema_decay > 0
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean loss per epoch
};

// Checkpoint = UNP1 parameter file + key-value sidecar carrying the
// architecture descriptor and schedule constants.
struct Checkpoint {
  nn::UNetConfig unet;
  nn::ParamStore<float> params;
  int T = 1000;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  SigmaMode sigma_mode = SigmaMode::beta;
  int resolution = 128;
};

// base path without extension; writes <base>.unp1 and <base>.meta
void save_checkpoint(const Checkpoint& ckpt, const std::string& base);
Checkpoint load_checkpoint(const std::string& base);

// Noise-prediction training: t uniform on {1..T}, eps standard normal,
// minimize mean((eps - eps_hat)^2) with Adam. Checkpoints every epoch into
// out_dir when non-empty, plus a step-level loss CSV. Deterministic per seed.
TrainResult train(const std::vector<Heightmap>& dataset, const TrainConfig& cfg,
                  const nn::UNetConfig& unet_cfg, const std::string& out_dir = "",
                  const std::function<void(int, double)>& on_epoch = {});

}  // namespace terrafill::diffusion
