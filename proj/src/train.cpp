#include "terrafill/diffusion/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "terrafill/nn/adam.hpp"
#include "terrafill/nn/serialize.hpp"

namespace terrafill::diffusion {

namespace {

nn::Tensor<float> batch_tensor(const std::vector<Heightmap>& dataset,
                               const std::vector<int>& indices, int resolution) {
  nn::Tensor<float> x(static_cast<int>(indices.size()), 1, resolution, resolution);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Heightmap& h = dataset[indices[i]];
    for (int y = 0; y < resolution; ++y) {
      for (int xx = 0; xx < resolution; ++xx) {
        x.at(static_cast<int>(i), 0, y, xx) = h(y, xx);
      }
    }
  }
  return x;
}

nn::Tensor<float> gaussian_like(const nn::Tensor<float>& ref, Rng& rng) {
  nn::Tensor<float> out(ref.dims[0], ref.dims[1], ref.dims[2], ref.dims[3]);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data[i] = static_cast<float>(rng.normal());
  }
  return out;
}

std::string meta_kv(const Checkpoint& c) {
  std::ostringstream os;
  os << "T = " << c.T << "\n";
  os << "beta_1 = " << c.beta_1 << "\n";
  os << "beta_T = " << c.beta_T << "\n";
  os << "sigma_mode = " << (c.sigma_mode == SigmaMode::beta ? "beta" : "posterior") << "\n";
  os << "resolution = " << c.resolution << "\n";
  os << "in_channels = " << c.unet.in_channels << "\n";
  os << "base_channels = " << c.unet.base_channels << "\n";
  os << "channel_mults = ";
  for (std::size_t i = 0; i < c.unet.channel_mults.size(); ++i) {
    os << (i ? "," : "") << c.unet.channel_mults[i];
  }
  os << "\n";
  os << "num_res_blocks = " << c.unet.num_res_blocks << "\n";
  os << "time_embed_dim = " << c.unet.time_embed_dim << "\n";
  os << "attention_levels = ";
  bool first = true;
  for (int lv : c.unet.attention_levels) {
    os << (first ? "" : ",") << lv;
    first = false;
  }
  os << "\n";
  os << "groupnorm_groups = " << c.unet.groupnorm_groups << "\n";
  return os.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& base) {
  nn::save_params(ckpt.params, base + ".unp1");
  std::ofstream meta(base + ".meta", std::ios::trunc);
  if (!meta) throw IoError("cannot open " + base + ".meta for writing");
  meta << meta_kv(ckpt);
}

Checkpoint load_checkpoint(const std::string& base_in) {
  std::string base = base_in;
  if (base.size() > 5 && base.substr(base.size() - 5) == ".unp1") {
    base.resize(base.size() - 5);
  }
  Checkpoint c;
  c.params = nn::load_params(base + ".unp1");

  std::ifstream meta(base + ".meta");
  if (!meta) throw IoError("cannot open " + base + ".meta");
  std::string line;
  while (std::getline(meta, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto parse_list = [](const std::string& s) {
      std::vector<int> out;
      std::istringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
      }
      return out;
    };
    if (key == "T") c.T = std::stoi(val);
    else if (key == "beta_1") c.beta_1 = std::stod(val);
    else if (key == "beta_T") c.beta_T = std::stod(val);
    else if (key == "sigma_mode") c.sigma_mode = val == "posterior" ? SigmaMode::posterior : SigmaMode::beta;
    else if (key == "resolution") c.resolution = std::stoi(val);
    else if (key == "in_channels") c.unet.in_channels = std::stoi(val);
    else if (key == "base_channels") c.unet.base_channels = std::stoi(val);
    else if (key == "channel_mults") c.unet.channel_mults = parse_list(val);
    else if (key == "num_res_blocks") c.unet.num_res_blocks = std::stoi(val);
    else if (key == "time_embed_dim") c.unet.time_embed_dim = std::stoi(val);
    else if (key == "attention_levels") {
      c.unet.attention_levels.clear();
      for (int lv : parse_list(val)) c.unet.attention_levels.insert(lv);
    } else if (key == "groupnorm_groups") {
      c.unet.groupnorm_groups = std::stoi(val);
    }
  }
  return c;
}

TrainResult train(const std::vector<Heightmap>& dataset, const TrainConfig& cfg,
                  const nn::UNetConfig& unet_cfg, const std::string& out_dir,
                  const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw EmptyDataset("train: dataset is empty");
  for (const Heightmap& h : dataset) {
    if (h.rows() != cfg.resolution || h.cols() != cfg.resolution) {
      throw ResolutionMismatch("train: sample dims do not match cfg.resolution");
    }
    if (!((h >= 0.0f).all() && (h <= 1.0f).all())) {
      throw ContainsNodata("train: dataset must be normalized to [0, 1] without NaN");
    }
  }

  const DiffusionSchedule sched = make_schedule(cfg.T, cfg.beta_1, cfg.beta_T, cfg.sigma_mode);
  Rng rng(cfg.seed);
  nn::UNet<float> unet(unet_cfg);
  unet.init_params(rng);

  nn::AdamState<float> adam;
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  TrainResult result;
  if (cfg.ema_decay > 0.0) result.ema_params = unet.params();

  std::ofstream loss_csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    loss_csv.open(out_dir + "/loss.csv", std::ios::trunc);
    loss_csv << "step,loss,wall_time_s\n";
  }
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run RNG keeps the curve reproducible
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
    }
    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), off + cfg.batch_size);
      const std::vector<int> batch(order.begin() + off, order.begin() + end);
      nn::Tensor<float> x0 = batch_tensor(dataset, batch, cfg.resolution);
      std::vector<int> ts(batch.size());
      for (auto& t : ts) t = static_cast<int>(rng.uniform_int(1, cfg.T));
      nn::Tensor<float> eps = gaussian_like(x0, rng);
      nn::Tensor<float> xt = q_sample(x0, ts, eps, sched);

      nn::Tape<float> tape;
      const auto pred = unet.forward(tape, tape.input(std::move(xt)), ts);
      const auto loss = tape.mse_loss(pred, tape.input(std::move(eps)));
      const double loss_val = tape.value(loss).data[0];
      if (!std::isfinite(loss_val)) {
        throw NonFinite("train: non-finite loss at step " + std::to_string(step));
      }
      tape.backward(loss);
      nn::adam_step(unet.params(), unet.collect_grads(tape), adam, adam_cfg);
      if (cfg.ema_decay > 0.0) {
        for (auto& [path, shadow] : result.ema_params) {
          shadow.data = static_cast<float>(cfg.ema_decay) * shadow.data +
                        static_cast<float>(1.0 - cfg.ema_decay) * unet.params()[path].data;
        }
      }

      result.step_losses.push_back(loss_val);
      epoch_loss += loss_val;
      ++epoch_batches;
      ++step;
      if (loss_csv.is_open()) {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        loss_csv << step << "," << loss_val << "," << wall << "\n";
      }
    }
    result.epoch_losses.push_back(epoch_loss / epoch_batches);
    if (on_epoch) on_epoch(epoch, result.epoch_losses.back());

    if (!out_dir.empty()) {
      Checkpoint ckpt;
      ckpt.unet = unet_cfg;
      ckpt.params = unet.params();
      ckpt.T = cfg.T;
      ckpt.beta_1 = cfg.beta_1;
      ckpt.beta_T = cfg.beta_T;
      ckpt.sigma_mode = cfg.sigma_mode;
      ckpt.resolution = cfg.resolution;
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_epoch_%04d", epoch + 1);
      save_checkpoint(ckpt, out_dir + name);
      save_checkpoint(ckpt, out_dir + "/ckpt");  // latest
      if (cfg.ema_decay > 0.0) {
        Checkpoint ema = ckpt;
        ema.params = result.ema_params;
        save_checkpoint(ema, out_dir + "/ckpt_ema");
      }
    }
  }
  result.params = unet.params();
  return result;
}

}  // namespace terrafill::diffusion
