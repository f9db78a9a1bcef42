// terrafill: heightmap void-filling toolkit.
// Subcommands mirror the pipeline: prepare -> gen-masks -> train -> sample /
// inpaint -> evaluate -> export-mesh.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "terrafill/classical.hpp"
#include "terrafill/diffusion/sampling.hpp"
#include "terrafill/diffusion/train.hpp"
#include "terrafill/grid.hpp"
#include "terrafill/harness.hpp"
#include "terrafill/maskgen.hpp"
#include "terrafill/mesh.hpp"

namespace fs = std::filesystem;
using namespace terrafill;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

bool has_grid_ext(const fs::path& p) {
  const std::string e = p.extension().string();
  return e == ".tif" || e == ".tiff" || e == ".hgt32";
}

std::vector<std::string> list_grids(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_grid_ext(entry.path())) {
      out.push_back(entry.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Heightmap load_corpus(const std::string& spec_str, std::uint64_t seed, int synth_side,
                      double roughness) {
  if (spec_str == "synthetic") {
    Rng rng(Rng::splitmix64(seed ^ 0x5eedc0de));
    return grid::synth_terrain(rng, synth_side, roughness);
  }
  return grid::read_grid(spec_str);
}

void add_mask_options(CLI::App* cmd, maskgen::MaskParams& mp) {
  cmd->add_option("--mask-segments-min", mp.segments_min, "Min polyline segments")
      ->capture_default_str();
  cmd->add_option("--mask-segments-max", mp.segments_max, "Max polyline segments")
      ->capture_default_str();
  cmd->add_option("--mask-thickness-min", mp.thickness_min, "Min stroke thickness (px)")
      ->capture_default_str();
  cmd->add_option("--mask-thickness-max", mp.thickness_max, "Max stroke thickness (px)")
      ->capture_default_str();
  cmd->add_option("--mask-min-fraction", mp.min_fraction,
                  "Regenerate masks thinner than this fraction")
      ->capture_default_str();
}

struct UNetFlags {
  int base_channels = 16;
  std::vector<int> channel_mults = {1, 2, 2};
  int num_res_blocks = 1;
  int time_embed_dim = 64;
  std::vector<int> attention_levels;
  int gn_groups = 8;

  nn::UNetConfig to_config() const {
    nn::UNetConfig cfg;
    cfg.base_channels = base_channels;
    cfg.channel_mults = channel_mults;
    cfg.num_res_blocks = num_res_blocks;
    cfg.time_embed_dim = time_embed_dim;
    cfg.attention_levels.clear();
    for (int lv : attention_levels) cfg.attention_levels.insert(lv);
    cfg.groupnorm_groups = gn_groups;
    return cfg;
  }
};

void add_unet_options(CLI::App* cmd, UNetFlags& uf) {
  cmd->add_option("--base-channels", uf.base_channels, "U-Net base channel count")
      ->capture_default_str();
  cmd->add_option("--channel-mults", uf.channel_mults, "Per-level channel multipliers")
      ->capture_default_str();
  cmd->add_option("--num-res-blocks", uf.num_res_blocks, "Residual blocks per level")
      ->capture_default_str();
  cmd->add_option("--time-embed-dim", uf.time_embed_dim, "Timestep embedding width")
      ->capture_default_str();
  cmd->add_option("--attention-levels", uf.attention_levels,
                  "Level indices with self-attention");
  cmd->add_option("--gn-groups", uf.gn_groups, "GroupNorm group count")->capture_default_str();
}

void print_resolved(const CLI::App* cmd) {
  std::cerr << "# resolved config for '" << cmd->get_name() << "'\n"
            << cmd->config_to_str(true, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terrafill: diffusion-based heightmap void filling with classical baselines"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("--verbose", verbose, "Print the resolved configuration to stderr");

  // ---- prepare ----
  auto* prepare = app.add_subcommand("prepare", "Sample normalized training crops");
  std::string prep_src = "synthetic";
  std::string prep_out;
  int prep_count = 64;
  int prep_resolution = 32;
  int prep_min_side = 64;
  int prep_max_side = 256;
  int prep_synth_side = 2049;
  double prep_roughness = 0.55;
  std::uint64_t prep_seed = 0;
  std::string prep_format = "tif";
  prepare->set_config("--config");
  prepare->add_option("--src", prep_src, "'synthetic' or a source grid file")
      ->capture_default_str();
  prepare->add_option("--count", prep_count, "Number of crops")->capture_default_str();
  prepare->add_option("--out", prep_out, "Output directory")->required();
  prepare->add_option("--resolution", prep_resolution, "Crop output side (px)")
      ->capture_default_str();
  prepare->add_option("--min-side", prep_min_side, "Min source crop side (px)")
      ->capture_default_str();
  prepare->add_option("--max-side", prep_max_side, "Max source crop side (px)")
      ->capture_default_str();
  prepare->add_option("--synthetic-side", prep_synth_side,
                      "Synthetic corpus side (2^k + 1)")
      ->capture_default_str();
  prepare->add_option("--roughness", prep_roughness, "Synthetic terrain roughness (0,1]")
      ->capture_default_str();
  prepare->add_option("--seed", prep_seed, "RNG seed")->capture_default_str();
  prepare->add_option("--format", prep_format, "Output format: tif or hgt32")
      ->check(CLI::IsMember({"tif", "hgt32"}))
      ->capture_default_str();

  // ---- gen-masks ----
  auto* genmasks = app.add_subcommand("gen-masks", "Generate aliased-line masks (PBM)");
  std::string gm_out;
  int gm_count = 64;
  int gm_size = 32;
  std::uint64_t gm_seed = 0;
  bool gm_png = false;
  maskgen::MaskParams gm_params;
  genmasks->set_config("--config");
  genmasks->add_option("--count", gm_count, "Number of masks")->capture_default_str();
  genmasks->add_option("--size", gm_size, "Mask side (px)")->capture_default_str();
  genmasks->add_option("--out", gm_out, "Output directory")->required();
  genmasks->add_option("--seed", gm_seed, "RNG seed")->capture_default_str();
  genmasks->add_flag("--png", gm_png, "Also write PNG previews");
  add_mask_options(genmasks, gm_params);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train the noise-prediction U-Net");
  std::string tr_data, tr_out;
  diffusion::TrainConfig tr_cfg;
  tr_cfg.epochs = 60;  // desk-scale CLI defaults; full-scale values go in a config file
  tr_cfg.T = 100;
  tr_cfg.resolution = 32;
  tr_cfg.lr = 2e-3;
  bool tr_scaled_beta = true;
  UNetFlags tr_unet;
  train_cmd->set_config("--config");
  train_cmd->add_option("--data", tr_data, "Directory of normalized training grids")
      ->required();
  train_cmd->add_option("--out", tr_out, "Output directory (checkpoints + loss.csv)")
      ->required();
  train_cmd->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tr_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--timesteps", tr_cfg.T, "Diffusion chain length T")
      ->capture_default_str();
  train_cmd->add_option("--lr", tr_cfg.lr)->capture_default_str();
  train_cmd->add_option("--seed", tr_cfg.seed)->capture_default_str();
  train_cmd->add_option("--resolution", tr_cfg.resolution)->capture_default_str();
  train_cmd->add_option("--beta-1", tr_cfg.beta_1)->capture_default_str();
  train_cmd->add_option("--beta-t", tr_cfg.beta_T)->capture_default_str();
  train_cmd
      ->add_flag("--scaled-beta,!--no-scaled-beta", tr_scaled_beta,
                 "Scale beta endpoints by 1000/T (keeps abar_T ~ 4e-5)")
      ->capture_default_str();
  train_cmd->add_option("--ema-decay", tr_cfg.ema_decay, "EMA of weights (0 = off)")
      ->capture_default_str();
  add_unet_options(train_cmd, tr_unet);

  // ---- sample ----
  auto* sample_cmd = app.add_subcommand("sample", "Unconditional samples from a checkpoint");
  std::string sm_ckpt, sm_out;
  int sm_count = 4;
  std::uint64_t sm_seed = 0;
  sample_cmd->set_config("--config");
  sample_cmd->add_option("--ckpt", sm_ckpt, "Checkpoint base path (or .unp1)")->required();
  sample_cmd->add_option("--count", sm_count)->capture_default_str();
  sample_cmd->add_option("--out", sm_out, "Output directory")->required();
  sample_cmd->add_option("--seed", sm_seed)->capture_default_str();

  // ---- inpaint ----
  auto* inpaint_cmd = app.add_subcommand("inpaint", "Reconstruct masked pixels of a grid");
  std::string ip_input, ip_mask, ip_out, ip_ckpt;
  std::string ip_method = "repaint";
  std::uint64_t ip_seed = 0;
  classical::IdwConfig ip_idw;
  int ip_krige_neighbors = 64;
  std::string ip_variogram = "linear";
  classical::NsConfig ip_ns;
  diffusion::RepaintConfig ip_repaint;
  ip_repaint.num_resamples = 10;
  inpaint_cmd->set_config("--config");
  inpaint_cmd->add_option("--input", ip_input, "Degraded grid (TIFF/HGT32)")->required();
  inpaint_cmd->add_option("--mask", ip_mask, "PBM mask (1 = missing)")->required();
  inpaint_cmd->add_option("--out", ip_out, "Output grid path")->required();
  inpaint_cmd
      ->add_option("--method", ip_method, "repaint | idw | kriging | ns")
      ->check(CLI::IsMember({"repaint", "idw", "kriging", "ns", "navier_stokes"}))
      ->capture_default_str();
  inpaint_cmd->add_option("--ckpt", ip_ckpt, "Checkpoint (required for repaint)");
  inpaint_cmd->add_option("--seed", ip_seed)->capture_default_str();
  inpaint_cmd->add_option("--idw-neighbors", ip_idw.neighbors)->capture_default_str();
  inpaint_cmd->add_option("--idw-power", ip_idw.power)->capture_default_str();
  inpaint_cmd->add_option("--krige-neighbors", ip_krige_neighbors)->capture_default_str();
  inpaint_cmd->add_option("--variogram", ip_variogram, "linear | spherical | exponential")
      ->check(CLI::IsMember({"linear", "spherical", "exponential"}))
      ->capture_default_str();
  inpaint_cmd->add_option("--ns-iterations", ip_ns.iterations)->capture_default_str();
  inpaint_cmd->add_option("--ns-dt", ip_ns.dt)->capture_default_str();
  inpaint_cmd->add_option("--ns-diffusion-weight", ip_ns.diffusion_weight)
      ->capture_default_str();
  inpaint_cmd->add_option("--repaint-jump", ip_repaint.jump_length)->capture_default_str();
  inpaint_cmd->add_option("--repaint-resamples", ip_repaint.num_resamples)
      ->capture_default_str();
  inpaint_cmd->add_option("--repaint-T", ip_repaint.T_inference,
                          "Inference chain length (0 = checkpoint T)")
      ->capture_default_str();

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "Paired comparative evaluation run");
  harness::RunConfig ev_cfg;
  std::string ev_ckpt;
  std::string ev_corpus = "synthetic";
  int ev_synth_side = 2049;
  double ev_roughness = 0.55;
  std::vector<std::string> ev_methods = {"repaint", "idw", "kriging", "navier_stokes"};
  std::string ev_variogram = "linear";
  ev_cfg.repaint.num_resamples = 2;  // desk default; paper setting is 10
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--out", ev_cfg.out_dir, "Output directory")->required();
  eval_cmd->add_option("--samples", ev_cfg.n_samples, "Evaluation sample count")
      ->capture_default_str();
  eval_cmd->add_option("--seed", ev_cfg.seed)->capture_default_str();
  eval_cmd->add_option("--resolution", ev_cfg.resolution)->capture_default_str();
  eval_cmd->add_option("--jobs", ev_cfg.jobs, "Parallel sample evaluation")
      ->capture_default_str();
  eval_cmd->add_option("--methods", ev_methods, "Subset of repaint idw kriging navier_stokes")
      ->capture_default_str();
  eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint (required when repaint is evaluated)");
  eval_cmd->add_option("--corpus", ev_corpus, "'synthetic' or a source grid file")
      ->capture_default_str();
  eval_cmd->add_option("--synthetic-side", ev_synth_side)->capture_default_str();
  eval_cmd->add_option("--roughness", ev_roughness)->capture_default_str();
  eval_cmd->add_option("--crop-min-side", ev_cfg.crop_min_side)->capture_default_str();
  eval_cmd->add_option("--crop-max-side", ev_cfg.crop_max_side)->capture_default_str();
  eval_cmd->add_option("--idw-neighbors", ev_cfg.idw.neighbors)->capture_default_str();
  eval_cmd->add_option("--idw-power", ev_cfg.idw.power)->capture_default_str();
  eval_cmd->add_option("--krige-neighbors", ev_cfg.krige_max_neighbors)
      ->capture_default_str();
  eval_cmd->add_option("--variogram", ev_variogram)
      ->check(CLI::IsMember({"linear", "spherical", "exponential"}))
      ->capture_default_str();
  eval_cmd->add_option("--ns-iterations", ev_cfg.ns.iterations)->capture_default_str();
  eval_cmd->add_option("--repaint-jump", ev_cfg.repaint.jump_length)->capture_default_str();
  eval_cmd->add_option("--repaint-resamples", ev_cfg.repaint.num_resamples)
      ->capture_default_str();
  eval_cmd->add_option("--repaint-T", ev_cfg.repaint.T_inference)->capture_default_str();
  bool ev_no_error_maps = false;
  eval_cmd->add_flag("--no-error-maps", ev_no_error_maps, "Skip |error| map PNGs");
  add_mask_options(eval_cmd, ev_cfg.mask_params);

  // ---- export-mesh ----
  auto* mesh_cmd = app.add_subcommand("export-mesh", "Heightmap -> OBJ terrain mesh");
  std::string mx_input, mx_mask, mx_out;
  double mx_zscale = 30.0;
  mesh_cmd->set_config("--config");
  mesh_cmd->add_option("--input", mx_input, "Grid file")->required();
  mesh_cmd->add_option("--mask", mx_mask, "Optional PBM mask tagging inpainted vertices");
  mesh_cmd->add_option("--out", mx_out, "Output .obj path")->required();
  mesh_cmd->add_option("--z-scale", mx_zscale, "Vertical exaggeration")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) {
      if (verbose) print_resolved(prepare);
      fs::create_directories(prep_out);
      const Heightmap corpus = load_corpus(prep_src, prep_seed, prep_synth_side, prep_roughness);
      Rng rng(prep_seed);
      for (int i = 0; i < prep_count; ++i) {
        const Heightmap crop =
            grid::sample_crop(corpus, rng, prep_min_side, prep_max_side, prep_resolution);
        char name[64];
        std::snprintf(name, sizeof(name), "/crop_%05d.%s", i, prep_format.c_str());
        grid::write_grid(crop, prep_out + name);
      }
      std::cout << "wrote " << prep_count << " crops to " << prep_out << "\n";
    } else if (*genmasks) {
      if (verbose) print_resolved(genmasks);
      fs::create_directories(gm_out);
      for (int i = 0; i < gm_count; ++i) {
        maskgen::MaskParams p = gm_params;
        p.seed = Rng::splitmix64(gm_seed ^ Rng::splitmix64(static_cast<std::uint64_t>(i)));
        const Mask m = maskgen::gen_line_mask(p, gm_size, gm_size);
        char name[64];
        std::snprintf(name, sizeof(name), "/mask_%05d.pbm", i);
        maskgen::write_pbm(m, gm_out + name);
        if (gm_png) {
          std::snprintf(name, sizeof(name), "/mask_%05d.png", i);
          maskgen::write_mask_png(m, gm_out + name);
        }
      }
      std::cout << "wrote " << gm_count << " masks to " << gm_out << "\n";
    } else if (*train_cmd) {
      if (verbose) print_resolved(train_cmd);
      if (tr_scaled_beta && train_cmd->count("--beta-1") == 0 &&
          train_cmd->count("--beta-t") == 0) {
        const auto br = diffusion::scaled_beta_range(tr_cfg.T);
        tr_cfg.beta_1 = br.beta_1;
        tr_cfg.beta_T = br.beta_T;
      }
      std::vector<Heightmap> dataset;
      for (const auto& path : list_grids(tr_data)) {
        dataset.push_back(grid::read_grid(path));
      }
      const auto t0 = std::chrono::steady_clock::now();
      diffusion::train(dataset, tr_cfg, tr_unet.to_config(), tr_out,
                       [&](int epoch, double loss) {
                         const double wall = std::chrono::duration<double>(
                                                 std::chrono::steady_clock::now() - t0)
                                                 .count();
                         std::fprintf(stderr, "epoch %3d  loss %.5f  (%.1fs)\n", epoch + 1,
                                      loss, wall);
                       });
      std::cout << "checkpoint written to " << tr_out << "/ckpt.unp1\n";
    } else if (*sample_cmd) {
      if (verbose) print_resolved(sample_cmd);
      fs::create_directories(sm_out);
      const auto ckpt = diffusion::load_checkpoint(sm_ckpt);
      nn::UNet<float> unet(ckpt.unet);
      unet.params() = ckpt.params;
      const auto sched =
          diffusion::make_schedule(ckpt.T, ckpt.beta_1, ckpt.beta_T, ckpt.sigma_mode);
      Rng rng(sm_seed);
      for (int i = 0; i < sm_count; ++i) {
        const auto x =
            diffusion::ddpm_sample(unet, sched, rng, 1, ckpt.resolution, ckpt.resolution);
        Heightmap h = diffusion::to_heightmap(x);
        char name[64];
        std::snprintf(name, sizeof(name), "/sample_%03d.tif", i);
        grid::write_grid(h, sm_out + name);
        std::snprintf(name, sizeof(name), "/sample_%03d.png", i);
        grid::write_png(h, sm_out + name);
      }
      std::cout << "wrote " << sm_count << " samples to " << sm_out << "\n";
    } else if (*inpaint_cmd) {
      if (verbose) print_resolved(inpaint_cmd);
      if ((ip_method == "repaint") && ip_ckpt.empty()) {
        std::cerr << "inpaint: --ckpt is required for --method repaint\n";
        return kExitUsage;
      }
      Heightmap input = grid::read_grid(ip_input);
      Mask mask = maskgen::read_pbm(ip_mask);
      if (mask.rows() != input.rows() || mask.cols() != input.cols()) {
        throw ShapeMismatch("inpaint: mask dims do not match input grid");
      }
      // nodata cells are missing by definition, whatever the mask says
      for (int y = 0; y < input.rows(); ++y) {
        for (int x = 0; x < input.cols(); ++x) {
          if (std::isnan(input(y, x))) mask(y, x) = true;
        }
      }
      Heightmap out;
      if (ip_method == "idw") {
        out = classical::idw_fill(input, mask, ip_idw);
      } else if (ip_method == "kriging") {
        const auto model = classical::fit_variogram(
            input, mask,
            ip_variogram == "spherical"     ? classical::VariogramKind::spherical
            : ip_variogram == "exponential" ? classical::VariogramKind::exponential
                                            : classical::VariogramKind::linear);
        out = classical::krige_fill(input, mask, model, ip_krige_neighbors);
      } else if (ip_method == "ns" || ip_method == "navier_stokes") {
        out = classical::ns_inpaint(input, mask, ip_ns);
      } else {
        const auto ckpt = diffusion::load_checkpoint(ip_ckpt);
        nn::UNet<float> unet(ckpt.unet);
        unet.params() = ckpt.params;
        const auto sched =
            diffusion::make_schedule(ckpt.T, ckpt.beta_1, ckpt.beta_T, ckpt.sigma_mode);
        Rng rng(ip_seed);
        out = diffusion::repaint_inpaint(unet, sched, input, mask, ip_repaint, rng);
      }
      grid::write_grid(out, ip_out);
      std::cout << "wrote " << ip_out << "\n";
    } else if (*eval_cmd) {
      if (verbose) print_resolved(eval_cmd);
      ev_cfg.write_error_maps = !ev_no_error_maps;
      ev_cfg.methods.clear();
      for (const auto& name : ev_methods) {
        ev_cfg.methods.push_back(harness::method_from_name(name));
      }
      ev_cfg.variogram_kind = ev_variogram == "spherical"
                                  ? classical::VariogramKind::spherical
                              : ev_variogram == "exponential"
                                  ? classical::VariogramKind::exponential
                                  : classical::VariogramKind::linear;
      const bool wants_repaint =
          std::find(ev_cfg.methods.begin(), ev_cfg.methods.end(), harness::Method::repaint) !=
          ev_cfg.methods.end();
      if (wants_repaint && ev_ckpt.empty()) {
        std::cerr << "evaluate: --ckpt is required when repaint is among the methods\n";
        return kExitUsage;
      }
      diffusion::Checkpoint ckpt;
      if (wants_repaint) ckpt = diffusion::load_checkpoint(ev_ckpt);
      const Heightmap corpus =
          load_corpus(ev_corpus, ev_cfg.seed, ev_synth_side, ev_roughness);
      const auto result =
          harness::run_experiment(ev_cfg, corpus, wants_repaint ? &ckpt : nullptr);
      std::cout << "evaluated " << result.summary.n_evaluated << " samples ("
                << result.summary.n_dropped << " dropped), summary in " << ev_cfg.out_dir
                << "/summary.md\n";
    } else if (*mesh_cmd) {
      if (verbose) print_resolved(mesh_cmd);
      const Heightmap h = grid::read_grid(mx_input);
      Mask mask;
      const Mask* mask_ptr = nullptr;
      if (!mx_mask.empty()) {
        mask = maskgen::read_pbm(mx_mask);
        mask_ptr = &mask;
      }
      const auto m = mesh::heightmap_to_mesh(h, mask_ptr, mx_zscale);
      mesh::write_obj(m, mx_out);
      std::cout << "wrote " << mx_out << "\n";
    }
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NonFinite& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
