#include "terrafill/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

#include "terrafill/grid.hpp"
#include "terrafill/rng.hpp"

namespace terrafill::harness {

namespace {

using Clock = std::chrono::steady_clock;

struct SampleOutcome {
  bool ok = false;
  std::string error;
  std::vector<EvalRecord> records;
};

bool known_pixels_identical(const Heightmap& out, const Heightmap& degraded, const Mask& m) {
  for (int y = 0; y < out.rows(); ++y) {
    for (int x = 0; x < out.cols(); ++x) {
      if (!m(y, x)) {
        const float a = out(y, x);
        const float b = degraded(y, x);
        if (std::memcmp(&a, &b, sizeof(float)) != 0) return false;
      }
    }
  }
  return true;
}

Heightmap run_method(Method method, const Heightmap& degraded, const Mask& m,
                     const RunConfig& cfg, const diffusion::Checkpoint* ckpt, Rng& rng) {
  switch (method) {
    case Method::idw:
      return classical::idw_fill(degraded, m, cfg.idw);
    case Method::kriging: {
      const auto model = classical::fit_variogram(degraded, m, cfg.variogram_kind);
      return classical::krige_fill(degraded, m, model, cfg.krige_max_neighbors);
    }
    case Method::navier_stokes:
      return classical::ns_inpaint(degraded, m, cfg.ns);
    case Method::repaint: {
      if (!ckpt) throw InvalidConfig("repaint method requires a checkpoint");
      nn::UNet<float> unet(ckpt->unet);
      unet.params() = ckpt->params;
      const auto sched =
          diffusion::make_schedule(ckpt->T, ckpt->beta_1, ckpt->beta_T, ckpt->sigma_mode);
      return diffusion::repaint_inpaint(unet, sched, degraded, m, cfg.repaint, rng);
    }
  }
  throw InvalidConfig("unknown method");
}

std::string git_describe() {
  FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  ::pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

void write_error_map(const Heightmap& out, const Heightmap& truth, const std::string& path) {
  // fixed linear gray map of |error|, clipped at 0.2 for cross-sample
  // comparability
  constexpr float kClip = 0.2f;
  const int W = static_cast<int>(out.cols());
  const int H = static_cast<int>(out.rows());
  std::vector<std::uint8_t> px(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const float e = std::min(kClip, std::abs(out(y, x) - truth(y, x))) / kClip;
      px[static_cast<std::size_t>(y) * W + x] = static_cast<std::uint8_t>(std::lround(e * 255));
    }
  }
  grid::write_png_gray8(px, W, H, path);
}

SampleOutcome evaluate_sample(long sample_id, const RunConfig& cfg, const Heightmap& corpus,
                              const diffusion::Checkpoint* ckpt, const Rng& run_rng) {
  SampleOutcome outcome;
  try {
    Rng crop_rng = run_rng.fork(0x1000000ull + static_cast<std::uint64_t>(sample_id));
    const Heightmap truth =
        grid::sample_crop(corpus, crop_rng, cfg.crop_min_side, cfg.crop_max_side, cfg.resolution);

    maskgen::MaskParams mp = cfg.mask_params;
    mp.seed = Rng::splitmix64(cfg.seed ^ Rng::splitmix64(0x2000000ull + sample_id));
    const Mask mask = maskgen::gen_line_mask(mp, cfg.resolution, cfg.resolution);
    const double frac = maskgen::mask_fraction(mask);

    // identical degraded input for every method; masked values are nodata
    Heightmap degraded = truth;
    for (int y = 0; y < degraded.rows(); ++y) {
      for (int x = 0; x < degraded.cols(); ++x) {
        if (mask(y, x)) degraded(y, x) = std::numeric_limits<float>::quiet_NaN();
      }
    }

    for (Method method : cfg.methods) {
      Rng method_rng = run_rng.fork(0x3000000ull + static_cast<std::uint64_t>(sample_id) * 16 +
                                    static_cast<std::uint64_t>(method));
      const auto t0 = Clock::now();
      const Heightmap filled = run_method(method, degraded, mask, cfg, ckpt, method_rng);
      const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
      if (!known_pixels_identical(filled, degraded, mask)) {
        throw Error(method_name(method) + " modified known pixels");
      }

      EvalRecord rec;
      rec.sample_id = sample_id;
      rec.method = method;
      rec.wall_time_s = wall;
      rec.mask_fraction = frac;
      if (cfg.scope_full) rec.full = metrics::compute_report(filled, truth);
      if (cfg.scope_masked) rec.masked = metrics::compute_report_masked(filled, truth, mask);
      outcome.records.push_back(rec);

      if (!cfg.out_dir.empty() && cfg.write_error_maps) {
        char name[96];
        std::snprintf(name, sizeof(name), "/error_maps/errmap_%04ld_%s.png", sample_id,
                      method_name(method).c_str());
        write_error_map(filled, truth, cfg.out_dir + name);
      }
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
    outcome.records.clear();
  }
  return outcome;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::repaint: return "repaint";
    case Method::idw: return "idw";
    case Method::kriging: return "kriging";
    case Method::navier_stokes: return "navier_stokes";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "repaint") return Method::repaint;
  if (name == "idw") return Method::idw;
  if (name == "kriging") return Method::kriging;
  if (name == "navier_stokes" || name == "ns") return Method::navier_stokes;
  throw InvalidConfig("unknown method name: " + name);
}

RunSummary summarize(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw EmptyRun("summarize: no records");

  // pairing invariant: every sample carries the same method set exactly once
  std::map<long, std::set<int>> seen;
  std::set<int> method_set;
  std::vector<Method> method_order;
  for (const auto& r : records) {
    if (!seen[r.sample_id].insert(static_cast<int>(r.method)).second) {
      throw Error("summarize: duplicate (sample, method) pair");
    }
    if (method_set.insert(static_cast<int>(r.method)).second) {
      method_order.push_back(r.method);
    }
  }
  for (const auto& [id, ms] : seen) {
    if (ms != method_set) throw Error("summarize: unpaired sample " + std::to_string(id));
  }

  // reference method first
  std::stable_sort(method_order.begin(), method_order.end(), [](Method a, Method b) {
    return (a == Method::repaint) > (b == Method::repaint);
  });

  RunSummary summary;
  summary.n_evaluated = static_cast<long>(seen.size());
  for (Method m : method_order) {
    MethodSummary ms;
    ms.method = m;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ms.full_mean.rmse += r.full.rmse;
      ms.full_mean.mae += r.full.mae;
      ms.full_mean.psnr += r.full.psnr;
      ms.full_mean.emd += r.full.emd;
      ms.full_mean.ssim += r.full.ssim;
      ms.masked_mean.rmse += r.masked.rmse;
      ms.masked_mean.mae += r.masked.mae;
      ms.masked_mean.psnr += r.masked.psnr;
      ms.masked_mean.emd += r.masked.emd;
      ms.masked_mean.ssim += r.masked.ssim;
      ms.mean_wall_time_s += r.wall_time_s;
      ++ms.n;
    }
    const double n = static_cast<double>(ms.n);
    ms.full_mean.rmse /= n;
    ms.full_mean.mae /= n;
    ms.full_mean.psnr /= n;
    ms.full_mean.emd /= n;
    ms.full_mean.ssim /= n;
    ms.masked_mean.rmse /= n;
    ms.masked_mean.mae /= n;
    ms.masked_mean.psnr /= n;
    ms.masked_mean.emd /= n;
    ms.masked_mean.ssim /= n;
    ms.mean_wall_time_s /= n;
    summary.methods.push_back(ms);
  }
  return summary;
}

std::string format_delta(double method_value, double reference_value) {
  if (!std::isfinite(method_value) || !std::isfinite(reference_value) ||
      reference_value == 0.0) {
    return "(n/a)";
  }
  const double pct = (method_value - reference_value) / reference_value * 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "(%+.1f%%)", pct);
  return buf;
}

void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "sample_id,method,mask_fraction,wall_time_s,"
       "rmse,mae,psnr,emd,ssim,"
       "rmse_masked,mae_masked,psnr_masked,emd_masked,ssim_masked,lpips,fid\n";
  char buf[512];
  for (const auto& r : records) {
    // lpips/fid columns stay empty: reserved for external perceptual scorers
    std::snprintf(buf, sizeof(buf),
                  "%ld,%s,%.17g,%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,,\n",
                  r.sample_id, method_name(r.method).c_str(), r.mask_fraction, r.wall_time_s,
                  r.full.rmse, r.full.mae, r.full.psnr, r.full.emd, r.full.ssim, r.masked.rmse,
                  r.masked.mae, r.masked.psnr, r.masked.emd, r.masked.ssim);
    f << buf;
  }
}

void write_summary_csv(const RunSummary& summary, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "method,scope,rmse,mae,psnr,emd,ssim,mean_wall_time_s,n\n";
  char buf[512];
  for (const auto& ms : summary.methods) {
    std::snprintf(buf, sizeof(buf), "%s,full,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n",
                  method_name(ms.method).c_str(), ms.full_mean.rmse, ms.full_mean.mae,
                  ms.full_mean.psnr, ms.full_mean.emd, ms.full_mean.ssim, ms.mean_wall_time_s,
                  ms.n);
    f << buf;
    std::snprintf(buf, sizeof(buf), "%s,masked,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n",
                  method_name(ms.method).c_str(), ms.masked_mean.rmse, ms.masked_mean.mae,
                  ms.masked_mean.psnr, ms.masked_mean.emd, ms.masked_mean.ssim,
                  ms.mean_wall_time_s, ms.n);
    f << buf;
  }
}

namespace {

void summary_table(std::ofstream& f, const RunSummary& summary, bool masked) {
  const MethodSummary& ref = summary.methods.front();
  const auto pick = [masked](const MethodSummary& ms) -> const metrics::MetricReport& {
    return masked ? ms.masked_mean : ms.full_mean;
  };
  f << "| Method | RMSE ↓ | MAE ↓ | PSNR ↑ | EMD ↓ | SSIM ↑ |\n";
  f << "|---|---|---|---|---|---|\n";
  for (const auto& ms : summary.methods) {
    const auto& mr = pick(ms);
    const auto& rr = pick(ref);
    const bool is_ref = ms.method == ref.method;
    auto cell = [&](double v, double rv) {
      char buf[80];
      if (is_ref) {
        std::snprintf(buf, sizeof(buf), "**%.4f** (--)", v);
      } else {
        std::snprintf(buf, sizeof(buf), "%.4f %s", v, format_delta(v, rv).c_str());
      }
      return std::string(buf);
    };
    f << "| " << method_name(ms.method) << " | " << cell(mr.rmse, rr.rmse) << " | "
      << cell(mr.mae, rr.mae) << " | " << cell(mr.psnr, rr.psnr) << " | "
      << cell(mr.emd, rr.emd) << " | " << cell(mr.ssim, rr.ssim) << " |\n";
  }
  f << "\n";
}

}  // namespace

void write_summary_md(const RunSummary& summary, const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "# Evaluation summary\n\n";
  f << "Samples evaluated: " << summary.n_evaluated << " (dropped: " << summary.n_dropped
    << "), resolution " << cfg.resolution << "x" << cfg.resolution << ", seed " << cfg.seed
    << ".\n\n";
  f << "Deltas are relative to the " << method_name(summary.methods.front().method)
    << " row. LPIPS/FID are not computed here; the records CSV reserves columns for "
       "external scorers.\n\n";
  f << "## Full-image metrics\n\n";
  summary_table(f, summary, false);
  f << "## Masked-region metrics\n\n";
  summary_table(f, summary, true);
  f << "## Mean wall time per sample\n\n| Method | seconds |\n|---|---|\n";
  for (const auto& ms : summary.methods) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "| %s | %.3f |\n", method_name(ms.method).c_str(),
                  ms.mean_wall_time_s);
    f << buf;
  }
}

RunResult run_experiment(const RunConfig& cfg, const Heightmap& corpus,
                         const diffusion::Checkpoint* ckpt) {
  if (cfg.n_samples < 1) throw InvalidConfig("run_experiment: n_samples must be >= 1");
  if (cfg.methods.empty()) throw InvalidConfig("run_experiment: no methods selected");
  for (Method m : cfg.methods) {
    if (m == Method::repaint && !ckpt) {
      throw InvalidConfig("run_experiment: repaint requested without a checkpoint");
    }
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.write_error_maps) std::filesystem::create_directories(cfg.out_dir + "/error_maps");
  }

  const Rng run_rng(cfg.seed);
  std::vector<SampleOutcome> outcomes(cfg.n_samples);
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (long i = 0; i < cfg.n_samples; ++i) {
      outcomes[i] = evaluate_sample(i, cfg, corpus, ckpt, run_rng);
    }
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&]() {
        while (true) {
          const long i = next.fetch_add(1);
          if (i >= cfg.n_samples) break;
          outcomes[i] = evaluate_sample(i, cfg, corpus, ckpt, run_rng);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  RunResult result;
  long dropped = 0;
  for (long i = 0; i < cfg.n_samples; ++i) {
    if (!outcomes[i].ok) {
      ++dropped;
      std::fprintf(stderr, "run_experiment: sample %ld dropped: %s\n", i,
                   outcomes[i].error.c_str());
      continue;
    }
    for (auto& r : outcomes[i].records) result.records.push_back(std::move(r));
  }
  if (result.records.empty()) throw EmptyRun("run_experiment: every sample failed");
  result.summary = summarize(result.records);
  result.summary.n_dropped = dropped;

  if (!cfg.out_dir.empty()) {
    write_records_csv(result.records, cfg.out_dir + "/records.csv");
    write_summary_csv(result.summary, cfg.out_dir + "/summary.csv");
    write_summary_md(result.summary, cfg, cfg.out_dir + "/summary.md");

    nlohmann::json manifest;
    manifest["n_samples"] = cfg.n_samples;
    manifest["seed"] = cfg.seed;
    manifest["resolution"] = cfg.resolution;
    manifest["jobs"] = cfg.jobs;
    std::vector<std::string> names;
    for (Method m : cfg.methods) names.push_back(method_name(m));
    manifest["methods"] = names;
    manifest["crop_min_side"] = cfg.crop_min_side;
    manifest["crop_max_side"] = cfg.crop_max_side;
    manifest["idw"] = {{"neighbors", cfg.idw.neighbors}, {"power", cfg.idw.power}};
    manifest["kriging"] = {{"max_neighbors", cfg.krige_max_neighbors}};
    manifest["ns"] = {{"iterations", cfg.ns.iterations},
                      {"dt", cfg.ns.dt},
                      {"diffusion_weight", cfg.ns.diffusion_weight}};
    manifest["repaint"] = {{"jump_length", cfg.repaint.jump_length},
                           {"num_resamples", cfg.repaint.num_resamples},
                           {"T_inference", cfg.repaint.T_inference}};
    manifest["n_dropped"] = dropped;
    manifest["git"] = git_describe();
    std::ofstream mf(cfg.out_dir + "/manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
  }
  return result;
}

}  // namespace terrafill::harness
