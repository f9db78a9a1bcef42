#pragma once

#include <optional>
#include <string>
#include <vector>

#include "terrafill/classical.hpp"
#include "terrafill/diffusion/sampling.hpp"
#include "terrafill/diffusion/train.hpp"
#include "terrafill/maskgen.hpp"
#include "terrafill/metrics.hpp"
#include "terrafill/types.hpp"

namespace terrafill::harness {

enum class Method { repaint, idw, kriging, navier_stokes };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct EvalRecord {
  long sample_id = 0;
  Method method = Method::idw;
  metrics::MetricReport full;
  metrics::MetricReport masked;
  double wall_time_s = 0.0;
  double mask_fraction = 0.0;
};

struct RunConfig {
  int n_samples = 50;
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::repaint, Method::idw, Method::kriging,
                                 Method::navier_stokes};
  bool scope_full = true;
  bool scope_masked = true;
  std::string out_dir;
  int resolution = 32;
  int jobs = 1;
  bool write_error_maps = true;

  int crop_min_side = 64;
  int crop_max_side = 256;

  maskgen::MaskParams mask_params;  // per-sample seed is derived from (seed, id)

  classical::IdwConfig idw;
  classical::VariogramKind variogram_kind = classical::VariogramKind::linear;
  int krige_max_neighbors = 64;
  classical::NsConfig ns;
  diffusion::RepaintConfig repaint;
};

struct MethodSummary {
  Method method = Method::idw;
  metrics::MetricReport full_mean;
  metrics::MetricReport masked_mean;
  double mean_wall_time_s = 0.0;
  long n = 0;
};

struct RunSummary {
  std::vector<MethodSummary> methods;  // reference (repaint when present) first
  long n_evaluated = 0;
  long n_dropped = 0;
};

struct RunResult {
  std::vector<EvalRecord> records;
  RunSummary summary;
};

// Paired comparative evaluation: per sample, one crop and one mask shared by
// every method; a method failure drops the whole sample to keep the pairing.
// Emits records.csv, summary.csv, summary.md, manifest.json and per-sample
// |error| maps under cfg.out_dir (when set).
RunResult run_experiment(const RunConfig& cfg, const Heightmap& corpus,
                         const diffusion::Checkpoint* ckpt);

// Arithmetic means per method; throws EmptyRun on an empty record set and
// Error if the pairing invariant is broken.
RunSummary summarize(const std::vector<EvalRecord>& records);

// "(+14.9%)" relative-delta formatting used by the summary tables; the
// reference row prints "(--)".
std::string format_delta(double method_value, double reference_value);

void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path);
void write_summary_csv(const RunSummary& summary, const std::string& path);
void write_summary_md(const RunSummary& summary, const RunConfig& cfg, const std::string& path);

}  // namespace terrafill::harness
