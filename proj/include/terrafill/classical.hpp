#pragma once

#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/types.hpp"

namespace terrafill::classical {

struct IdwConfig {
  int neighbors = 12;
  double power = 2.0;
};

enum class VariogramKind { linear, spherical, exponential };

// gamma(d) for the three supported models:
//   linear:      nugget + slope * d
//   spherical:   nugget + sill * (1.5 h - 0.5 h^3), h = min(d / range, 1)
//   exponential: nugget + sill * (1 - exp(-3 d / range))
struct VariogramModel {
  VariogramKind kind = VariogramKind::linear;
  double nugget = 0.0;
  double sill_or_slope = 1.0;
  double range = 1.0;  // unused for linear

  double operator()(double d) const;
};

struct NsConfig {
  int iterations = 3000;
  double dt = 0.1;
  double diffusion_weight = 0.15;
  double convergence_eps = 1e-7;
  int init_smooth_iterations = 400;  // isotropic relaxation before transport
};

// Inverse-distance-weighted fill of masked pixels from the N nearest known
// pixels (Euclidean pixel-center distance, w = d^-p). Known pixels pass
// through bit-exactly. Distance ties break on row-major index.
Heightmap idw_fill(const Heightmap& h, const Mask& m, const IdwConfig& cfg);

// Ordinary kriging with a Lagrange-multiplier unbiasedness constraint over
// the max_neighbors nearest known pixels. Estimates are clamped to the known
// value range. Retries once with diagonal jitter before SingularSystem.
Heightmap krige_fill(const Heightmap& h, const Mask& m, const VariogramModel& model,
                     int max_neighbors = 64);

struct KrigingSample {
  double x, y, v;
};

// Single-location ordinary kriging estimate (unclamped). Exposed for the
// exactness property and the dense-solve comparisons.
double krige_estimate(const std::vector<KrigingSample>& known, double qx, double qy,
                      const VariogramModel& model, int max_neighbors = 64);

// Empirical semivariogram (equal-width distance bins) + least-squares model
// fit on bin centers. Known-pixel pairs are subsampled deterministically when
// the raster is large.
VariogramModel fit_variogram(const Heightmap& h, const Mask& m, VariogramKind kind,
                             int n_lags = 12);

// Empirical semivariogram values, exposed for diagnostics and tests.
struct EmpiricalVariogram {
  std::vector<double> lag_centers;
  std::vector<double> gamma;
  std::vector<long> pair_counts;
};
EmpiricalVariogram empirical_variogram(const Heightmap& h, const Mask& m, int n_lags);

// Isophote-transport inpainting: dI/dt = grad_perp(I) . grad(Laplacian(I)),
// with an anisotropic diffusion pass every other step, restricted to masked
// pixels. Stops at `iterations` or when the max per-pixel update drops below
// convergence_eps. Output clamped to the known-value range.
Heightmap ns_inpaint(const Heightmap& h, const Mask& m, const NsConfig& cfg);

}  // namespace terrafill::classical
