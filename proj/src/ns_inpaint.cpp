#include <algorithm>
#include <cmath>
#include <limits>

#include "terrafill/classical.hpp"

namespace terrafill::classical {

namespace {

using Grid = GridT<double>;

// replicate-clamped access
inline double at(const Grid& g, int x, int y) {
  x = std::clamp(x, 0, static_cast<int>(g.cols()) - 1);
  y = std::clamp(y, 0, static_cast<int>(g.rows()) - 1);
  return g(y, x);
}

Grid laplacian(const Grid& g) {
  const int W = static_cast<int>(g.cols());
  const int H = static_cast<int>(g.rows());
  Grid lap(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      lap(y, x) = at(g, x + 1, y) + at(g, x - 1, y) + at(g, x, y + 1) + at(g, x, y - 1) -
                  4.0 * g(y, x);
    }
  }
  return lap;
}

// Jacobi relaxation of masked pixels toward the harmonic fill; gives the
// transport steps a smooth start without boundary shocks.
void smooth_init(Grid& img, const Mask& m, int iterations) {
  const int W = static_cast<int>(img.cols());
  const int H = static_cast<int>(img.rows());
  Grid next = img;
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!m(y, x)) continue;
        next(y, x) =
            0.25 * (at(img, x + 1, y) + at(img, x - 1, y) + at(img, x, y + 1) + at(img, x, y - 1));
      }
    }
    img.swap(next);
  }
}

// One anisotropic diffusion pass restricted to masked pixels: Laplacian with
// the gradient-direction component removed, so smoothing acts along
// isophotes and does not blur across level lines.
double diffuse(Grid& img, const Mask& m, double weight) {
  const int W = static_cast<int>(img.cols());
  const int H = static_cast<int>(img.rows());
  constexpr double kGradThresh = 1e-8;
  Grid next = img;
  double max_update = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m(y, x)) continue;
      const double ix = 0.5 * (at(img, x + 1, y) - at(img, x - 1, y));
      const double iy = 0.5 * (at(img, x, y + 1) - at(img, x, y - 1));
      const double ixx = at(img, x + 1, y) - 2.0 * img(y, x) + at(img, x - 1, y);
      const double iyy = at(img, x, y + 1) - 2.0 * img(y, x) + at(img, x, y - 1);
      const double ixy = 0.25 * (at(img, x + 1, y + 1) - at(img, x - 1, y + 1) -
                                 at(img, x + 1, y - 1) + at(img, x - 1, y - 1));
      double lap = ixx + iyy;
      const double norm2 = ix * ix + iy * iy;
      if (norm2 > kGradThresh) {
        lap -= (ixx * ix * ix + 2.0 * ixy * ix * iy + iyy * iy * iy) / norm2;
      }
      const double u = weight * lap;
      next(y, x) = img(y, x) + u;
      max_update = std::max(max_update, std::abs(u));
    }
  }
  img.swap(next);
  return max_update;
}

// One transport step: move Laplacian information along isophote directions,
// scaled by the slope-limited (upwind) gradient magnitude.
double transport(Grid& img, const Grid& lap, const Mask& m, double dt) {
  const int W = static_cast<int>(img.cols());
  const int H = static_cast<int>(img.rows());
  Grid next = img;
  double max_update = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m(y, x)) continue;
      const double ix = 0.5 * (at(img, x + 1, y) - at(img, x - 1, y));
      const double iy = 0.5 * (at(img, x, y + 1) - at(img, x, y - 1));
      const double norm = std::sqrt(ix * ix + iy * iy);
      if (norm < 1e-9) continue;  // no isophote direction defined
      const double nx = -iy / norm;
      const double ny = ix / norm;
      const double lx = 0.5 * (at(lap, x + 1, y) - at(lap, x - 1, y));
      const double ly = 0.5 * (at(lap, x, y + 1) - at(lap, x, y - 1));
      double beta = nx * lx + ny * ly;

      const double dxb = img(y, x) - at(img, x - 1, y);
      const double dxf = at(img, x + 1, y) - img(y, x);
      const double dyb = img(y, x) - at(img, x, y - 1);
      const double dyf = at(img, x, y + 1) - img(y, x);
      double slope;
      if (beta > 0.0) {
        slope = std::sqrt(std::min(dxb, 0.0) * std::min(dxb, 0.0) +
                          std::max(dxf, 0.0) * std::max(dxf, 0.0) +
                          std::min(dyb, 0.0) * std::min(dyb, 0.0) +
                          std::max(dyf, 0.0) * std::max(dyf, 0.0));
      } else {
        slope = std::sqrt(std::max(dxb, 0.0) * std::max(dxb, 0.0) +
                          std::min(dxf, 0.0) * std::min(dxf, 0.0) +
                          std::max(dyb, 0.0) * std::max(dyb, 0.0) +
                          std::min(dyf, 0.0) * std::min(dyf, 0.0));
      }
      const double u = dt * beta * slope;
      next(y, x) = img(y, x) + u;
      max_update = std::max(max_update, std::abs(u));
    }
  }
  img.swap(next);
  return max_update;
}

}  // namespace

Heightmap ns_inpaint(const Heightmap& h, const Mask& m, const NsConfig& cfg) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeMismatch("ns_inpaint: mask dims do not match raster");
  }
  if (cfg.iterations < 1 || !(cfg.dt > 0.0) || cfg.diffusion_weight < 0.0) {
    throw InvalidConfig("ns_inpaint: need iterations >= 1, dt > 0, diffusion_weight >= 0");
  }
  if (m.count() == 0) return h;

  const int W = static_cast<int>(h.cols());
  const int H = static_cast<int>(h.rows());
  bool boundary = false;
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  double known_sum = 0.0;
  long known_n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!m(y, x)) {
        lo = std::min(lo, h(y, x));
        hi = std::max(hi, h(y, x));
        known_sum += h(y, x);
        ++known_n;
        continue;
      }
      if ((x > 0 && !m(y, x - 1)) || (x + 1 < W && !m(y, x + 1)) ||
          (y > 0 && !m(y - 1, x)) || (y + 1 < H && !m(y + 1, x))) {
        boundary = true;
      }
    }
  }
  if (!boundary || known_n == 0) {
    throw NoBoundary("ns_inpaint: no known pixel adjacent to the masked region");
  }

  Grid img(H, W);
  const double mean = known_sum / known_n;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) img(y, x) = m(y, x) ? mean : static_cast<double>(h(y, x));
  }
  smooth_init(img, m, cfg.init_smooth_iterations);

  for (int it = 0; it < cfg.iterations; ++it) {
    const Grid lap = laplacian(img);
    double max_update = transport(img, lap, m, cfg.dt);
    if (it % 2 == 1 && cfg.diffusion_weight > 0.0) {
      max_update = std::max(max_update, diffuse(img, m, cfg.diffusion_weight));
    }
    if (max_update < cfg.convergence_eps) break;
  }

  Heightmap out = h;  // known pixels bit-exact from the input
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (m(y, x)) out(y, x) = std::clamp(static_cast<float>(img(y, x)), lo, hi);
    }
  }
  return out;
}

}  // namespace terrafill::classical
