#include "terrafill/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace terrafill::grid {

bool has_nodata(const Heightmap& h) {
  return !((h == h).all());  // NaN != NaN
}

std::pair<Heightmap, NormalizationRecord> normalize(const Heightmap& h) {
  if (has_nodata(h)) {
    throw ContainsNodata("normalize: raster contains nodata (NaN) cells");
  }
  const float lo = h.minCoeff();
  const float hi = h.maxCoeff();
  if (!(hi > lo)) {
    throw DegenerateFlat("normalize: flat raster, max == min");
  }
  Heightmap out = (h - lo) / (hi - lo);
  return {std::move(out), NormalizationRecord{lo, hi}};
}

Heightmap denormalize(const Heightmap& h, const NormalizationRecord& rec) {
  return h * (rec.max - rec.min) + rec.min;
}

Heightmap rescale_nearest(const Heightmap& h, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) {
    throw InvalidConfig("rescale_nearest: output dims must be >= 1");
  }
  const int W = width(h);
  const int H = height(h);
  Heightmap out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(
        H - 1, static_cast<int>(std::floor((y + 0.5) * H / out_h)));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(
          W - 1, static_cast<int>(std::floor((x + 0.5) * W / out_w)));
      out(y, x) = h(sy, sx);
    }
  }
  return out;
}

Heightmap sample_crop(const Heightmap& src, Rng& rng, int min_side,
                      int max_side, int target, int max_attempts) {
  const int W = width(src);
  const int H = height(src);
  const int fit = std::min(W, H);
  const int hi = std::min(max_side, fit);
  const int lo = std::min(min_side, hi);
  if (lo < 1) {
    throw InvalidConfig("sample_crop: source too small for any crop");
  }
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const int side = static_cast<int>(rng.uniform_int(lo, hi));
    const int ox = static_cast<int>(rng.uniform_int(0, W - side));
    const int oy = static_cast<int>(rng.uniform_int(0, H - side));
    Heightmap crop = src.block(oy, ox, side, side);
    if (has_nodata(crop)) continue;
    if (!(crop.maxCoeff() > crop.minCoeff())) continue;  // flat
    Heightmap scaled = rescale_nearest(crop, target, target);
    if (!(scaled.maxCoeff() > scaled.minCoeff())) continue;
    return normalize(scaled).first;
  }
  throw NoValidCrop("sample_crop: no valid crop after max_attempts");
}

namespace {

bool is_pow2_plus_1(int side) {
  const int n = side - 1;
  return side >= 3 && (n & (n - 1)) == 0;
}

}  // namespace

Heightmap synth_terrain(Rng& rng, int side, double roughness) {
  if (!is_pow2_plus_1(side)) {
    throw BadSide("synth_terrain: side must be 2^k + 1, k >= 1");
  }
  if (!(roughness > 0.0 && roughness <= 1.0)) {
    throw InvalidConfig("synth_terrain: roughness must be in (0, 1]");
  }
  GridT<double> g = GridT<double>::Zero(side, side);
  g(0, 0) = rng.uniform();
  g(0, side - 1) = rng.uniform();
  g(side - 1, 0) = rng.uniform();
  g(side - 1, side - 1) = rng.uniform();

  double amp = 0.5 * roughness;
  for (int step = side - 1; step > 1; step /= 2, amp *= roughness) {
    const int half = step / 2;
    // diamond: centers of squares
    for (int y = half; y < side; y += step) {
      for (int x = half; x < side; x += step) {
        const double avg = 0.25 * (g(y - half, x - half) + g(y - half, x + half) +
                                   g(y + half, x - half) + g(y + half, x + half));
        g(y, x) = avg + amp * (2.0 * rng.uniform() - 1.0);
      }
    }
    // square: edge midpoints, average of available lattice neighbours
    for (int y = 0; y < side; y += half) {
      const int x0 = (y / half) % 2 == 0 ? half : 0;
      for (int x = x0; x < side; x += step) {
        double sum = 0.0;
        int n = 0;
        if (y - half >= 0) { sum += g(y - half, x); ++n; }
        if (y + half < side) { sum += g(y + half, x); ++n; }
        if (x - half >= 0) { sum += g(y, x - half); ++n; }
        if (x + half < side) { sum += g(y, x + half); ++n; }
        g(y, x) = sum / n + amp * (2.0 * rng.uniform() - 1.0);
      }
    }
  }
  Heightmap out = g.cast<float>();
  if (!(out.maxCoeff() > out.minCoeff())) {
    out(0, 0) += 0.5f;  // corners collided; keep the non-constant contract
  }
  return out;
}

}  // namespace terrafill::grid
