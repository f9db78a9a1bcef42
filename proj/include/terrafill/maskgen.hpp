#pragma once

#include <cstdint>
#include <string>

#include "terrafill/errors.hpp"
#include "terrafill/types.hpp"

namespace terrafill::maskgen {

// Aliased-line degradation mask parameters. Segments form a connected
// polyline; each segment is Bresenham-rasterized and dilated with a square
// structuring element of the drawn thickness.
struct MaskParams {
  int segments_min = 1;
  int segments_max = 4;
  int thickness_min = 1;
  int thickness_max = 6;
  double orientation_min = 0.0;           // radians
  double orientation_max = 2.0 * 3.14159265358979323846;
  // masks thinner than this fraction are regenerated (bounded, best effort);
  // keeps degenerate near-empty degradations out of evaluation runs
  double min_fraction = 0.005;
  std::uint64_t seed = 0;
};

// Deterministic per seed. Guarantees at least one known pixel: regenerates
// with a perturbed seed, AllMasked after bounded retries.
Mask gen_line_mask(const MaskParams& params, int w, int h);

// Bresenham segment rasterization dilated with a square element of side
// `thickness` (offsets -(t-1)/2 .. t/2). Clips to the raster.
void draw_segment(Mask& m, int x0, int y0, int x1, int y1, int thickness);

double mask_fraction(const Mask& m);

// PBM (P4) binary format, bit-exact round trip. 1 bit per pixel, rows padded
// to whole bytes, MSB first; bit 1 = masked.
void write_pbm(const Mask& m, const std::string& path);
Mask read_pbm(const std::string& path);

// 8-bit PNG for viewing (masked = white).
void write_mask_png(const Mask& m, const std::string& path);

}  // namespace terrafill::maskgen
