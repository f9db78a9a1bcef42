#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/rng.hpp"
#include "terrafill/types.hpp"

namespace terrafill::grid {

inline int width(const Heightmap& h) { return static_cast<int>(h.cols()); }
inline int height(const Heightmap& h) { return static_cast<int>(h.rows()); }

bool has_nodata(const Heightmap& h);

// Min-max map to [0, 1]. Throws ContainsNodata / DegenerateFlat.
std::pair<Heightmap, NormalizationRecord> normalize(const Heightmap& h);

// Inverse of normalize given its record.
Heightmap denormalize(const Heightmap& h, const NormalizationRecord& rec);

// Nearest-neighbour resize with pixel-center indexing:
//   out(x, y) = in(floor((x + 0.5) * W / out_w), floor((y + 0.5) * H / out_h))
// Aspect ratio is not preserved.
Heightmap rescale_nearest(const Heightmap& h, int out_w, int out_h);

// Random crop -> rescale_nearest -> normalize. Crops containing NaN or flat
// crops are rejected and resampled; NoValidCrop after max_attempts rejections.
Heightmap sample_crop(const Heightmap& src, Rng& rng, int min_side,
                      int max_side, int target, int max_attempts = 100);

// Diamond-square fractal terrain; side must be 2^k + 1. Deterministic per
// seed, never NaN, never constant. roughness in (0, 1] scales the per-level
// displacement decay: smaller -> smoother.
Heightmap synth_terrain(Rng& rng, int side, double roughness);

// File I/O. Format picked by extension: .tif/.tiff = minimal TIFF profile
// (single band, 32-bit IEEE float, little-endian, stripped, uncompressed),
// .hgt32 = raw HGT32 ("HGT1" magic, u32 w, u32 h, row-major f32 LE).
// Round-trips are bit-exact for finite values and NaN positions.
Heightmap read_grid(const std::string& path);
void write_grid(const Heightmap& h, const std::string& path);

Heightmap read_tiff(const std::string& path);
void write_tiff(const Heightmap& h, const std::string& path);
Heightmap read_hgt32(const std::string& path);
void write_hgt32(const Heightmap& h, const std::string& path);

// 8-bit grayscale PNG for visual inspection; values clamped to [0, 1],
// NaN rendered as 0. Not round-trippable.
void write_png(const Heightmap& h, const std::string& path);

// Raw 8-bit grayscale PNG emission (row-major pixels).
void write_png_gray8(const std::vector<std::uint8_t>& pixels, int w, int h,
                     const std::string& path);

}  // namespace terrafill::grid
