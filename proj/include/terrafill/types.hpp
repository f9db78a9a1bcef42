#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace terrafill {

// Row-major dense grid, (row, col) = (y, x). width() == cols, height() == rows.
template <class Scalar>
using GridT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Elevation raster. Nodata cells are NaN; normalized rasters hold finite
// values in [0, 1].
using Heightmap = GridT<float>;

// Binary degradation mask; true = missing/unknown pixel.
using Mask = GridT<bool>;

template <class Scalar>
using VecT = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Min/max of the raster before mapping to [0, 1]; makes normalization
// invertible.
struct NormalizationRecord {
  float min = 0.0f;
  float max = 1.0f;
};

struct CropSpec {
  int origin_x = 0;
  int origin_y = 0;
  int side = 0;
  int target_side = 128;
};

}  // namespace terrafill
