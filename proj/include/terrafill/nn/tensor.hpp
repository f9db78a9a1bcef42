#pragma once

#include <Eigen/Core>
#include <array>
#include <string>

#include "terrafill/errors.hpp"

namespace terrafill::nn {

// Dense 4-d tensor, row-major (batch, channels, height, width). Lower-rank
// data uses size-1 dims: a bias vector is (1, C, 1, 1), a linear activation
// batch is (B, K, 1, 1).
template <class S>
struct Tensor {
  std::array<int, 4> dims{0, 0, 0, 0};
  Eigen::Array<S, Eigen::Dynamic, 1> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w) : dims{n, c, h, w} {
    data = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(static_cast<Eigen::Index>(n) * c * h * w);
  }

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }

  Eigen::Index size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  S& at(int n, int c, int y, int x) {
    return data[((static_cast<Eigen::Index>(n) * dims[1] + c) * dims[2] + y) * dims[3] + x];
  }
  S at(int n, int c, int y, int x) const {
    return data[((static_cast<Eigen::Index>(n) * dims[1] + c) * dims[2] + y) * dims[3] + x];
  }

  bool all_finite() const { return data.isFinite().all(); }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.dims = dims;
    out.data = data.template cast<T>();
    return out;
  }

  std::string shape_str() const {
    return "(" + std::to_string(dims[0]) + "," + std::to_string(dims[1]) + "," +
           std::to_string(dims[2]) + "," + std::to_string(dims[3]) + ")";
  }
};

}  // namespace terrafill::nn
