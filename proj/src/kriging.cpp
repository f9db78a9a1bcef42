#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "terrafill/classical.hpp"

namespace terrafill::classical {

namespace {

constexpr double kJitter = 1e-10;

// Ordinary kriging system over k neighbours:
//   [ G  1 ] [lambda]   [g ]
//   [ 1' 0 ] [  mu  ] = [1 ]
// G(i,j) = gamma(d(x_i, x_j)) with zero diagonal, g(i) = gamma(d(x_i, x*)).
// Returns false when the system stays singular after one jitter retry.
bool solve_weights(const Eigen::MatrixXd& gamma_mat, const Eigen::VectorXd& gamma_vec,
                   Eigen::VectorXd& weights) {
  const int k = static_cast<int>(gamma_vec.size()) - 1;
  Eigen::MatrixXd a = gamma_mat;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.isInvertible()) {
      weights = lu.solve(gamma_vec);
      return true;
    }
    for (int i = 0; i < k; ++i) a(i, i) += kJitter;
  }
  return false;
}

}  // namespace

double krige_estimate(const std::vector<KrigingSample>& known, double qx, double qy,
                      const VariogramModel& model, int max_neighbors) {
  const int total = static_cast<int>(known.size());
  if (total < 3) throw InsufficientKnown("krige_estimate: need at least 3 known pixels");
  const int k = std::min(max_neighbors, total);

  std::vector<std::pair<double, int>> cand(total);
  for (int i = 0; i < total; ++i) {
    const double dx = known[i].x - qx, dy = known[i].y - qy;
    cand[i] = {dx * dx + dy * dy, i};
  }
  std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
  std::sort(cand.begin(), cand.begin() + k);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::VectorXd b(k + 1);
  for (int i = 0; i < k; ++i) {
    const KrigingSample& si = known[cand[i].second];
    for (int j = i + 1; j < k; ++j) {
      const KrigingSample& sj = known[cand[j].second];
      const double d = std::hypot(si.x - sj.x, si.y - sj.y);
      a(i, j) = a(j, i) = model(d);
    }
    a(i, k) = a(k, i) = 1.0;
    b(i) = model(std::sqrt(cand[i].first));
  }
  b(k) = 1.0;

  Eigen::VectorXd w;
  if (!solve_weights(a, b, w)) {
    throw SingularSystem("krige_estimate: kriging system singular after jitter retry");
  }
  double est = 0.0;
  for (int i = 0; i < k; ++i) est += w(i) * known[cand[i].second].v;
  return est;
}

Heightmap krige_fill(const Heightmap& h, const Mask& m, const VariogramModel& model,
                     int max_neighbors) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeMismatch("krige_fill: mask dims do not match raster");
  }
  if (max_neighbors < 1) throw InvalidConfig("krige_fill: max_neighbors must be >= 1");

  std::vector<KrigingSample> known;
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) {
      if (!m(y, x)) {
        known.push_back({static_cast<double>(x), static_cast<double>(y), h(y, x)});
        lo = std::min(lo, h(y, x));
        hi = std::max(hi, h(y, x));
      }
    }
  }
  if (known.size() < 3) throw InsufficientKnown("krige_fill: need at least 3 known pixels");

  Heightmap out = h;
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) {
      if (!m(y, x)) continue;
      const double est = krige_estimate(known, x, y, model, max_neighbors);
      // negative weights can overshoot the data range; clamp for parity with
      // the boundedness the other methods provide
      out(y, x) = std::clamp(static_cast<float>(est), lo, hi);
    }
  }
  return out;
}

}  // namespace terrafill::classical
