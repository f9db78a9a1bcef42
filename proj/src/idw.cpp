#include <algorithm>
#include <cmath>
#include <vector>

#include "terrafill/classical.hpp"

namespace terrafill::classical {

namespace {

struct KnownPixel {
  int x;
  int y;
  float value;
};

std::vector<KnownPixel> collect_known(const Heightmap& h, const Mask& m) {
  std::vector<KnownPixel> known;
  known.reserve(static_cast<std::size_t>(h.size() - m.count()));
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) {
      if (!m(y, x)) known.push_back({x, y, h(y, x)});
    }
  }
  return known;
}

}  // namespace

Heightmap idw_fill(const Heightmap& h, const Mask& m, const IdwConfig& cfg) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeMismatch("idw_fill: mask dims do not match raster");
  }
  if (cfg.neighbors < 1 || !(cfg.power > 0.0)) {
    throw InvalidConfig("idw_fill: need neighbors >= 1 and power > 0");
  }
  const std::vector<KnownPixel> known = collect_known(h, m);
  if (static_cast<int>(known.size()) < cfg.neighbors) {
    throw InsufficientKnown("idw_fill: fewer known pixels than requested neighbors");
  }

  Heightmap out = h;
  const int n = cfg.neighbors;
  // (squared distance, row-major known index): total order makes the
  // N-nearest selection deterministic under distance ties.
  std::vector<std::pair<double, std::size_t>> cand(known.size());
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) {
      if (!m(y, x)) continue;
      for (std::size_t i = 0; i < known.size(); ++i) {
        const double dx = known[i].x - x;
        const double dy = known[i].y - y;
        cand[i] = {dx * dx + dy * dy, i};
      }
      std::nth_element(cand.begin(), cand.begin() + (n - 1), cand.end());
      std::sort(cand.begin(), cand.begin() + n);
      double wsum = 0.0, vsum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double w = std::pow(cand[i].first, -cfg.power / 2.0);  // d^-p
        wsum += w;
        vsum += w * known[cand[i].second].value;
      }
      out(y, x) = static_cast<float>(vsum / wsum);
    }
  }
  return out;
}

}  // namespace terrafill::classical
