#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "terrafill/classical.hpp"

namespace terrafill::classical {

double VariogramModel::operator()(double d) const {
  if (d <= 0.0) return 0.0;  // gamma(0) = 0 by definition; nugget is the 0+ limit
  switch (kind) {
    case VariogramKind::linear:
      return nugget + sill_or_slope * d;
    case VariogramKind::spherical: {
      const double x = std::min(d / range, 1.0);
      return nugget + sill_or_slope * (1.5 * x - 0.5 * x * x * x);
    }
    case VariogramKind::exponential:
      return nugget + sill_or_slope * (1.0 - std::exp(-3.0 * d / range));
  }
  return 0.0;
}

namespace {

struct Sample {
  double x, y, v;
};

std::vector<Sample> known_samples(const Heightmap& h, const Mask& m) {
  std::vector<Sample> s;
  for (int y = 0; y < h.rows(); ++y) {
    for (int x = 0; x < h.cols(); ++x) {
      if (!m(y, x)) s.push_back({static_cast<double>(x), static_cast<double>(y), h(y, x)});
    }
  }
  return s;
}

}  // namespace

EmpiricalVariogram empirical_variogram(const Heightmap& h, const Mask& m, int n_lags) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeMismatch("empirical_variogram: mask dims do not match raster");
  }
  if (n_lags < 1) throw InvalidConfig("empirical_variogram: n_lags must be >= 1");
  std::vector<Sample> s = known_samples(h, m);
  if (s.size() < 10) {
    throw InsufficientKnown("empirical_variogram: need at least 10 known pixels");
  }
  // O(K^2) pairs; deterministic stride subsample keeps the cost bounded on
  // large rasters.
  constexpr std::size_t kMaxSamples = 2000;
  if (s.size() > kMaxSamples) {
    const std::size_t stride = (s.size() + kMaxSamples - 1) / kMaxSamples;
    std::vector<Sample> sub;
    sub.reserve(kMaxSamples);
    for (std::size_t i = 0; i < s.size(); i += stride) sub.push_back(s[i]);
    s.swap(sub);
  }

  double d_max = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double dx = s[i].x - s[j].x, dy = s[i].y - s[j].y;
      d_max = std::max(d_max, dx * dx + dy * dy);
    }
  }
  d_max = std::sqrt(d_max);
  const double bin_w = d_max / n_lags;

  EmpiricalVariogram ev;
  ev.lag_centers.resize(n_lags);
  ev.gamma.assign(n_lags, 0.0);
  ev.pair_counts.assign(n_lags, 0);
  for (int i = 0; i < n_lags; ++i) ev.lag_centers[i] = (i + 0.5) * bin_w;

  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double dx = s[i].x - s[j].x, dy = s[i].y - s[j].y;
      const double d = std::sqrt(dx * dx + dy * dy);
      int bin = bin_w > 0.0 ? static_cast<int>(d / bin_w) : 0;
      bin = std::clamp(bin, 0, n_lags - 1);
      const double dv = s[i].v - s[j].v;
      ev.gamma[bin] += 0.5 * dv * dv;
      ev.pair_counts[bin] += 1;
    }
  }
  for (int i = 0; i < n_lags; ++i) {
    if (ev.pair_counts[i] > 0) ev.gamma[i] /= static_cast<double>(ev.pair_counts[i]);
  }
  return ev;
}

namespace {

// Least squares of gamma ~ nugget + sill * basis(d) over non-empty bins,
// with both coefficients clamped non-negative.
std::pair<double, double> ls_fit(const EmpiricalVariogram& ev,
                                 const std::function<double(double)>& basis) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < ev.gamma.size(); ++i) {
    if (ev.pair_counts[i] > 0) {
      xs.push_back(basis(ev.lag_centers[i]));
      ys.push_back(ev.gamma[i]);
    }
  }
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = xs[i];
    b(i) = ys[i];
  }
  Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  double nugget = std::max(0.0, c(0));
  double sill = std::max(0.0, c(1));
  if (nugget != c(0) || sill != c(1)) {
    // refit the free coefficient with the other clamped at zero
    if (c(1) < 0.0) {
      sill = 0.0;
      nugget = std::max(0.0, b.mean());
    } else {
      nugget = 0.0;
      double num = 0.0, den = 0.0;
      for (int i = 0; i < n; ++i) {
        num += A(i, 1) * b(i);
        den += A(i, 1) * A(i, 1);
      }
      sill = den > 0.0 ? std::max(0.0, num / den) : 0.0;
    }
  }
  return {nugget, sill};
}

double fit_sse(const EmpiricalVariogram& ev, const VariogramModel& mdl) {
  double sse = 0.0;
  for (std::size_t i = 0; i < ev.gamma.size(); ++i) {
    if (ev.pair_counts[i] > 0) {
      const double r = ev.gamma[i] - mdl(ev.lag_centers[i]);
      sse += r * r;
    }
  }
  return sse;
}

}  // namespace

VariogramModel fit_variogram(const Heightmap& h, const Mask& m, VariogramKind kind,
                             int n_lags) {
  const EmpiricalVariogram ev = empirical_variogram(h, m, n_lags);
  const double d_max = ev.lag_centers.empty()
                           ? 1.0
                           : ev.lag_centers.back() + 0.5 * (ev.lag_centers.size() > 1
                                                                ? ev.lag_centers[1] - ev.lag_centers[0]
                                                                : ev.lag_centers[0]);

  VariogramModel best;
  best.kind = kind;
  if (kind == VariogramKind::linear) {
    auto [nugget, slope] = ls_fit(ev, [](double d) { return d; });
    best.nugget = nugget;
    best.sill_or_slope = slope;
    best.range = d_max;
    return best;
  }

  // spherical / exponential: 1-D scan over range, LS for (nugget, sill)
  double best_sse = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 64; ++step) {
    const double range = d_max * step / 64.0;
    VariogramModel mdl;
    mdl.kind = kind;
    mdl.range = range;
    auto basis = [&](double d) {
      VariogramModel unit;
      unit.kind = kind;
      unit.nugget = 0.0;
      unit.sill_or_slope = 1.0;
      unit.range = range;
      return unit(d);
    };
    auto [nugget, sill] = ls_fit(ev, basis);
    mdl.nugget = nugget;
    mdl.sill_or_slope = sill;
    const double sse = fit_sse(ev, mdl);
    if (sse < best_sse) {
      best_sse = sse;
      best = mdl;
    }
  }
  return best;
}

}  // namespace terrafill::classical
