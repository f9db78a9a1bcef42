#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/types.hpp"

namespace terrafill::metrics {

struct MetricReport {
  double rmse = 0.0;
  double mae = 0.0;
  double psnr = 0.0;  // dB; +inf sentinel when rmse == 0
  double emd = 0.0;
  double ssim = 1.0;
};

namespace detail {

template <class DA, class DB>
void check_same_shape(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("metric inputs differ in shape");
  }
}

inline std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  const int r = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - r;
    k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-region Gaussian filter: output has the same dims, but only
// entries whose window lies fully inside are meaningful.
inline GridT<double> gauss_filter(const GridT<double>& img, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  const int H = static_cast<int>(img.rows());
  const int W = static_cast<int>(img.cols());
  GridT<double> tmp = GridT<double>::Zero(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = r; x < W - r; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * img(y, x + i);
      tmp(y, x) = s;
    }
  }
  GridT<double> out = GridT<double>::Zero(H, W);
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp(y + i, x);
      out(y, x) = s;
    }
  }
  return out;
}

}  // namespace detail

template <class DA, class DB>
double mse(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  detail::check_same_shape(a, b);
  return (a.template cast<double>() - b.template cast<double>()).square().mean();
}

template <class DA, class DB>
double rmse(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  return std::sqrt(mse(a, b));
}

template <class DA, class DB>
double mae(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  detail::check_same_shape(a, b);
  return (a.template cast<double>() - b.template cast<double>()).abs().mean();
}

template <class DA, class DB>
double psnr(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, double peak = 1.0) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

// 1-D Wasserstein-1 between the value distributions: mean |sorted(a) - sorted(b)|.
// Pixel arrangement is irrelevant; only the multisets matter.
template <class DA, class DB>
double emd(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("emd inputs differ in pixel count");
  if (a.size() == 0) return 0.0;
  std::vector<double> va(a.size()), vb(b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    va[i] = static_cast<double>(a.derived().coeff(i / a.cols(), i % a.cols()));
    vb[i] = static_cast<double>(b.derived().coeff(i / b.cols(), i % b.cols()));
  }
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
  return va.empty() ? 0.0 : s / static_cast<double>(va.size());
}

// Per-window SSIM map over the valid region (windows fully inside), Gaussian
// weighted (sigma = 1.5), L = 1. Returns the map plus the valid radius; the
// scalar metrics below average it.
struct SsimMap {
  GridT<double> map;  // meaningful on [r, H-1-r] x [r, W-1-r]
  int radius = 0;
};

template <class DA, class DB>
SsimMap ssim_map(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b,
                 int window = 7, double k1 = 0.01, double k2 = 0.03) {
  detail::check_same_shape(a, b);
  if (window % 2 == 0 || window < 1) throw InvalidConfig("ssim window must be odd and >= 1");
  if (window > a.rows() || window > a.cols()) {
    throw WindowTooLarge("ssim window exceeds raster dims");
  }
  constexpr double kL = 1.0;
  const double c1 = (k1 * kL) * (k1 * kL);
  const double c2 = (k2 * kL) * (k2 * kL);
  const auto k = detail::gaussian_kernel(window, 1.5);

  const GridT<double> da = a.template cast<double>();
  const GridT<double> db = b.template cast<double>();
  const GridT<double> mu_a = detail::gauss_filter(da, k);
  const GridT<double> mu_b = detail::gauss_filter(db, k);
  const GridT<double> e_aa = detail::gauss_filter(da * da, k);
  const GridT<double> e_bb = detail::gauss_filter(db * db, k);
  const GridT<double> e_ab = detail::gauss_filter(da * db, k);

  const int r = window / 2;
  const int H = static_cast<int>(a.rows());
  const int W = static_cast<int>(a.cols());
  GridT<double> out = GridT<double>::Zero(H, W);
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      const double ma = mu_a(y, x), mb = mu_b(y, x);
      const double va = e_aa(y, x) - ma * ma;
      const double vb = e_bb(y, x) - mb * mb;
      const double cov = e_ab(y, x) - ma * mb;
      out(y, x) = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                  ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return {std::move(out), r};
}

template <class DA, class DB>
double ssim(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b,
            int window = 7, double k1 = 0.01, double k2 = 0.03) {
  const SsimMap sm = ssim_map(a, b, window, k1, k2);
  const int r = sm.radius;
  const int H = static_cast<int>(sm.map.rows());
  const int W = static_cast<int>(sm.map.cols());
  double s = 0.0;
  long n = 0;
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      s += sm.map(y, x);
      ++n;
    }
  }
  return n ? s / n : 1.0;
}

// ---- masked-region variants (harness scope flag) ----
// Error metrics restrict to masked pixels; SSIM averages windows that contain
// at least one masked pixel (windows elsewhere compare identical content).

namespace detail {

template <class D>
std::vector<double> masked_values(const Eigen::ArrayBase<D>& a, const Mask& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.count()));
  for (Eigen::Index y = 0; y < a.rows(); ++y) {
    for (Eigen::Index x = 0; x < a.cols(); ++x) {
      if (m(y, x)) v.push_back(static_cast<double>(a.derived()(y, x)));
    }
  }
  return v;
}

}  // namespace detail

template <class DA, class DB>
double mse_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m) {
  detail::check_same_shape(a, b);
  detail::check_same_shape(a, m);
  const auto va = detail::masked_values(a, m);
  const auto vb = detail::masked_values(b, m);
  if (va.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  return s / static_cast<double>(va.size());
}

template <class DA, class DB>
double rmse_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m) {
  return std::sqrt(mse_masked(a, b, m));
}

template <class DA, class DB>
double mae_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m) {
  detail::check_same_shape(a, b);
  detail::check_same_shape(a, m);
  const auto va = detail::masked_values(a, m);
  const auto vb = detail::masked_values(b, m);
  if (va.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
  return s / static_cast<double>(va.size());
}

template <class DA, class DB>
double psnr_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m,
                   double peak = 1.0) {
  const double e = mse_masked(a, b, m);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / e);
}

template <class DA, class DB>
double emd_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m) {
  detail::check_same_shape(a, b);
  detail::check_same_shape(a, m);
  auto va = detail::masked_values(a, m);
  auto vb = detail::masked_values(b, m);
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
  return va.empty() ? 0.0 : s / static_cast<double>(va.size());
}

template <class DA, class DB>
double ssim_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b, const Mask& m,
                   int window = 7, double k1 = 0.01, double k2 = 0.03) {
  detail::check_same_shape(a, m);
  const SsimMap sm = ssim_map(a, b, window, k1, k2);
  const int r = sm.radius;
  const int H = static_cast<int>(sm.map.rows());
  const int W = static_cast<int>(sm.map.cols());
  double s = 0.0;
  long n = 0;
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      bool touches = false;
      for (int dy = -r; dy <= r && !touches; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (m(y + dy, x + dx)) {
            touches = true;
            break;
          }
        }
      }
      if (touches) {
        s += sm.map(y, x);
        ++n;
      }
    }
  }
  return n ? s / n : 1.0;
}

template <class DA, class DB>
MetricReport compute_report(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  MetricReport r;
  r.rmse = rmse(a, b);
  r.mae = mae(a, b);
  r.psnr = psnr(a, b);
  r.emd = emd(a, b);
  r.ssim = ssim(a, b);
  return r;
}

template <class DA, class DB>
MetricReport compute_report_masked(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b,
                                   const Mask& m) {
  MetricReport r;
  r.rmse = rmse_masked(a, b, m);
  r.mae = mae_masked(a, b, m);
  r.psnr = psnr_masked(a, b, m);
  r.emd = emd_masked(a, b, m);
  r.ssim = ssim_masked(a, b, m);
  return r;
}

}  // namespace terrafill::metrics
