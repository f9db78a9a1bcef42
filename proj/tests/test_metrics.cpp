#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "terrafill/metrics.hpp"
#include "terrafill/rng.hpp"

using namespace terrafill;

namespace oracle {

// Direct-definition implementations, no shared code with the library path.

double rmse(const Heightmap& a, const Heightmap& b) {
  double s = 0.0;
  for (int y = 0; y < a.rows(); ++y) {
    for (int x = 0; x < a.cols(); ++x) {
      const double d = static_cast<double>(a(y, x)) - b(y, x);
      s += d * d;
    }
  }
  return std::sqrt(s / (a.rows() * a.cols()));
}

double mae(const Heightmap& a, const Heightmap& b) {
  double s = 0.0;
  for (int y = 0; y < a.rows(); ++y) {
    for (int x = 0; x < a.cols(); ++x) s += std::abs(static_cast<double>(a(y, x)) - b(y, x));
  }
  return s / (a.rows() * a.cols());
}

double psnr(const Heightmap& a, const Heightmap& b) {
  double s = 0.0;
  for (int y = 0; y < a.rows(); ++y) {
    for (int x = 0; x < a.cols(); ++x) {
      const double d = static_cast<double>(a(y, x)) - b(y, x);
      s += d * d;
    }
  }
  const double mse = s / (a.rows() * a.cols());
  return 10.0 * std::log10(1.0 / mse);
}

double emd(const Heightmap& a, const Heightmap& b) {
  std::vector<double> va, vb;
  for (int y = 0; y < a.rows(); ++y) {
    for (int x = 0; x < a.cols(); ++x) {
      va.push_back(a(y, x));
      vb.push_back(b(y, x));
    }
  }
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
  return s / va.size();
}

// Naive per-window SSIM with explicit Gaussian weights.
double ssim(const Heightmap& a, const Heightmap& b, int window = 7) {
  const int r = window / 2;
  std::vector<double> w(window * window);
  double wsum = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      w[(dy + r) * window + (dx + r)] = g;
      wsum += g;
    }
  }
  for (double& v : w) v /= wsum;

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  long count = 0;
  for (int y = r; y < a.rows() - r; ++y) {
    for (int x = r; x < a.cols() - r; ++x) {
      double ma = 0, mb = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = w[(dy + r) * window + (dx + r)];
          ma += wt * a(y + dy, x + dx);
          mb += wt * b(y + dy, x + dx);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = w[(dy + r) * window + (dx + r)];
          va += wt * (a(y + dy, x + dx) - ma) * (a(y + dy, x + dx) - ma);
          vb += wt * (b(y + dy, x + dx) - mb) * (b(y + dy, x + dx) - mb);
          cov += wt * (a(y + dy, x + dx) - ma) * (b(y + dy, x + dx) - mb);
        }
      }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace oracle

namespace {

Heightmap random_map(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  Heightmap m(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m(y, x) = static_cast<float>(lo + rng.uniform() * (hi - lo));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("rmse/mae basics") {
  Heightmap a = Heightmap::Constant(3, 3, 0.4f);
  CHECK(metrics::rmse(a, a) == doctest::Approx(0.0));
  CHECK(metrics::mae(a, a) == doctest::Approx(0.0));
  Heightmap b = a + 0.25f;
  CHECK(metrics::rmse(a, b) == doctest::Approx(0.25));
  CHECK(metrics::mae(a, b) == doctest::Approx(0.25));
}

TEST_CASE("rmse/mae hand arithmetic on [0,0,0,1] residual") {
  Heightmap a(1, 4), b(1, 4);
  a << 0, 0, 0, 1;
  b.setZero();
  CHECK(metrics::rmse(a, b) == doctest::Approx(0.5));
  CHECK(metrics::mae(a, b) == doctest::Approx(0.25));
}

TEST_CASE("psnr formula and sentinel") {
  Heightmap a = Heightmap::Constant(4, 4, 0.3f);
  Heightmap b = a + 0.1f;
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(std::isinf(metrics::psnr(a, a)));
  // strictly decreasing in mse
  Heightmap c = a + 0.2f;
  CHECK(metrics::psnr(a, c) < metrics::psnr(a, b));
}

TEST_CASE("emd translation and permutation properties") {
  Rng rng(4);
  Heightmap a = random_map(rng, 8, 8);
  CHECK(metrics::emd(a, a) == doctest::Approx(0.0));
  Heightmap shifted = a + 0.125f;
  CHECK(std::abs(metrics::emd(a, shifted) - 0.125) < 1e-6);

  // same multiset, different arrangement
  Heightmap perm = a;
  std::reverse(perm.data(), perm.data() + perm.size());
  CHECK(metrics::emd(a, perm) == doctest::Approx(0.0));
}

TEST_CASE("emd sorted-difference example") {
  Heightmap a(1, 2), b(1, 2);
  a << 0.0f, 1.0f;
  b << 0.5f, 0.5f;
  CHECK(metrics::emd(a, b) == doctest::Approx(0.5));
}

TEST_CASE("ssim identity, anticorrelation, constant offset") {
  Rng rng(9);
  Heightmap a = random_map(rng, 16, 16);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0));

  // checkerboard vs inverted checkerboard
  Heightmap cb(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) cb(y, x) = static_cast<float>((x + y) % 2);
  }
  Heightmap inv = 1.0f - cb;
  CHECK(metrics::ssim(cb, inv) < 0.0);

  // constants: structure/contrast terms drop out, luminance term remains
  Heightmap ca = Heightmap::Constant(16, 16, 0.25f);
  Heightmap cc = Heightmap::Constant(16, 16, 0.75f);
  const double c1 = 1e-4;
  const double expected = (2 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
  CHECK(metrics::ssim(ca, cc) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("ssim window validation") {
  Heightmap a = Heightmap::Constant(5, 5, 0.5f);
  CHECK_THROWS_AS(metrics::ssim(a, a, 7), WindowTooLarge);
  CHECK_THROWS_AS(metrics::ssim(a, a, 4), InvalidConfig);
}

TEST_CASE("all metrics match direct-definition oracles on 16x16 pairs") {
  Rng rng(1234);
  for (int i = 0; i < 50; ++i) {
    Heightmap a = random_map(rng, 16, 16);
    Heightmap b = random_map(rng, 16, 16);
    CHECK(metrics::rmse(a, b) == doctest::Approx(oracle::rmse(a, b)).epsilon(1e-6));
    CHECK(metrics::mae(a, b) == doctest::Approx(oracle::mae(a, b)).epsilon(1e-6));
    CHECK(metrics::psnr(a, b) == doctest::Approx(oracle::psnr(a, b)).epsilon(1e-6));
    CHECK(metrics::emd(a, b) == doctest::Approx(oracle::emd(a, b)).epsilon(1e-6));
    CHECK(metrics::ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-6));
  }
}

TEST_CASE("metric symmetry and rmse >= mae") {
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    Heightmap a = random_map(rng, 12, 9);
    Heightmap b = random_map(rng, 12, 9);
    CHECK(metrics::rmse(a, b) == doctest::Approx(metrics::rmse(b, a)));
    CHECK(metrics::mae(a, b) == doctest::Approx(metrics::mae(b, a)));
    CHECK(metrics::emd(a, b) == doctest::Approx(metrics::emd(b, a)));
    CHECK(metrics::rmse(a, b) >= metrics::mae(a, b) - 1e-12);
    const double s = metrics::ssim(a.block(0, 0, 9, 9).eval(), b.block(0, 0, 9, 9).eval());
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("shape mismatch is rejected") {
  Heightmap a(2, 2), b(2, 3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(metrics::rmse(a, b), ShapeMismatch);
  CHECK_THROWS_AS(metrics::emd(a, b), ShapeMismatch);
}

TEST_CASE("masked-scope metrics restrict to masked pixels") {
  Rng rng(5);
  Heightmap truth = random_map(rng, 12, 12);
  Heightmap out = truth;
  Mask m = Mask::Constant(12, 12, false);
  // corrupt only masked pixels
  for (int i = 0; i < 12; ++i) {
    m(i, (i * 5) % 12) = true;
    out(i, (i * 5) % 12) += 0.1f;
  }
  CHECK(metrics::rmse_masked(out, truth, m) == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(metrics::mae_masked(out, truth, m) == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(metrics::rmse_masked(out, truth, m) > metrics::rmse(out, truth));
  CHECK(metrics::ssim_masked(out, truth, m) <= metrics::ssim(out, truth) + 1e-12);
}
