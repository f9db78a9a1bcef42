#include "terrafill/maskgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "terrafill/grid.hpp"
#include "terrafill/rng.hpp"

namespace terrafill::maskgen {

namespace {

void stamp_square(Mask& m, int cx, int cy, int thickness) {
  const int lo = -((thickness - 1) / 2);
  const int hi = thickness / 2;
  const int W = static_cast<int>(m.cols());
  const int H = static_cast<int>(m.rows());
  for (int dy = lo; dy <= hi; ++dy) {
    for (int dx = lo; dx <= hi; ++dx) {
      const int x = cx + dx;
      const int y = cy + dy;
      if (x >= 0 && x < W && y >= 0 && y < H) m(y, x) = true;
    }
  }
}

struct Point {
  int x = 0;
  int y = 0;
};

Point random_border_point(Rng& rng, int w, int h) {
  switch (rng.uniform_int(0, 3)) {
    case 0: return {static_cast<int>(rng.uniform_int(0, w - 1)), 0};
    case 1: return {static_cast<int>(rng.uniform_int(0, w - 1)), h - 1};
    case 2: return {0, static_cast<int>(rng.uniform_int(0, h - 1))};
    default: return {w - 1, static_cast<int>(rng.uniform_int(0, h - 1))};
  }
}

Mask generate_once(const MaskParams& p, int w, int h, Rng& rng) {
  Mask m = Mask::Constant(h, w, false);
  const int n_segments = static_cast<int>(rng.uniform_int(p.segments_min, p.segments_max));
  if (n_segments == 0) return m;

  Point cur = rng.uniform() < 0.5 ? random_border_point(rng, w, h)
                                  : Point{static_cast<int>(rng.uniform_int(0, w - 1)),
                                          static_cast<int>(rng.uniform_int(0, h - 1))};
  for (int s = 0; s < n_segments; ++s) {
    const double angle =
        p.orientation_min + rng.uniform() * (p.orientation_max - p.orientation_min);
    // length measured in Chebyshev terms so diagonal strokes rasterize to as
    // many pixels as axis-aligned ones
    const double len = (0.65 + 0.65 * rng.uniform()) * std::max(w, h);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double norm = std::max(std::abs(dx), std::abs(dy));
    const int thickness =
        static_cast<int>(rng.uniform_int(p.thickness_min, p.thickness_max));
    Point next{
        std::clamp(cur.x + static_cast<int>(std::lround(dx / norm * len)), 0, w - 1),
        std::clamp(cur.y + static_cast<int>(std::lround(dy / norm * len)), 0, h - 1)};
    draw_segment(m, cur.x, cur.y, next.x, next.y, thickness);
    cur = next;  // connected polyline
  }
  return m;
}

}  // namespace

void draw_segment(Mask& m, int x0, int y0, int x1, int y1, int thickness) {
  // Bresenham, all octants.
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  while (true) {
    stamp_square(m, x, y, thickness);
    if (x == x1 && y == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

Mask gen_line_mask(const MaskParams& p, int w, int h) {
  if (w < 2 || h < 2) throw InvalidConfig("gen_line_mask: raster must be at least 2x2");
  if (p.segments_min < 0 || p.segments_max < p.segments_min) {
    throw InvalidConfig("gen_line_mask: bad segments range");
  }
  if (p.thickness_min < 1 || p.thickness_max < p.thickness_min) {
    throw InvalidConfig("gen_line_mask: bad thickness range");
  }
  if (p.orientation_max < p.orientation_min) {
    throw InvalidConfig("gen_line_mask: bad orientation range");
  }
  constexpr int kMaxRetries = 16;
  std::uint64_t seed = p.seed;
  Mask fallback;
  bool have_fallback = false;
  for (int retry = 0; retry < kMaxRetries; ++retry) {
    Rng rng(seed);
    Mask m = generate_once(p, w, h, rng);
    if (!m.all()) {
      // the known-pixel guarantee is hard; the fraction floor is best effort
      if (m.count() == 0 || mask_fraction(m) >= p.min_fraction) return m;
      if (!have_fallback) {
        fallback = m;
        have_fallback = true;
      }
    }
    seed = Rng::splitmix64(seed + 1);
  }
  if (have_fallback) return fallback;
  throw AllMasked("gen_line_mask: no known pixel left after retries");
}

double mask_fraction(const Mask& m) {
  if (m.size() == 0) return 0.0;
  return static_cast<double>(m.count()) / static_cast<double>(m.size());
}

void write_pbm(const Mask& m, const std::string& path) {
  const int W = static_cast<int>(m.cols());
  const int H = static_cast<int>(m.rows());
  const int row_bytes = (W + 7) / 8;
  std::vector<char> data(static_cast<std::size_t>(row_bytes) * H, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (m(y, x)) {
        data[static_cast<std::size_t>(y) * row_bytes + x / 8] |=
            static_cast<char>(0x80 >> (x % 8));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P4\n" << W << " " << H << "\n";
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("short write to " + path);
}

Mask read_pbm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P4") throw FormatError("not a P4 PBM file: " + path);
  auto next_int = [&]() -> int {
    // skip whitespace and '#' comments
    int c = f.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = f.get();
      }
      c = f.get();
    }
    if (c == EOF) throw FormatError("truncated PBM header: " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
      v = v * 10 + (c - '0');
      c = f.get();
    }
    return v;  // consumed one whitespace terminator
  };
  const int W = next_int();
  const int H = next_int();
  if (W < 1 || H < 1) throw FormatError("bad PBM dimensions: " + path);
  const int row_bytes = (W + 7) / 8;
  std::vector<char> data(static_cast<std::size_t>(row_bytes) * H);
  f.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (f.gcount() != static_cast<std::streamsize>(data.size())) {
    throw FormatError("truncated PBM pixel data: " + path);
  }
  Mask m(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      m(y, x) = (data[static_cast<std::size_t>(y) * row_bytes + x / 8] &
                 static_cast<char>(0x80 >> (x % 8))) != 0;
    }
  }
  return m;
}

void write_mask_png(const Mask& m, const std::string& path) {
  const int W = static_cast<int>(m.cols());
  const int H = static_cast<int>(m.rows());
  std::vector<std::uint8_t> px(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) px[static_cast<std::size_t>(y) * W + x] = m(y, x) ? 255 : 0;
  }
  grid::write_png_gray8(px, W, H, path);
}

}  // namespace terrafill::maskgen
