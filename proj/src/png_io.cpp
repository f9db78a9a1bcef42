#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "terrafill/grid.hpp"

namespace terrafill::grid {

namespace {

void put_u32_be(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const auto crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_gray8(const std::vector<std::uint8_t>& pixels, int w, int h,
                     const std::string& path) {
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (w + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter type none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::size_t>(y) * w,
               pixels.begin() + static_cast<std::size_t>(y + 1) * w);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("PNG deflate failed for " + path);
  }
  comp.resize(comp_len);

  std::vector<std::uint8_t> out;
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.insert(out.end(), sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(w));
  put_u32_be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

void write_png(const Heightmap& h, const std::string& path) {
  const int W = static_cast<int>(h.cols());
  const int H = static_cast<int>(h.rows());
  std::vector<std::uint8_t> px(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const float v = h(y, x);
      const float c = std::isnan(v) ? 0.0f : std::fmin(1.0f, std::fmax(0.0f, v));
      px[static_cast<std::size_t>(y) * W + x] =
          static_cast<std::uint8_t>(std::lround(c * 255.0f));
    }
  }
  write_png_gray8(px, W, H, path);
}

}  // namespace terrafill::grid
