#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "terrafill/grid.hpp"

namespace terrafill::grid {

namespace {

using Bytes = std::vector<std::uint8_t>;

void put_u16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(Bytes& b, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(b, bits);
}

struct Reader {
  const Bytes& b;
  explicit Reader(const Bytes& data) : b(data) {}

  void require(std::size_t off, std::size_t n) const {
    if (off + n > b.size()) {
      throw FormatError("truncated file at byte offset " + std::to_string(off));
    }
  }
  std::uint16_t u16(std::size_t off) const {
    require(off, 2);
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
  }
  std::uint32_t u32(std::size_t off) const {
    require(off, 4);
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
  }
  float f32(std::size_t off) const {
    const std::uint32_t bits = u32(off);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

Bytes slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void spill(const Bytes& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path);
}

// TIFF constants for the accepted profile
constexpr std::uint16_t kTypeShort = 3;
constexpr std::uint16_t kTypeLong = 4;

struct IfdEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::uint32_t value;  // value or offset
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

}  // namespace

void write_tiff(const Heightmap& h, const std::string& path) {
  const std::uint32_t W = static_cast<std::uint32_t>(h.cols());
  const std::uint32_t H = static_cast<std::uint32_t>(h.rows());
  const std::uint32_t row_bytes = W * 4;
  const std::uint32_t rows_per_strip =
      std::clamp<std::uint32_t>(row_bytes ? 65536 / row_bytes : H, 1, H);
  const std::uint32_t n_strips = (H + rows_per_strip - 1) / rows_per_strip;

  Bytes out;
  out.reserve(8 + static_cast<std::size_t>(W) * H * 4 + 256);
  // header: little-endian magic, IFD offset patched at the end
  out.push_back('I');
  out.push_back('I');
  put_u16(out, 42);
  put_u32(out, 0);

  std::vector<std::uint32_t> strip_offsets(n_strips), strip_counts(n_strips);
  for (std::uint32_t s = 0; s < n_strips; ++s) {
    const std::uint32_t y0 = s * rows_per_strip;
    const std::uint32_t rows = std::min(rows_per_strip, H - y0);
    strip_offsets[s] = static_cast<std::uint32_t>(out.size());
    strip_counts[s] = rows * row_bytes;
    for (std::uint32_t y = y0; y < y0 + rows; ++y) {
      for (std::uint32_t x = 0; x < W; ++x) put_f32(out, h(y, x));
    }
  }

  // external arrays when they do not fit in the 4-byte value slot
  std::uint32_t offsets_pos = strip_offsets.empty() ? 0 : strip_offsets[0];
  std::uint32_t counts_pos = strip_counts.empty() ? 0 : strip_counts[0];
  if (n_strips > 1) {
    offsets_pos = static_cast<std::uint32_t>(out.size());
    for (std::uint32_t v : strip_offsets) put_u32(out, v);
    counts_pos = static_cast<std::uint32_t>(out.size());
    for (std::uint32_t v : strip_counts) put_u32(out, v);
  }

  const std::uint32_t ifd_pos = static_cast<std::uint32_t>(out.size());
  const IfdEntry entries[] = {
      {256, kTypeLong, 1, W},
      {257, kTypeLong, 1, H},
      {258, kTypeShort, 1, 32},
      {259, kTypeShort, 1, 1},   // no compression
      {262, kTypeShort, 1, 1},   // BlackIsZero
      {273, kTypeLong, n_strips, offsets_pos},
      {277, kTypeShort, 1, 1},
      {278, kTypeLong, 1, rows_per_strip},
      {279, kTypeLong, n_strips, counts_pos},
      {339, kTypeShort, 1, 3},   // IEEE float samples
  };
  put_u16(out, static_cast<std::uint16_t>(std::size(entries)));
  for (const auto& e : entries) {
    put_u16(out, e.tag);
    put_u16(out, e.type);
    put_u32(out, e.count);
    put_u32(out, e.value);
  }
  put_u32(out, 0);  // no next IFD

  // patch header IFD offset
  out[4] = static_cast<std::uint8_t>(ifd_pos & 0xff);
  out[5] = static_cast<std::uint8_t>((ifd_pos >> 8) & 0xff);
  out[6] = static_cast<std::uint8_t>((ifd_pos >> 16) & 0xff);
  out[7] = static_cast<std::uint8_t>((ifd_pos >> 24) & 0xff);

  spill(out, path);
}

Heightmap read_tiff(const std::string& path) {
  const Bytes data = slurp(path);
  const Reader r(data);
  r.require(0, 8);
  if (data[0] == 'M' && data[1] == 'M') {
    throw UnsupportedVariant("big-endian TIFF is outside the accepted profile");
  }
  if (data[0] != 'I' || data[1] != 'I') {
    throw FormatError("bad TIFF byte-order mark at byte offset 0");
  }
  const std::uint16_t magic = r.u16(2);
  if (magic == 43) throw UnsupportedVariant("BigTIFF is outside the accepted profile");
  if (magic != 42) throw FormatError("bad TIFF magic at byte offset 2");

  const std::uint32_t ifd = r.u32(4);
  const std::uint16_t n_entries = r.u16(ifd);

  std::uint32_t W = 0, H = 0, rows_per_strip = 0;
  std::vector<std::uint32_t> strip_offsets, strip_counts;
  std::uint32_t bits = 0, comp = 1, spp = 1, fmt = 1;

  for (std::uint16_t i = 0; i < n_entries; ++i) {
    const std::size_t e = ifd + 2 + static_cast<std::size_t>(i) * 12;
    const std::uint16_t tag = r.u16(e);
    const std::uint16_t type = r.u16(e + 2);
    const std::uint32_t count = r.u32(e + 4);
    auto scalar = [&]() -> std::uint32_t {
      if (type == kTypeShort) return r.u16(e + 8);
      if (type == kTypeLong) return r.u32(e + 8);
      throw UnsupportedVariant("unexpected TIFF field type for tag " + std::to_string(tag));
    };
    // SHORT or LONG array; values live at e+8 when they fit in 4 bytes
    auto array = [&]() -> std::vector<std::uint32_t> {
      const std::uint32_t elem = (type == kTypeShort) ? 2 : 4;
      if (type != kTypeShort && type != kTypeLong) {
        throw UnsupportedVariant("unexpected TIFF field type for tag " + std::to_string(tag));
      }
      const std::size_t base =
          (static_cast<std::size_t>(count) * elem <= 4) ? e + 8 : r.u32(e + 8);
      std::vector<std::uint32_t> vals(count);
      for (std::uint32_t k = 0; k < count; ++k) {
        vals[k] = (type == kTypeShort) ? r.u16(base + 2ull * k) : r.u32(base + 4ull * k);
      }
      return vals;
    };
    switch (tag) {
      case 256: W = scalar(); break;
      case 257: H = scalar(); break;
      case 258: bits = scalar(); break;
      case 259: comp = scalar(); break;
      case 262: break;  // photometric, any value tolerated
      case 273: strip_offsets = array(); break;
      case 277: spp = scalar(); break;
      case 278: rows_per_strip = scalar(); break;
      case 279: strip_counts = array(); break;
      case 322:
      case 323:
        throw UnsupportedVariant("tiled TIFF is outside the accepted profile");
      case 339: fmt = scalar(); break;
      default: break;  // ignore unknown tags
    }
  }

  if (comp != 1) throw UnsupportedVariant("compressed TIFF is outside the accepted profile");
  if (bits != 32) throw UnsupportedVariant("BitsPerSample must be 32");
  if (spp != 1) throw UnsupportedVariant("SamplesPerPixel must be 1");
  if (fmt != 3) throw UnsupportedVariant("SampleFormat must be IEEE float");
  if (W == 0 || H == 0) throw FormatError("missing image dimensions in IFD");
  if (rows_per_strip == 0) rows_per_strip = H;
  if (strip_offsets.empty()) throw FormatError("missing StripOffsets in IFD");
  if (strip_counts.size() != strip_offsets.size()) {
    throw FormatError("StripByteCounts does not match StripOffsets");
  }

  Heightmap out(H, W);
  std::uint32_t y = 0;
  for (std::uint32_t s = 0; s < strip_offsets.size(); ++s) {
    const std::uint32_t strip_off = strip_offsets[s];
    const std::uint32_t strip_len = strip_counts[s];
    const std::uint32_t rows = std::min(rows_per_strip, H - y);
    if (strip_len < rows * W * 4) {
      throw FormatError("strip " + std::to_string(s) + " too short at byte offset " +
                        std::to_string(strip_off));
    }
    r.require(strip_off, rows * W * 4);
    for (std::uint32_t dy = 0; dy < rows; ++dy, ++y) {
      for (std::uint32_t x = 0; x < W; ++x) {
        out(y, x) = r.f32(strip_off + (static_cast<std::size_t>(dy) * W + x) * 4);
      }
    }
  }
  if (y != H) throw FormatError("strips cover " + std::to_string(y) + " of " +
                                std::to_string(H) + " rows");
  return out;
}

void write_hgt32(const Heightmap& h, const std::string& path) {
  Bytes out;
  out.reserve(12 + static_cast<std::size_t>(h.size()) * 4);
  out.push_back('H');
  out.push_back('G');
  out.push_back('T');
  out.push_back('1');
  put_u32(out, static_cast<std::uint32_t>(h.cols()));
  put_u32(out, static_cast<std::uint32_t>(h.rows()));
  for (Eigen::Index y = 0; y < h.rows(); ++y) {
    for (Eigen::Index x = 0; x < h.cols(); ++x) put_f32(out, h(y, x));
  }
  spill(out, path);
}

Heightmap read_hgt32(const std::string& path) {
  const Bytes data = slurp(path);
  const Reader r(data);
  r.require(0, 12);
  if (std::memcmp(data.data(), "HGT1", 4) != 0) {
    throw FormatError("bad HGT32 magic at byte offset 0");
  }
  const std::uint32_t W = r.u32(4);
  const std::uint32_t H = r.u32(8);
  if (W == 0 || H == 0) throw FormatError("zero dimension in HGT32 header");
  r.require(12, static_cast<std::size_t>(W) * H * 4);
  Heightmap out(H, W);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t x = 0; x < W; ++x) {
      out(y, x) = r.f32(12 + (static_cast<std::size_t>(y) * W + x) * 4);
    }
  }
  return out;
}

Heightmap read_grid(const std::string& path) {
  if (ends_with(path, ".hgt32")) return read_hgt32(path);
  return read_tiff(path);
}

void write_grid(const Heightmap& h, const std::string& path) {
  if (ends_with(path, ".hgt32")) {
    write_hgt32(h, path);
  } else {
    write_tiff(h, path);
  }
}

}  // namespace terrafill::grid
