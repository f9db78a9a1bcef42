#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/nn/unet.hpp"

namespace terrafill::nn {

// UNP1 flat binary parameter format:
//   magic "UNP1", u32 entry count, then per entry:
//   u32 path length, UTF-8 path, u8 rank, rank x u32 dims, f32 data (LE).
// Round trip is bit-exact.

inline void save_params(const ParamStore<float>& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  f.write("UNP1", 4);
  put_u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [key, t] : params) {
    put_u32(static_cast<std::uint32_t>(key.size()));
    f.write(key.data(), static_cast<std::streamsize>(key.size()));
    const unsigned char rank = 4;
    f.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.dims) put_u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &t.data[i], 4);
      put_u32(bits);
    }
  }
  if (!f) throw IoError("short write to " + path);
}

inline ParamStore<float> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (off + n > data.size()) {
      throw FormatError("truncated UNP1 file at byte offset " + std::to_string(off));
    }
  };
  auto get_u32 = [&]() -> std::uint32_t {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(data[off]) |
                            (static_cast<std::uint32_t>(data[off + 1]) << 8) |
                            (static_cast<std::uint32_t>(data[off + 2]) << 16) |
                            (static_cast<std::uint32_t>(data[off + 3]) << 24);
    off += 4;
    return v;
  };
  need(4);
  if (std::memcmp(data.data(), "UNP1", 4) != 0) {
    throw FormatError("bad UNP1 magic at byte offset 0");
  }
  off = 4;
  const std::uint32_t count = get_u32();
  ParamStore<float> params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t klen = get_u32();
    need(klen);
    std::string key(reinterpret_cast<const char*>(data.data() + off), klen);
    off += klen;
    need(1);
    const unsigned char rank = data[off++];
    if (rank != 4) {
      throw UnsupportedVariant("UNP1 rank " + std::to_string(rank) + " for " + key);
    }
    int dims[4];
    for (int i = 0; i < 4; ++i) dims[i] = static_cast<int>(get_u32());
    Tensor<float> t(dims[0], dims[1], dims[2], dims[3]);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const std::uint32_t bits = get_u32();
      std::memcpy(&t.data[i], &bits, 4);
    }
    params.emplace(std::move(key), std::move(t));
  }
  return params;
}

}  // namespace terrafill::nn
