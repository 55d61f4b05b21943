#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sdx/core/error.hpp"

namespace sdx::io {

namespace detail {
inline void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void png_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}
}  // namespace detail

// 8-bit PNG from row-major samples in [0,1]; channels is 1 (gray) or 3 (RGB).
inline std::string encode_png(const std::vector<float>& px, int h, int w, int channels = 1) {
  if (channels != 1 && channels != 3) throw DimensionError("PNG encoder supports 1 or 3 channels");
  if (px.size() != static_cast<std::size_t>(h) * w * channels) throw DimensionError("PNG pixel buffer size mismatch");
  std::string raw;
  raw.reserve(static_cast<std::size_t>(h) * (w * channels + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < w * channels; ++x) {
      const float v = px[static_cast<std::size_t>(y) * w * channels + x];
      const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
               static_cast<uLong>(raw.size())) != Z_OK)
    throw Error(ErrorKind::internal, "zlib compression failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(w));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr += std::string{8, static_cast<char>(channels == 1 ? 0 : 2), 0, 0, 0};
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", z);
  detail::png_chunk(out, "IEND", "");
  return out;
}

inline void write_png(const std::string& path, const std::vector<float>& px, int h, int w, int channels = 1) {
  const auto bytes = encode_png(px, h, w, channels);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path + "'");
}

}  // namespace sdx::io
