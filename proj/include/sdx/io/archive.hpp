#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"
#include "sdx/spectral/image_set.hpp"

namespace sdx::io {

using spectral::ImageSet;

// <base>.f32 holds N*H*W little-endian float32 values; <base>.json carries
// shape, per-item provenance and labels, and caller-supplied parameters.
inline void save_image_set(const std::string& base, const ImageSet& set, const nlohmann::json& params = {}) {
  {
    std::ofstream f(base + ".f32", std::ios::binary);
    if (!f) throw DataError("cannot open '" + base + ".f32' for writing");
    std::string buf;
    buf.reserve(set.pixels.size() * 4);
    for (float v : set.pixels) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("failed writing '" + base + ".f32'");
  }
  nlohmann::json side;
  side["shape"] = {set.size(), set.height, set.width};
  side["dtype"] = "float32le";
  side["params"] = params.is_null() ? nlohmann::json::object() : params;
  auto& items = side["items"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.size(); ++i)
    items.push_back({{"subject_id", set.provenance[i].subject_id},
                     {"segment_index", set.provenance[i].segment_index},
                     {"origin", spectral::origin_name(set.provenance[i].origin)},
                     {"label", eeg::label_name(set.labels[i])}});
  std::ofstream j(base + ".json");
  if (!j) throw DataError("cannot open '" + base + ".json' for writing");
  j << side.dump(1) << '\n';
}

inline nlohmann::json load_sidecar(const std::string& base) {
  std::ifstream j(base + ".json");
  if (!j) throw DataError("cannot open '" + base + ".json'");
  try {
    return nlohmann::json::parse(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed sidecar '" + base + ".json': " + e.what());
  }
}

inline ImageSet load_image_set(const std::string& base) {
  const auto side = load_sidecar(base);
  ImageSet set;
  const auto n = side.at("shape").at(0).get<std::size_t>();
  set.height = side.at("shape").at(1).get<int>();
  set.width = side.at("shape").at(2).get<int>();
  const auto& items = side.at("items");
  if (items.size() != n) throw DataError(base + ".json: item list length does not match shape");
  for (const auto& it : items) {
    set.provenance.push_back({it.at("subject_id").get<std::string>(), it.at("segment_index").get<int>(),
                              spectral::parse_origin(it.at("origin").get<std::string>())});
    set.labels.push_back(eeg::parse_label(it.at("label").get<std::string>()));
  }
  std::ifstream f(base + ".f32", std::ios::binary);
  if (!f) throw DataError("cannot open '" + base + ".f32'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() != n * set.image_size() * 4)
    throw DataError(base + ".f32: expected " + std::to_string(n * set.image_size() * 4) + " bytes, found " +
                    std::to_string(bytes.size()));
  set.pixels.resize(n * set.image_size());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < set.pixels.size(); ++i) {
    const std::uint32_t u = p[4 * i] | (p[4 * i + 1] << 8) | (p[4 * i + 2] << 16) | (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
    set.pixels[i] = std::bit_cast<float>(u);
  }
  return set;
}

}  // namespace sdx::io
