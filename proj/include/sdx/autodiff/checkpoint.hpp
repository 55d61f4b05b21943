#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdx/nn/sequential.hpp"

namespace sdx {

// On-disk layout:
//   "SDX1" | u32 LE descriptor length | descriptor JSON (UTF-8)
//   | float32 LE buffers, in descriptor "tensors" order.
// The descriptor carries the architecture id, network layer specs, seed,
// per-parameter Adam step counts and every tensor's name and shape.
struct ModelCheckpoint {
  static constexpr char kMagic[4] = {'S', 'D', 'X', '1'};
  static constexpr int kFormatVersion = 1;

  std::string arch;
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor<float>> tensors;
  std::map<std::string, long> steps;

  const Tensor<float>& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.value;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }

  long step_of(const std::string& name) const {
    auto it = steps.find(name);
    return it == steps.end() ? 0 : it->second;
  }
};

struct CheckpointFormatError : DataError {
  using DataError::DataError;
};

template <class T>
void append_state(ModelCheckpoint& ck, const Sequential<T>& net, const std::string& prefix) {
  for (auto& nt : net.state(prefix)) ck.tensors.push_back({nt.name, nt.value.template cast<float>()});
  for (auto& [name, step] : net.step_counts(prefix)) ck.steps[name] = step;
}

template <class T>
void restore_state(const ModelCheckpoint& ck, Sequential<T>& net, const std::string& prefix) {
  net.load_state(
      prefix, [&](const std::string& n) { return ck.find(n).template cast<T>(); },
      [&](const std::string& n) { return ck.step_of(n); });
}

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

inline std::string serialize_checkpoint(const ModelCheckpoint& ck) {
  nlohmann::json desc;
  desc["format_version"] = ModelCheckpoint::kFormatVersion;
  desc["arch"] = ck.arch;
  desc["seed"] = ck.seed;
  desc["meta"] = ck.meta;
  desc["steps"] = ck.steps;
  auto& list = desc["tensors"] = nlohmann::json::array();
  for (const auto& t : ck.tensors) list.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  const std::string text = desc.dump();

  std::string out(ModelCheckpoint::kMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& t : ck.tensors)
    for (float v : t.value.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), ModelCheckpoint::kMagic, 4) != 0)
    throw CheckpointFormatError("not a checkpoint: magic bytes mismatch (expected SDX1)");
  const auto len = detail::get_u32(p + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw CheckpointFormatError("truncated checkpoint descriptor");
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(bytes.substr(8, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(std::string("malformed checkpoint descriptor: ") + e.what());
  }
  if (desc.value("format_version", 0) != ModelCheckpoint::kFormatVersion)
    throw CheckpointFormatError("unsupported checkpoint version " + desc.value("format_version", nlohmann::json()).dump());
  ModelCheckpoint ck;
  ck.arch = desc.at("arch").get<std::string>();
  ck.seed = desc.at("seed").get<std::uint64_t>();
  ck.meta = desc.at("meta");
  ck.steps = desc.at("steps").get<std::map<std::string, long>>();
  std::size_t off = 8 + len;
  for (const auto& t : desc.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (off + 4 * n > bytes.size())
      throw CheckpointFormatError("truncated checkpoint data at tensor '" + t.at("name").get<std::string>() + "'");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(detail::get_u32(p + off + 4 * i));
    off += 4 * n;
    ck.tensors.push_back({t.at("name").get<std::string>(), Tensor<float>(std::move(shape), std::move(data))});
  }
  if (off != bytes.size()) throw CheckpointFormatError("trailing bytes after checkpoint data");
  return ck;
}

inline void save_checkpoint(const ModelCheckpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  const auto bytes = serialize_checkpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing checkpoint '" + path + "'");
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace sdx
