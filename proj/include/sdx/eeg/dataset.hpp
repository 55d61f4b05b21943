#pragma once

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdx/eeg/column_text.hpp"
#include "sdx/eeg/edf.hpp"
#include "sdx/eeg/preprocess.hpp"

namespace sdx::eeg {

enum class DatasetFormat { column_text, edf };

inline const char* format_name(DatasetFormat f) { return f == DatasetFormat::edf ? "edf" : "column_text"; }

inline DatasetFormat parse_format(const std::string& s) {
  if (s == "column_text" || s == "text") return DatasetFormat::column_text;
  if (s == "edf") return DatasetFormat::edf;
  throw ConfigError("unknown dataset format '" + s + "' (expected column_text or edf)");
}

struct SubjectFile {
  std::string path;
  std::string subject_id;
  Label label = Label::norm;
};

struct ManifestEntry {
  std::string subject_id;
  Label label = Label::norm;
  std::string path;
  DatasetFormat format = DatasetFormat::column_text;
  long segment_count = 0;
  std::string checksum;  // crc32 of the file bytes, hex
};

inline std::string file_crc32(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = f.gcount();
    if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
  }
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

// Subjects are found either under norm/ and sch/ subdirectories, or (EDF) as
// files in the root named h* (healthy) and s* (schizophrenia).
inline std::vector<SubjectFile> discover_subjects(const std::string& root, DatasetFormat fmt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset directory '" + root + "' does not exist");
  std::vector<SubjectFile> out;
  auto accept = [&](const fs::path& p) {
    if (!fs::is_regular_file(p)) return false;
    if (fmt == DatasetFormat::edf) {
      auto ext = p.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      return ext == ".edf";
    }
    return p.filename().string().front() != '.';
  };
  for (Label l : {Label::norm, Label::sch}) {
    const fs::path dir = fs::path(root) / label_name(l);
    if (!fs::is_directory(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir))
      if (accept(e.path()))
        out.push_back({e.path().string(), std::string(label_name(l)) + "/" + e.path().stem().string(), l});
  }
  if (out.empty() && fmt == DatasetFormat::edf) {
    for (const auto& e : fs::directory_iterator(root)) {
      if (!accept(e.path())) continue;
      const auto stem = e.path().stem().string();
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(stem.front())));
      if (c != 'h' && c != 's') continue;
      out.push_back({e.path().string(), stem, c == 'h' ? Label::norm : Label::sch});
    }
  }
  if (out.empty()) throw DataError("no subject files found under '" + root + "'");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
  return out;
}

inline SubjectRecording load_subject(const SubjectFile& f, DatasetFormat fmt) {
  return fmt == DatasetFormat::edf ? read_edf(f.path, f.subject_id, f.label) : read_column_text(f.path, f.subject_id, f.label);
}

// Parse, normalize and segment one subject at a time; `sink` receives each
// subject's segments so the whole corpus never has to be resident.
inline std::vector<ManifestEntry> ingest_dataset(
    const std::string& root, DatasetFormat fmt,
    const std::function<void(const ManifestEntry&, std::vector<SegmentVector>&&)>& sink,
    const std::function<void(const std::string&)>& warn = {}) {
  std::vector<ManifestEntry> manifest;
  for (const auto& f : discover_subjects(root, fmt)) {
    auto rec = load_subject(f, fmt);
    if (warn) {
      const auto w = fmt == DatasetFormat::edf ? channel_order_warnings(rec, kChannels19) : channel_order_warnings(rec, kChannels16);
      for (const auto& m : w) warn(m);
    }
    auto segs = segment_and_concat(zscore_normalize(std::move(rec)).first);
    ManifestEntry e{f.subject_id, f.label, f.path, fmt, static_cast<long>(segs.size()), file_crc32(f.path)};
    if (sink) sink(e, std::move(segs));
    manifest.push_back(std::move(e));
  }
  return manifest;
}

inline nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& m) {
  auto arr = nlohmann::json::array();
  for (const auto& e : m)
    arr.push_back({{"subject_id", e.subject_id},
                   {"label", label_name(e.label)},
                   {"path", e.path},
                   {"format", format_name(e.format)},
                   {"segment_count", e.segment_count},
                   {"checksum", e.checksum}});
  return arr;
}

inline std::vector<ManifestEntry> manifest_from_json(const nlohmann::json& j) {
  std::vector<ManifestEntry> out;
  for (const auto& e : j)
    out.push_back({e.at("subject_id").get<std::string>(), parse_label(e.at("label").get<std::string>()),
                   e.at("path").get<std::string>(), parse_format(e.at("format").get<std::string>()),
                   e.at("segment_count").get<long>(), e.at("checksum").get<std::string>()});
  return out;
}

}  // namespace sdx::eeg
