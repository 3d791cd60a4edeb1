#pragma once

#include <bit>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smile/common.hpp"

namespace smile::io {

// Blobs are documented as little-endian float64; this build targets LE hosts.
static_assert(std::endian::native == std::endian::little,
              "f64 blob I/O assumes a little-endian host");

inline void write_f64_blob(const std::string& path, const std::vector<double>& values) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!f) throw ConfigError("short write: " + path);
}

inline std::vector<double> read_f64_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw ConfigError("cannot open: " + path);
  const std::streamsize bytes = f.tellg();
  if (bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
    throw ConfigError("blob size of " + path + " is not a multiple of 8 bytes");
  std::vector<double> values(static_cast<std::size_t>(bytes) / sizeof(double));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(values.data()), bytes);
  if (!f) throw ConfigError("short read: " + path);
  return values;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline std::uint64_t blob_digest(const std::vector<double>& values) {
  Fnv1a h;
  h.update(values.data(), values.size() * sizeof(double));
  return h.digest();
}

}  // namespace smile::io
