#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hce::tool {

std::string sha256_hex(std::string_view bytes);
/// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);
/// Hash of the canonical (key-sorted, compact) serialization.
std::string config_hash(const nlohmann::json& config);
/// ISO-8601 UTC timestamp with seconds.
std::string utc_now();

/// Provenance record written beside every run's outputs.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::string config_hash;
  std::map<std::string, std::string> data_hashes;  // path -> sha256
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;

  /// Hashes `path` into data_hashes; empty paths are ignored.
  void add_data(const std::string& path);
  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);

}  // namespace hce::tool
