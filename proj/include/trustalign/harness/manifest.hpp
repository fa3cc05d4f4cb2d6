#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "trustalign/harness/toy_task.hpp"

namespace trustalign::harness {

/// SHA-1 of "blob <size>\0" + content, as git hashes file contents.
std::string git_blob_sha1(std::string_view content);
std::string file_sha1(const std::filesystem::path& path);

/// Config snapshot, input hash, derived seeds and produced artifacts of a run.
struct RunManifest {
  nlohmann::json config;
  std::string input_hash;
  std::map<std::string, std::uint64_t> seeds;
  /// Path relative to the run directory -> content hash.
  std::map<std::string, std::string> artifacts;

  static RunManifest for_config(const ToyTaskConfig& cfg);

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

}  // namespace trustalign::harness
