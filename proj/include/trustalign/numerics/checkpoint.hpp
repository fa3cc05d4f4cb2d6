#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "trustalign/numerics/params.hpp"

namespace trustalign::numerics {

/// Container layout:
///   u64 little-endian  header length in bytes
///   header             JSON: {"format", "version", "tensors": [{name, shape, trainable}], "meta"}
///   payload            raw little-endian doubles, tensors in header order
struct Checkpoint {
  ParameterSet tensors;
  nlohmann::json meta = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace trustalign::numerics
