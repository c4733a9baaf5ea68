#pragma once

// Binary container of named tensors:
//   "HCECKPT\0" | u32 version | u64 manifest bytes | manifest JSON |
//   u64 count | count x (u32 name bytes | name | u32 rank | rank x u64 dim |
//   values as little-endian IEEE-754 binary64)

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "hce/ad/parameter.hpp"

namespace hce::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const ParameterStore& store, nlohmann::json manifest = nlohmann::json::object());
/// Copies tensors into same-named parameters. Missing names or shape
/// mismatches throw DataError. Bumps the store version.
void restore(ParameterStore& store, const Checkpoint& ckpt);

}  // namespace hce::ad
