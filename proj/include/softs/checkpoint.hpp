#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "softs/data.hpp"
#include "softs/model.hpp"

namespace softs {

inline constexpr const char* kCheckpointFormat = "softs-ckpt-v1";

// CRC-64/XZ: ECMA-182 polynomial, reflected, init and final xor all ones.
std::uint64_t crc64(std::span<const std::byte> bytes);

// Context stored next to the weights so a checkpoint can be evaluated and
// used for forecasting on its own.
struct CheckpointMeta {
  std::optional<Scaler> scaler;
  std::optional<SplitSpec> split;
};

struct LoadedCheckpoint {
  SoftsModel<float> model;
  CheckpointMeta meta;
};

// Layout:
//   line 1   JSON manifest {format, config, params: [{name, shape}], scaler?, split?}
//   payload  little-endian float32 arrays in manifest order
//   trailer  8-byte little-endian CRC-64 of the payload
std::string encode_checkpoint(SoftsModel<float>& model, const CheckpointMeta& meta);
LoadedCheckpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, SoftsModel<float>& model,
                     const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Atomic whole-file write used for every CLI output file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace softs
