#include "softs/checkpoint.hpp"

#include <unistd.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "softs/config.hpp"

namespace softs {
namespace {

using nlohmann::json;

constexpr std::uint64_t kCrc64Poly = 0xC96C5795D7870F42ULL;  // reflected ECMA-182

const std::array<std::uint64_t, 256>& crc64_table() {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t crc = i;
      for (int bit = 0; bit < 8; ++bit) crc = (crc & 1) ? (crc >> 1) ^ kCrc64Poly : crc >> 1;
      t[i] = crc;
    }
    return t;
  }();
  return table;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(const std::string& source, const std::string& what) {
  throw Error(ErrorCode::corruption, source + ": " + what);
}

}  // namespace

std::uint64_t crc64(std::span<const std::byte> bytes) {
  const auto& table = crc64_table();
  std::uint64_t crc = ~0ULL;
  for (std::byte b : bytes) crc = table[(crc ^ static_cast<std::uint8_t>(b)) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

std::string encode_checkpoint(SoftsModel<float>& model, const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["config"] = to_json(model.config());
  json params = json::array();
  std::string payload;
  for (const auto& p : model.parameters()) {
    json shape = json::array();
    for (std::size_t i = 0; i < p.tensor->rank(); ++i) shape.push_back(p.tensor->extent(i));
    params.push_back(json{{"name", p.name}, {"shape", shape}});
    for (float v : p.tensor->data()) put_u32_le(payload, std::bit_cast<std::uint32_t>(v));
  }
  manifest["params"] = std::move(params);
  if (meta.scaler) manifest["scaler"] = json{{"mean", meta.scaler->mean}, {"std", meta.scaler->std}};
  if (meta.split) manifest["split"] = to_json(*meta.split);

  std::string out = manifest.dump();
  out.push_back('\n');
  out += payload;
  const std::uint64_t crc = crc64(std::as_bytes(std::span(payload.data(), payload.size())));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));
  return out;
}

namespace {

LoadedCheckpoint decode_unchecked(std::string_view bytes, const std::string& source) {
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string_view::npos) corrupt(source, "missing manifest line");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, newline));
  } catch (const json::parse_error& e) {
    corrupt(source, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != kCheckpointFormat) {
    throw Error(ErrorCode::format, source + ": not a " + kCheckpointFormat + " file");
  }

  CheckpointMeta meta;
  if (manifest.contains("scaler")) {
    meta.scaler = Scaler{manifest["scaler"].at("mean").get<std::vector<double>>(),
                         manifest["scaler"].at("std").get<std::vector<double>>()};
  }
  if (manifest.contains("split")) meta.split = split_spec_from_json(manifest["split"]);

  SoftsModel<float> model(model_config_from_json(manifest.at("config")));
  const json& listed = manifest.at("params");
  auto params = model.parameters();
  if (!listed.is_array() || listed.size() != params.size()) {
    corrupt(source, "manifest lists " + std::to_string(listed.size()) + " parameters, config implies " +
                        std::to_string(params.size()));
  }
  std::size_t floats = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& entry = listed[k];
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    bool same = entry.at("name").get<std::string>() == params[k].name &&
                shape.size() == params[k].tensor->rank();
    for (std::size_t i = 0; same && i < shape.size(); ++i) same = shape[i] == params[k].tensor->extent(i);
    if (!same) corrupt(source, "parameter " + std::to_string(k) + " does not match the config");
    floats += params[k].tensor->size();
  }

  const std::string_view payload = bytes.substr(newline + 1);
  if (payload.size() != 4 * floats + 8) {
    corrupt(source, "payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                        std::to_string(4 * floats + 8));
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  const std::uint64_t stored = get_le(raw + 4 * floats, 8);
  const std::uint64_t actual =
      crc64(std::as_bytes(std::span(payload.data(), 4 * floats)));
  if (stored != actual) corrupt(source, "CRC mismatch (payload is corrupted)");

  std::size_t offset = 0;
  for (auto& p : params) {
    for (float& v : p.tensor->data()) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(raw + offset, 4)));
      offset += 4;
    }
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace

LoadedCheckpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  try {
    return decode_unchecked(bytes, source);
  } catch (const nlohmann::json::exception& e) {
    corrupt(source, std::string("malformed manifest: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::io, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io, "cannot move output into place at " + path.string());
  }
}

void save_checkpoint(const std::filesystem::path& path, SoftsModel<float>& model,
                     const CheckpointMeta& meta) {
  write_file_atomic(path, encode_checkpoint(model, meta));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace softs
