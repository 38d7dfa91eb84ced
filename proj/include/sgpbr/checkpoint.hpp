#pragma once

// Fit checkpoints (scene text plus parameter blocks, JSON) and file
// manifests (FNV-1a 64-bit content hashes).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sgpbr/fields.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/scene_io.hpp"

namespace sgpbr {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// file name -> content hash, for files in one directory.
using Manifest = std::map<std::string, std::string>;

inline std::string serialize_manifest(const Manifest& m) {
  std::ostringstream os;
  for (const auto& [name, hash] : m) os << "fnv1a64:" << hash << "  " << name << '\n';
  return os.str();
}

inline Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::istringstream is{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    const std::size_t sep = line.find("  ");
    if (line.rfind("fnv1a64:", 0) != 0 || sep != 24) {
      throw ParseError(number, "malformed manifest entry");
    }
    m[line.substr(sep + 2)] = line.substr(8, 16);
  }
  return m;
}

/// Hashes `files` (names relative to `dir`) and writes dir/manifest.txt.
inline Manifest write_manifest(const std::filesystem::path& dir,
                               const std::vector<std::string>& files) {
  Manifest m;
  for (const std::string& f : files) m[f] = hash_hex(fnv1a64(read_file((dir / f).string())));
  write_file((dir / "manifest.txt").string(), serialize_manifest(m));
  return m;
}

/// Hash recorded for `file` in the manifest next to it, or nullopt when the
/// directory has no manifest or the manifest does not list the file.
inline std::optional<std::string> manifest_hash_for(const std::filesystem::path& file) {
  const std::filesystem::path manifest = file.parent_path() / "manifest.txt";
  if (!std::filesystem::exists(manifest)) return std::nullopt;
  const Manifest m = parse_manifest(read_file(manifest.string()));
  const auto it = m.find(file.filename().string());
  if (it == m.end()) return std::nullopt;
  return it->second;
}

struct Checkpoint {
  /// Scene file the fit started from (geometry, cameras, render settings).
  std::string scene_text;
  /// Fitted blocks; light amplitudes already include any energy rescale.
  ParameterStore params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format"] = "sgpbr-checkpoint";
  j["version"] = 1;
  j["scene"] = c.scene_text;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const ParameterBlock& b : c.params.blocks()) {
    blocks.push_back({{"name", b.name}, {"values", b.values}});
  }
  j["blocks"] = blocks;
  return j.dump(1) + "\n";
}

inline Checkpoint parse_checkpoint(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("format") != "sgpbr-checkpoint" || j.at("version") != 1) {
      throw InputError("checkpoint: unsupported format or version");
    }
    Checkpoint c;
    c.scene_text = j.at("scene").get<std::string>();
    for (const auto& b : j.at("blocks")) {
      c.params.add(b.at("name").get<std::string>(), b.at("values").get<std::vector<double>>());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

/// The scene of a checkpoint with its fitted light and materials applied.
inline BuiltScene restore_checkpoint(const Checkpoint& c,
                                     const std::filesystem::path& base = {}) {
  BuiltScene built = build_scene(parse_scene(c.scene_text), base);
  if (c.params.contains(kLightAxisBlock)) built.scene.light = read_light(c.params);
  for (std::size_t i = 0; i < built.scene.materials.size(); ++i) {
    const std::string name = material_block_name(i);
    if (c.params.contains(name)) {
      built.scene.materials[i].set_parameters(c.params.block(name).values);
    }
  }
  return built;
}

}  // namespace sgpbr
