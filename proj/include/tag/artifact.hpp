#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tag {

inline constexpr const char* kToolVersion = "tag 0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

struct ManifestEntry {
  std::string path;  // relative to the artifact directory
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunArtifact {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::vector<ManifestEntry> files;
};

/// Writes every file, then the manifest. A directory without a manifest is a
/// partial run.
RunArtifact persist_artifact(const std::map<std::string, std::string>& files, const std::filesystem::path& out_dir,
                             const std::string& config_hash);

RunArtifact load_manifest(const std::filesystem::path& dir);

/// Empty when every listed file exists and matches its hash.
std::vector<std::string> verify_artifact(const std::filesystem::path& dir);

}  // namespace tag
