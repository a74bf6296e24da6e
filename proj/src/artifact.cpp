#include "tag/artifact.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "tag/errors.hpp"

namespace tag {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw RuntimeFailure("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw RuntimeFailure("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

RunArtifact persist_artifact(const std::map<std::string, std::string>& files, const std::filesystem::path& out_dir,
                             const std::string& config_hash) {
  RunArtifact a;
  a.config_hash = config_hash;
  for (const auto& [name, content] : files) {
    if (name == kManifestName) throw ValidationError("artifact file name collides with the manifest");
    write_file(out_dir / name, content);
    a.files.push_back({name, sha256_hex(content), content.size()});
  }
  nlohmann::json j;
  j["config_hash"] = a.config_hash;
  j["tool_version"] = a.tool_version;
  j["files"] = nlohmann::json::array();
  for (const auto& f : a.files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  write_file(out_dir / kManifestName, j.dump(2) + "\n");
  return a;
}

RunArtifact load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  if (!std::filesystem::exists(path)) throw RuntimeFailure("no manifest in " + dir.string() + " (partial run?)");
  const auto j = nlohmann::json::parse(read_file(path));
  RunArtifact a;
  a.config_hash = j.at("config_hash").get<std::string>();
  a.tool_version = j.at("tool_version").get<std::string>();
  for (const auto& f : j.at("files"))
    a.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(), f.at("bytes").get<std::size_t>()});
  return a;
}

std::vector<std::string> verify_artifact(const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  RunArtifact a;
  try {
    a = load_manifest(dir);
  } catch (const std::exception& e) {
    return {e.what()};
  }
  for (const auto& f : a.files) {
    const auto path = dir / f.path;
    if (!std::filesystem::exists(path)) {
      problems.push_back("missing " + path.string());
      continue;
    }
    if (sha256_hex(read_file(path)) != f.sha256) problems.push_back("hash mismatch for " + path.string());
  }
  return problems;
}

}  // namespace tag
