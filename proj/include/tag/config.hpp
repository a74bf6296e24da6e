#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tag/bench.hpp"

namespace tag {

/// Experiment description loaded from JSON. Sections: taskset, trainer,
/// schedule, selection, seeds, output_dir. Unknown keys are rejected.
struct RunConfig {
  bench::BenchConfig bench;
  std::string output_dir = "out";

  void validate() const;
  /// Canonical form: every field spelled out, keys sorted.
  nlohmann::json to_json() const;
  std::string canonical() const { return to_json().dump(); }
  std::string hash() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.canonical() == b.canonical(); }
};

RunConfig config_from_json(const nlohmann::json& j);
/// Throws ValidationError with line/column on malformed JSON.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace tag
