#include <doctest.h>

#include <filesystem>

#include "tag/artifact.hpp"
#include "tag/config.hpp"

using namespace tag;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({"taskset": {"n": 4}})";

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tag_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("minimal config round-trips") {
  const auto c = parse_config_text(kMinimal);
  CHECK(c.bench.data.n_tasks == 4);
  CHECK(c.bench.data.clusters == std::vector<std::vector<TaskId>>{{0, 1}, {2, 3}});
  const auto again = parse_config_text(c.canonical());
  CHECK(again == c);
  CHECK(again.hash() == c.hash());
  CHECK(c.hash().size() == 64);
}

TEST_CASE("config validation names the field") {
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"selection": {"budget": 0}})"), doctest::Contains("selection.budget"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"trainer": {"eta": 0}})"), doctest::Contains("trainer.eta"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"trainer": {"eta": "fast"}})"), doctest::Contains("trainer.eta"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"trainer": {"lr": 0.1}})"), doctest::Contains("trainer.lr"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"extra": 1})"), doctest::Contains("unknown key extra"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"taskset": {"n": 6, "clusters": [[0, 1], [2, 3]]}})"),
                       doctest::Contains("taskset."), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"schedule": {"mode": "window", "start": 0.8, "end": 0.2}})"),
                       doctest::Contains("schedule"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"selection": {"latency_param_cap": 5}})"),
                       doctest::Contains("selection.latency_param_cap"), ValidationError);
}

TEST_CASE("config parse errors carry line and column") {
  CHECK_THROWS_WITH_AS(parse_config_text("{\n  \"taskset\": {\"n\": 4,}\n}"), doctest::Contains("line 2"),
                       ValidationError);
  CHECK_THROWS_AS(parse_config("/nonexistent/cfg.json"), ValidationError);
}

TEST_CASE("sha256 known answer") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("empty artifact has an empty manifest") {
  const auto dir = scratch("empty");
  const auto a = persist_artifact({}, dir, "h");
  CHECK(a.files.empty());
  CHECK(fs::exists(dir / kManifestName));
  CHECK(verify_artifact(dir).empty());
  CHECK(load_manifest(dir).files.empty());
}

TEST_CASE("tampering is detected") {
  const auto dir = scratch("tamper");
  persist_artifact({{"a.csv", "1,2\n"}, {"sub/b.json", "{}\n"}}, dir, "h");
  CHECK(verify_artifact(dir).empty());
  write_file(dir / "a.csv", "1,3\n");
  const auto problems = verify_artifact(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("a.csv") != std::string::npos);
  fs::remove(dir / "sub/b.json");
  CHECK(verify_artifact(dir).size() == 2);
}

TEST_CASE("a run without a manifest is partial") {
  const auto dir = scratch("partial");
  write_file(dir / "a.csv", "x\n");
  CHECK(verify_artifact(dir).size() == 1);
  CHECK_THROWS_AS(load_manifest(dir), RuntimeFailure);
}

TEST_CASE("identical inputs give identical hashes") {
  const auto d1 = scratch("same1");
  const auto d2 = scratch("same2");
  const auto a = persist_artifact({{"x.txt", "hello"}}, d1, "h");
  const auto b = persist_artifact({{"x.txt", "hello"}}, d2, "h");
  CHECK(a.files[0].sha256 == b.files[0].sha256);
  CHECK(read_file(d1 / kManifestName) == read_file(d2 / kManifestName));
}
