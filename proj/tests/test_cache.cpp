#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "cache.hpp"

using namespace mdd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
  fs::path dir;
  TempRoot() : dir(fs::temp_directory_path() / "mddsim-cache-test") {
    fs::remove_all(dir);
  }
  ~TempRoot() { fs::remove_all(dir); }
};

} // namespace

TEST_SUITE("cache") {

TEST_CASE("store/load round-trips bytes") {
  TempRoot tmp;
  ArtifactCache cache(tmp.dir.string());
  json key = {{"n", 7}, {"trap_Hz", {1.0, 2.0, 3.0}}};
  std::string payload = "line one\nline two\n\x01\x02 binary-ish\n";

  CHECK(!cache.load("crystal", key, 5).has_value());
  cache.store("crystal", key, 5, payload);
  auto hit = cache.load("crystal", key, 5);
  REQUIRE(hit.has_value());
  CHECK(*hit == payload);

  // identical rewrite is allowed and idempotent
  cache.store("crystal", key, 5, payload);
  CHECK(*cache.load("crystal", key, 5) == payload);
}

TEST_CASE("keys separate by kind, params and seed") {
  TempRoot tmp;
  ArtifactCache cache(tmp.dir.string());
  json a = {{"n", 7}};
  json b = {{"n", 8}};
  cache.store("crystal", a, 1, "A");
  CHECK(!cache.load("crystal", b, 1).has_value());
  CHECK(!cache.load("crystal", a, 2).has_value());
  CHECK(!cache.load("fieldmap", a, 1).has_value());
  CHECK(cache.entry_path("crystal", a, 1) != cache.entry_path("crystal", b, 1));
  CHECK(cache.entry_path("crystal", a, 1) != cache.entry_path("crystal", a, 2));
}

TEST_CASE("corrupt payload is detected, not returned") {
  TempRoot tmp;
  ArtifactCache cache(tmp.dir.string());
  json key = {{"n", 3}};
  cache.store("crystal", key, 9, "0.5 0.25 0.125\n");
  std::string path = cache.entry_path("crystal", key, 9);

  // flip one payload byte in place
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0);
    std::string header;
    std::getline(f, header);
    auto pos = f.tellg();
    f.seekp(pos);
    f.put('9');
  }
  CHECK_THROWS_AS(cache.load("crystal", key, 9), CacheError);
}

TEST_CASE("truncated entry is detected") {
  TempRoot tmp;
  ArtifactCache cache(tmp.dir.string());
  json key = {{"n", 3}};
  cache.store("crystal", key, 9, std::string(256, 'x'));
  std::string path = cache.entry_path("crystal", key, 9);
  fs::resize_file(path, fs::file_size(path) - 100);
  CHECK_THROWS_AS(cache.load("crystal", key, 9), CacheError);
}

TEST_CASE("foreign file under the entry name is rejected") {
  TempRoot tmp;
  ArtifactCache cache(tmp.dir.string());
  json key = {{"n", 3}};
  fs::create_directories(tmp.dir);
  std::ofstream(cache.entry_path("crystal", key, 9)) << "not a cache entry\n";
  CHECK_THROWS_AS(cache.load("crystal", key, 9), CacheError);
}

} // TEST_SUITE
