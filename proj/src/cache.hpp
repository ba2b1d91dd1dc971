#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include "json.hpp"

namespace mdd {

struct CacheError : std::runtime_error {
  explicit CacheError(const std::string& what) : std::runtime_error(what) {}
};

std::uint64_t fnv1a64(std::string_view bytes);

// Content-addressed artifact store. The key is (kind, canonical dump of
// the parameter object, seed), so a stale entry can never be returned
// for different parameters: they hash to a different file name. Each
// entry carries its own payload checksum; a mismatch throws CacheError.
// Writes go through a temp file plus rename, so a killed process leaves
// at most an orphaned temp file, never a truncated entry.
class ArtifactCache {
 public:
  explicit ArtifactCache(std::string root);

  const std::string& root() const { return root_; }
  std::string entry_path(const std::string& kind, const nlohmann::json& params,
                         std::uint64_t seed) const;

  // nullopt on miss; CacheError on a present-but-corrupt entry
  std::optional<std::string> load(const std::string& kind, const nlohmann::json& params,
                                  std::uint64_t seed) const;
  void store(const std::string& kind, const nlohmann::json& params, std::uint64_t seed,
             const std::string& payload) const;

 private:
  std::string root_;
};

} // namespace mdd
