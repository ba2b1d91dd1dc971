#include "cache.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mdd {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace

ArtifactCache::ArtifactCache(std::string root) : root_(std::move(root)) {}

std::string ArtifactCache::entry_path(const std::string& kind, const nlohmann::json& params,
                                      std::uint64_t seed) const {
  // nlohmann objects keep keys sorted, so dump() is canonical
  std::uint64_t h = fnv1a64(params.dump());
  return root_ + "/" + kind + "-" + hex16(h) + "-s" + std::to_string(seed) + ".art";
}

std::optional<std::string> ArtifactCache::load(const std::string& kind,
                                               const nlohmann::json& params,
                                               std::uint64_t seed) const {
  std::string path = entry_path(kind, params, seed);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;

  std::string magic, file_kind, param_hash;
  std::uint64_t file_seed = 0;
  std::size_t payload_size = 0;
  std::string payload_sum;
  std::string header;
  if (!std::getline(in, header)) throw CacheError("cache: truncated header in " + path);
  std::istringstream hs(header);
  if (!(hs >> magic >> file_kind >> param_hash >> file_seed >> payload_size >> payload_sum) ||
      magic != "mddsim-art1")
    throw CacheError("cache: malformed header in " + path);
  if (file_kind != kind || file_seed != seed ||
      param_hash != hex16(fnv1a64(params.dump())))
    throw CacheError("cache: key mismatch in " + path);

  std::string payload(payload_size, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload_size));
  if (static_cast<std::size_t>(in.gcount()) != payload_size)
    throw CacheError("cache: truncated payload in " + path);
  if (hex16(fnv1a64(payload)) != payload_sum)
    throw CacheError("cache: checksum mismatch in " + path);
  return payload;
}

void ArtifactCache::store(const std::string& kind, const nlohmann::json& params,
                          std::uint64_t seed, const std::string& payload) const {
  fs::create_directories(root_);
  std::string path = entry_path(kind, params, seed);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError("cache: cannot write " + tmp);
    out << "mddsim-art1 " << kind << " " << hex16(fnv1a64(params.dump())) << " " << seed
        << " " << payload.size() << " " << hex16(fnv1a64(payload)) << "\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CacheError("cache: short write to " + tmp);
  }
  fs::rename(tmp, path);  // atomic on one filesystem
}

} // namespace mdd
