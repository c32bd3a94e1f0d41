#pragma once

// Binary parameter container.
//
// Layout (all integers little-endian uint32, floats little-endian IEEE-754):
//   "PIDNET1"            7-byte magic
//   version              currently 1
//   parameter count
//   metadata length, metadata bytes (free-form "key = value" lines)
//   per parameter: name length, name bytes, ndim, extents..., raw floats

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pidcount/tensor.hpp"

namespace pidcount {

inline constexpr char kCheckpointMagic[] = "PIDNET1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws LoadError on a bad magic, unknown version or truncated stream.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pidcount
