#include "pidcount/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pidcount/errors.hpp"

namespace pidcount {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw LoadError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::uint32_t limit) {
  const std::uint32_t n = get_u32(in);
  if (n > limit) throw LoadError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw LoadError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  out.write(kCheckpointMagic, kMagicLength);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(checkpoint.params.size()));
  put_string(out, checkpoint.metadata);
  for (const auto& [name, tensor] : checkpoint.params) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (int d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw LoadError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[kMagicLength];
  if (!in.read(magic, kMagicLength) || std::memcmp(magic, kCheckpointMagic, kMagicLength) != 0) {
    throw LoadError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(in);
  Checkpoint ck;
  ck.metadata = get_string(in, 1u << 20);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, 4096);
    const std::uint32_t ndim = get_u32(in);
    if (ndim > 8) throw LoadError("checkpoint tensor '" + name + "' has too many dimensions");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<int>(get_u32(in)));
      numel *= static_cast<std::size_t>(shape.back());
    }
    if (numel > (1u << 30)) throw LoadError("checkpoint tensor '" + name + "' is too large");
    std::vector<float> data(numel);
    for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
    ck.params.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace pidcount
