#include "magshift/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "magshift/errors.hpp"

namespace magshift {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const char byte = static_cast<char>((value >> (8 * i)) & 0xff);
    out.put(byte);
  }
}

template <class T>
T read_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int byte = in.get();
    if (byte < 0) throw IoError("checkpoint: unexpected end of file");
    value |= static_cast<T>(static_cast<std::uint8_t>(byte)) << (8 * i);
  }
  return value;
}

void write_f64(std::ostream& out, double v) {
  write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("checkpoint: tensor name too long: " + t.name);
    }
    if (ad::numel(t.shape) != t.values.size()) {
      throw ShapeError("checkpoint: shape/value mismatch for " + t.name);
    }
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    out.put(static_cast<char>(t.shape.size()));
    for (std::size_t d : t.shape)
      write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : t.values) write_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const int version = in.get();
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = read_le<std::uint16_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (!in) throw IoError("checkpoint: truncated name");
    const int rank = in.get();
    if (rank < 0) throw IoError("checkpoint: truncated rank");
    t.shape.resize(static_cast<std::size_t>(rank));
    for (auto& d : t.shape)
      d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
    t.values.resize(ad::numel(t.shape));
    for (auto& v : t.values) v = read_f64(in);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace magshift
