#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include <zlib.h>

#include "carenet/error.hpp"

namespace carenet::binio {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are written with native little-endian stores");

template <typename U>
void put(std::string& buf, U v) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.append(bytes, sizeof(U));
}

template <typename U>
U get(std::string_view buf, std::size_t offset) {
  if (offset + sizeof(U) > buf.size()) throw FormatError("unexpected end of file");
  U v;
  std::memcpy(&v, buf.data() + offset, sizeof(U));
  return v;
}

inline std::uint32_t crc32(const void* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32_z(::crc32_z(0L, Z_NULL, 0), static_cast<const Bytef*>(data), len));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

}  // namespace carenet::binio
