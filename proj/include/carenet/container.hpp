#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/error.hpp"

namespace carenet {

/// Single-file named-array container:
///   "CRNS" | u16 version | u32 directory length | JSON directory | arrays
/// Arrays are 64-byte aligned, little-endian, each with a CRC32 recorded in
/// the directory next to its dtype, shape, absolute byte offset and length.
struct ArrayEntry {
  std::string name;
  std::string dtype;
  std::vector<std::size_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t crc32 = 0;
};

template <typename T>
struct DtypeName;
template <> struct DtypeName<float> { static constexpr const char* value = "f32"; };
template <> struct DtypeName<double> { static constexpr const char* value = "f64"; };
template <> struct DtypeName<std::int32_t> { static constexpr const char* value = "i32"; };
template <> struct DtypeName<std::int64_t> { static constexpr const char* value = "i64"; };
template <> struct DtypeName<std::uint8_t> { static constexpr const char* value = "u8"; };
template <> struct DtypeName<std::uint16_t> { static constexpr const char* value = "u16"; };

std::size_t dtype_size(const std::string& dtype);

inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kContainerAlignment = 64;

class Container {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  template <typename T>
  void put(const std::string& name, std::vector<std::size_t> shape, std::span<const T> values) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != values.size()) throw InvalidArgument("container array '" + name + "': shape/size mismatch");
    put_raw(name, DtypeName<T>::value, std::move(shape), values.data(), values.size_bytes());
  }

  template <typename T>
  std::vector<T> get(const std::string& name) const {
    const auto& [entry, bytes] = find(name);
    if (entry.dtype != DtypeName<T>::value) {
      throw FormatError("array '" + name + "' has dtype " + entry.dtype + ", expected " +
                        DtypeName<T>::value);
    }
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
  }

  bool contains(const std::string& name) const;
  const ArrayEntry& entry(const std::string& name) const { return find(name).first; }
  std::vector<std::string> names() const;

  /// Serialized bytes; entries get their offsets, lengths and checksums.
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;

  static Container parse(const std::string& bytes, const std::string& source = "container");
  static Container read(const std::filesystem::path& path);

 private:
  void put_raw(const std::string& name, const char* dtype, std::vector<std::size_t> shape,
               const void* data, std::size_t bytes);
  const std::pair<ArrayEntry, std::string>& find(const std::string& name) const;

  std::vector<std::pair<ArrayEntry, std::string>> arrays_;
};

}  // namespace carenet
