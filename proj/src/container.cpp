#include "carenet/container.hpp"

#include <algorithm>
#include <cstring>

#include "binio.hpp"

namespace carenet {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'N', 'S'};
constexpr std::size_t kPrefix = 4 + 2 + 4;

std::uint64_t align_up(std::uint64_t v) {
  return (v + kContainerAlignment - 1) / kContainerAlignment * kContainerAlignment;
}

nlohmann::json directory_json(const std::vector<ArrayEntry>& entries, const nlohmann::json& meta) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& e : entries) {
    arrays.push_back({{"name", e.name},
                      {"dtype", e.dtype},
                      {"shape", e.shape},
                      {"offset", e.offset},
                      {"length", e.length},
                      {"crc32", e.crc32}});
  }
  return {{"arrays", arrays}, {"metadata", meta}};
}

}  // namespace

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32" || dtype == "i32") return 4;
  if (dtype == "f64" || dtype == "i64") return 8;
  if (dtype == "u16") return 2;
  if (dtype == "u8") return 1;
  throw FormatError("unknown dtype '" + dtype + "'");
}

void Container::put_raw(const std::string& name, const char* dtype, std::vector<std::size_t> shape,
                        const void* data, std::size_t bytes) {
  if (name.empty()) throw InvalidArgument("container array needs a name");
  ArrayEntry e;
  e.name = name;
  e.dtype = dtype;
  e.shape = std::move(shape);
  e.length = bytes;
  std::string blob(static_cast<const char*>(data), bytes);
  e.crc32 = binio::crc32(blob.data(), blob.size());
  auto it = std::find_if(arrays_.begin(), arrays_.end(),
                         [&](const auto& a) { return a.first.name == name; });
  if (it != arrays_.end()) {
    *it = {std::move(e), std::move(blob)};
  } else {
    arrays_.emplace_back(std::move(e), std::move(blob));
  }
}

const std::pair<ArrayEntry, std::string>& Container::find(const std::string& name) const {
  auto it = std::find_if(arrays_.begin(), arrays_.end(),
                         [&](const auto& a) { return a.first.name == name; });
  if (it == arrays_.end()) throw FormatError("container has no array named '" + name + "'");
  return *it;
}

bool Container::contains(const std::string& name) const {
  return std::any_of(arrays_.begin(), arrays_.end(),
                     [&](const auto& a) { return a.first.name == name; });
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& a : arrays_) out.push_back(a.first.name);
  return out;
}

std::string Container::serialize() const {
  std::vector<ArrayEntry> entries;
  for (const auto& a : arrays_) entries.push_back(a.first);

  // Offsets are absolute; iterate until directory length and offsets agree.
  std::string dir;
  for (int iter = 0; iter < 16; ++iter) {
    std::uint64_t pos = align_up(kPrefix + dir.size());
    for (auto& e : entries) {
      e.offset = pos;
      pos = align_up(pos + e.length);
    }
    std::string next = directory_json(entries, metadata).dump();
    if (next == dir) break;
    dir = std::move(next);
  }

  std::string buf(kMagic, 4);
  binio::put<std::uint16_t>(buf, kContainerVersion);
  binio::put<std::uint32_t>(buf, static_cast<std::uint32_t>(dir.size()));
  buf += dir;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    buf.resize(entries[i].offset, '\0');
    buf += arrays_[i].second;
  }
  return buf;
}

void Container::write(const std::filesystem::path& path) const {
  binio::write_file(path, serialize());
}

Container Container::parse(const std::string& bytes, const std::string& source) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(source + ": not a CRNS container (bad magic)");
  }
  const auto version = binio::get<std::uint16_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw FormatError(source + ": unsupported container version " + std::to_string(version));
  }
  const auto dir_len = binio::get<std::uint32_t>(bytes, 6);
  if (kPrefix + dir_len > bytes.size()) throw FormatError(source + ": directory exceeds file size");

  nlohmann::json dir;
  try {
    dir = nlohmann::json::parse(bytes.substr(kPrefix, dir_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": directory is not valid JSON: " + e.what());
  }

  Container c;
  std::vector<ArrayEntry> entries;
  try {
    c.metadata = dir.value("metadata", nlohmann::json::object());
    for (const auto& a : dir.at("arrays")) {
      ArrayEntry e;
      e.name = a.at("name").get<std::string>();
      e.dtype = a.at("dtype").get<std::string>();
      e.shape = a.at("shape").get<std::vector<std::size_t>>();
      e.offset = a.at("offset").get<std::uint64_t>();
      e.length = a.at("length").get<std::uint64_t>();
      e.crc32 = a.at("crc32").get<std::uint32_t>();
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": malformed directory entry: " + e.what());
  }

  const std::uint64_t data_start = kPrefix + dir_len;
  for (const auto& e : entries) {
    std::uint64_t n = 1;
    for (auto d : e.shape) n *= d;
    if (n * dtype_size(e.dtype) != e.length) {
      throw FormatError(source + ": array '" + e.name + "' shape disagrees with its byte length");
    }
    if (e.offset < data_start || e.offset + e.length > bytes.size()) {
      throw FormatError(source + ": array '" + e.name + "' lies outside the data region");
    }
  }
  std::vector<const ArrayEntry*> sorted;
  for (const auto& e : entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const ArrayEntry* a, const ArrayEntry* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->offset + sorted[i - 1]->length > sorted[i]->offset) {
      throw FormatError(source + ": arrays '" + sorted[i - 1]->name + "' and '" + sorted[i]->name +
                        "' overlap");
    }
  }
  for (auto& e : entries) {
    std::string blob = bytes.substr(e.offset, e.length);
    if (binio::crc32(blob.data(), blob.size()) != e.crc32) {
      throw FormatError(source + ": checksum mismatch in array '" + e.name + "'");
    }
    if (c.contains(e.name)) throw FormatError(source + ": duplicate array '" + e.name + "'");
    c.arrays_.emplace_back(std::move(e), std::move(blob));
  }
  return c;
}

Container Container::read(const std::filesystem::path& path) {
  return parse(binio::read_file(path), path.string());
}

}  // namespace carenet
