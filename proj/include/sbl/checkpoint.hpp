#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbl/errors.hpp"
#include "sbl/param.hpp"

namespace sbl {

// Checkpoint container:
//   "SBL1" | u64le manifest length | manifest (UTF-8 JSON) | float64le payloads
// The manifest lists (name, shape, offset) per array, offsets relative to the
// start of the payload section, plus a free-form "meta" object. Round trips
// are bit-exact.
namespace checkpoint {

namespace detail {

inline void put_u64le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t get_u64le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64le(std::ostream& os, const std::vector<double>& xs) {
  for (double x : xs) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64le(os, bits);
  }
}

inline void get_f64le(std::istream& is, std::vector<double>& xs) {
  for (double& x : xs) {
    uint64_t bits = get_u64le(is);
    std::memcpy(&x, &bits, 8);
  }
}

}  // namespace detail

struct Entry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct File {
  std::vector<Entry> entries;
  nlohmann::json meta;

  const Entry* find(const std::string& name) const {
    for (const Entry& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline void save(const std::string& path, const File& file) {
  nlohmann::json manifest;
  manifest["meta"] = file.meta;
  manifest["params"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const Entry& e : file.entries) {
    nlohmann::json p;
    p["name"] = e.name;
    p["shape"] = e.shape;
    p["offset"] = offset;
    manifest["params"].push_back(p);
    offset += 8 * e.data.size();
  }
  std::string mstr = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("SBL1", 4);
  detail::put_u64le(os, mstr.size());
  os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const Entry& e : file.entries) detail::put_f64le(os, e.data);
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline File load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SBL1", 4) != 0)
    throw IoError("bad checkpoint magic in " + path);
  uint64_t mlen = detail::get_u64le(is);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw IoError("truncated checkpoint manifest in " + path);
  nlohmann::json manifest = nlohmann::json::parse(mstr);

  File file;
  file.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& p : manifest.at("params")) {
    Entry e;
    e.name = p.at("name").get<std::string>();
    e.shape = p.at("shape").get<Shape>();
    e.data.resize(numel(e.shape));
    file.entries.push_back(std::move(e));
  }
  for (Entry& e : file.entries) {
    detail::get_f64le(is, e.data);
    if (!is) throw IoError("truncated checkpoint payload in " + path);
  }
  return file;
}

// Convenience: snapshot/restore a ParamStore.
inline void pack_params(File& file, const ParamStore& store) {
  for (const Param& p : store) file.entries.push_back(Entry{p.name, p.shape, p.value});
}

inline void unpack_params(const File& file, ParamStore& store) {
  for (Param& p : store) {
    const Entry* e = file.find(p.name);
    if (e == nullptr) throw ConfigError("checkpoint is missing parameter " + p.name);
    if (e->shape != p.shape)
      throw ConfigError("checkpoint shape mismatch for " + p.name + ": " + shape_str(e->shape) +
                        " vs " + shape_str(p.shape));
    p.value = e->data;
  }
}

}  // namespace checkpoint
}  // namespace sbl
