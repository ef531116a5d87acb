#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/autodiff.hpp"
#include "gptrans/errors.hpp"

// Checkpoint layout (single file):
//   8 bytes   magic "GPTCKPT1"
//   8 bytes   little-endian u64 manifest length in bytes
//   manifest  UTF-8 JSON array of {"name", "shape", "dtype"} in block order
//   blocks    raw little-endian values, one block per manifest entry

namespace gptrans {

inline constexpr char kCheckpointMagic[8] = {'G', 'P', 'T', 'C', 'K', 'P', 'T', '1'};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::string dtype;           // "f32" or "f64"
  std::vector<double> values;  // widened on read
};

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, std::size_t bytes) {
  for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const unsigned char* p, std::size_t bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <class T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

}  // namespace detail

/// A named group of tensors to write; `prefix` is prepended to every name.
template <class T>
struct CheckpointSection {
  std::string prefix;
  std::vector<std::pair<std::string, const Tensor<T>*>> tensors;
};

template <class T>
CheckpointSection<T> section_of(const ParamStore<T>& store, std::string prefix = "") {
  CheckpointSection<T> s{std::move(prefix), {}};
  for (std::size_t i = 0; i < store.size(); ++i) s.tensors.emplace_back(store[i].name, &store[i].value);
  return s;
}

template <class T>
std::string encode_checkpoint(const std::vector<CheckpointSection<T>>& sections) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& sec : sections)
    for (const auto& [name, t] : sec.tensors)
      manifest.push_back({{"name", sec.prefix + name}, {"shape", t->shape()}, {"dtype", detail::dtype_name<T>()}});
  const std::string mtext = manifest.dump();
  std::string out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le(out, mtext.size(), 8);
  out += mtext;
  for (const auto& sec : sections)
    for (const auto& [name, t] : sec.tensors)
      for (T v : t->data()) {
        if constexpr (std::is_same_v<T, float>)
          detail::put_le(out, std::bit_cast<std::uint32_t>(v), 4);
        else
          detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
      }
  return out;
}

template <class T>
void save_checkpoint(const std::string& path, const std::vector<CheckpointSection<T>>& sections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  const std::string bytes = encode_checkpoint(sections);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes, const std::string& path = "<memory>") {
  auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, kCheckpointMagic, 8) != 0) throw IoError(path, "not a checkpoint file");
  const std::uint64_t mlen = detail::get_le(p + 8, 8);
  if (16 + mlen > bytes.size()) throw IoError(path, "truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("bad manifest: ") + e.what());
  }
  std::vector<CheckpointEntry> out;
  std::size_t off = 16 + mlen;
  for (const auto& m : manifest) {
    CheckpointEntry e;
    e.name = m.at("name").get<std::string>();
    e.shape = m.at("shape").get<Shape>();
    e.dtype = m.at("dtype").get<std::string>();
    const std::size_t width = e.dtype == "f32" ? 4 : (e.dtype == "f64" ? 8 : 0);
    if (width == 0) throw IoError(path, "unknown dtype " + e.dtype);
    const std::size_t n = numel(e.shape);
    if (off + n * width > bytes.size()) throw IoError(path, "truncated block for " + e.name);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, off += width) {
      const std::uint64_t raw = detail::get_le(p + off, width);
      e.values[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)))
                               : std::bit_cast<double>(raw);
    }
    out.push_back(std::move(e));
  }
  if (off != bytes.size()) throw IoError(path, "trailing bytes after last block");
  return out;
}

inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

/// Copies entries named `prefix + param.name` into `store`; every parameter must be present.
template <class T>
void load_into(ParamStore<T>& store, const std::vector<CheckpointEntry>& entries, const std::string& prefix = "") {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param<T>& p = store[i];
    const CheckpointEntry* hit = nullptr;
    for (const auto& e : entries)
      if (e.name == prefix + p.name) {
        hit = &e;
        break;
      }
    if (!hit) throw ConfigError("checkpoint has no tensor named " + prefix + p.name);
    if (hit->shape != p.value.shape())
      throw ShapeError("checkpoint tensor " + hit->name + " has shape " + shape_str(hit->shape) + ", model expects " +
                       shape_str(p.value.shape()));
    for (std::size_t k = 0; k < hit->values.size(); ++k) p.value[k] = static_cast<T>(hit->values[k]);
  }
}

inline bool has_prefix(const std::vector<CheckpointEntry>& entries, const std::string& prefix) {
  for (const auto& e : entries)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace gptrans
