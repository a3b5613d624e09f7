// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Named-tensor archive.
//
// Layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "TMARCH01"
//   offset 8   8 bytes   uint64 manifest length N
//   offset 16  N bytes   UTF-8 JSON manifest
//   offset 16+N          blob: concatenated float32 values, little-endian
//
// The manifest is
//
//   {"format": "textmonkey-tensor-archive", "version": 1,
//    "tensors": [{"name": "...", "shape": [..], "dtype": "f32", "byte_offset": B}, ...]}
//
// `byte_offset` is relative to the start of the blob. Tensors are stored in
// manifest order with no padding, so entry i must start exactly where entry
// i-1 ends and the blob must end where the last entry ends. Loaders reject
// any other arrangement.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "textmonkey/error.hpp"
#include "textmonkey/numerics.hpp"

namespace textmonkey {

inline constexpr char kArchiveMagic[8] = {'T', 'M', 'A', 'R', 'C', 'H', '0', '1'};

/// Rounds every element to the nearest float32, the precision archives store.
inline Tensor round_to_f32(Tensor t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

class TensorArchive {
 public:
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const noexcept { return order_.size(); }
  const std::vector<std::string>& names() const noexcept { return order_; }

  /// Inserts or replaces. Insertion order is the on-disk order.
  void put(const std::string& name, Tensor t) {
    if (name.empty()) throw LoadError("tensor name must not be empty");
    if (t.empty()) throw LoadError("tensor '" + name + "' is empty");
    if (!contains(name)) order_.push_back(name);
    tensors_[name] = std::move(t);
  }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("missing tensor '" + name + "'");
    return it->second;
  }

  /// Like get(), and also checks the shape.
  const Tensor& get(const std::string& name, const Shape& expected) const {
    const Tensor& t = get(name);
    if (t.shape() != expected) {
      throw LoadError("tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                      shape_string(expected));
    }
    return t;
  }

  std::vector<char> serialize() const {
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : order_) {
      const Tensor& t = tensors_.at(name);
      entries.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}, {"byte_offset", offset}});
      offset += t.size() * sizeof(float);
    }
    const nlohmann::json manifest = {
        {"format", "textmonkey-tensor-archive"}, {"version", 1}, {"tensors", entries}};
    const std::string header = manifest.dump();

    std::vector<char> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
    out.reserve(16 + header.size() + offset);
    append_u64(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    for (const auto& name : order_) {
      for (double v : tensors_.at(name).data()) append_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
  }

  static TensorArchive deserialize(const std::vector<char>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0) {
      throw LoadError("not a tensor archive (bad magic)");
    }
    const std::uint64_t header_len = read_u64(bytes.data() + 8);
    if (header_len > bytes.size() - 16) throw LoadError("manifest length exceeds file size");
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed manifest: ") + e.what());
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
      throw LoadError("manifest has no tensor list");
    }

    const char* blob = bytes.data() + 16 + header_len;
    const std::uint64_t blob_len = bytes.size() - 16 - header_len;
    TensorArchive archive;
    std::uint64_t expected_offset = 0;
    for (const auto& entry : manifest["tensors"]) {
      std::string name;
      Shape shape;
      std::uint64_t offset = 0;
      try {
        name = entry.at("name").get<std::string>();
        shape = entry.at("shape").get<Shape>();
        offset = entry.at("byte_offset").get<std::uint64_t>();
        if (entry.at("dtype").get<std::string>() != "f32") throw LoadError("tensor '" + name + "' is not f32");
      } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed manifest entry: ") + e.what());
      }
      if (archive.contains(name)) throw LoadError("duplicate tensor '" + name + "'");
      if (offset != expected_offset) {
        throw LoadError("tensor '" + name + "' byte_offset " + std::to_string(offset) + " does not match expected " +
                        std::to_string(expected_offset));
      }
      for (std::size_t e : shape) {
        if (e == 0) throw LoadError("tensor '" + name + "' has a zero extent");
      }
      const std::uint64_t count = shape_volume(shape);
      if (shape.empty() || offset + count * sizeof(float) > blob_len) {
        throw LoadError("tensor '" + name + "' extends past the end of the blob");
      }
      std::vector<double> data(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        data[i] = static_cast<double>(std::bit_cast<float>(read_u32(blob + offset + i * sizeof(float))));
      }
      archive.put(name, Tensor(std::move(shape), std::move(data)));
      expected_offset = offset + count * sizeof(float);
    }
    if (expected_offset != blob_len) {
      throw LoadError("blob has " + std::to_string(blob_len - expected_offset) + " trailing bytes");
    }
    return archive;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  static void append_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void append_u64(std::vector<char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static std::uint32_t read_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  static std::uint64_t read_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }

  std::map<std::string, Tensor> tensors_;
  std::vector<std::string> order_;
};

}  // namespace textmonkey
