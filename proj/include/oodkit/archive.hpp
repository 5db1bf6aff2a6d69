#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/tensor.hpp"

namespace oodkit {

enum class DType { f32, f64, i64 };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<std::int64_t>() { return DType::i64; }

/// Named-tensor container backing checkpoints, embeddings and statistics.
///
/// On disk: the 5-byte magic "OODT1", a little-endian u64 manifest length,
/// the manifest as JSON ({"meta": {...}, "tensors": [{"name", "dtype",
/// "shape", "offset", "nbytes"}]}), then the raw little-endian buffers.
/// Offsets are relative to the first byte after the manifest. Entries keep
/// insertion order, so identical content always serializes identically.
class TensorArchive {
 public:
  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    std::vector<std::byte> bytes;  // little-endian
  };

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t);
  void put_i64(const std::string& name, Shape shape, std::span<const std::int64_t> values);

  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  // Throws FormatError when the entry is missing or has another dtype.
  template <typename T>
  Tensor<T> get(const std::string& name) const;
  std::vector<std::int64_t> get_i64(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  std::vector<std::byte> serialize() const;
  static TensorArchive deserialize(std::span<const std::byte> bytes, const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  void add(Entry e);

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  nlohmann::json meta_ = nlohmann::json::object();
};

// Whole-file helpers shared by the binary formats.
std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace oodkit
