#include "oodkit/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "oodkit/errors.hpp"

namespace oodkit {

namespace {

constexpr char kMagic[5] = {'O', 'O', 'D', 'T', '1'};

template <typename T>
void append_le(std::vector<std::byte>& out, T value) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_le(const std::byte* p) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

template <typename T>
std::vector<std::byte> to_le_bytes(std::span<const T> values) {
  std::vector<std::byte> out;
  out.reserve(values.size() * sizeof(T));
  for (T v : values) append_le(out, v);
  return out;
}

template <typename T>
std::vector<T> from_le_bytes(std::span<const std::byte> bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_le<T>(bytes.data() + i * sizeof(T));
  return out;
}

}  // namespace

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  if (name == "i64") return DType::i64;
  throw FormatError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

void TensorArchive::add(Entry e) {
  if (index_.count(e.name)) throw ContractError("duplicate archive entry '" + e.name + "'");
  index_[e.name] = entries_.size();
  entries_.push_back(std::move(e));
}

template <typename T>
void TensorArchive::put(const std::string& name, const Tensor<T>& t) {
  add(Entry{name, dtype_of<T>(), t.shape(), to_le_bytes<T>(t.data())});
}

void TensorArchive::put_i64(const std::string& name, Shape shape, std::span<const std::int64_t> values) {
  if (numel(shape) != values.size()) throw ShapeError("put_i64: shape/value count mismatch for " + name);
  add(Entry{name, DType::i64, std::move(shape), to_le_bytes<std::int64_t>(values)});
}

bool TensorArchive::contains(const std::string& name) const { return index_.count(name) > 0; }

const TensorArchive::Entry& TensorArchive::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("archive has no entry '" + name + "'");
  return entries_[it->second];
}

template <typename T>
Tensor<T> TensorArchive::get(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != dtype_of<T>()) {
    throw FormatError("entry '" + name + "' has dtype " + std::string(to_string(e.dtype)) +
                      ", expected " + std::string(to_string(dtype_of<T>())));
  }
  return Tensor<T>(e.shape, from_le_bytes<T>(e.bytes));
}

std::vector<std::int64_t> TensorArchive::get_i64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::i64) throw FormatError("entry '" + name + "' is not i64");
  return from_le_bytes<std::int64_t>(e.bytes);
}

std::vector<std::byte> TensorArchive::serialize() const {
  nlohmann::json manifest;
  manifest["meta"] = meta_;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"dtype", to_string(e.dtype)},
                                   {"shape", e.shape},
                                   {"offset", offset},
                                   {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string text = manifest.dump();
  std::vector<std::byte> out;
  out.reserve(sizeof(kMagic) + 8 + text.size() + offset);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  append_le<std::uint64_t>(out, text.size());
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  for (const auto& e : entries_) out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  return out;
}

TensorArchive TensorArchive::deserialize(std::span<const std::byte> bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw BadMagicError(origin + ": not an OODT1 tensor archive");
  }
  if (bytes.size() < sizeof(kMagic) + 8) throw TruncatedError(origin + ": truncated header");
  const auto manifest_len = read_le<std::uint64_t>(bytes.data() + sizeof(kMagic));
  const std::size_t data_start = sizeof(kMagic) + 8 + manifest_len;
  if (manifest_len > bytes.size() || data_start > bytes.size()) {
    throw TruncatedError(origin + ": truncated manifest");
  }
  nlohmann::json manifest;
  try {
    const auto* text = reinterpret_cast<const char*>(bytes.data() + sizeof(kMagic) + 8);
    manifest = nlohmann::json::parse(text, text + manifest_len);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(origin + ": malformed manifest: " + ex.what());
  }

  TensorArchive archive;
  try {
    archive.meta_ = manifest.value("meta", nlohmann::json::object());
    const std::size_t payload = bytes.size() - data_start;
    for (const auto& t : manifest.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      if (nbytes != numel(e.shape) * dtype_size(e.dtype)) {
        throw CountMismatchError(origin + ": entry '" + e.name + "' byte count does not match shape " +
                                 to_string(e.shape));
      }
      if (offset > payload || nbytes > payload - offset) {
        throw TruncatedError(origin + ": entry '" + e.name + "' runs past end of file");
      }
      const auto* begin = bytes.data() + data_start + offset;
      e.bytes.assign(begin, begin + nbytes);
      archive.add(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(origin + ": malformed manifest: " + ex.what());
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return deserialize(bytes, path.string());
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("failed reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template void TensorArchive::put<float>(const std::string&, const Tensor<float>&);
template void TensorArchive::put<double>(const std::string&, const Tensor<double>&);
template Tensor<float> TensorArchive::get<float>(const std::string&) const;
template Tensor<double> TensorArchive::get<double>(const std::string&) const;

}  // namespace oodkit
