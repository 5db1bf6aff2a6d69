#include "oodkit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include <json.hpp>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"

namespace oodkit {

namespace {

constexpr char kMagic[5] = {'O', 'O', 'D', 'D', '1'};

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(const std::byte* p) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

}  // namespace

std::span<const float> LabeledImageSet::image(std::size_t i) const {
  if (i >= size()) throw ContractError("image index " + std::to_string(i) + " out of range");
  return std::span<const float>(pixels).subspan(i * image_len(), image_len());
}

Standardization channel_statistics(const LabeledImageSet& set) {
  if (set.size() == 0) throw InsufficientSamplesError("channel statistics of an empty dataset");
  const std::size_t plane = set.height * set.width;
  Standardization s;
  for (std::size_t c = 0; c < set.channels; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (float v : set.image(i).subspan(c * plane, plane)) {
        sum += v;
        sq += static_cast<double>(v) * v;
      }
    }
    const double n = static_cast<double>(set.size() * plane);
    const double mean = sum / n, var = std::max(0.0, sq / n - mean * mean);
    s.mean.push_back(mean);
    s.std.push_back(var > 0 ? std::sqrt(var) : 1.0);
  }
  return s;
}

void LabeledImageSet::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw CountMismatchError("dataset has a zero image dimension");
  if (pixels.size() != labels.size() * image_len()) {
    throw CountMismatchError("dataset holds " + std::to_string(pixels.size()) + " pixels for " +
                             std::to_string(labels.size()) + " images of " +
                             std::to_string(image_len()));
  }
  for (auto l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes()) {
      throw LabelOverflowError("label " + std::to_string(l) + " outside declared class count " +
                               std::to_string(num_classes()));
    }
  }
  for (float p : pixels) {
    if (!(p >= 0.0f && p <= 1.0f)) throw FormatError("pixel value outside [0, 1]");
  }
  if (standardization) {
    const auto& s = *standardization;
    if (s.mean.size() != channels || s.std.size() != channels) {
      throw CountMismatchError("standardization needs one mean/std per channel");
    }
    for (double v : s.std) {
      if (!(v > 0)) throw FormatError("standardization std must be positive");
    }
  }
}

LabeledImageSet LabeledImageSet::subset(std::span<const std::size_t> indices) const {
  LabeledImageSet out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.class_names = class_names;
  out.provenance = provenance;
  out.standardization = standardization;
  out.pixels.reserve(indices.size() * image_len());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> LabeledImageSet::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (auto l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

template <typename T>
Tensor<T> LabeledImageSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("empty batch");
  std::vector<T> out;
  out.reserve(indices.size() * image_len());
  const std::size_t plane = height * width;
  for (auto i : indices) {
    auto img = image(i);
    for (std::size_t k = 0; k < img.size(); ++k) {
      double v = img[k];
      if (standardization) {
        const std::size_t c = k / plane;
        v = (v - standardization->mean[c]) / standardization->std[c];
      }
      out.push_back(static_cast<T>(v));
    }
  }
  return Tensor<T>({indices.size(), channels, height, width}, std::move(out));
}

template Tensor<float> LabeledImageSet::batch<float>(std::span<const std::size_t>) const;
template Tensor<double> LabeledImageSet::batch<double>(std::span<const std::size_t>) const;

std::vector<std::byte> serialize_dataset(const LabeledImageSet& set) {
  set.validate();
  nlohmann::json m;
  m["version"] = 1;
  m["count"] = set.size();
  m["channels"] = set.channels;
  m["height"] = set.height;
  m["width"] = set.width;
  m["num_classes"] = set.num_classes();
  m["class_names"] = set.class_names;
  m["provenance"] = set.provenance;
  m["pixel_dtype"] = "f32";
  m["label_dtype"] = "i64";
  if (set.standardization) {
    m["standardization"] = {{"mean", set.standardization->mean}, {"std", set.standardization->std}};
  }
  const std::string text = m.dump();
  std::vector<std::byte> out;
  out.reserve(13 + text.size() + set.pixels.size() * 4 + set.labels.size() * 8);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint64_t>(out, text.size());
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  for (float p : set.pixels) put_le(out, p);
  for (auto l : set.labels) put_le<std::int64_t>(out, l);
  return out;
}

void save_dataset(const std::filesystem::path& path, const LabeledImageSet& set) {
  write_file(path, serialize_dataset(set));
}

LabeledImageSet parse_dataset(std::span<const std::byte> bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw BadMagicError(origin + ": not an OODD1 dataset");
  }
  if (bytes.size() < sizeof(kMagic) + 8) throw TruncatedError(origin + ": truncated header");
  const auto len = get_le<std::uint64_t>(bytes.data() + sizeof(kMagic));
  const std::size_t body = sizeof(kMagic) + 8;
  if (len > bytes.size() - body) throw TruncatedError(origin + ": truncated manifest");

  LabeledImageSet set;
  std::size_t count = 0;
  std::string pixel_dtype;
  try {
    const auto* text = reinterpret_cast<const char*>(bytes.data() + body);
    const auto m = nlohmann::json::parse(text, text + len);
    count = m.at("count").get<std::size_t>();
    set.channels = m.at("channels").get<std::size_t>();
    set.height = m.at("height").get<std::size_t>();
    set.width = m.at("width").get<std::size_t>();
    set.class_names = m.at("class_names").get<std::vector<std::string>>();
    set.provenance = m.value("provenance", "");
    pixel_dtype = m.value("pixel_dtype", "f32");
    if (m.at("num_classes").get<std::size_t>() != set.class_names.size()) {
      throw CountMismatchError(origin + ": num_classes disagrees with class_names");
    }
    if (m.contains("standardization")) {
      Standardization s;
      s.mean = m["standardization"].at("mean").get<std::vector<double>>();
      s.std = m["standardization"].at("std").get<std::vector<double>>();
      set.standardization = s;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(origin + ": malformed manifest: " + ex.what());
  }
  if (pixel_dtype != "f32" && pixel_dtype != "u8") {
    throw FormatError(origin + ": unsupported pixel_dtype '" + pixel_dtype + "'");
  }
  const std::size_t psize = pixel_dtype == "f32" ? 4 : 1;
  const std::size_t n_pixels = count * set.channels * set.height * set.width;
  const std::size_t expected = n_pixels * psize + count * 8;
  const std::size_t available = bytes.size() - body - len;
  if (available < expected) {
    throw TruncatedError(origin + ": expected " + std::to_string(expected) + " payload bytes, found " +
                         std::to_string(available));
  }
  if (available > expected) {
    throw CountMismatchError(origin + ": " + std::to_string(available - expected) +
                             " trailing bytes after declared payload");
  }
  const std::byte* p = bytes.data() + body + len;
  set.pixels.resize(n_pixels);
  for (std::size_t i = 0; i < n_pixels; ++i) {
    set.pixels[i] = psize == 4 ? get_le<float>(p + 4 * i)
                               : static_cast<float>(std::to_integer<unsigned>(p[i])) / 255.0f;
  }
  p += n_pixels * psize;
  set.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) set.labels[i] = get_le<std::int64_t>(p + 8 * i);
  set.validate();
  return set;
}

LabeledImageSet load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_dataset(bytes, path.string());
}

LabeledImageSet import_raw_u8(const std::filesystem::path& pixels, const std::filesystem::path& labels,
                              std::size_t channels, std::size_t height, std::size_t width,
                              std::vector<std::string> class_names) {
  const auto px = read_file(pixels);
  const auto lb = read_file(labels);
  const std::size_t len = channels * height * width;
  if (len == 0 || px.size() % len != 0) {
    throw CountMismatchError(pixels.string() + ": size is not a multiple of one image");
  }
  const std::size_t n = px.size() / len;
  if (lb.size() != n) {
    throw CountMismatchError(labels.string() + ": " + std::to_string(lb.size()) + " labels for " +
                             std::to_string(n) + " images");
  }
  LabeledImageSet set;
  set.channels = channels;
  set.height = height;
  set.width = width;
  set.class_names = std::move(class_names);
  set.provenance = "import:" + pixels.filename().string();
  set.pixels.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    set.pixels[i] = static_cast<float>(std::to_integer<unsigned>(px[i])) / 255.0f;
  }
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) set.labels[i] = std::to_integer<std::int64_t>(lb[i]);
  set.validate();
  return set;
}

DatasetSplit split(const LabeledImageSet& set, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  std::vector<std::vector<std::size_t>> by_class(set.num_classes());
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, val, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n = members.size();
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(f.train * n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
    train.insert(train.end(), members.begin(), members.begin() + n_train);
    val.insert(val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    test.insert(test.end(), members.begin() + n_train + n_val, members.end());
  }
  // Keep original relative order inside each split.
  for (auto* v : {&train, &val, &test}) std::sort(v->begin(), v->end());
  return {set.subset(train), set.subset(val), set.subset(test)};
}

HoldoutResult holdout_classes(const LabeledImageSet& set, std::span<const std::size_t> held) {
  if (held.empty()) throw ConfigError("holdout: no classes to hold out");
  std::vector<bool> is_held(set.num_classes(), false);
  for (auto c : held) {
    if (c >= set.num_classes()) throw ConfigError("holdout: class " + std::to_string(c) + " does not exist");
    is_held[c] = true;
  }
  const auto n_held = static_cast<std::size_t>(std::count(is_held.begin(), is_held.end(), true));
  if (n_held == set.num_classes()) throw ConfigError("holdout: cannot hold out every class");

  std::vector<std::int64_t> remap(set.num_classes(), -1);
  std::vector<std::string> id_names;
  for (std::size_t c = 0; c < set.num_classes(); ++c) {
    if (!is_held[c]) {
      remap[c] = static_cast<std::int64_t>(id_names.size());
      id_names.push_back(set.class_names[c]);
    }
  }
  std::vector<std::size_t> id_idx, ood_idx;
  for (std::size_t i = 0; i < set.size(); ++i) {
    (is_held[set.labels[i]] ? ood_idx : id_idx).push_back(i);
  }
  HoldoutResult out{set.subset(id_idx), set.subset(ood_idx)};
  for (auto& l : out.id.labels) l = remap[l];
  out.id.class_names = std::move(id_names);
  out.id.provenance = set.provenance + "/id";
  out.ood.provenance = set.provenance + "/held-out";
  return out;
}

}  // namespace oodkit
