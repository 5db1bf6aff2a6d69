#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodkit/tensor.hpp"

namespace oodkit {

struct Standardization {
  std::vector<double> mean;  // per channel
  std::vector<double> std;
  bool operator==(const Standardization&) const = default;
};

/// n images of C x H x W pixels in [0, 1] with dense integer labels.
struct LabeledImageSet {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // n x C x H x W
  std::vector<std::int64_t> labels;
  std::vector<std::string> class_names;
  std::string provenance;
  // Applied when images are batched, if present.
  std::optional<Standardization> standardization;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t image_len() const { return channels * height * width; }
  std::span<const float> image(std::size_t i) const;

  void validate() const;
  LabeledImageSet subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  // [B x C x H x W] batch of the given samples.
  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const;

  bool operator==(const LabeledImageSet&) const = default;
};

// Per-channel pixel mean and (population) standard deviation. A constant
// channel gets std 1.
Standardization channel_statistics(const LabeledImageSet& set);

/// OODD1 file: magic "OODD1", little-endian u64 manifest length, a JSON
/// manifest (count, channels, height, width, num_classes, class_names,
/// provenance, pixel_dtype, optional standardization), then the pixel buffer
/// (f32, or u8 scaled by 1/255 on load) and an i64 label buffer.
void save_dataset(const std::filesystem::path& path, const LabeledImageSet& set);
LabeledImageSet load_dataset(const std::filesystem::path& path);
LabeledImageSet parse_dataset(std::span<const std::byte> bytes, const std::string& origin = "<memory>");
std::vector<std::byte> serialize_dataset(const LabeledImageSet& set);

// Builds a set from raw exports: NCHW u8 pixels and one u8 label per image.
LabeledImageSet import_raw_u8(const std::filesystem::path& pixels, const std::filesystem::path& labels,
                              std::size_t channels, std::size_t height, std::size_t width,
                              std::vector<std::string> class_names);

enum class GeneratorKind { blobs, textures, shifted };

std::string_view to_string(GeneratorKind kind);
GeneratorKind parse_generator(std::string_view name);

/// Parameters of a synthetic image family.
///
/// Class appearance comes from `pattern_seed`; per-sample randomness (noise,
/// jitter) from `seed`. "shifted" reuses the blob patterns of the same
/// pattern_seed with every bump center moved `shift` pixels.
struct SyntheticSpec {
  GeneratorKind kind = GeneratorKind::blobs;
  std::size_t num_classes = 3;
  std::size_t samples_per_class = 100;
  std::size_t channels = 3;
  std::size_t image_size = 32;
  std::size_t bumps_per_class = 3;
  double noise_sigma = 0.05;
  double jitter = 0.0;  // blobs: center std-dev in pixels; textures: phase std-dev in radians
  double shift = 0.0;
  std::uint64_t pattern_seed = 0;
  std::uint64_t seed = 0;
};

LabeledImageSet synthesize(const SyntheticSpec& spec);

// Noise-free mean image of class `c` (what per-class pixel means converge to
// with zero jitter).
std::vector<float> class_template(const SyntheticSpec& spec, std::size_t c);

struct SplitFractions {
  double train = 0.8;
  double val = 0.0;
  double test = 0.2;
};

struct DatasetSplit {
  LabeledImageSet train, val, test;
};

// Stratified by class and deterministic per seed.
DatasetSplit split(const LabeledImageSet& set, const SplitFractions& fractions, std::uint64_t seed);

struct HoldoutResult {
  LabeledImageSet id;   // remaining classes, labels re-densified in original order
  LabeledImageSet ood;  // held classes, original labels and class names
};

HoldoutResult holdout_classes(const LabeledImageSet& set, std::span<const std::size_t> held);

}  // namespace oodkit
