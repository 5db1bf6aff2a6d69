#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "oodkit/dataset.hpp"
#include "oodkit/errors.hpp"

namespace oodkit {

namespace {

constexpr double kBackground = 0.5;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Blob: a Gaussian bump per channel. Texture: a sinusoidal grating.
struct Component {
  double cx = 0, cy = 0, width = 0;  // blob geometry
  double fx = 0, fy = 0, phase = 0;  // grating geometry
  double dir = 0;                    // displacement direction for "shifted"
  std::vector<double> amp;           // per channel, signed
};

std::vector<Component> class_pattern(const SyntheticSpec& spec, std::size_t c) {
  std::mt19937_64 rng(splitmix(splitmix(spec.pattern_seed) + c));
  const double S = static_cast<double>(spec.image_size);
  const double margin = std::min(4.0, S / 4);
  std::uniform_real_distribution<double> center(margin, S - margin);
  std::uniform_real_distribution<double> width(2.5, 4.5);
  std::uniform_real_distribution<double> magnitude(0.06, 0.15);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(1, 4);
  std::bernoulli_distribution sign(0.5);

  std::vector<Component> out(spec.bumps_per_class);
  for (auto& comp : out) {
    comp.cx = center(rng);
    comp.cy = center(rng);
    comp.width = width(rng);
    comp.fx = freq(rng) * (sign(rng) ? 1 : -1);
    comp.fy = freq(rng);
    comp.phase = angle(rng);
    comp.dir = angle(rng);
    comp.amp.resize(spec.channels);
    for (auto& a : comp.amp) a = magnitude(rng) * (sign(rng) ? 1.0 : -1.0);
  }
  return out;
}

// Writes one C x S x S image. `offsets` perturbs each component's center
// (blobs) or phase (textures).
void render(const SyntheticSpec& spec, const std::vector<Component>& pattern,
            const std::vector<double>& offsets, float* out, double noise_sigma, std::mt19937_64* rng) {
  const std::size_t S = spec.image_size;
  const double twopi = 2 * std::numbers::pi;
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        double v = kBackground;
        for (std::size_t k = 0; k < pattern.size(); ++k) {
          const auto& comp = pattern[k];
          if (spec.kind == GeneratorKind::textures) {
            const double arg = twopi * (comp.fx * x + comp.fy * y) / S + comp.phase + offsets[2 * k];
            v += comp.amp[ch] * std::sin(arg);
          } else {
            double cx = comp.cx + offsets[2 * k], cy = comp.cy + offsets[2 * k + 1];
            if (spec.kind == GeneratorKind::shifted) {
              cx += spec.shift * std::cos(comp.dir);
              cy += spec.shift * std::sin(comp.dir);
            }
            const double dx = x - cx, dy = y - cy;
            v += comp.amp[ch] * std::exp(-(dx * dx + dy * dy) / (2 * comp.width * comp.width));
          }
        }
        if (noise_sigma > 0) v += noise(*rng);
        out[(ch * S + y) * S + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

void check(const SyntheticSpec& spec) {
  if (spec.num_classes == 0) throw ConfigError("synthesize: num_classes must be >= 1");
  if (spec.channels == 0 || spec.image_size == 0) throw ConfigError("synthesize: empty image shape");
  if (spec.bumps_per_class == 0) throw ConfigError("synthesize: bumps_per_class must be >= 1");
  if (!(spec.noise_sigma >= 0) || !(spec.jitter >= 0)) {
    throw ConfigError("synthesize: noise_sigma and jitter must be non-negative");
  }
  if (!std::isfinite(spec.shift)) throw ConfigError("synthesize: shift must be finite");
}

}  // namespace

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::blobs: return "blobs";
    case GeneratorKind::textures: return "textures";
    case GeneratorKind::shifted: return "shifted";
  }
  return "?";
}

GeneratorKind parse_generator(std::string_view name) {
  if (name == "blobs") return GeneratorKind::blobs;
  if (name == "textures") return GeneratorKind::textures;
  if (name == "shifted") return GeneratorKind::shifted;
  throw ConfigError("unknown generator '" + std::string(name) + "' (expected blobs, textures, shifted)");
}

LabeledImageSet synthesize(const SyntheticSpec& spec) {
  check(spec);
  LabeledImageSet set;
  set.channels = spec.channels;
  set.height = spec.image_size;
  set.width = spec.image_size;
  for (std::size_t c = 0; c < spec.num_classes; ++c) set.class_names.push_back("class" + std::to_string(c));
  set.provenance = "synthetic:" + std::string(to_string(spec.kind)) +
                   ":pattern_seed=" + std::to_string(spec.pattern_seed) +
                   ":seed=" + std::to_string(spec.seed);

  std::vector<std::vector<Component>> patterns;
  for (std::size_t c = 0; c < spec.num_classes; ++c) patterns.push_back(class_pattern(spec, c));

  const std::size_t n = spec.num_classes * spec.samples_per_class;
  set.pixels.resize(n * set.image_len());
  set.labels.resize(n);
  std::mt19937_64 rng(splitmix(spec.seed ^ 0x5eedULL));
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<double> offsets(2 * spec.bumps_per_class);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % spec.num_classes;
    set.labels[i] = static_cast<std::int64_t>(c);
    for (auto& o : offsets) o = spec.jitter > 0 ? spec.jitter * jitter(rng) : 0.0;
    render(spec, patterns[c], offsets, set.pixels.data() + i * set.image_len(), spec.noise_sigma, &rng);
  }
  return set;
}

std::vector<float> class_template(const SyntheticSpec& spec, std::size_t c) {
  check(spec);
  if (c >= spec.num_classes) throw ContractError("class_template: class out of range");
  std::vector<float> out(spec.channels * spec.image_size * spec.image_size);
  const std::vector<double> offsets(2 * spec.bumps_per_class, 0.0);
  render(spec, class_pattern(spec, c), offsets, out.data(), 0.0, nullptr);
  return out;
}

}  // namespace oodkit
