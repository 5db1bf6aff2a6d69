#include <random>

#include "oodkit/train.hpp"

namespace oodkit {

std::vector<float> augment(std::span<const float> image, std::size_t channels, std::size_t height,
                           std::size_t width, std::uint64_t seed, const AugmentOptions& options) {
  std::vector<float> out(image.begin(), image.end());
  if (!options.enabled) return out;

  bool flip = options.force_flip;
  long dy = 0, dx = 0;
  if (!options.force_flip) {
    std::mt19937_64 rng(seed);
    flip = std::bernoulli_distribution(0.5)(rng);
    const long pad = static_cast<long>(options.pad);
    std::uniform_int_distribution<long> shift(-pad, pad);
    dy = shift(rng);
    dx = shift(rng);
  }
  const long H = static_cast<long>(height), W = static_cast<long>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = image.data() + c * height * width;
    float* dst = out.data() + c * height * width;
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        const long sy = y + dy;
        long sx = x + dx;
        if (flip) sx = W - 1 - sx;
        dst[y * W + x] = (sy < 0 || sy >= H || sx < 0 || sx >= W) ? 0.0f : src[sy * W + sx];
      }
    }
  }
  return out;
}

}  // namespace oodkit
