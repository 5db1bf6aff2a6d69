#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/dataset.hpp"
#include "oodkit/tensor.hpp"
#include "oodkit/vit.hpp"

namespace oodkit {

enum class Precision { f32, f64 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  double max_lr = 1e-2;
  double weight_decay = 5e-4;
  double momentum = 0.0;  // 0 is plain SGD
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  bool augment = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

// "desk": the defaults above. "full": batch 256, 50 epochs, max_lr 0.01,
// augmentation on.
TrainConfig train_profile(std::string_view name);

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels);

// Triangular schedule with one cycle over the run: base -> max over the first
// half of the steps, max -> base over the second.
double cyclic_lr(std::size_t step, std::size_t total_steps, double base_lr, double max_lr);

// p <- p - lr * (g + wd * p); wd applies only to params flagged `decay`.
template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, T lr, T weight_decay);

// SGD with optional heavy-ball momentum on the decayed gradient:
// v <- mu v + (g + wd p), p <- p - lr v. With mu = 0 this is sgd_step.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<NamedParam<T>> params, T weight_decay, T momentum);
  void step(T lr);

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<std::vector<T>> velocity_;
  T weight_decay_, momentum_;
};

struct AugmentOptions {
  bool enabled = true;
  bool force_flip = false;  // always flip, never crop
  std::size_t pad = 4;
};

// Random horizontal flip and a random crop from the image zero-padded by
// `pad` pixels per side. Deterministic per seed.
std::vector<float> augment(std::span<const float> image, std::size_t channels, std::size_t height,
                           std::size_t width, std::uint64_t seed, const AugmentOptions& options = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;       // mean training loss over the epoch
  double train_acc = 0;  // running accuracy on the (augmented) training batches
  double test_acc = 0;   // held-out accuracy after the epoch; NaN without a held-out set
  double lr = 0;         // rate used by the last step of the epoch
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_lr;
  std::size_t best_epoch = 0;
  double best_test_acc = 0;
  double wall_seconds = 0;

  // CSV columns: epoch, loss, train_acc, test_acc, lr. Timing is left out so
  // repeated runs produce identical files.
  std::string csv() const;
  nlohmann::json summary() const;
};

template <typename T>
struct TrainResult {
  ViTParams<T> best;  // highest held-out accuracy (final params without a held-out set)
  ViTParams<T> last;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename T>
TrainResult<T> train(const ViTConfig& config, const ViTParams<T>& init, const LabeledImageSet& data,
                     const LabeledImageSet* heldout, const TrainConfig& train_config,
                     const EpochCallback& on_epoch = {});

// Argmax predictions in batches, without recording gradients.
template <typename T>
std::vector<std::int64_t> predict(const ViTConfig& config, const ViTParams<T>& params,
                                  const LabeledImageSet& data, std::size_t batch_size = 128);

template <typename T>
double evaluate_accuracy(const ViTConfig& config, const ViTParams<T>& params,
                         const LabeledImageSet& data, std::size_t batch_size = 128);

}  // namespace oodkit
