#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "oodkit/errors.hpp"
#include "oodkit/ops.hpp"
#include "oodkit/train.hpp"

namespace oodkit {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
Tensor<T> augmented_batch(const LabeledImageSet& set, std::span<const std::size_t> indices,
                          std::uint64_t seed) {
  const std::size_t len = set.image_len(), plane = set.height * set.width;
  std::vector<T> out;
  out.reserve(indices.size() * len);
  for (auto i : indices) {
    const auto img = augment(set.image(i), set.channels, set.height, set.width, mix(seed, i));
    for (std::size_t k = 0; k < len; ++k) {
      double v = img[k];
      if (set.standardization) {
        v = (v - set.standardization->mean[k / plane]) / set.standardization->std[k / plane];
      }
      out.push_back(static_cast<T>(v));
    }
  }
  return Tensor<T>({indices.size(), set.channels, set.height, set.width}, std::move(out));
}

}  // namespace

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view name) {
  if (name == "f32" || name == "32") return Precision::f32;
  if (name == "f64" || name == "64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(base_lr > 0) || !(base_lr <= max_lr) || !std::isfinite(max_lr)) {
    throw ConfigError("train: need 0 < base_lr <= max_lr");
  }
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},
          {"base_lr", base_lr}, {"max_lr", max_lr},
          {"weight_decay", weight_decay}, {"momentum", momentum},
          {"seed", seed},       {"precision", std::string(to_string(precision))},
          {"augment", augment}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.max_lr = j.value("max_lr", c.max_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    c.precision = parse_precision(j.value("precision", std::string("f32")));
    c.augment = j.value("augment", c.augment);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed train config: ") + ex.what());
  }
  c.validate();
  return c;
}

TrainConfig train_profile(std::string_view name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.batch_size = 256;
    c.epochs = 50;
    c.max_lr = 0.01;
    c.augment = true;
    return c;
  }
  throw ConfigError("unknown train profile '" + std::string(name) + "' (expected desk or full)");
}

std::string TrainReport::csv() const {
  std::ostringstream out;
  out << "epoch,loss,train_acc,test_acc,lr\n";
  for (const auto& e : epochs) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.loss, e.train_acc, e.test_acc, e.lr);
  }
  return out.str();
}

nlohmann::json TrainReport::summary() const {
  nlohmann::json j;
  j["epochs"] = epochs.size();
  j["best_epoch"] = best_epoch;
  j["best_test_acc"] = std::isfinite(best_test_acc) ? nlohmann::json(best_test_acc) : nlohmann::json();
  j["wall_seconds"] = wall_seconds;
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    j["final_loss"] = last.loss;
    j["final_train_acc"] = last.train_acc;
    j["final_test_acc"] = std::isfinite(last.test_acc) ? nlohmann::json(last.test_acc) : nlohmann::json();
  }
  return j;
}

template <typename T>
std::vector<std::int64_t> predict(const ViTConfig& config, const ViTParams<T>& params,
                                  const LabeledImageSet& data, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<std::int64_t> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto logits = forward(data.batch<T>(idx), config, params).logits;
    const std::size_t C = logits.dim(1);
    auto x = logits.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const T* row = x.data() + b * C;
      out.push_back(std::max_element(row, row + C) - row);
    }
  }
  return out;
}

template <typename T>
double evaluate_accuracy(const ViTConfig& config, const ViTParams<T>& params, const LabeledImageSet& data,
                         std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate_accuracy: empty dataset");
  const auto pred = predict(config, params, data, batch_size);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

template <typename T>
TrainResult<T> train(const ViTConfig& config, const ViTParams<T>& init, const LabeledImageSet& data,
                     const LabeledImageSet* heldout, const TrainConfig& tc, const EpochCallback& on_epoch) {
  using clock = std::chrono::steady_clock;
  tc.validate();
  config.validate();
  if (data.size() == 0) throw ContractError("train: empty dataset");
  if (data.num_classes() > config.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(data.num_classes()) + " classes, model head has " +
                      std::to_string(config.num_classes));
  }
  if (heldout && heldout->size() == 0) heldout = nullptr;

  const auto t0 = clock::now();
  ViTParams<T> params = init.clone();
  params.set_requires_grad(true);
  Sgd<T> opt(params.named(), static_cast<T>(tc.weight_decay), static_cast<T>(tc.momentum));

  const std::size_t n = data.size();
  const std::size_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total = steps_per_epoch * tc.epochs;

  TrainResult<T> result;
  result.report.best_test_acc = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n);
  std::vector<std::int64_t> labels;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto e0 = clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(tc.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    double lr = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::size_t start = s * tc.batch_size;
      const std::span<const std::size_t> idx(order.data() + start, std::min(tc.batch_size, n - start));
      const auto images = tc.augment ? augmented_batch<T>(data, idx, mix(tc.seed ^ 0xa5a5ULL, step))
                                     : data.batch<T>(idx);
      labels.clear();
      for (auto i : idx) labels.push_back(data.labels[i]);

      params.zero_grad();
      const auto out = forward(images, config, params);
      const auto loss = cross_entropy(out.logits, labels);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(s + 1) + " (global step " + std::to_string(step + 1) + ")");
      }
      loss.backward();
      lr = cyclic_lr(step, total, tc.base_lr, tc.max_lr);
      opt.step(static_cast<T>(lr));
      result.report.step_lr.push_back(lr);

      loss_sum += value * static_cast<double>(idx.size());
      auto x = out.logits.data();
      const std::size_t C = out.logits.dim(1);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const T* row = x.data() + b * C;
        correct += (std::max_element(row, row + C) - row) == labels[b];
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.test_acc = heldout ? evaluate_accuracy(config, params, *heldout)
                           : std::numeric_limits<double>::quiet_NaN();
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(clock::now() - e0).count();
    result.report.epochs.push_back(rec);

    if (heldout && rec.test_acc > result.report.best_test_acc) {
      result.report.best_test_acc = rec.test_acc;
      result.report.best_epoch = rec.epoch;
      result.best = params.clone();
    }
    if (on_epoch) on_epoch(rec);
  }

  result.last = params.clone();
  if (!heldout) {
    result.best = result.last;
    result.report.best_epoch = tc.epochs;
    result.report.best_test_acc = std::numeric_limits<double>::quiet_NaN();
  }
  result.best.set_requires_grad(false);
  result.last.set_requires_grad(false);
  result.report.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

#define OODKIT_INSTANTIATE_TRAIN(T)                                                                      \
  template std::vector<std::int64_t> predict(const ViTConfig&, const ViTParams<T>&, const LabeledImageSet&, \
                                             std::size_t);                                               \
  template double evaluate_accuracy(const ViTConfig&, const ViTParams<T>&, const LabeledImageSet&,       \
                                    std::size_t);                                                        \
  template TrainResult<T> train(const ViTConfig&, const ViTParams<T>&, const LabeledImageSet&,           \
                                const LabeledImageSet*, const TrainConfig&, const EpochCallback&);

OODKIT_INSTANTIATE_TRAIN(float)
OODKIT_INSTANTIATE_TRAIN(double)

#undef OODKIT_INSTANTIATE_TRAIN

}  // namespace oodkit
