#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/dataset.hpp"
#include "oodkit/metrics.hpp"
#include "oodkit/ood.hpp"
#include "oodkit/train.hpp"

namespace oodkit {

/// Everything one experiment needs. Loaded from a flat `key = value` text
/// file; '#' starts a comment. Keys:
///
///   id_data, ood_data, model, stats, out_dir      paths
///   holdout            comma-separated ID classes to treat as OOD instead of ood_data
///   profile            model profile (tiny-4, deit-t-16, ...)
///   train_profile      desk | full (applied before the individual train keys)
///   epochs, batch_size, base_lr, max_lr, weight_decay, momentum, augment, precision
///   metric             mahalanobis | euclidean | cosine
///   target_tpr         ID acceptance rate for threshold calibration
///   calibration        marginal | joint
///   heldout_fraction   share of ID data kept out of training
///   shared_covariance  true | false
///   seed
struct ExperimentConfig {
  std::filesystem::path id_data;
  std::filesystem::path ood_data;
  std::filesystem::path model;
  std::filesystem::path stats;
  std::filesystem::path out_dir = "out";
  std::vector<std::size_t> holdout;
  std::string profile = "tiny-4";
  std::string train_profile = "desk";
  TrainConfig train;
  Metric metric = Metric::mahalanobis;
  double target_tpr = 0.95;
  Calibration calibration = Calibration::marginal;
  double heldout_fraction = 0.2;
  bool shared_covariance = false;
  std::uint64_t seed = 0;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;

  static ExperimentConfig parse(const std::string& text, const std::string& origin = "<memory>");
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Progress lines go here when non-null.
struct Log {
  std::ostream* out = nullptr;
  void operator()(const std::string& line) const;
};

struct TrainOutcome {
  std::filesystem::path checkpoint;
  TrainReport report;
};

// Trains on the ID data (minus the held-out share, and minus `holdout`
// classes) and writes model.oodt, train_report.csv and train_summary.json.
TrainOutcome cmd_train(const ExperimentConfig& config, const Log& log = {});

// Writes the embeddings (with logits) of every image in `dataset`.
void cmd_extract(const std::filesystem::path& model, const std::filesystem::path& dataset,
                 const std::filesystem::path& out, const std::string& source = "data");

void cmd_fit(const std::filesystem::path& embeddings, const std::filesystem::path& out, const FitOptions& options);

struct ScoreInput {
  // Either precomputed embeddings, or a model plus raw images.
  std::filesystem::path embeddings;
  std::filesystem::path model;
  std::filesystem::path dataset;
};

std::vector<OODDecision> cmd_score(const ScoreInput& input, const std::filesystem::path& stats,
                                   const Thresholds& thresholds, Metric metric, const std::filesystem::path& out);

void save_thresholds(const std::filesystem::path& path, const Thresholds& t);
Thresholds load_thresholds(const std::filesystem::path& path);

std::vector<EvalRow> cmd_eval(const std::filesystem::path& id_scores, const std::filesystem::path& ood_scores,
                              const std::filesystem::path& out_dir, const std::string& id_name = "id",
                              const std::string& ood_name = "ood", const std::string& metric = "mahalanobis");

void cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out);

struct RunResult {
  double test_acc = 0;
  Thresholds thresholds;
  double id_inlier_rate = 0;  // of the held-out ID split under `thresholds`
  std::vector<EvalRow> rows;  // one pair (distance, confidence) per scored metric
};

// train -> extract -> fit -> calibrate/score -> eval, all through files in
// out_dir. With `metrics` empty only config.metric is scored. When
// `reuse_model` is set the checkpoint at config.model is used instead of
// training.
RunResult run_pipeline(const ExperimentConfig& config, const Log& log = {}, std::vector<Metric> metrics = {},
                       bool reuse_model = false);

enum class SweepAxis { batch_size, epochs, metric, model_profile };
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

// One block of rows per axis value, in the order given; writes sweep.csv.
std::string cmd_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                      const Log& log = {});

}  // namespace oodkit
