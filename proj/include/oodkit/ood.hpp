#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oodkit/dataset.hpp"
#include "oodkit/tensor.hpp"
#include "oodkit/vit.hpp"

namespace oodkit {

enum class Metric { mahalanobis, euclidean, cosine };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);
std::vector<Metric> all_metrics();

/// Class-token embeddings (post final layer norm) with their labels.
///
/// `logits` is optional; when present it lets scoring run the confidence
/// path without the model.
struct EmbeddingSet {
  Tensor<double> features;  // n x d
  std::vector<std::int64_t> labels;
  Tensor<double> logits;    // n x C, or undefined
  std::size_t num_classes = 0;
  std::string source;       // "train", "test", "ood", ...

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.defined() ? features.dim(1) : 0; }
  bool has_logits() const { return logits.defined(); }
  std::span<const double> row(std::size_t i) const;
  std::span<const double> logit_row(std::size_t i) const;

  void validate() const;
  EmbeddingSet subset(std::span<const std::size_t> indices) const;
};

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

// Runs the encoder over `data` in batches without recording gradients.
template <typename T>
EmbeddingSet extract_embeddings(const ViTConfig& config, const ViTParams<T>& params,
                                const LabeledImageSet& data, const std::string& source,
                                std::size_t batch_size = 128);

struct ClassGaussian {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> unit_mean;  // mean of the l2-normalized embeddings
  Tensor<double> cov;             // d x d; undefined when count < 2 and not needed
  Tensor<double> inv;             // (cov + jitter I)^-1
  double jitter = 0;              // the jitter that was actually applied
};

struct FitOptions {
  Metric metric = Metric::mahalanobis;
  // Pool the within-class scatter into one covariance shared by all classes.
  bool shared_covariance = false;
  // Jitter = relative_jitter * trace(cov) / d unless `absolute_jitter` >= 0.
  double relative_jitter = 1e-6;
  double absolute_jitter = -1;
};

struct ClassStats {
  std::size_t dim = 0;
  std::vector<ClassGaussian> classes;
  Metric metric = Metric::mahalanobis;
  bool shared_covariance = false;

  std::size_t num_classes() const { return classes.size(); }
};

// Per-class mean, covariance (n - 1 denominator) and jittered inverse over
// dense labels 0..C-1.
ClassStats fit_stats(const EmbeddingSet& train, const FitOptions& options = {});
// fit_stats over a set that must contain exactly one class.
ClassStats fit_one_class(const EmbeddingSet& train, const FitOptions& options = {});

void save_stats(const std::filesystem::path& path, const ClassStats& stats);
ClassStats load_stats(const std::filesystem::path& path);

// (x - mu_c)^T inv_c (x - mu_c)
double mahalanobis(std::span<const double> x, const ClassStats& stats, std::size_t c);

struct DistanceResult {
  double score = 0;
  std::size_t nearest = 0;
};

// Minimum over classes of the chosen metric; ties go to the lowest class.
// euclidean is the squared distance to mu_c; cosine is 1 - cos(x, unit_mean_c).
DistanceResult distance_score(std::span<const double> x, const ClassStats& stats, Metric metric);

struct Confidence {
  double conf = 0;
  std::size_t cls = 0;
};

Confidence confidence_score(std::span<const double> logits);

struct Thresholds {
  double t_distance = 0;
  double t_conf = 0;
  void validate() const;
};

struct OODDecision {
  std::size_t sample_id = 0;
  double distance = 0;
  std::size_t nearest = 0;
  double confidence = 0;
  std::size_t predicted = 0;
  bool is_outlier = false;
  Metric metric = Metric::mahalanobis;
};

// Outlier iff distance > t_distance or confidence < t_conf.
OODDecision decide(std::span<const double> x, std::span<const double> logits, const ClassStats& stats,
                   const Thresholds& thresholds, Metric metric, std::size_t sample_id = 0);

// One decision per row; needs logits.
std::vector<OODDecision> score_all(const EmbeddingSet& set, const ClassStats& stats,
                                   const Thresholds& thresholds, Metric metric);

// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::span<const double> values, double q);

enum class Calibration {
  // Each threshold at its own quantile: t_distance at target, t_conf at 1 - target.
  marginal,
  // Both quantile levels moved together until the OR rule admits the target
  // fraction of the calibration samples.
  joint,
};

std::string_view to_string(Calibration c);
Calibration parse_calibration(std::string_view name);

Thresholds calibrate_thresholds(std::span<const double> distances, std::span<const double> confidences,
                                double target_tpr, Calibration mode = Calibration::marginal);
Thresholds calibrate_thresholds(std::span<const OODDecision> id_validation, double target_tpr,
                                Calibration mode = Calibration::marginal);

// Fraction of decisions that the thresholds would accept as inliers.
double inlier_rate(std::span<const OODDecision> decisions, const Thresholds& thresholds);

// CSV columns: sample_id, distance, nearest_class, confidence, is_outlier.
std::string decisions_csv(std::span<const OODDecision> decisions);
void write_decisions(const std::filesystem::path& path, std::span<const OODDecision> decisions);
std::vector<OODDecision> read_decisions(const std::filesystem::path& path);
std::vector<OODDecision> parse_decisions(const std::string& text, const std::string& origin = "<memory>");

}  // namespace oodkit
