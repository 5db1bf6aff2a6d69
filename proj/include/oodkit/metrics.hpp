#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/ood.hpp"

namespace oodkit {

// Scores are oriented so that higher means "more OOD".

// P(ood > id) + 0.5 P(ood == id), from average ranks.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Average precision with OOD as the positive class: sum over distinct
// thresholds (descending) of (recall gain) * precision.
double aupr(std::span<const double> id_scores, std::span<const double> ood_scores);

double accuracy(std::span<const std::int64_t> predictions, std::span<const std::int64_t> labels);

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<std::size_t> counts;  // equal-width bins; the last one is closed
};

// Bounds default to the data range.
Histogram histogram(std::span<const double> values, std::size_t bins);
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

struct EvalRow {
  std::string id_dataset;
  std::string ood_dataset;
  std::string metric;
  std::string score_type;  // "distance" or "confidence"
  double auroc = 0;
  double aupr = 0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

// Distance and negated confidence, each through auroc and aupr.
std::vector<EvalRow> evaluate_pairing(std::span<const OODDecision> id, std::span<const OODDecision> ood,
                                      const std::string& id_name = "id", const std::string& ood_name = "ood",
                                      const std::string& metric = "mahalanobis");

// Columns: id_dataset, ood_dataset, metric, score_type, auroc, aupr, n_id, n_ood.
std::string report_csv(std::span<const EvalRow> rows);
nlohmann::json report_json(std::span<const EvalRow> rows);

}  // namespace oodkit
