#include "oodkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "oodkit/errors.hpp"

namespace oodkit {

namespace {

void check_sets(std::span<const double> id, std::span<const double> ood, const char* who) {
  if (id.empty() || ood.empty()) throw InsufficientSamplesError(std::string(who) + ": both score sets must be nonempty");
  for (auto s : {id, ood}) {
    for (double v : s) {
      if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite score");
    }
  }
}

}  // namespace

double auroc(std::span<const double> id, std::span<const double> ood) {
  check_sets(id, ood, "auroc");
  const std::size_t n = id.size() + ood.size();
  std::vector<std::pair<double, bool>> all;  // (score, is_ood)
  all.reserve(n);
  for (double v : id) all.emplace_back(v, false);
  for (double v : ood) all.emplace_back(v, true);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of 1-based average ranks of the OOD scores.
  double rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t ood_in_group = 0;
    while (j < n && all[j].first == all[i].first) ood_in_group += all[j++].second;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(ood_in_group);
    i = j;
  }
  const double n_ood = static_cast<double>(ood.size()), n_id = static_cast<double>(id.size());
  const double u = rank_sum - n_ood * (n_ood + 1) / 2;
  return u / (n_ood * n_id);
}

double aupr(std::span<const double> id, std::span<const double> ood) {
  check_sets(id, ood, "aupr");
  std::vector<std::pair<double, bool>> all;
  for (double v : id) all.emplace_back(v, false);
  for (double v : ood) all.emplace_back(v, true);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double positives = static_cast<double>(ood.size());
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / positives;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

double accuracy(std::span<const std::int64_t> predictions, std::span<const std::int64_t> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw InsufficientSamplesError("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw InsufficientSamplesError("histogram: no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return histogram(values, bins, *lo, *hi);
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram: bins must be >= 1");
  if (!(lo <= hi)) throw ConfigError("histogram: lo must not exceed hi");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    std::size_t b = width > 0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

std::vector<EvalRow> evaluate_pairing(std::span<const OODDecision> id, std::span<const OODDecision> ood,
                                      const std::string& id_name, const std::string& ood_name,
                                      const std::string& metric) {
  if (id.empty() || ood.empty()) throw InsufficientSamplesError("evaluate_pairing: both decision sets must be nonempty");
  std::vector<double> id_d, ood_d, id_c, ood_c;
  for (const auto& x : id) {
    id_d.push_back(x.distance);
    id_c.push_back(-x.confidence);
  }
  for (const auto& x : ood) {
    ood_d.push_back(x.distance);
    ood_c.push_back(-x.confidence);
  }
  std::vector<EvalRow> rows;
  rows.push_back({id_name, ood_name, metric, "distance", auroc(id_d, ood_d), aupr(id_d, ood_d), id.size(), ood.size()});
  rows.push_back({id_name, ood_name, metric, "confidence", auroc(id_c, ood_c), aupr(id_c, ood_c), id.size(), ood.size()});
  return rows;
}

std::string report_csv(std::span<const EvalRow> rows) {
  std::string out = "id_dataset,ood_dataset,metric,score_type,auroc,aupr,n_id,n_ood\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{:.17g},{:.17g},{},{}\n", r.id_dataset, r.ood_dataset, r.metric, r.score_type,
                       r.auroc, r.aupr, r.n_id, r.n_ood);
  }
  return out;
}

nlohmann::json report_json(std::span<const EvalRow> rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"id_dataset", r.id_dataset},
                 {"ood_dataset", r.ood_dataset},
                 {"metric", r.metric},
                 {"score_type", r.score_type},
                 {"auroc", r.auroc},
                 {"aupr", r.aupr},
                 {"n_id", r.n_id},
                 {"n_ood", r.n_ood}});
  }
  return {{"rows", j}};
}

}  // namespace oodkit
