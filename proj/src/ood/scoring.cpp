#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::mahalanobis: return "mahalanobis";
    case Metric::euclidean: return "euclidean";
    case Metric::cosine: return "cosine";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "mahalanobis") return Metric::mahalanobis;
  if (name == "euclidean") return Metric::euclidean;
  if (name == "cosine") return Metric::cosine;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected mahalanobis, euclidean, cosine)");
}

std::vector<Metric> all_metrics() { return {Metric::mahalanobis, Metric::euclidean, Metric::cosine}; }

DistanceResult distance_score(std::span<const double> x, const ClassStats& stats, Metric metric) {
  if (stats.num_classes() == 0) throw ContractError("distance_score: statistics hold no classes");
  if (x.size() != stats.dim) {
    throw ShapeError("distance_score: embedding of length " + std::to_string(x.size()) + ", statistics have d=" +
                     std::to_string(stats.dim));
  }
  double x_norm = 0;
  if (metric == Metric::cosine) {
    for (double v : x) x_norm += v * v;
    x_norm = std::sqrt(x_norm);
    if (x_norm == 0) throw NumericError("distance_score: cosine distance is undefined for a zero embedding");
  }
  DistanceResult best;
  for (std::size_t c = 0; c < stats.num_classes(); ++c) {
    const auto& g = stats.classes[c];
    double s = 0;
    switch (metric) {
      case Metric::mahalanobis: s = mahalanobis(x, stats, c); break;
      case Metric::euclidean:
        for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - g.mean[k]) * (x[k] - g.mean[k]);
        break;
      case Metric::cosine: {
        double dot = 0, m_norm = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
          dot += x[k] * g.unit_mean[k];
          m_norm += g.unit_mean[k] * g.unit_mean[k];
        }
        if (m_norm == 0) {
          throw NumericError("distance_score: class " + std::to_string(c) + " has a zero mean direction");
        }
        s = 1.0 - dot / (x_norm * std::sqrt(m_norm));
        break;
      }
    }
    if (c == 0 || s < best.score) best = {s, c};
  }
  return best;
}

Confidence confidence_score(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("confidence_score: empty logits");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("confidence_score: non-finite logit");
  }
  const auto top = std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double v : logits) z += std::exp(v - *top);
  return {1.0 / z, static_cast<std::size_t>(top - logits.begin())};
}

void Thresholds::validate() const {
  if (!std::isfinite(t_distance)) throw ConfigError("thresholds: t_distance must be finite");
  if (!(t_conf > 0 && t_conf < 1)) throw ConfigError("thresholds: t_conf must lie in (0, 1)");
}

OODDecision decide(std::span<const double> x, std::span<const double> logits, const ClassStats& stats,
                   const Thresholds& thresholds, Metric metric, std::size_t sample_id) {
  thresholds.validate();
  const auto dist = distance_score(x, stats, metric);
  const auto conf = confidence_score(logits);
  OODDecision d;
  d.sample_id = sample_id;
  d.distance = dist.score;
  d.nearest = dist.nearest;
  d.confidence = conf.conf;
  d.predicted = conf.cls;
  d.metric = metric;
  d.is_outlier = d.distance > thresholds.t_distance || d.confidence < thresholds.t_conf;
  return d;
}

std::vector<OODDecision> score_all(const EmbeddingSet& set, const ClassStats& stats, const Thresholds& thresholds,
                                   Metric metric) {
  set.validate();
  if (!set.has_logits()) throw ContractError("score: embedding set '" + set.source + "' carries no logits");
  std::vector<OODDecision> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.push_back(decide(set.row(i), set.logit_row(i), stats, thresholds, metric, i));
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InsufficientSamplesError("quantile: no values");
  if (!(q >= 0 && q <= 1)) throw ContractError("quantile: level must be in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0 ? v[lo] : v[lo] + frac * (v[hi] - v[lo]);
}

std::string_view to_string(Calibration c) { return c == Calibration::marginal ? "marginal" : "joint"; }

Calibration parse_calibration(std::string_view name) {
  if (name == "marginal") return Calibration::marginal;
  if (name == "joint") return Calibration::joint;
  throw ConfigError("unknown calibration '" + std::string(name) + "' (expected marginal or joint)");
}

namespace {

Thresholds at_level(std::span<const double> distances, std::span<const double> confidences, double level) {
  Thresholds t;
  t.t_distance = quantile(distances, level);
  t.t_conf = quantile(confidences, 1.0 - level);
  // t_conf has to stay inside (0, 1); saturated softmax outputs can hit 1.
  t.t_conf = std::clamp(t.t_conf, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
  return t;
}

double admitted(std::span<const double> distances, std::span<const double> confidences, const Thresholds& t) {
  std::size_t in = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    in += !(distances[i] > t.t_distance || confidences[i] < t.t_conf);
  }
  return static_cast<double>(in) / static_cast<double>(distances.size());
}

}  // namespace

Thresholds calibrate_thresholds(std::span<const double> distances, std::span<const double> confidences,
                                double target_tpr, Calibration mode) {
  if (distances.empty()) throw InsufficientSamplesError("calibrate_thresholds: no ID validation scores");
  if (distances.size() != confidences.size()) {
    throw ShapeError("calibrate_thresholds: distance and confidence counts differ");
  }
  if (!(target_tpr > 0 && target_tpr <= 1)) throw ConfigError("calibrate_thresholds: target_tpr must be in (0, 1]");
  if (mode == Calibration::marginal || target_tpr == 1) return at_level(distances, confidences, target_tpr);

  // admitted() is non-decreasing in the level; find the smallest level that
  // reaches the target.
  double lo = target_tpr, hi = 1.0;
  if (admitted(distances, confidences, at_level(distances, confidences, lo)) >= target_tpr) {
    return at_level(distances, confidences, lo);
  }
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (admitted(distances, confidences, at_level(distances, confidences, mid)) >= target_tpr) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return at_level(distances, confidences, hi);
}

Thresholds calibrate_thresholds(std::span<const OODDecision> id_validation, double target_tpr, Calibration mode) {
  std::vector<double> d, c;
  for (const auto& x : id_validation) {
    d.push_back(x.distance);
    c.push_back(x.confidence);
  }
  return calibrate_thresholds(d, c, target_tpr, mode);
}

double inlier_rate(std::span<const OODDecision> decisions, const Thresholds& thresholds) {
  if (decisions.empty()) throw InsufficientSamplesError("inlier_rate: no decisions");
  std::size_t in = 0;
  for (const auto& x : decisions) {
    in += !(x.distance > thresholds.t_distance || x.confidence < thresholds.t_conf);
  }
  return static_cast<double>(in) / static_cast<double>(decisions.size());
}

std::string decisions_csv(std::span<const OODDecision> decisions) {
  std::string out = "sample_id,distance,nearest_class,confidence,is_outlier\n";
  for (const auto& x : decisions) {
    out += fmt::format("{},{:.17g},{},{:.17g},{}\n", x.sample_id, x.distance, x.nearest, x.confidence,
                       x.is_outlier ? 1 : 0);
  }
  return out;
}

void write_decisions(const std::filesystem::path& path, std::span<const OODDecision> decisions) {
  const auto text = decisions_csv(decisions);
  write_file(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::vector<OODDecision> parse_decisions(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,distance,nearest_class,confidence,is_outlier", 0) != 0) {
    throw FormatError(origin + ": missing decisions CSV header");
  }
  std::vector<OODDecision> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      OODDecision d;
      d.sample_id = std::stoull(cells[0]);
      d.distance = std::stod(cells[1]);
      d.nearest = std::stoull(cells[2]);
      d.confidence = std::stod(cells[3]);
      d.is_outlier = cells[4] == "1" || cells[4] == "true";
      if (!std::isfinite(d.distance) || !std::isfinite(d.confidence)) throw std::invalid_argument("non-finite");
      out.push_back(d);
    } catch (const std::logic_error&) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": malformed decision row");
    }
  }
  return out;
}

std::vector<OODDecision> read_decisions(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_decisions(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

}  // namespace oodkit
