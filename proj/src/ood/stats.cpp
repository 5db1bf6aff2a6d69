#include <cmath>
#include <string>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/linalg.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

namespace {

double trace(const Tensor<double>& m) {
  double t = 0;
  for (std::size_t i = 0; i < m.dim(0); ++i) t += m.data()[i * m.dim(0) + i];
  return t;
}

void invert(ClassGaussian& g, const FitOptions& options, std::size_t d) {
  const double requested = options.absolute_jitter >= 0 ? options.absolute_jitter
                                                        : options.relative_jitter * trace(g.cov) / static_cast<double>(d);
  g.inv = linalg::inverse_spd(g.cov, requested, &g.jitter);
}

}  // namespace

ClassStats fit_stats(const EmbeddingSet& train, const FitOptions& options) {
  train.validate();
  if (train.size() == 0) throw InsufficientSamplesError("fit_stats: empty embedding set");
  if (!(options.relative_jitter >= 0)) throw ConfigError("fit_stats: relative_jitter must be >= 0");
  const std::size_t d = train.dim(), C = train.num_classes;

  std::vector<std::vector<std::size_t>> members(C);
  for (std::size_t i = 0; i < train.size(); ++i) members[train.labels[i]].push_back(i);

  ClassStats stats;
  stats.dim = d;
  stats.metric = options.metric;
  stats.shared_covariance = options.shared_covariance;
  stats.classes.resize(C);

  const bool need_cov = options.metric == Metric::mahalanobis;
  for (std::size_t c = 0; c < C; ++c) {
    auto& g = stats.classes[c];
    g.count = members[c].size();
    const std::size_t min_count = need_cov && !options.shared_covariance ? 2 : 1;
    if (g.count < min_count) {
      throw InsufficientSamplesError(
          "fit_stats: class " + std::to_string(c) + " has " + std::to_string(g.count) + " sample(s); " +
          (min_count == 2 ? "a per-class covariance needs at least 2 (increase the data, raise the jitter, or "
                            "use the shared-covariance option)"
                          : "every class needs at least one sample"));
    }
    g.mean.assign(d, 0.0);
    g.unit_mean.assign(d, 0.0);
    for (auto i : members[c]) {
      const auto x = train.row(i);
      double norm = 0;
      for (double v : x) norm += v * v;
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < d; ++k) {
        g.mean[k] += x[k];
        if (norm > 0) g.unit_mean[k] += x[k] / norm;
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      g.mean[k] /= static_cast<double>(g.count);
      g.unit_mean[k] /= static_cast<double>(g.count);
    }
  }

  if (options.shared_covariance) {
    if (train.size() <= C) {
      throw InsufficientSamplesError("fit_stats: shared covariance needs more samples than classes");
    }
    std::vector<double> scatter(d * d, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto x = train.row(i);
      const auto& mu = stats.classes[train.labels[i]].mean;
      for (std::size_t a = 0; a < d; ++a) {
        const double da = x[a] - mu[a];
        for (std::size_t b = a; b < d; ++b) scatter[a * d + b] += da * (x[b] - mu[b]);
      }
    }
    const double denom = static_cast<double>(train.size() - C);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        scatter[a * d + b] /= denom;
        scatter[b * d + a] = scatter[a * d + b];
      }
    }
    ClassGaussian pooled;
    pooled.cov = Tensor<double>({d, d}, std::move(scatter));
    invert(pooled, options, d);
    for (auto& g : stats.classes) {
      g.cov = pooled.cov;
      g.inv = pooled.inv;
      g.jitter = pooled.jitter;
    }
    return stats;
  }

  for (std::size_t c = 0; c < C; ++c) {
    auto& g = stats.classes[c];
    if (g.count < 2) continue;  // only reachable for metrics that ignore covariance
    std::vector<double> rows;
    rows.reserve(g.count * d);
    for (auto i : members[c]) {
      const auto x = train.row(i);
      rows.insert(rows.end(), x.begin(), x.end());
    }
    g.cov = linalg::covariance(Tensor<double>({g.count, d}, std::move(rows)));
    invert(g, options, d);
  }
  return stats;
}

ClassStats fit_one_class(const EmbeddingSet& train, const FitOptions& options) {
  train.validate();
  for (auto l : train.labels) {
    if (l != train.labels.front()) throw ContractError("fit_one_class: embedding set holds more than one class");
  }
  if (train.size() == 0) throw InsufficientSamplesError("fit_one_class: empty embedding set");
  EmbeddingSet single = train;
  single.labels.assign(train.size(), 0);
  single.num_classes = 1;
  return fit_stats(single, options);
}

void save_stats(const std::filesystem::path& path, const ClassStats& stats) {
  TensorArchive archive;
  auto& meta = archive.meta();
  meta["kind"] = "class_stats";
  meta["metric"] = std::string(to_string(stats.metric));
  meta["dim"] = stats.dim;
  meta["num_classes"] = stats.num_classes();
  meta["shared_covariance"] = stats.shared_covariance;
  std::vector<std::int64_t> counts;
  nlohmann::json jitters = nlohmann::json::array();
  for (std::size_t c = 0; c < stats.num_classes(); ++c) {
    const auto& g = stats.classes[c];
    const std::string pre = "class." + std::to_string(c) + ".";
    counts.push_back(static_cast<std::int64_t>(g.count));
    jitters.push_back(g.jitter);
    archive.put(pre + "mean", Tensor<double>({stats.dim}, g.mean));
    archive.put(pre + "unit_mean", Tensor<double>({stats.dim}, g.unit_mean));
    if (g.cov.defined()) {
      archive.put(pre + "cov", g.cov);
      archive.put(pre + "inv", g.inv);
    }
  }
  meta["jitter"] = jitters;
  archive.put_i64("counts", {counts.size()}, counts);
  archive.save(path);
}

ClassStats load_stats(const std::filesystem::path& path) {
  const auto archive = TensorArchive::load(path);
  const auto& meta = archive.meta();
  if (meta.value("kind", "") != "class_stats") throw FormatError(path.string() + ": not a class statistics file");
  ClassStats stats;
  try {
    stats.metric = parse_metric(meta.at("metric").get<std::string>());
    stats.dim = meta.at("dim").get<std::size_t>();
    stats.shared_covariance = meta.value("shared_covariance", false);
    const auto C = meta.at("num_classes").get<std::size_t>();
    const auto jitters = meta.at("jitter").get<std::vector<double>>();
    const auto counts = archive.get_i64("counts");
    if (counts.size() != C || jitters.size() != C) {
      throw CountMismatchError(path.string() + ": per-class metadata does not match num_classes");
    }
    stats.classes.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      auto& g = stats.classes[c];
      const std::string pre = "class." + std::to_string(c) + ".";
      g.count = static_cast<std::size_t>(counts[c]);
      g.jitter = jitters[c];
      const auto mean = archive.get<double>(pre + "mean");
      const auto unit = archive.get<double>(pre + "unit_mean");
      if (mean.shape() != Shape{stats.dim} || unit.shape() != Shape{stats.dim}) {
        throw CountMismatchError(path.string() + ": class " + std::to_string(c) + " mean has the wrong length");
      }
      g.mean.assign(mean.data().begin(), mean.data().end());
      g.unit_mean.assign(unit.data().begin(), unit.data().end());
      if (archive.contains(pre + "cov")) {
        g.cov = archive.get<double>(pre + "cov");
        g.inv = archive.get<double>(pre + "inv");
        if (g.cov.shape() != Shape{stats.dim, stats.dim} || g.inv.shape() != g.cov.shape()) {
          throw CountMismatchError(path.string() + ": class " + std::to_string(c) + " covariance has the wrong shape");
        }
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": malformed statistics metadata: " + ex.what());
  }
  return stats;
}

double mahalanobis(std::span<const double> x, const ClassStats& stats, std::size_t c) {
  if (c >= stats.num_classes()) throw ContractError("mahalanobis: class " + std::to_string(c) + " out of range");
  if (x.size() != stats.dim) {
    throw ShapeError("mahalanobis: embedding of length " + std::to_string(x.size()) + ", statistics have d=" +
                     std::to_string(stats.dim));
  }
  const auto& g = stats.classes[c];
  if (!g.inv.defined()) {
    throw ContractError("mahalanobis: class " + std::to_string(c) + " was fitted without a covariance");
  }
  const std::size_t d = stats.dim;
  std::vector<double> diff(d);
  for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - g.mean[k];
  const auto inv = g.inv.data();
  double q = 0;
  for (std::size_t a = 0; a < d; ++a) {
    double row = 0;
    for (std::size_t b = 0; b < d; ++b) row += inv[a * d + b] * diff[b];
    q += diff[a] * row;
  }
  // Rounding can leave a tiny negative value for x == mu.
  return q < 0 ? 0.0 : q;
}

}  // namespace oodkit
