#include <numeric>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

std::span<const double> EmbeddingSet::row(std::size_t i) const {
  if (i >= size()) throw ContractError("embedding row " + std::to_string(i) + " out of range");
  return features.data().subspan(i * dim(), dim());
}

std::span<const double> EmbeddingSet::logit_row(std::size_t i) const {
  if (!has_logits()) throw ContractError("embedding set '" + source + "' carries no logits");
  if (i >= size()) throw ContractError("logit row " + std::to_string(i) + " out of range");
  const std::size_t C = logits.dim(1);
  return logits.data().subspan(i * C, C);
}

void EmbeddingSet::validate() const {
  if (!features.defined() || features.rank() != 2) throw ShapeError("embedding features must be an n x d matrix");
  if (features.dim(0) != labels.size()) {
    throw CountMismatchError("embedding set has " + std::to_string(features.dim(0)) + " rows and " +
                             std::to_string(labels.size()) + " labels");
  }
  if (has_logits() && (logits.rank() != 2 || logits.dim(0) != labels.size())) {
    throw CountMismatchError("embedding logits do not match the row count");
  }
  for (auto l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw LabelOverflowError("embedding label " + std::to_string(l) + " outside " +
                               std::to_string(num_classes) + " classes");
    }
  }
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> indices) const {
  EmbeddingSet out;
  out.num_classes = num_classes;
  out.source = source;
  std::vector<double> f, lg;
  for (auto i : indices) {
    auto r = row(i);
    f.insert(f.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    if (has_logits()) {
      auto l = logit_row(i);
      lg.insert(lg.end(), l.begin(), l.end());
    }
  }
  out.features = Tensor<double>({indices.size(), dim()}, std::move(f));
  if (has_logits()) out.logits = Tensor<double>({indices.size(), logits.dim(1)}, std::move(lg));
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  TensorArchive archive;
  archive.meta()["kind"] = "embeddings";
  archive.meta()["source"] = set.source;
  archive.meta()["num_classes"] = set.num_classes;
  archive.put("features", set.features);
  archive.put_i64("labels", {set.labels.size()}, set.labels);
  if (set.has_logits()) archive.put("logits", set.logits);
  archive.save(path);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  const auto archive = TensorArchive::load(path);
  if (archive.meta().value("kind", "") != "embeddings") {
    throw FormatError(path.string() + ": not an embeddings file");
  }
  EmbeddingSet set;
  set.source = archive.meta().value("source", "");
  set.num_classes = archive.meta().value("num_classes", std::size_t{0});
  set.features = archive.get<double>("features");
  set.labels = archive.get_i64("labels");
  if (archive.contains("logits")) set.logits = archive.get<double>("logits");
  set.validate();
  return set;
}

template <typename T>
EmbeddingSet extract_embeddings(const ViTConfig& config, const ViTParams<T>& params, const LabeledImageSet& data,
                                const std::string& source, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("extract: empty dataset");
  if (data.channels != config.channels || data.height != config.image_size || data.width != config.image_size) {
    throw ShapeError("extract: images are " + std::to_string(data.channels) + "x" + std::to_string(data.height) +
                     "x" + std::to_string(data.width) + ", model expects " + std::to_string(config.channels) +
                     "x" + std::to_string(config.image_size) + "x" + std::to_string(config.image_size));
  }
  NoGradGuard no_grad;
  const std::size_t d = config.hidden_size, C = config.num_classes;
  std::vector<double> feats, logits;
  feats.reserve(data.size() * d);
  logits.reserve(data.size() * C);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto out = forward(data.batch<T>(idx), config, params);
    feats.insert(feats.end(), out.features.data().begin(), out.features.data().end());
    logits.insert(logits.end(), out.logits.data().begin(), out.logits.data().end());
  }
  EmbeddingSet set;
  set.features = Tensor<double>({data.size(), d}, std::move(feats));
  set.logits = Tensor<double>({data.size(), C}, std::move(logits));
  set.labels = data.labels;
  set.num_classes = data.num_classes();
  set.source = source;
  return set;
}

template EmbeddingSet extract_embeddings(const ViTConfig&, const ViTParams<float>&, const LabeledImageSet&,
                                         const std::string&, std::size_t);
template EmbeddingSet extract_embeddings(const ViTConfig&, const ViTParams<double>&, const LabeledImageSet&,
                                         const std::string&, std::size_t);

}  // namespace oodkit
