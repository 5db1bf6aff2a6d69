#include <map>
#include <random>
#include <string>

#include "oodkit/errors.hpp"
#include "oodkit/vit.hpp"

namespace oodkit {

namespace {

bool decayed(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf == "gamma" || leaf == "beta" || leaf == "b") return false;
  if (leaf.size() == 2 && leaf[0] == 'b') return false;  // attention biases bq, bk, bv, bo
  return true;
}

template <typename P, typename Fn>
void for_each_slot(P& p, Fn&& fn) {
  fn("patch_proj", p.patch_proj);
  fn("cls_token", p.cls_token);
  fn("pos_embed", p.pos_embed);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    fn(pre + "ln1.gamma", L.ln1_gamma);
    fn(pre + "ln1.beta", L.ln1_beta);
    fn(pre + "attn.wq", L.wq);
    fn(pre + "attn.bq", L.bq);
    fn(pre + "attn.wk", L.wk);
    fn(pre + "attn.bk", L.bk);
    fn(pre + "attn.wv", L.wv);
    fn(pre + "attn.bv", L.bv);
    fn(pre + "attn.wo", L.wo);
    fn(pre + "attn.bo", L.bo);
    fn(pre + "ln2.gamma", L.ln2_gamma);
    fn(pre + "ln2.beta", L.ln2_beta);
    fn(pre + "mlp.fc1.w", L.fc1_w);
    fn(pre + "mlp.fc1.b", L.fc1_b);
    fn(pre + "mlp.fc2.w", L.fc2_w);
    fn(pre + "mlp.fc2.b", L.fc2_b);
  }
  fn("final_ln.gamma", p.final_ln_gamma);
  fn("final_ln.beta", p.final_ln_beta);
  fn("head.w", p.head_w);
  fn("head.b", p.head_b);
}

template <typename T>
ViTParams<T> build(const ViTConfig& config, const std::map<std::string, Tensor<T>>& by_name) {
  ViTParams<T> p;
  p.layers.resize(config.layers);
  for_each_slot(p, [&](const std::string& name, Tensor<T>& slot) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("missing parameter '" + name + "'");
    slot = it->second;
  });
  p.check_shapes(config);
  return p;
}

}  // namespace

template <typename T>
std::vector<NamedParam<T>> ViTParams<T>::named() const {
  std::vector<NamedParam<T>> out;
  for_each_slot(*this, [&](const std::string& name, const Tensor<T>& t) {
    out.push_back(NamedParam<T>{name, t, decayed(name)});
  });
  return out;
}

template <typename T>
std::size_t ViTParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : named()) total += p.tensor.size();
  return total;
}

template <typename T>
ViTParams<T> ViTParams<T>::clone() const {
  ViTParams out = *this;
  for_each_slot(out, [](const std::string&, Tensor<T>& t) {
    const bool rg = t.requires_grad();
    t = t.detach();
    t.set_requires_grad(rg);
  });
  return out;
}

template <typename T>
void ViTParams<T>::set_requires_grad(bool on) const {
  for (const auto& p : named()) p.tensor.set_requires_grad(on);
}

template <typename T>
void ViTParams<T>::zero_grad() const {
  for (const auto& p : named()) p.tensor.zero_grad();
}

template <typename T>
ViTParams<T> ViTParams<T>::init(const ViTConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double sigma = 0.02;
  std::map<std::string, Tensor<T>> by_name;
  for (const auto& spec : parameter_layout(config)) {
    std::vector<T> values(numel(spec.shape));
    for (auto& v : values) {
      switch (spec.init) {
        case ParamInit::zeros: v = T(0); break;
        case ParamInit::ones: v = T(1); break;
        case ParamInit::trunc_normal: {
          double x;
          do {
            x = normal(rng);
          } while (x < -2.0 || x > 2.0);
          v = static_cast<T>(sigma * x);
          break;
        }
      }
    }
    by_name.emplace(spec.name, Tensor<T>(spec.shape, std::move(values)));
  }
  return build(config, by_name);
}

template <typename T>
ViTParams<T> ViTParams<T>::zeros(const ViTConfig& config) {
  std::map<std::string, Tensor<T>> by_name;
  for (const auto& spec : parameter_layout(config)) {
    const T fill = spec.init == ParamInit::ones ? T(1) : T(0);
    by_name.emplace(spec.name, Tensor<T>::full(spec.shape, fill));
  }
  return build(config, by_name);
}

template <typename T>
ViTParams<T> ViTParams<T>::from_named(const ViTConfig& config,
                                      const std::vector<NamedParam<T>>& tensors) {
  std::map<std::string, Tensor<T>> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, t.tensor);
  return build(config, by_name);
}

template <typename T>
void ViTParams<T>::check_shapes(const ViTConfig& config) const {
  const auto layout = parameter_layout(config);
  if (layers.size() != config.layers) {
    throw CountMismatchError("parameter set has " + std::to_string(layers.size()) +
                             " layers, config expects " + std::to_string(config.layers));
  }
  const auto have = named();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!have[i].tensor.defined()) throw FormatError("parameter '" + layout[i].name + "' is missing");
    if (have[i].tensor.shape() != layout[i].shape) {
      throw CountMismatchError("parameter '" + layout[i].name + "' has shape " +
                               to_string(have[i].tensor.shape()) + ", config expects " +
                               to_string(layout[i].shape));
    }
  }
}

template <typename T>
void save_model(const std::filesystem::path& path, const ViTModel<T>& model) {
  model.params.check_shapes(model.config);
  TensorArchive archive;
  archive.meta()["vit_config"] = model.config.to_json();
  archive.meta()["dtype"] = std::string(to_string(dtype_of<T>()));
  if (model.input_norm) {
    archive.meta()["input_norm"] = {{"mean", model.input_norm->mean}, {"std", model.input_norm->std}};
  }
  for (const auto& p : model.params.named()) archive.put(p.name, p.tensor);
  archive.save(path);
}

template <typename T>
ViTModel<T> load_model(const std::filesystem::path& path) {
  const auto archive = TensorArchive::load(path);
  if (!archive.meta().contains("vit_config")) {
    throw FormatError(path.string() + ": checkpoint has no vit_config block");
  }
  ViTModel<T> model;
  model.config = ViTConfig::from_json(archive.meta().at("vit_config"));
  std::map<std::string, Tensor<T>> by_name;
  for (const auto& spec : parameter_layout(model.config)) {
    by_name.emplace(spec.name, archive.get<T>(spec.name));
  }
  model.params = build(model.config, by_name);
  if (archive.meta().contains("input_norm")) {
    Standardization s;
    try {
      s.mean = archive.meta().at("input_norm").at("mean").get<std::vector<double>>();
      s.std = archive.meta().at("input_norm").at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ": malformed input_norm: " + ex.what());
    }
    if (s.mean.size() != model.config.channels || s.std.size() != model.config.channels) {
      throw CountMismatchError(path.string() + ": input_norm does not have one entry per channel");
    }
    model.input_norm = std::move(s);
  }
  return model;
}

DType checkpoint_dtype(const std::filesystem::path& path) {
  const auto archive = TensorArchive::load(path);
  if (!archive.contains("patch_proj")) throw FormatError(path.string() + ": not a model checkpoint");
  return archive.entry("patch_proj").dtype;
}

template struct ViTParams<float>;
template struct ViTParams<double>;
template void save_model<float>(const std::filesystem::path&, const ViTModel<float>&);
template void save_model<double>(const std::filesystem::path&, const ViTModel<double>&);
template ViTModel<float> load_model<float>(const std::filesystem::path&);
template ViTModel<double> load_model<double>(const std::filesystem::path&);

}  // namespace oodkit
