#include <string>

#include "oodkit/errors.hpp"
#include "oodkit/vit.hpp"

namespace oodkit {

std::size_t ViTConfig::num_patches() const {
  const std::size_t side = image_size / patch_size;
  return side * side;
}

void ViTConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("vit config: ") + name + " must be >= 1");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(channels, "channels");
  positive(layers, "layers");
  positive(hidden_size, "hidden_size");
  positive(mlp_size, "mlp_size");
  positive(heads, "heads");
  positive(num_classes, "num_classes");
  if (image_size % patch_size != 0) {
    throw ConfigError("vit config: image_size " + std::to_string(image_size) +
                      " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (hidden_size % heads != 0) {
    throw ConfigError("vit config: hidden_size " + std::to_string(hidden_size) +
                      " is not divisible by heads " + std::to_string(heads));
  }
  if (!(layer_norm_eps > 0)) throw ConfigError("vit config: layer_norm_eps must be positive");
}

nlohmann::json ViTConfig::to_json() const {
  return {{"image_size", image_size}, {"patch_size", patch_size}, {"channels", channels},
          {"layers", layers},         {"hidden_size", hidden_size}, {"mlp_size", mlp_size},
          {"heads", heads},           {"num_classes", num_classes}, {"pre_norm", pre_norm},
          {"layer_norm_eps", layer_norm_eps}};
}

ViTConfig ViTConfig::from_json(const nlohmann::json& j) {
  ViTConfig c;
  try {
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.mlp_size = j.at("mlp_size").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.pre_norm = j.value("pre_norm", true);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-6);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed vit_config: ") + ex.what());
  }
  c.validate();
  return c;
}

ViTConfig vit_profile(std::string_view name, std::size_t num_classes) {
  ViTConfig c;
  c.num_classes = num_classes;
  auto large = [&](std::size_t layers, std::size_t hidden, std::size_t mlp, std::size_t heads) {
    c.image_size = 224;
    c.patch_size = 16;
    c.channels = 3;
    c.layers = layers;
    c.hidden_size = hidden;
    c.mlp_size = mlp;
    c.heads = heads;
  };
  if (name == "tiny-4") {
    // defaults
  } else if (name == "deit-t-16") {
    large(12, 192, 768, 3);
  } else if (name == "deit-s-16") {
    large(12, 384, 1536, 6);
  } else if (name == "vit-b-16") {
    large(12, 768, 3072, 12);
  } else if (name == "vit-l-16") {
    large(24, 1024, 4096, 16);
  } else {
    throw ConfigError("unknown model profile '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

std::vector<std::string> vit_profile_names() {
  return {"tiny-4", "deit-t-16", "deit-s-16", "vit-b-16", "vit-l-16"};
}

std::vector<ParamSpec> parameter_layout(const ViTConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_size;
  std::vector<ParamSpec> out;
  auto add = [&](std::string name, Shape shape, ParamInit init, bool decay) {
    out.push_back(ParamSpec{std::move(name), std::move(shape), init, decay});
  };
  add("patch_proj", {config.patch_dim(), d}, ParamInit::trunc_normal, true);
  add("cls_token", {d}, ParamInit::zeros, true);
  add("pos_embed", {config.seq_len(), d}, ParamInit::trunc_normal, true);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gamma", {d}, ParamInit::ones, false);
    add(p + "ln1.beta", {d}, ParamInit::zeros, false);
    for (const char* w : {"q", "k", "v", "o"}) {
      add(p + "attn.w" + w, {d, d}, ParamInit::trunc_normal, true);
      add(p + "attn.b" + w, {d}, ParamInit::zeros, false);
    }
    add(p + "ln2.gamma", {d}, ParamInit::ones, false);
    add(p + "ln2.beta", {d}, ParamInit::zeros, false);
    add(p + "mlp.fc1.w", {d, config.mlp_size}, ParamInit::trunc_normal, true);
    add(p + "mlp.fc1.b", {config.mlp_size}, ParamInit::zeros, false);
    add(p + "mlp.fc2.w", {config.mlp_size, d}, ParamInit::trunc_normal, true);
    add(p + "mlp.fc2.b", {d}, ParamInit::zeros, false);
  }
  add("final_ln.gamma", {d}, ParamInit::ones, false);
  add("final_ln.beta", {d}, ParamInit::zeros, false);
  add("head.w", {d, config.num_classes}, ParamInit::trunc_normal, true);
  add("head.b", {config.num_classes}, ParamInit::zeros, false);
  return out;
}

std::size_t parameter_count(const ViTConfig& config) {
  std::size_t total = 0;
  for (const auto& p : parameter_layout(config)) total += numel(p.shape);
  return total;
}

}  // namespace oodkit
