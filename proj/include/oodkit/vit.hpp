#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oodkit/archive.hpp"
#include "oodkit/dataset.hpp"
#include "oodkit/tensor.hpp"

namespace oodkit {

/// Vision Transformer hyperparameters.
///
/// Images are square (image_size x image_size) with `channels` planes and are
/// cut into (image_size / patch_size)^2 non-overlapping patches.
struct ViTConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t layers = 4;
  std::size_t hidden_size = 64;
  std::size_t mlp_size = 128;
  std::size_t heads = 4;
  std::size_t num_classes = 10;
  // Pre-norm: z' = z + MSA(LN(z)), out = z' + FFN(LN(z')).
  // Post-norm: z' = LN(z + MSA(z)), out = LN(z' + FFN(z')).
  bool pre_norm = true;
  double layer_norm_eps = 1e-6;

  std::size_t num_patches() const;
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return hidden_size / heads; }

  void validate() const;
  nlohmann::json to_json() const;
  static ViTConfig from_json(const nlohmann::json& j);

  bool operator==(const ViTConfig&) const = default;
};

// Named architecture profiles: "tiny-4" (desk default), and the "deit-t-16",
// "deit-s-16", "vit-b-16", "vit-l-16" shapes at image size 224.
ViTConfig vit_profile(std::string_view name, std::size_t num_classes);
std::vector<std::string> vit_profile_names();

template <typename T>
struct EncoderLayerParams {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  bool decay;  // false for biases and layer-norm affines
};

enum class ParamInit { trunc_normal, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init;
  bool decay;
};

// Every learnable tensor with its config-derived shape, in canonical order.
std::vector<ParamSpec> parameter_layout(const ViTConfig& config);
std::size_t parameter_count(const ViTConfig& config);

/// Learnable weights of the encoder and classifier head.
template <typename T>
struct ViTParams {
  Tensor<T> patch_proj;  // (P^2 C') x d, no bias
  Tensor<T> cls_token;   // d
  Tensor<T> pos_embed;   // (N + 1) x d
  std::vector<EncoderLayerParams<T>> layers;
  Tensor<T> final_ln_gamma, final_ln_beta;
  Tensor<T> head_w, head_b;  // d x C, C

  // Handles in parameter_layout() order; they alias the stored tensors.
  std::vector<NamedParam<T>> named() const;
  std::size_t parameter_count() const;
  ViTParams clone() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;

  // Truncated normal (sigma 0.02, cut at 2 sigma) for projections and the
  // positional embedding; zeros for biases and the class token; identity
  // layer-norm affines.
  static ViTParams init(const ViTConfig& config, std::uint64_t seed);
  // All zeros except identity layer-norm affines.
  static ViTParams zeros(const ViTConfig& config);
  // Builds from tensors looked up by layout name, checking every shape.
  static ViTParams from_named(const ViTConfig& config, const std::vector<NamedParam<T>>& tensors);

  void check_shapes(const ViTConfig& config) const;
};

template <typename T>
struct ViTModel {
  ViTConfig config;
  ViTParams<T> params;
  // Per-channel input statistics the model was trained with. Applied to any
  // dataset fed through the model, replacing the dataset's own.
  std::optional<Standardization> input_norm;
};

// Checkpoint: OODT1 archive with the config under meta key "vit_config" and
// the input statistics, if any, under "input_norm".
template <typename T>
void save_model(const std::filesystem::path& path, const ViTModel<T>& model);
template <typename T>
ViTModel<T> load_model(const std::filesystem::path& path);
// Element type recorded in a checkpoint.
DType checkpoint_dtype(const std::filesystem::path& path);

// Softmax probabilities of one attention call, [B*H x T x T].
template <typename T>
struct AttentionProbe {
  std::vector<Tensor<T>> weights;
};

/// [C x H x W] -> [N x P^2 C'], or batched [B x C x H x W] -> [B x N x P^2 C'].
/// Patches are ordered row-major over the grid; each is flattened channel,
/// then row, then column.
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, const ViTConfig& config);

/// [x_cls; patches * E] + E_pos for [N x K] or [B x N x K] patches.
template <typename T>
Tensor<T> embed_sequence(const Tensor<T>& patches, const ViTParams<T>& params);

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& z, const EncoderLayerParams<T>& layer,
                               std::size_t heads, AttentionProbe<T>* probe = nullptr);

template <typename T>
Tensor<T> encoder_block(const Tensor<T>& z, const EncoderLayerParams<T>& layer,
                        const ViTConfig& config, AttentionProbe<T>* probe = nullptr);

template <typename T>
struct ViTOutput {
  Tensor<T> features;  // layer-normed class token, [d] or [B x d]
  Tensor<T> logits;    // [C] or [B x C]
};

// Final layer norm on the class-token row, then the linear head.
template <typename T>
ViTOutput<T> classify_tokens(const Tensor<T>& tokens, const ViTConfig& config,
                             const ViTParams<T>& params);

template <typename T>
ViTOutput<T> forward(const Tensor<T>& images, const ViTConfig& config, const ViTParams<T>& params,
                     AttentionProbe<T>* probe = nullptr);

}  // namespace oodkit
