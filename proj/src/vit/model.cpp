#include <cmath>
#include <string>

#include "oodkit/errors.hpp"
#include "oodkit/ops.hpp"
#include "oodkit/vit.hpp"

namespace oodkit {

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, const ViTConfig& config) {
  const bool batched = images.rank() == 4;
  if (images.rank() != 3 && !batched) {
    throw ShapeError("patchify: expected [C x H x W] or [B x C x H x W], got " +
                     to_string(images.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const Shape expected{config.channels, config.image_size, config.image_size};
  const Shape actual(images.shape().begin() + off, images.shape().end());
  if (actual != expected) {
    throw ShapeError("patchify: expected image " + to_string(expected) + ", got " + to_string(actual));
  }
  const std::size_t batch = batched ? images.dim(0) : 1;
  const std::size_t C = config.channels, S = config.image_size, P = config.patch_size;
  const std::size_t grid = S / P, N = grid * grid, K = config.patch_dim();
  const std::size_t image_len = C * S * S;

  // gather[i] = source pixel offset for flattened output element i of one image
  std::vector<std::size_t> gather(N * K);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const std::size_t patch = gy * grid + gx;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t r = 0; r < P; ++r) {
          for (std::size_t col = 0; col < P; ++col) {
            const std::size_t k = (c * P + r) * P + col;
            gather[patch * K + k] = (c * S + gy * P + r) * S + gx * P + col;
          }
        }
      }
    }
  }
  std::vector<T> out(batch * N * K);
  auto src = images.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < N * K; ++i) out[b * N * K + i] = src[b * image_len + gather[i]];
  }
  Shape shape = batched ? Shape{batch, N, K} : Shape{N, K};
  return Tensor<T>::from_op("patchify", std::move(shape), std::move(out), {images},
                            [images, gather = std::move(gather), batch, image_len](
                                std::span<const T> g, std::span<const T>) {
                              auto gi = images.grad_buffer();
                              const std::size_t len = gather.size();
                              for (std::size_t b = 0; b < batch; ++b) {
                                for (std::size_t i = 0; i < len; ++i) {
                                  gi[b * image_len + gather[i]] += g[b * len + i];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> embed_sequence(const Tensor<T>& patches, const ViTParams<T>& params) {
  const bool batched = patches.rank() == 3;
  if (patches.rank() != 2 && !batched) {
    throw ShapeError("embed_sequence: expected [N x K] or [B x N x K], got " +
                     to_string(patches.shape()));
  }
  const std::size_t d = params.cls_token.size();
  const std::size_t n = patches.dim(batched ? 1 : 0);
  if (params.pos_embed.shape() != Shape{n + 1, d}) {
    throw ShapeError("embed_sequence: " + std::to_string(n) + " patches do not match positional " +
                     "embedding " + to_string(params.pos_embed.shape()));
  }
  const Tensor<T> x = batched ? patches : ops::reshape(patches, {1, n, patches.dim(1)});
  const std::size_t batch = x.dim(0);
  auto proj = ops::linear(x, params.patch_proj, Tensor<T>());
  auto cls = ops::expand(ops::reshape(params.cls_token, {1, d}), batch);
  auto z = ops::add(ops::concat(cls, proj, 1), params.pos_embed);
  return batched ? z : ops::reshape(z, {n + 1, d});
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& z, const EncoderLayerParams<T>& layer,
                               std::size_t heads, AttentionProbe<T>* probe) {
  const bool batched = z.rank() == 3;
  if (z.rank() != 2 && !batched) {
    throw ShapeError("multi_head_attention: expected [T x d] or [B x T x d], got " +
                     to_string(z.shape()));
  }
  const std::size_t d = z.shape().back();
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const Tensor<T> x = batched ? z : ops::reshape(z, {1, z.dim(0), d});
  const T scale = T(1) / std::sqrt(static_cast<T>(d / heads));

  auto q = ops::split_heads(ops::linear(x, layer.wq, layer.bq), heads);
  auto k = ops::split_heads(ops::linear(x, layer.wk, layer.bk), heads);
  auto v = ops::split_heads(ops::linear(x, layer.wv, layer.bv), heads);
  auto scores = ops::scale(ops::bmm(q, ops::transpose(k)), scale);
  auto weights = ops::softmax(scores, 2);
  if (probe) probe->weights.push_back(weights);
  auto context = ops::merge_heads(ops::bmm(weights, v), heads);
  auto out = ops::linear(context, layer.wo, layer.bo);
  return batched ? out : ops::reshape(out, z.shape());
}

template <typename T>
Tensor<T> encoder_block(const Tensor<T>& z, const EncoderLayerParams<T>& layer,
                        const ViTConfig& config, AttentionProbe<T>* probe) {
  const T eps = static_cast<T>(config.layer_norm_eps);
  auto ffn = [&](const Tensor<T>& h) {
    return ops::linear(ops::gelu(ops::linear(h, layer.fc1_w, layer.fc1_b)), layer.fc2_w, layer.fc2_b);
  };
  if (config.pre_norm) {
    auto mid = ops::add(
        z, multi_head_attention(ops::layer_norm(z, layer.ln1_gamma, layer.ln1_beta, eps), layer,
                                config.heads, probe));
    return ops::add(mid, ffn(ops::layer_norm(mid, layer.ln2_gamma, layer.ln2_beta, eps)));
  }
  auto mid = ops::layer_norm(ops::add(z, multi_head_attention(z, layer, config.heads, probe)),
                             layer.ln1_gamma, layer.ln1_beta, eps);
  return ops::layer_norm(ops::add(mid, ffn(mid)), layer.ln2_gamma, layer.ln2_beta, eps);
}

template <typename T>
ViTOutput<T> classify_tokens(const Tensor<T>& tokens, const ViTConfig& config,
                             const ViTParams<T>& params) {
  if (tokens.rank() != 2 && tokens.rank() != 3) {
    throw ShapeError("classify_tokens: expected [T x d] or [B x T x d], got " +
                     to_string(tokens.shape()));
  }
  const auto cls = ops::select(tokens, tokens.rank() - 2, 0);
  auto features = ops::layer_norm(cls, params.final_ln_gamma, params.final_ln_beta,
                                  static_cast<T>(config.layer_norm_eps));
  auto logits = ops::linear(features, params.head_w, params.head_b);
  return {features, logits};
}

template <typename T>
ViTOutput<T> forward(const Tensor<T>& images, const ViTConfig& config, const ViTParams<T>& params,
                     AttentionProbe<T>* probe) {
  auto z = embed_sequence(patchify(images, config), params);
  for (const auto& layer : params.layers) z = encoder_block(z, layer, config, probe);
  return classify_tokens(z, config, params);
}

#define OODKIT_INSTANTIATE_VIT(T)                                                              \
  template Tensor<T> patchify(const Tensor<T>&, const ViTConfig&);                             \
  template Tensor<T> embed_sequence(const Tensor<T>&, const ViTParams<T>&);                    \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const EncoderLayerParams<T>&,      \
                                          std::size_t, AttentionProbe<T>*);                    \
  template Tensor<T> encoder_block(const Tensor<T>&, const EncoderLayerParams<T>&,             \
                                   const ViTConfig&, AttentionProbe<T>*);                      \
  template ViTOutput<T> classify_tokens(const Tensor<T>&, const ViTConfig&, const ViTParams<T>&); \
  template ViTOutput<T> forward(const Tensor<T>&, const ViTConfig&, const ViTParams<T>&,       \
                                AttentionProbe<T>*);

OODKIT_INSTANTIATE_VIT(float)
OODKIT_INSTANTIATE_VIT(double)

#undef OODKIT_INSTANTIATE_VIT

}  // namespace oodkit
