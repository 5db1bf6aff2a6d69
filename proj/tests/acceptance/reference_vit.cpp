#include "reference_vit.hpp"

#include <cmath>
#include <stdexcept>

#ifdef OODKIT_HAVE_MVEC
// glibc's vector math library provides SIMD variants of erf.
extern "C" double erf(double) noexcept __attribute__((simd("notinbranch")));
#endif

namespace oodkit::reference {

namespace {

void gelu_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * x[i] * (1.0 + erf(x[i] * 0.70710678118654752440));
}

using ConstMap = Eigen::Map<const Mat>;
using ConstRowMap = Eigen::Map<const Row>;

ConstMap as_mat(const Tensor<double>& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstRowMap as_row(const Tensor<double>& t) {
  return ConstRowMap(t.data().data(), static_cast<Eigen::Index>(t.data().size()));
}

Mat layer_norm(const Mat& x, const Tensor<double>& gamma, const Tensor<double>& beta, double eps) {
  const auto g = as_row(gamma);
  const auto b = as_row(beta);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    out.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + eps) * g.array() + b.array()).matrix();
  }
  return out;
}

Mat stack(const std::vector<Mat>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Mat out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

// Rows 0, T, 2T, ... of a stack of `groups` sequences.
Mat class_rows(const Mat& z, std::size_t groups) {
  const Eigen::Index T = z.rows() / static_cast<Eigen::Index>(groups);
  Mat out(static_cast<Eigen::Index>(groups), z.cols());
  for (Eigen::Index g = 0; g < out.rows(); ++g) out.row(g) = z.row(g * T);
  return out;
}

}  // namespace

Entry entry_point(const std::string& name) {
  if (name == "patch_proj" || name == "cls_token" || name == "pos_embed") return {Entry::embed, 0};
  if (name.rfind("final_ln.", 0) == 0 || name.rfind("head.", 0) == 0) return {Entry::head, 0};
  if (name.rfind("layers.", 0) == 0) {
    const auto dot = name.find('.', 7);
    const std::size_t l = std::stoul(name.substr(7, dot - 7));
    const auto part = name.substr(dot + 1);
    if (part.rfind("ln1.", 0) == 0 || part.rfind("attn.", 0) == 0) return {Entry::attention, l};
    if (part.rfind("ln2.", 0) == 0 || part.rfind("mlp.", 0) == 0) return {Entry::mlp, l};
  }
  throw std::invalid_argument("reference: unknown parameter " + name);
}

ReferenceViT::ReferenceViT(const ViTConfig& config, const ViTParams<double>& params, const Tensor<double>& images,
                           std::vector<std::int64_t> labels)
    : config_(config), params_(params), labels_(std::move(labels)) {
  if (!config.pre_norm) throw std::invalid_argument("reference: pre-norm only");
  const std::size_t B = images.dim(0), C = config.channels, S = config.image_size, P = config.patch_size;
  const std::size_t G = S / P;
  const auto px = images.data();
  for (std::size_t b = 0; b < B; ++b) {
    Mat m(G * G, C * P * P);
    for (std::size_t gy = 0; gy < G; ++gy)
      for (std::size_t gx = 0; gx < G; ++gx)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t py = 0; py < P; ++py)
            for (std::size_t qx = 0; qx < P; ++qx)
              m(gy * G + gx, c * P * P + py * P + qx) = px[((b * C + c) * S + gy * P + py) * S + gx * P + qx];
    patches_.push_back(std::move(m));
  }
  layer_in_.assign(B, std::vector<Mat>(config.layers));
  layer_mid_.assign(B, std::vector<Mat>(config.layers));
  final_cls_.resize(B);
  logits_.resize(B);
}

Mat ReferenceViT::embed(std::size_t b) const {
  const std::size_t d = config_.hidden_size, T = config_.seq_len();
  Mat z(T, d);
  z.row(0) = as_row(params_.cls_token);
  z.bottomRows(T - 1) = patches_[b] * as_mat(params_.patch_proj, config_.patch_dim(), d);
  z += as_mat(params_.pos_embed, T, d);
  return z;
}

Mat ReferenceViT::attention(const Mat& z, std::size_t groups, std::size_t l, bool cls_only) const {
  const auto& p = params_.layers[l];
  const std::size_t d = config_.hidden_size, H = config_.heads, dh = config_.head_dim();
  const Eigen::Index T = z.rows() / static_cast<Eigen::Index>(groups), q_rows = cls_only ? 1 : T;
  const Mat y = layer_norm(z, p.ln1_gamma, p.ln1_beta, config_.layer_norm_eps);
  const Mat k = (y * as_mat(p.wk, d, d)).rowwise() + as_row(p.bk);
  const Mat v = (y * as_mat(p.wv, d, d)).rowwise() + as_row(p.bv);
  const Mat q = ((cls_only ? class_rows(y, groups) : y) * as_mat(p.wq, d, d)).rowwise() + as_row(p.bq);
  const Mat residual = cls_only ? class_rows(z, groups) : z;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat o(q.rows(), d);
  for (Eigen::Index g = 0; g < static_cast<Eigen::Index>(groups); ++g) {
    for (std::size_t h = 0; h < H; ++h) {
      const auto cols = Eigen::seqN(static_cast<Eigen::Index>(h * dh), static_cast<Eigen::Index>(dh));
      const auto qs = Eigen::seqN(g * q_rows, q_rows), ks = Eigen::seqN(g * T, T);
      Mat s = q(qs, cols) * k(ks, cols).transpose() * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
        s.row(r) /= s.row(r).sum();
      }
      o(qs, cols) = s * v(ks, cols);
    }
  }
  Mat mid = (o * as_mat(p.wo, d, d)).rowwise() + as_row(p.bo);
  mid += residual;
  return mid;
}

// mid + FC2(GELU(FC1(LN2(mid)))), GELU with the exact erf form.
Mat ReferenceViT::mlp(const Mat& mid, std::size_t l) const {
  const auto& p = params_.layers[l];
  const std::size_t d = config_.hidden_size, m = config_.mlp_size;
  const Mat x = layer_norm(mid, p.ln2_gamma, p.ln2_beta, config_.layer_norm_eps);
  Mat h = (x * as_mat(p.fc1_w, d, m)).rowwise() + as_row(p.fc1_b);
  gelu_inplace(h.data(), static_cast<std::size_t>(h.size()));
  Mat out = (h * as_mat(p.fc2_w, m, d)).rowwise() + as_row(p.fc2_b);
  out += mid;
  return out;
}

Mat ReferenceViT::head(const Mat& cls) const {
  const Mat f = layer_norm(cls, params_.final_ln_gamma, params_.final_ln_beta, config_.layer_norm_eps);
  return (f * as_mat(params_.head_w, config_.hidden_size, config_.num_classes)).rowwise() + as_row(params_.head_b);
}

double ReferenceViT::loss() {
  const std::size_t L = config_.layers;
  for (std::size_t b = 0; b < patches_.size(); ++b) {
    Mat z = embed(b);
    for (std::size_t l = 0; l < L; ++l) {
      layer_in_[b][l] = z;
      layer_mid_[b][l] = attention(z, 1, l, false);
      z = mlp(layer_mid_[b][l], l);
    }
    final_cls_[b] = z.topRows(1);
    logits_[b] = head(final_cls_[b]).row(0);
  }
  return mean_loss(logits_);
}

std::vector<Mat> ReferenceViT::stage_output(Entry entry) const {
  const bool last = entry.layer + 1 == config_.layers;
  std::vector<Mat> out;
  for (std::size_t b = 0; b < patches_.size(); ++b) {
    switch (entry.stage) {
      case Entry::embed: out.push_back(embed(b)); break;
      case Entry::attention: out.push_back(attention(layer_in_[b][entry.layer], 1, entry.layer, last)); break;
      case Entry::mlp: {
        const Mat& mid = layer_mid_[b][entry.layer];
        out.push_back(mlp(last ? Mat(mid.topRows(1)) : mid, entry.layer));
        break;
      }
      case Entry::head: out.push_back(head(final_cls_[b])); break;
    }
  }
  return out;
}

std::vector<Row> ReferenceViT::finish(const std::vector<Mat>& states, Entry entry) const {
  const std::size_t L = config_.layers, G = states.size();
  Mat z = stack(states);
  if (entry.stage != Entry::head) {
    // First layer still to run, and whether its attention half is done.
    std::size_t l = entry.stage == Entry::embed ? 0 : entry.layer;
    bool at_mlp = entry.stage == Entry::attention;
    if (entry.stage == Entry::mlp) ++l;
    for (; l < L; ++l) {
      if (!at_mlp) z = attention(z, G, l, l + 1 == L);
      at_mlp = false;
      z = mlp(z, l);
    }
    z = head(z);
  }
  std::vector<Row> logits;
  for (Eigen::Index g = 0; g < z.rows(); ++g) logits.push_back(z.row(g));
  return logits;
}

double ReferenceViT::mean_loss(const std::vector<Row>& logits) const {
  double total = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const double m = logits[b].maxCoeff();
    total += m + std::log((logits[b].array() - m).exp().sum()) - logits[b](labels_[b]);
  }
  return total / static_cast<double>(logits.size());
}

// lse(z+) - lse(z-) = log1p(sum_i softmax(z-)_i expm1(z+_i - z-_i)).
double ReferenceViT::loss_difference(const std::vector<Row>& plus, const std::vector<Row>& minus) const {
  double total = 0;
  for (std::size_t b = 0; b < plus.size(); ++b) {
    const Row delta = plus[b] - minus[b];
    const double m = minus[b].maxCoeff();
    const Eigen::ArrayXd w = (minus[b].array() - m).exp().transpose();
    double acc = 0;
    for (Eigen::Index i = 0; i < delta.size(); ++i) acc += w(i) * std::expm1(delta(i));
    total += std::log1p(acc / w.sum()) - delta(labels_[b]);
  }
  return total / static_cast<double>(plus.size());
}

}  // namespace oodkit::reference
