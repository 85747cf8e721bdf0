#pragma once

// Toy frozen-backbone dual encoder.
//
// Text side:  t_k = (u_1, ..., u_b, c_k)            ((b+1) * d_e values)
//             g_k = normalize(W_l t_k)
// Image side: z   = normalize(W_v x + P v)          (P v only with the vision prompt)
//
// Only the context tokens u and the vision prompt v are learnable. W_l, W_v, P
// and the class embeddings c_k are frozen after construction.

#include "npt/core.hpp"

#include <optional>
#include <string>

namespace npt {

struct ModelConfig {
  Index token_dim = 16;       // d_e
  Index context_tokens = 4;   // b
  Index rep_dim = 32;         // d
  Index num_classes = 10;     // K_total (base + novel)
  Index raw_dim = 32;
  double lambda_temp = 0.05;
  bool vision_prompt_enabled = true;
  std::uint64_t init_seed = 0;

  void validate() const {
    require(token_dim >= 1 && context_tokens >= 1 && rep_dim >= 1 && num_classes >= 1 && raw_dim >= 1,
            "ModelConfig: all dimensions must be >= 1");
    require(rep_dim >= num_classes, "ModelConfig: need d >= K_total (d=" + std::to_string(rep_dim) +
                                        ", K_total=" + std::to_string(num_classes) + ")");
    require(lambda_temp > 0.0, "ModelConfig: lambda_temp must be > 0");
  }

  Index text_input_dim() const { return (context_tokens + 1) * token_dim; }
  Index context_size() const { return context_tokens * token_dim; }
};

struct ModelParams {
  ModelConfig config;
  Vector context;           // b * d_e, u_1..u_b stacked      (learnable)
  Matrix class_embeddings;  // d_e x K_total                  (frozen)
  Matrix text_backbone;     // d x (b+1)*d_e                  (frozen)
  Matrix vision_backbone;   // d x raw_dim                    (frozen)
  Matrix prompt_injection;  // d x d_e, P                     (frozen)
  Vector vision_prompt;     // d_e, v                         (learnable when enabled)

  double lambda_temp() const { return config.lambda_temp; }

  // Columns of W_l acting on the context tokens / on the class embedding.
  auto context_block() const { return text_backbone.leftCols(config.context_size()); }
  auto class_block() const { return text_backbone.rightCols(config.token_dim); }
};

// Frozen maps are N(0, 1/fan_in); learnable vectors are N(0, 0.02^2); class
// embeddings N(0, 1). All draws come from one generator seeded by init_seed.
inline ModelParams init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.init_seed);
  ModelParams p;
  p.config = config;
  const Index de = config.token_dim, d = config.rep_dim;
  p.text_backbone = gaussian_matrix(d, config.text_input_dim(), 1.0 / std::sqrt(double(config.text_input_dim())), rng);
  p.vision_backbone = gaussian_matrix(d, config.raw_dim, 1.0 / std::sqrt(double(config.raw_dim)), rng);
  p.prompt_injection = gaussian_matrix(d, de, 1.0 / std::sqrt(double(de)), rng);
  p.class_embeddings = gaussian_matrix(de, config.num_classes, 1.0, rng);
  p.context = gaussian_vector(config.context_size(), 0.02, rng);
  p.vision_prompt = gaussian_vector(de, 0.02, rng);
  return p;
}

// Stand-in for contrastive pretraining: ties each class embedding to the image
// side of its class so that the frozen model classifies zero-shot.
//
//   c_k = a * chat_k + sqrt(1 - a^2) * c_k^init + gamma * c_common
//
// chat_k is the least-squares preimage under the class block of W_l of
// W_v s_k, rescaled to norm sqrt(d_e). c_common is shared by every class and
// gives the text side a common component (anisotropy) that a shared context
// can cancel.
struct AlignmentConfig {
  double alignment = 0.7;        // a in [0, 1]
  double text_anisotropy = 4.0;  // gamma >= 0

  void validate() const {
    require(alignment >= 0.0 && alignment <= 1.0, "AlignmentConfig: alignment must lie in [0, 1]");
    require(text_anisotropy >= 0.0, "AlignmentConfig: text_anisotropy must be >= 0");
  }
};

inline constexpr std::uint64_t kCommonEmbeddingStream = 0x9E3779B97F4A7C15ull;

inline void pretrain_align(ModelParams& p, const Matrix& class_directions, const AlignmentConfig& cfg) {
  cfg.validate();
  require(class_directions.rows() == p.config.raw_dim, "pretrain_align: class directions have the wrong dimension");
  require(class_directions.cols() == p.config.num_classes, "pretrain_align: need one direction per class");
  const double de = static_cast<double>(p.config.token_dim);
  const Matrix targets = p.vision_backbone * class_directions;  // d x K
  const Matrix block = p.class_block();
  Matrix pre = block.colPivHouseholderQr().solve(targets);      // d_e x K
  for (Index k = 0; k < pre.cols(); ++k) pre.col(k) *= std::sqrt(de) / pre.col(k).norm();
  Rng rng(p.config.init_seed ^ kCommonEmbeddingStream);
  const Vector common = gaussian_vector(p.config.token_dim, 1.0, rng);
  const double a = cfg.alignment, b = std::sqrt(1.0 - a * a);
  p.class_embeddings = (a * pre + b * p.class_embeddings).colwise() + cfg.text_anisotropy * common;
}

// Pre-normalization activations kept for backpropagating through normalize().
struct EncodeCache {
  Matrix pre;     // d x n
  Vector norms;   // n
  std::vector<int> ids;  // class ids (text) or empty (image)
  Index batch_size() const { return pre.cols(); }
};

struct Encoded {
  Matrix reps;  // d x n, unit columns
  EncodeCache cache;
};

namespace detail {
inline Encoded normalize_batch(Matrix pre, const char* what) {
  Encoded e;
  e.cache.norms.resize(pre.cols());
  e.reps.resize(pre.rows(), pre.cols());
  for (Index j = 0; j < pre.cols(); ++j) {
    const double n = pre.col(j).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw DegenerateGeometryError(std::string(what) + ": zero or non-finite pre-normalization vector at item " +
                                    std::to_string(j));
    e.cache.norms(j) = n;
    e.reps.col(j) = pre.col(j) / n;
  }
  e.cache.pre = std::move(pre);
  return e;
}
}  // namespace detail

inline Encoded encode_text(const ModelParams& p, std::span<const int> class_ids) {
  const Index k_total = p.config.num_classes;
  Matrix pre(p.config.rep_dim, static_cast<Index>(class_ids.size()));
  const Vector shared = p.context_block() * p.context;
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    const int k = class_ids[i];
    if (k < 0 || k >= k_total) throw ArgumentError("encode_text: class id " + std::to_string(k) + " out of range");
    pre.col(static_cast<Index>(i)) = shared + p.class_block() * p.class_embeddings.col(k);
  }
  Encoded e = detail::normalize_batch(std::move(pre), "encode_text");
  e.cache.ids.assign(class_ids.begin(), class_ids.end());
  return e;
}

// raw: raw_dim x N.
inline Encoded encode_image(const ModelParams& p, const Matrix& raw) {
  if (raw.cols() == 0) throw ArgumentError("encode_image: empty batch");
  if (raw.rows() != p.config.raw_dim) throw DimensionError("encode_image: raw feature dimension mismatch");
  Matrix pre = p.vision_backbone * raw;
  if (p.config.vision_prompt_enabled) pre.colwise() += p.prompt_injection * p.vision_prompt;
  return detail::normalize_batch(std::move(pre), "encode_image");
}

// Row n, column k proportional to exp(<z_n, g_k> / lambda). Returns N x K.
inline Matrix predict_probs(const Matrix& image, const Matrix& text, double lambda_temp) {
  require(lambda_temp > 0.0, "predict_probs: lambda must be > 0");
  Matrix logits = (image.transpose() * text) / lambda_temp;
  for (Index n = 0; n < logits.rows(); ++n) {
    const double m = logits.row(n).maxCoeff();
    logits.row(n) = (logits.row(n).array() - m).exp().matrix();
    logits.row(n) /= logits.row(n).sum();
  }
  return logits;
}

inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index n = 0; n < scores.rows(); ++n) {
    Index best = 0;
    scores.row(n).maxCoeff(&best);
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

// Bitwise equality of every frozen field.
inline bool frozen_equal(const ModelParams& a, const ModelParams& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::equal(x.data(), x.data() + x.size(), y.data());
  };
  return same(a.class_embeddings, b.class_embeddings) && same(a.text_backbone, b.text_backbone) &&
         same(a.vision_backbone, b.vision_backbone) && same(a.prompt_injection, b.prompt_injection);
}

}  // namespace npt
