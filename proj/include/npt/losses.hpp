#pragma once

// NPT objective: L = L_CLIP + w1 * L_LC + w2 * L_MI, its gradients with respect
// to the representations, and the chain rule down to the learnable prompts.
//
// Representation-level gradients treat every g_k and z_n as a free vector.
// param_gradients() then applies the normalization Jacobian (I - y y^T)/|x|
// and the frozen linear maps.

#include "npt/core.hpp"
#include "npt/metrics.hpp"
#include "npt/model.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>

namespace npt {

// How L_MI aggregates over samples. Sum is the literal regularizer; Mean puts
// it on the same per-sample footing as the cross-entropy term.
enum class MiReduction { Sum, Mean };

inline const char* to_string(MiReduction r) { return r == MiReduction::Sum ? "sum" : "mean"; }

inline MiReduction mi_reduction_from_string(const std::string& s) {
  if (s == "sum") return MiReduction::Sum;
  if (s == "mean") return MiReduction::Mean;
  throw ArgumentError("unknown mi_reduction '" + s + "' (expected sum|mean)");
}

struct LossWeights {
  double w1 = 0.3;  // L_LC
  double w2 = 0.8;  // L_MI
  MiReduction mi_reduction = MiReduction::Mean;

  void validate() const { require(w1 >= 0.0 && w2 >= 0.0, "LossWeights: weights must be >= 0"); }
};

inline constexpr double kProbClamp = 1e-300;

struct ClipLoss {
  double value = 0.0;
  std::size_t clamped = 0;  // true-label probabilities that hit the clamp
};

// -(1/N) sum_n log p[n, y_n]; probs is N x K.
inline ClipLoss loss_clip_detailed(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) throw ArgumentError("loss_clip: label count mismatch");
  if (probs.rows() == 0) throw ArgumentError("loss_clip: empty batch");
  check_labels(labels, probs.cols());
  ClipLoss out;
  for (Index n = 0; n < probs.rows(); ++n) {
    double p = probs(n, labels[n]);
    if (p < kProbClamp) {
      p = kProbClamp;
      ++out.clamped;
    }
    out.value -= std::log(p);
  }
  out.value /= static_cast<double>(probs.rows());
  return out;
}

inline double loss_clip(const Matrix& probs, std::span<const int> labels) {
  return loss_clip_detailed(probs, labels).value;
}

// sum over ordered pairs i != j of (<g_i, g_j> - E_W mu)^2.
inline double loss_lc(const Matrix& text, double energy_w = 1.0) {
  const Index k = text.cols();
  if (k < 2) throw ArgumentError("loss_lc: need at least 2 text reps");
  const double target = energy_w * lcd_mu(k);
  const Matrix s = text.transpose() * text;
  double acc = 0.0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j) acc += (s(i, j) - target) * (s(i, j) - target);
  return acc;
}

// sum over samples of (<z_n, g_{y_n}> - sqrt(E_W E_H))^2.
inline double loss_mi(const Matrix& image, std::span<const int> labels, const Matrix& text, double energy_w = 1.0,
                      double energy_h = 1.0) {
  if (image.cols() == 0) throw ArgumentError("loss_mi: empty batch");
  if (static_cast<std::size_t>(image.cols()) != labels.size()) throw ArgumentError("loss_mi: label count mismatch");
  check_labels(labels, text.cols());
  const double bound = std::sqrt(energy_w * energy_h);
  double acc = 0.0;
  for (Index n = 0; n < image.cols(); ++n) {
    const double r = image.col(n).dot(text.col(labels[n])) - bound;
    acc += r * r;
  }
  return acc;
}

inline double mi_scale(MiReduction r, Index n) {
  return r == MiReduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
}

struct LossBreakdown {
  double clip = 0.0;
  double lc = 0.0;   // unweighted L_LC
  double mi = 0.0;   // L_MI after the configured reduction, unweighted
  double w1 = 0.0, w2 = 0.0;
  double total = 0.0;
  std::size_t clamped = 0;

  double weighted_lc() const { return w1 * lc; }
  double weighted_mi() const { return w2 * mi; }
};

inline LossBreakdown loss_total(const Matrix& probs, std::span<const int> labels, const Matrix& text,
                                const Matrix& image, const LossWeights& weights, double energy_w = 1.0,
                                double energy_h = 1.0) {
  weights.validate();
  const ClipLoss c = loss_clip_detailed(probs, labels);
  LossBreakdown b;
  b.clip = c.value;
  b.clamped = c.clamped;
  b.lc = loss_lc(text, energy_w);
  b.mi = loss_mi(image, labels, text, energy_w, energy_h) * mi_scale(weights.mi_reduction, image.cols());
  b.w1 = weights.w1;
  b.w2 = weights.w2;
  b.total = b.clip + b.w1 * b.lc + b.w2 * b.mi;
  return b;
}

// Convenience: probabilities from the reps, then loss_total.
inline LossBreakdown loss_from_reps(const Matrix& image, std::span<const int> labels, const Matrix& text,
                                    const LossWeights& weights, double lambda_temp, double energy_w = 1.0,
                                    double energy_h = 1.0) {
  return loss_total(predict_probs(image, text, lambda_temp), labels, text, image, weights, energy_w, energy_h);
}

struct RepGradients {
  // Weighted contributions; d_text() / d_image() are their sums.
  Matrix text_clip, text_lc, text_mi;  // d x K
  Matrix image_clip, image_mi;         // d x N
  // Per class: the two bracketed terms of dL_CLIP/dg_k and how many samples feed each.
  Vector cohesion_norm, repulsion_norm;
  std::vector<Index> cohesion_terms, repulsion_terms;

  Matrix d_text() const { return text_clip + text_lc + text_mi; }
  Matrix d_image() const { return image_clip + image_mi; }
};

inline RepGradients rep_gradients(const Matrix& image, std::span<const int> labels, const Matrix& text,
                                  const LossWeights& weights, double lambda_temp, double energy_w = 1.0,
                                  double energy_h = 1.0) {
  weights.validate();
  const Index k = text.cols(), n = image.cols(), d = text.rows();
  if (n == 0) throw ArgumentError("rep_gradients: empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) throw ArgumentError("rep_gradients: label count mismatch");
  check_labels(labels, k);
  const Matrix probs = predict_probs(image, text, lambda_temp);  // N x K
  const double scale = 1.0 / (static_cast<double>(n) * lambda_temp);

  RepGradients g;
  Matrix cohesion = Matrix::Zero(d, k), repulsion = Matrix::Zero(d, k);
  g.cohesion_terms.assign(static_cast<std::size_t>(k), 0);
  g.repulsion_terms.assign(static_cast<std::size_t>(k), 0);
  for (Index s = 0; s < n; ++s) {
    for (Index c = 0; c < k; ++c) {
      if (c == labels[s]) {
        cohesion.col(c) += (probs(s, c) - 1.0) * image.col(s);
        ++g.cohesion_terms[static_cast<std::size_t>(c)];
      } else {
        repulsion.col(c) += probs(s, c) * image.col(s);
        ++g.repulsion_terms[static_cast<std::size_t>(c)];
      }
    }
  }
  cohesion *= scale;
  repulsion *= scale;
  g.text_clip = cohesion + repulsion;
  g.cohesion_norm = cohesion.colwise().norm().transpose();
  g.repulsion_norm = repulsion.colwise().norm().transpose();

  Matrix resid = probs;  // p - y
  for (Index s = 0; s < n; ++s) resid(s, labels[s]) -= 1.0;
  g.image_clip = scale * text * resid.transpose();

  g.text_lc = Matrix::Zero(d, k);
  if (weights.w1 != 0.0) {
    if (k < 2) throw ArgumentError("rep_gradients: L_LC needs at least 2 text reps");
    const double target = energy_w * lcd_mu(k);
    Matrix coeff = text.transpose() * text;
    coeff.array() -= target;
    coeff.diagonal().setZero();
    g.text_lc = (4.0 * weights.w1) * text * coeff;
  }

  g.text_mi = Matrix::Zero(d, k);
  g.image_mi = Matrix::Zero(d, n);
  if (weights.w2 != 0.0) {
    const double bound = std::sqrt(energy_w * energy_h);
    const double w = weights.w2 * mi_scale(weights.mi_reduction, n);
    for (Index s = 0; s < n; ++s) {
      const int y = labels[s];
      const double r = 2.0 * w * (image.col(s).dot(text.col(y)) - bound);
      g.image_mi.col(s) = r * text.col(y);
      g.text_mi.col(y) += r * image.col(s);
    }
  }
  return g;
}

// A labeled training batch. labels index into class_ids (local class indices).
struct Batch {
  Matrix features;  // raw_dim x N
  Labels labels;
  std::vector<int> class_ids;

  Index size() const { return features.cols(); }
};

struct ParamGradients {
  Vector context;                     // b * d_e
  std::optional<Vector> vision_prompt;  // present iff the vision prompt is enabled

  double squared_norm() const {
    return context.squaredNorm() + (vision_prompt ? vision_prompt->squaredNorm() : 0.0);
  }
  double norm() const { return std::sqrt(squared_norm()); }
};

// d/dx of normalize(x) applied to an upstream gradient: (I - y y^T) grad / |x|.
inline Matrix backprop_normalize(const Matrix& reps, const Vector& norms, const Matrix& upstream) {
  Matrix out(upstream.rows(), upstream.cols());
  for (Index j = 0; j < upstream.cols(); ++j) {
    const auto y = reps.col(j);
    out.col(j) = (upstream.col(j) - y * y.dot(upstream.col(j))) / norms(j);
  }
  return out;
}

struct ForwardPass {
  Encoded text;
  Encoded image;
  Matrix probs;  // N x K
};

inline ForwardPass forward(const ModelParams& p, const Batch& batch) {
  ForwardPass f{encode_text(p, batch.class_ids), encode_image(p, batch.features), {}};
  f.probs = predict_probs(f.image.reps, f.text.reps, p.lambda_temp());
  return f;
}

// Chain rule from representation gradients to the learnable parameters.
inline ParamGradients backprop_to_params(const ModelParams& p, const Batch& batch, const ForwardPass& f,
                                         const RepGradients& rg) {
  if (f.text.cache.batch_size() != static_cast<Index>(batch.class_ids.size()) ||
      f.text.cache.ids != batch.class_ids || f.image.cache.batch_size() != batch.size() ||
      f.text.reps.cols() != f.text.cache.batch_size() || f.image.reps.cols() != f.image.cache.batch_size())
    throw ContractViolation("backprop_to_params: encode cache does not correspond to this batch");
  const Matrix dt = rg.d_text(), di = rg.d_image();
  if (dt.cols() != f.text.reps.cols() || di.cols() != f.image.reps.cols())
    throw ContractViolation("backprop_to_params: gradient shape does not match cached forward pass");

  const Matrix d_text_pre = backprop_normalize(f.text.reps, f.text.cache.norms, dt);
  ParamGradients g;
  g.context = p.context_block().transpose() * d_text_pre.rowwise().sum();
  if (p.config.vision_prompt_enabled) {
    const Matrix d_img_pre = backprop_normalize(f.image.reps, f.image.cache.norms, di);
    g.vision_prompt = p.prompt_injection.transpose() * d_img_pre.rowwise().sum();
  }
  return g;
}

struct ObjectiveGrad {
  LossBreakdown loss;
  RepGradients rep;
  ParamGradients params;
};

inline ObjectiveGrad objective_and_gradients(const ModelParams& p, const Batch& batch, const LossWeights& weights) {
  const ForwardPass f = forward(p, batch);
  ObjectiveGrad o;
  o.loss = loss_total(f.probs, batch.labels, f.text.reps, f.image.reps, weights);
  o.rep = rep_gradients(f.image.reps, batch.labels, f.text.reps, weights, p.lambda_temp());
  o.params = backprop_to_params(p, batch, f, o.rep);
  return o;
}

inline ParamGradients param_gradients(const ModelParams& p, const Batch& batch, const LossWeights& weights) {
  return objective_and_gradients(p, batch, weights).params;
}

inline LossBreakdown objective(const ModelParams& p, const Batch& batch, const LossWeights& weights) {
  const ForwardPass f = forward(p, batch);
  return loss_total(f.probs, batch.labels, f.text.reps, f.image.reps, weights);
}

// Projected gradient descent of L_LC over free unit vectors: a gradient step
// on the columns followed by renormalization.
struct SphereDescentResult {
  Matrix reps;
  long steps = 0;
  double loss = 0.0;
  double max_pair_deviation = 0.0;  // max over i != j of |<g_i, g_j> - mu|
};

inline SphereDescentResult lc_projected_descent(Matrix reps, double learning_rate, long max_steps,
                                                double tolerance = 1e-10) {
  const Index k = reps.cols();
  require(k >= 2, "lc_projected_descent: need at least 2 vectors");
  require(learning_rate > 0.0 && max_steps >= 0, "lc_projected_descent: bad step size or step count");
  reps = normalize_columns(reps);
  const double mu = lcd_mu(k);
  auto deviation = [&](const Matrix& g) {
    Matrix s = g.transpose() * g;
    s.array() -= mu;
    s.diagonal().setZero();
    return s;
  };
  SphereDescentResult r;
  for (r.steps = 0;; ++r.steps) {
    const Matrix dev = deviation(reps);
    r.max_pair_deviation = dev.cwiseAbs().maxCoeff();
    if (r.max_pair_deviation <= tolerance || r.steps == max_steps) break;
    reps = normalize_columns(reps - learning_rate * 4.0 * reps * dev);
  }
  r.loss = loss_lc(reps);
  r.reps = std::move(reps);
  return r;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

enum class LossComponent { Total, Clip, Lc, Mi };

inline const char* to_string(LossComponent c) {
  switch (c) {
    case LossComponent::Total: return "total";
    case LossComponent::Clip: return "clip";
    case LossComponent::Lc: return "lc";
    case LossComponent::Mi: return "mi";
  }
  return "?";
}

// Weights that isolate one component (with unit weight) or keep all of them.
inline LossWeights isolate(const LossWeights& w, LossComponent c) {
  switch (c) {
    case LossComponent::Total: return w;
    case LossComponent::Clip: return {0.0, 0.0, w.mi_reduction};
    case LossComponent::Lc: return {1.0, 0.0, w.mi_reduction};
    case LossComponent::Mi: return {0.0, 1.0, w.mi_reduction};
  }
  return w;
}

inline double component_value(const LossBreakdown& b, LossComponent c) {
  switch (c) {
    case LossComponent::Total: return b.total;
    case LossComponent::Clip: return b.clip;
    case LossComponent::Lc: return b.w1 * b.lc;
    case LossComponent::Mi: return b.w2 * b.mi;
  }
  return b.total;
}

inline Matrix component_text_grad(const RepGradients& g, LossComponent c) {
  switch (c) {
    case LossComponent::Total: return g.d_text();
    case LossComponent::Clip: return g.text_clip;
    case LossComponent::Lc: return g.text_lc;
    case LossComponent::Mi: return g.text_mi;
  }
  return g.d_text();
}

inline Matrix component_image_grad(const RepGradients& g, LossComponent c) {
  switch (c) {
    case LossComponent::Total: return g.d_image();
    case LossComponent::Clip: return g.image_clip;
    case LossComponent::Lc: return Matrix::Zero(g.image_clip.rows(), g.image_clip.cols());
    case LossComponent::Mi: return g.image_mi;
  }
  return g.d_image();
}

// Parameter gradient of a single weighted component.
inline ParamGradients component_param_gradients(const ModelParams& p, const Batch& batch, const LossWeights& weights,
                                               LossComponent c) {
  const ForwardPass f = forward(p, batch);
  RepGradients g = rep_gradients(f.image.reps, batch.labels, f.text.reps, weights, p.lambda_temp());
  if (c != LossComponent::Total) {
    const Matrix t = component_text_grad(g, c), i = component_image_grad(g, c);
    g.text_clip = t;
    g.image_clip = i;
    g.text_lc.setZero();
    g.text_mi.setZero();
    g.image_mi.setZero();
  }
  return backprop_to_params(p, batch, f, g);
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;

  void record(const std::string& name, double analytic, double numeric) {
    ++coordinates_checked;
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    if (worst_coordinate.empty() || err > max_rel_error) {
      max_rel_error = err;
      worst_coordinate = name;
      worst_analytic = analytic;
      worst_numeric = numeric;
    }
  }

  void merge(const GradCheckReport& o) {
    coordinates_checked += o.coordinates_checked;
    if (o.max_rel_error > max_rel_error || worst_coordinate.empty()) {
      max_rel_error = o.max_rel_error;
      worst_coordinate = o.worst_coordinate;
      worst_analytic = o.worst_analytic;
      worst_numeric = o.worst_numeric;
    }
  }
};

// Central differences of one loss component against rep_gradients, perturbing
// representation coordinates as free (un-normalized) values.
inline GradCheckReport rep_grad_check(const Matrix& image, std::span<const int> labels, const Matrix& text,
                                      const LossWeights& weights, double lambda_temp, double step,
                                      LossComponent component = LossComponent::Total) {
  require(step > 0.0, "rep_grad_check: step must be > 0");
  const LossWeights w = component == LossComponent::Total ? weights : isolate(weights, component);
  const RepGradients g = rep_gradients(image, labels, text, w, lambda_temp);
  const Matrix gt = component_text_grad(g, component), gi = component_image_grad(g, component);
  auto eval = [&](const Matrix& im, const Matrix& tx) {
    return component_value(loss_from_reps(im, labels, tx, w, lambda_temp), component);
  };
  GradCheckReport r;
  Matrix tx = text;
  for (Index j = 0; j < tx.cols(); ++j)
    for (Index i = 0; i < tx.rows(); ++i) {
      const double keep = tx(i, j);
      tx(i, j) = keep + step;
      const double up = eval(image, tx);
      tx(i, j) = keep - step;
      const double down = eval(image, tx);
      tx(i, j) = keep;
      r.record("text[" + std::to_string(j) + "][" + std::to_string(i) + "]", gt(i, j), (up - down) / (2 * step));
    }
  Matrix im = image;
  for (Index j = 0; j < im.cols(); ++j)
    for (Index i = 0; i < im.rows(); ++i) {
      const double keep = im(i, j);
      im(i, j) = keep + step;
      const double up = eval(im, text);
      im(i, j) = keep - step;
      const double down = eval(im, text);
      im(i, j) = keep;
      r.record("image[" + std::to_string(j) + "][" + std::to_string(i) + "]", gi(i, j), (up - down) / (2 * step));
    }
  return r;
}

// Central differences of one loss component with respect to every learnable
// coordinate, or a seeded random subset of max_coordinates of them.
inline GradCheckReport grad_check(const ModelParams& params, const Batch& batch, const LossWeights& weights,
                                  double step, LossComponent component = LossComponent::Total,
                                  std::size_t max_coordinates = 0, std::uint64_t subset_seed = 0) {
  require(step > 0.0, "grad_check: step must be > 0");
  const LossWeights w = component == LossComponent::Total ? weights : isolate(weights, component);
  const ParamGradients analytic = component_param_gradients(params, batch, w, component);

  struct Coord {
    bool vision;
    Index index;
  };
  std::vector<Coord> coords;
  for (Index i = 0; i < params.context.size(); ++i) coords.push_back({false, i});
  if (params.config.vision_prompt_enabled)
    for (Index i = 0; i < params.vision_prompt.size(); ++i) coords.push_back({true, i});
  if (max_coordinates > 0 && coords.size() > max_coordinates) {
    Rng rng(subset_seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  ModelParams probe = params;
  GradCheckReport r;
  for (const Coord& c : coords) {
    double& x = c.vision ? probe.vision_prompt(c.index) : probe.context(c.index);
    const double keep = x;
    x = keep + step;
    const double up = component_value(objective(probe, batch, w), component);
    x = keep - step;
    const double down = component_value(objective(probe, batch, w), component);
    x = keep;
    const double a = c.vision ? (*analytic.vision_prompt)(c.index) : analytic.context(c.index);
    r.record(std::string(c.vision ? "vision_prompt[" : "context[") + std::to_string(c.index) + "]", a,
             (up - down) / (2 * step));
  }
  return r;
}

}  // namespace npt
