#pragma once

// Plain gradient descent on the learnable prompts, with per-step diagnostics.

#include "npt/data.hpp"
#include "npt/losses.hpp"
#include "npt/metrics.hpp"
#include "npt/model.hpp"

#include <numeric>
#include <ostream>
#include <sstream>

namespace npt {

enum class Method { Baseline, Npt };

inline const char* to_string(Method m) { return m == Method::Npt ? "npt" : "baseline"; }

inline Method method_from_string(const std::string& s) {
  if (s == "baseline") return Method::Baseline;
  if (s == "npt") return Method::Npt;
  throw ArgumentError("unknown method '" + s + "' (expected baseline|npt)");
}

struct TrainConfig {
  long steps = 500;
  double learning_rate = 0.1;
  Index batch_size = 0;  // 0 = full batch
  LossWeights weights;   // used by Method::Npt
  Method method = Method::Npt;
  std::uint64_t seed = 0;  // minibatch order
  long record_every = 25;

  void validate() const {
    require(steps >= 1, "TrainConfig: steps must be >= 1");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "TrainConfig: learning_rate must be >= 0");
    require(batch_size >= 0, "TrainConfig: batch_size must be >= 0");
    require(record_every >= 1, "TrainConfig: record_every must be >= 1");
    weights.validate();
  }

  LossWeights effective_weights() const {
    if (method == Method::Baseline) return {0.0, 0.0, weights.mi_reduction};
    return weights;
  }
};

struct TrajectoryRow {
  long step = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  std::vector<double> cohesion_norm, repulsion_norm;  // per base class
  double delta_lcd = 0.0, mid_error = 0.0, nc1 = 0.0, nc2 = 0.0, nc3 = 0.0;
  double base_train_acc = 0.0;
};

struct Trajectory {
  std::vector<int> tracked_classes;
  std::vector<TrajectoryRow> rows;

  void write_csv(std::ostream& os) const {
    os << "step,loss_total,loss_clip,loss_lc,loss_mi,grad_norm";
    for (int k : tracked_classes) os << ",cohesion_" << k;
    for (int k : tracked_classes) os << ",repulsion_" << k;
    os << ",delta_lcd,mid_error,nc1,nc2,nc3,base_train_acc\n";
    auto f = [](double x) { return format_double(x); };
    for (const auto& r : rows) {
      os << r.step << ',' << f(r.loss.total) << ',' << f(r.loss.clip) << ',' << f(r.loss.lc) << ','
         << f(r.loss.mi) << ',' << f(r.grad_norm);
      for (double c : r.cohesion_norm) os << ',' << f(c);
      for (double c : r.repulsion_norm) os << ',' << f(c);
      os << ',' << f(r.delta_lcd) << ',' << f(r.mid_error) << ',' << f(r.nc1) << ',' << f(r.nc2) << ','
         << f(r.nc3) << ',' << f(r.base_train_acc) << '\n';
    }
  }
};

inline Batch make_batch(const Dataset& ds, std::span<const int> class_ids) {
  Batch b;
  b.features = ds.features;
  b.labels = local_labels(ds.labels, class_ids);
  b.class_ids.assign(class_ids.begin(), class_ids.end());
  return b;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), "accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace detail {

inline double safe_metric(double (*f)(const Matrix&, std::span<const int>, Index), const Matrix& im,
                          std::span<const int> y, Index k) {
  try {
    return f(im, y, k);
  } catch (const DegenerateGeometryError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline TrajectoryRow diagnose(long step, const ModelParams& p, const Batch& batch, const LossWeights& w) {
  const ObjectiveGrad og = objective_and_gradients(p, batch, w);
  const ForwardPass f = forward(p, batch);
  TrajectoryRow r;
  r.step = step;
  r.loss = og.loss;
  r.grad_norm = og.params.norm();
  r.cohesion_norm.assign(og.rep.cohesion_norm.data(), og.rep.cohesion_norm.data() + og.rep.cohesion_norm.size());
  r.repulsion_norm.assign(og.rep.repulsion_norm.data(), og.rep.repulsion_norm.data() + og.rep.repulsion_norm.size());
  const Index k = f.text.reps.cols();
  r.delta_lcd = k >= 2 ? delta_lcd(f.text.reps) : 0.0;
  r.mid_error = delta_mid(f.image.reps, batch.labels, f.text.reps).error;
  r.nc1 = feature_collapse_nc1(f.image.reps, batch.labels, k);
  r.nc2 = k >= 2 ? safe_metric(&prototype_collapse_nc2, f.image.reps, batch.labels, k) : 0.0;
  try {
    r.nc3 = k >= 2 ? classifier_collapse_nc3(f.text.reps, f.image.reps, batch.labels) : 0.0;
  } catch (const DegenerateGeometryError&) {
    r.nc3 = std::numeric_limits<double>::quiet_NaN();
  }
  r.base_train_acc = accuracy(argmax_rows(f.probs), batch.labels);
  return r;
}

inline bool finite(const ParamGradients& g) {
  return g.context.allFinite() && (!g.vision_prompt || g.vision_prompt->allFinite());
}

}  // namespace detail

struct TrainResult {
  ModelParams params;
  Trajectory trajectory;
};

// Updates only the context tokens (and the vision prompt when enabled). Rows
// are recorded at step 0, every record_every steps, and after the last step.
inline TrainResult train(const ModelParams& initial, const Batch& train_set, const TrainConfig& config) {
  config.validate();
  require(train_set.size() > 0, "train: empty training set");
  const LossWeights w = config.effective_weights();
  TrainResult out{initial, {}};
  out.trajectory.tracked_classes = train_set.class_ids;
  ModelParams& p = out.params;

  Rng order_rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::size_t cursor = order.size();
  auto next_batch = [&]() -> Batch {
    if (config.batch_size == 0 || config.batch_size >= train_set.size()) return train_set;
    Batch mb;
    mb.class_ids = train_set.class_ids;
    mb.features.resize(train_set.features.rows(), config.batch_size);
    for (Index i = 0; i < config.batch_size; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const Index src = order[cursor++];
      mb.features.col(i) = train_set.features.col(src);
      mb.labels.push_back(train_set.labels[static_cast<std::size_t>(src)]);
    }
    return mb;
  };

  auto abort_if_bad = [](long step, const LossBreakdown& l, const ParamGradients& g) {
    if (std::isfinite(l.total) && detail::finite(g)) return;
    std::ostringstream os;
    os << "non-finite value at step " << step << ": loss_total=" << l.total << " clip=" << l.clip
       << " lc=" << l.lc << " mi=" << l.mi << " grad_finite=" << detail::finite(g);
    throw NumericalAbort(os.str(), step);
  };

  // After the first update, an encoder output that cannot be normalized means
  // the prompts have blown up; report it as a divergence at that step.
  auto guarded = [&](long step, auto&& body) {
    try {
      return body();
    } catch (const DegenerateGeometryError& e) {
      if (step == 0) throw;
      throw NumericalAbort(std::string("diverged at step ") + std::to_string(step) + ": " + e.what(), step);
    }
  };

  for (long step = 0; step < config.steps; ++step) {
    guarded(step, [&] {
      if (step % config.record_every == 0) out.trajectory.rows.push_back(detail::diagnose(step, p, train_set, w));
      const Batch batch = next_batch();
      const ObjectiveGrad og = objective_and_gradients(p, batch, w);
      abort_if_bad(step, og.loss, og.params);
      p.context -= config.learning_rate * og.params.context;
      if (og.params.vision_prompt) p.vision_prompt -= config.learning_rate * *og.params.vision_prompt;
    });
  }
  TrajectoryRow last = guarded(config.steps, [&] { return detail::diagnose(config.steps, p, train_set, w); });
  if (!std::isfinite(last.loss.total) || !std::isfinite(last.grad_norm))
    throw NumericalAbort("non-finite value after the final step", config.steps);
  out.trajectory.rows.push_back(std::move(last));
  return out;
}

// Accuracy of argmax over the Eq.-1 probabilities restricted to class_ids.
inline double evaluate(const ModelParams& p, const Dataset& test_set, std::span<const int> class_ids,
                       double lambda_temp) {
  if (test_set.size() == 0) throw ArgumentError("evaluate: empty test set");
  const Labels truth = local_labels(test_set.labels, class_ids);
  const Encoded text = encode_text(p, class_ids);
  const Encoded image = encode_image(p, test_set.features);
  return accuracy(argmax_rows(predict_probs(image.reps, text.reps, lambda_temp)), truth);
}

inline double evaluate(const ModelParams& p, const Dataset& test_set, std::span<const int> class_ids) {
  return evaluate(p, test_set, class_ids, p.lambda_temp());
}

// 2bn/(b+n); 0 when either is 0.
inline double harmonic_mean(double base_acc, double novel_acc) {
  require(base_acc >= 0.0 && base_acc <= 1.0 && novel_acc >= 0.0 && novel_acc <= 1.0,
          "harmonic_mean: accuracies must lie in [0, 1]");
  if (base_acc == 0.0 || novel_acc == 0.0) return 0.0;
  return 2.0 * base_acc * novel_acc / (base_acc + novel_acc);
}

// Reps of one split, ready for collapse_report.
inline RepresentationSet representations(const ModelParams& p, const Dataset& ds, std::span<const int> class_ids) {
  RepresentationSet r;
  r.text = encode_text(p, class_ids).reps;
  r.image = encode_image(p, ds.features).reps;
  r.labels = local_labels(ds.labels, class_ids);
  return r;
}

}  // namespace npt
