#pragma once

// Collapse diagnostics for paired text/image representations.
//
// Text reps are d x K (one column per class), image reps d x N (one column per
// sample) with labels in [0, K). All functions are pure.

#include "npt/core.hpp"
#include "npt/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <sstream>
#include <string>

namespace npt {

struct RepresentationSet {
  Matrix text;   // d x K
  Matrix image;  // d x N
  Labels labels;
  double energy_w = 1.0;
  double energy_h = 1.0;

  Index num_classes() const { return text.cols(); }

  // Norms must equal sqrt(E_W) / sqrt(E_H); labels must index text columns.
  void validate(double tol = 1e-9) const {
    require(text.rows() == image.rows() || image.cols() == 0, "RepresentationSet: dimension mismatch");
    require(static_cast<std::size_t>(image.cols()) == labels.size(), "RepresentationSet: label count mismatch");
    check_labels(labels, text.cols());
    const double rw = std::sqrt(energy_w), rh = std::sqrt(energy_h);
    for (Index k = 0; k < text.cols(); ++k)
      require(std::abs(text.col(k).norm() - rw) <= tol, "RepresentationSet: text rep norm != sqrt(E_W)");
    for (Index n = 0; n < image.cols(); ++n)
      require(std::abs(image.col(n).norm() - rh) <= tol, "RepresentationSet: image rep norm != sqrt(E_H)");
  }
};

inline double lcd_mu(Index k) { return -1.0 / static_cast<double>(k - 1); }

// Average over ordered pairs i != j of <g_i, g_j> - E_W * mu.
inline double delta_lcd(const Matrix& text, double energy_w = 1.0) {
  const Index k = text.cols();
  if (k < 2) throw ArgumentError("delta_lcd: need at least 2 text reps");
  const Matrix s = text.transpose() * text;
  const double off_sum = s.sum() - s.trace();
  const double pairs = static_cast<double>(k * (k - 1));
  return off_sum / pairs - energy_w * lcd_mu(k);
}

struct MidValue {
  double signed_value = 0.0;  // mean matched similarity minus sqrt(E_W * E_H)
  double error = 0.0;         // = -signed_value
};

inline MidValue delta_mid(const Matrix& image, std::span<const int> labels, const Matrix& text,
                          double energy_w = 1.0, double energy_h = 1.0) {
  if (image.cols() == 0) throw ArgumentError("delta_mid: empty image set");
  if (static_cast<std::size_t>(image.cols()) != labels.size())
    throw ArgumentError("delta_mid: label count mismatch");
  check_labels(labels, text.cols());
  const double bound = std::sqrt(energy_w * energy_h);
  double acc = 0.0;
  for (Index n = 0; n < image.cols(); ++n) acc += image.col(n).dot(text.col(labels[n])) - bound;
  MidValue v;
  v.signed_value = acc / static_cast<double>(image.cols());
  v.error = -v.signed_value;
  return v;
}

struct Prototypes {
  Matrix means;        // d x K
  Vector global_mean;  // d
  std::vector<Index> counts;
};

inline Prototypes class_prototypes(const Matrix& image, std::span<const int> labels, Index num_classes) {
  if (static_cast<std::size_t>(image.cols()) != labels.size())
    throw ArgumentError("class_prototypes: label count mismatch");
  check_labels(labels, num_classes);
  Prototypes p;
  p.means = Matrix::Zero(image.rows(), num_classes);
  p.counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (Index n = 0; n < image.cols(); ++n) {
    p.means.col(labels[n]) += image.col(n);
    ++p.counts[static_cast<std::size_t>(labels[n])];
  }
  for (Index k = 0; k < num_classes; ++k) {
    if (p.counts[static_cast<std::size_t>(k)] == 0)
      throw ArgumentError("class_prototypes: class " + std::to_string(k) + " has no samples");
    p.means.col(k) /= static_cast<double>(p.counts[static_cast<std::size_t>(k)]);
  }
  p.global_mean = image.rowwise().mean();
  return p;
}

// Mean over classes of trace of the within-class covariance.
inline double feature_collapse_nc1(const Matrix& image, std::span<const int> labels, Index num_classes) {
  const Prototypes p = class_prototypes(image, labels, num_classes);
  Vector trace = Vector::Zero(num_classes);
  for (Index n = 0; n < image.cols(); ++n)
    trace(labels[n]) += (image.col(n) - p.means.col(labels[n])).squaredNorm();
  double total = 0.0;
  for (Index k = 0; k < num_classes; ++k) total += trace(k) / static_cast<double>(p.counts[static_cast<std::size_t>(k)]);
  return total / static_cast<double>(num_classes);
}

// Globally centered, unit-normalized prototypes (d x K).
inline Matrix centered_prototypes(const Prototypes& p) {
  Matrix c = p.means.colwise() - p.global_mean;
  for (Index k = 0; k < c.cols(); ++k) {
    const double n = c.col(k).norm();
    if (!(n > 1e-12))
      throw DegenerateGeometryError("prototype of class " + std::to_string(k) + " coincides with the global mean");
    c.col(k) /= n;
  }
  return c;
}

inline double prototype_collapse_nc2(const Matrix& image, std::span<const int> labels, Index num_classes) {
  if (num_classes < 2) throw ArgumentError("prototype_collapse_nc2: need K >= 2");
  const Matrix c = centered_prototypes(class_prototypes(image, labels, num_classes));
  return gram_distance(c, etf_target_gram(num_classes));
}

inline double classifier_collapse_nc3(const Matrix& text, const Matrix& image, std::span<const int> labels) {
  const Index k = text.cols();
  if (k < 2) throw ArgumentError("classifier_collapse_nc3: need K >= 2");
  const Matrix c = centered_prototypes(class_prototypes(image, labels, k));
  const Matrix g = normalize_columns(text);
  return (g - c).colwise().norm().mean();
}

struct SummaryStats {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

inline SummaryStats summarize(const std::vector<double>& xs) {
  SummaryStats s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

struct CollapseReport {
  double delta_lcd = 0.0;
  double delta_mid_signed = 0.0;
  double mid_error = 0.0;
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;
  SummaryStats text_norms;
  SummaryStats prototype_norms;
  SummaryStats text_pair_cosines;
  SummaryStats prototype_pair_cosines;  // centered, normalized prototypes

  static constexpr const char* kCsvHeader = "delta_lcd,delta_mid_signed,mid_error,nc1,nc2,nc3";

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << delta_lcd << ',' << delta_mid_signed << ',' << mid_error << ',' << nc1 << ',' << nc2 << ',' << nc3;
    return os.str();
  }

  bool finite() const {
    return std::isfinite(delta_lcd) && std::isfinite(delta_mid_signed) && std::isfinite(mid_error) &&
           std::isfinite(nc1) && std::isfinite(nc2) && std::isfinite(nc3);
  }
};

inline nlohmann::json to_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}};
}

inline nlohmann::json to_json(const CollapseReport& r) {
  return {{"delta_lcd", r.delta_lcd},
          {"delta_mid_signed", r.delta_mid_signed},
          {"mid_error", r.mid_error},
          {"nc1", r.nc1},
          {"nc2", r.nc2},
          {"nc3", r.nc3},
          {"text_norms", to_json(r.text_norms)},
          {"prototype_norms", to_json(r.prototype_norms)},
          {"text_pair_cosines", to_json(r.text_pair_cosines)},
          {"prototype_pair_cosines", to_json(r.prototype_pair_cosines)}};
}

inline std::vector<double> pair_cosines(const Matrix& cols) {
  std::vector<double> out;
  for (Index i = 0; i < cols.cols(); ++i)
    for (Index j = i + 1; j < cols.cols(); ++j)
      out.push_back(cols.col(i).dot(cols.col(j)) / (cols.col(i).norm() * cols.col(j).norm()));
  return out;
}

inline CollapseReport collapse_report(const RepresentationSet& reps) {
  const Index k = reps.num_classes();
  CollapseReport r;
  r.delta_lcd = delta_lcd(reps.text, reps.energy_w);
  const MidValue mid = delta_mid(reps.image, reps.labels, reps.text, reps.energy_w, reps.energy_h);
  r.delta_mid_signed = mid.signed_value;
  r.mid_error = mid.error;
  r.nc1 = feature_collapse_nc1(reps.image, reps.labels, k);
  r.nc2 = prototype_collapse_nc2(reps.image, reps.labels, k);
  r.nc3 = classifier_collapse_nc3(reps.text, reps.image, reps.labels);

  std::vector<double> tn, pn;
  for (Index i = 0; i < k; ++i) tn.push_back(reps.text.col(i).norm());
  const Prototypes p = class_prototypes(reps.image, reps.labels, k);
  for (Index i = 0; i < k; ++i) pn.push_back(p.means.col(i).norm());
  r.text_norms = summarize(tn);
  r.prototype_norms = summarize(pn);
  r.text_pair_cosines = summarize(pair_cosines(reps.text));
  r.prototype_pair_cosines = summarize(pair_cosines(centered_prototypes(p)));
  return r;
}

}  // namespace npt
