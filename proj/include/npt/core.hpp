#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace npt {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Rng = std::mt19937_64;

// Error taxonomy. The CLI maps these onto exit codes.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionError : ArgumentError {
  using ArgumentError::ArgumentError;
};

struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct NumericalAbort : std::runtime_error {
  NumericalAbort(const std::string& what, long step_index)
      : std::runtime_error(what), step(step_index) {}
  long step;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  // column-major fill order keeps draws reproducible regardless of storage tricks
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline Vector gaussian_vector(Index n, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

// Unit-normalizes every column. Throws on a zero column.
inline Matrix normalize_columns(const Matrix& m) {
  Matrix out = m;
  for (Index j = 0; j < m.cols(); ++j) {
    const double n = m.col(j).norm();
    if (!(n > 0.0)) throw DegenerateGeometryError("cannot normalize a zero column " + std::to_string(j));
    out.col(j) /= n;
  }
  return out;
}

inline int num_classes_in(std::span<const int> labels) {
  int k = 0;
  for (int y : labels) k = std::max(k, y + 1);
  return k;
}

inline void check_labels(std::span<const int> labels, Index num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ArgumentError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                          " is outside [0, " + std::to_string(num_classes) + ")");
  }
}

}  // namespace npt
