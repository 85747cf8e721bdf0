#pragma once

// Simplex equiangular tight frames and distances to them.
//
// A simplex ETF on K classes is a set of K unit vectors whose pairwise inner
// products all equal -1/(K-1). It is built as
//
//   M = sqrt(K/(K-1)) * U * (I_K - 1/K * 1 1^T)
//
// with U a d x K matrix of orthonormal columns.

#include "npt/core.hpp"

#include <string>

namespace npt {

struct EtfFrame {
  Index dim = 0;
  Index num_classes = 0;
  Matrix columns;  // dim x num_classes, unit-norm columns
  std::uint64_t rotation_seed = 0;

  Matrix gram() const { return columns.transpose() * columns; }
};

// Orthonormal d x K matrix from K Gaussian d-vectors. Columns are redrawn in
// the (probability zero) event the draw is rank deficient.
inline Matrix random_partial_rotation(Index d, Index k, std::uint64_t seed) {
  if (k < 1) throw ArgumentError("random_partial_rotation: K must be >= 1");
  if (d < k)
    throw DimensionError("random_partial_rotation: need d >= K, got d=" + std::to_string(d) +
                         " K=" + std::to_string(k));
  Rng rng(seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Matrix g = gaussian_matrix(d, k, 1.0, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    bool full_rank = true;
    for (Index i = 0; i < k; ++i) full_rank = full_rank && std::abs(r(i, i)) > 1e-10;
    if (!full_rank) continue;
    Matrix q = qr.householderQ() * Matrix::Identity(d, k);
    // fix the sign ambiguity so Q depends only on the Gaussian draw
    for (Index i = 0; i < k; ++i)
      if (r(i, i) < 0) q.col(i) = -q.col(i);
    return q;
  }
  throw DegenerateGeometryError("random_partial_rotation: repeated rank-deficient draws");
}

inline Matrix etf_target_gram(Index k) {
  if (k < 2) throw ArgumentError("etf_target_gram: K must be >= 2");
  const double mu = -1.0 / static_cast<double>(k - 1);
  Matrix g = Matrix::Constant(k, k, mu);
  g.diagonal().setOnes();
  return g;
}

// ETF from a caller-supplied orthonormal d x K rotation.
inline EtfFrame build_etf_from_rotation(const Matrix& rotation, std::uint64_t seed = 0) {
  const Index k = rotation.cols();
  const Index d = rotation.rows();
  if (k < 2) throw ArgumentError("build_etf: K must be >= 2");
  if (d < k) throw DimensionError("build_etf: rotation must be d x K with d >= K");
  const double kd = static_cast<double>(k);
  const Matrix centering = Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / kd);
  EtfFrame f;
  f.dim = d;
  f.num_classes = k;
  f.columns = std::sqrt(kd / (kd - 1.0)) * rotation * centering;
  f.rotation_seed = seed;
  return f;
}

inline EtfFrame build_etf(Index k, Index d, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("build_etf: K must be >= 2");
  if (d < k)
    throw DimensionError("build_etf: need d >= K (d = K-1 is unsupported), got d=" +
                         std::to_string(d) + " K=" + std::to_string(k));
  return build_etf_from_rotation(random_partial_rotation(d, k, seed), seed);
}

// Frobenius distance between Gram(reps) and target. reps holds one vector per column.
inline double gram_distance(const Matrix& reps, const Matrix& target) {
  if (target.rows() != target.cols()) throw ArgumentError("gram_distance: target must be square");
  if (reps.cols() != target.rows())
    throw ArgumentError("gram_distance: " + std::to_string(reps.cols()) + " reps vs target side " +
                        std::to_string(target.rows()));
  return (reps.transpose() * reps - target).norm();
}

struct EtfCheck {
  double max_gram_deviation = 0.0;
  double max_norm_deviation = 0.0;
  double column_sum_norm = 0.0;

  bool ok(double tol) const {
    return max_gram_deviation <= tol && max_norm_deviation <= tol && column_sum_norm <= tol;
  }
};

inline EtfCheck check_etf(const EtfFrame& f) {
  EtfCheck c;
  c.max_gram_deviation = (f.gram() - etf_target_gram(f.num_classes)).cwiseAbs().maxCoeff();
  c.max_norm_deviation = (f.columns.colwise().norm().array() - 1.0).abs().maxCoeff();
  c.column_sum_norm = f.columns.rowwise().sum().norm();
  return c;
}

}  // namespace npt
