#pragma once

// Brute-force reference computations used by the tests. These deliberately
// avoid the library's vectorized code paths: plain loops over std::vector.

#include "npt/core.hpp"

#include <cmath>
#include <vector>

namespace oracle {

using npt::Index;
using npt::Matrix;

inline double dot(const Matrix& a, Index i, const Matrix& b, Index j) {
  double s = 0.0;
  for (Index r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
  return s;
}

inline Matrix random_unit_columns(Index d, Index n, npt::Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(d, n);
  for (Index j = 0; j < n; ++j) {
    double norm = 0.0;
    for (Index i = 0; i < d; ++i) {
      m(i, j) = g(rng);
      norm += m(i, j) * m(i, j);
    }
    for (Index i = 0; i < d; ++i) m(i, j) /= std::sqrt(norm);
  }
  return m;
}

inline std::vector<int> cyclic_labels(Index n, Index k) {
  std::vector<int> y;
  for (Index i = 0; i < n; ++i) y.push_back(static_cast<int>(i % k));
  return y;
}

inline double delta_lcd(const Matrix& g, double ew = 1.0) {
  const Index k = g.cols();
  const double mu = -1.0 / double(k - 1);
  double s = 0.0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j) s += dot(g, i, g, j) - ew * mu;
  return s / double(k * (k - 1));
}

inline double delta_mid_signed(const Matrix& z, const std::vector<int>& y, const Matrix& g, double ew = 1.0,
                               double eh = 1.0) {
  double s = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) s += dot(z, Index(n), g, y[n]) - std::sqrt(ew * eh);
  return s / double(y.size());
}

inline Matrix prototypes(const Matrix& z, const std::vector<int>& y, Index k) {
  Matrix m = Matrix::Zero(z.rows(), k);
  std::vector<double> cnt(static_cast<std::size_t>(k), 0.0);
  for (std::size_t n = 0; n < y.size(); ++n) {
    for (Index r = 0; r < z.rows(); ++r) m(r, y[n]) += z(r, Index(n));
    cnt[static_cast<std::size_t>(y[n])] += 1.0;
  }
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < z.rows(); ++r) m(r, c) /= cnt[static_cast<std::size_t>(c)];
  return m;
}

inline std::vector<double> global_mean(const Matrix& z) {
  std::vector<double> m(static_cast<std::size_t>(z.rows()), 0.0);
  for (Index n = 0; n < z.cols(); ++n)
    for (Index r = 0; r < z.rows(); ++r) m[static_cast<std::size_t>(r)] += z(r, n) / double(z.cols());
  return m;
}

// Mean over classes of trace of the (biased) within-class covariance.
inline double nc1(const Matrix& z, const std::vector<int>& y, Index k) {
  const Matrix p = prototypes(z, y, k);
  double total = 0.0;
  for (Index c = 0; c < k; ++c) {
    // trace of sum (x - m)(x - m)^T / n_c, computed entrywise on the diagonal
    double tr = 0.0, cnt = 0.0;
    for (Index r = 0; r < z.rows(); ++r) {
      double cov_rr = 0.0;
      cnt = 0.0;
      for (std::size_t n = 0; n < y.size(); ++n)
        if (y[n] == c) {
          const double dlt = z(r, Index(n)) - p(r, c);
          cov_rr += dlt * dlt;
          cnt += 1.0;
        }
      tr += cov_rr / cnt;
    }
    total += tr;
  }
  return total / double(k);
}

inline Matrix centered_normalized_prototypes(const Matrix& z, const std::vector<int>& y, Index k) {
  Matrix p = prototypes(z, y, k);
  const auto g = global_mean(z);
  for (Index c = 0; c < k; ++c) {
    double norm = 0.0;
    for (Index r = 0; r < z.rows(); ++r) {
      p(r, c) -= g[static_cast<std::size_t>(r)];
      norm += p(r, c) * p(r, c);
    }
    for (Index r = 0; r < z.rows(); ++r) p(r, c) /= std::sqrt(norm);
  }
  return p;
}

inline double nc2(const Matrix& z, const std::vector<int>& y, Index k) {
  const Matrix c = centered_normalized_prototypes(z, y, k);
  double s = 0.0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      const double target = i == j ? 1.0 : -1.0 / double(k - 1);
      const double diff = dot(c, i, c, j) - target;
      s += diff * diff;
    }
  return std::sqrt(s);
}

inline double nc3(const Matrix& g, const Matrix& z, const std::vector<int>& y) {
  const Index k = g.cols();
  const Matrix c = centered_normalized_prototypes(z, y, k);
  double total = 0.0;
  for (Index i = 0; i < k; ++i) {
    const double gn = std::sqrt(dot(g, i, g, i));
    double s = 0.0;
    for (Index r = 0; r < g.rows(); ++r) {
      const double dlt = g(r, i) / gn - c(r, i);
      s += dlt * dlt;
    }
    total += std::sqrt(s);
  }
  return total / double(k);
}

inline std::vector<std::vector<double>> softmax_rows(const Matrix& z, const Matrix& g, double lambda) {
  std::vector<std::vector<double>> p;
  for (Index n = 0; n < z.cols(); ++n) {
    std::vector<double> row;
    double denom = 0.0;
    for (Index k = 0; k < g.cols(); ++k) denom += std::exp(dot(z, n, g, k) / lambda);
    for (Index k = 0; k < g.cols(); ++k) row.push_back(std::exp(dot(z, n, g, k) / lambda) / denom);
    p.push_back(row);
  }
  return p;
}

inline double loss_clip(const Matrix& probs, const std::vector<int>& y) {
  double s = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) s -= std::log(probs(Index(n), y[n]));
  return s / double(y.size());
}

inline double loss_lc(const Matrix& g, double ew = 1.0) {
  const Index k = g.cols();
  const double mu = -1.0 / double(k - 1);
  double s = 0.0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j) {
        const double r = dot(g, i, g, j) - ew * mu;
        s += r * r;
      }
  return s;
}

inline double loss_mi_sum(const Matrix& z, const std::vector<int>& y, const Matrix& g, double ew = 1.0,
                          double eh = 1.0) {
  double s = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) {
    const double r = dot(z, Index(n), g, y[n]) - std::sqrt(ew * eh);
    s += r * r;
  }
  return s;
}

// n_k = max(1, floor(n_max * tau^((k-1)/(K-1)) + 1/2)) in long double.
inline std::vector<Index> profile(Index k, Index n_max, double tau) {
  std::vector<Index> c;
  for (Index i = 0; i < k; ++i) {
    const long double e = k == 1 ? 0.0L : (long double)i / (long double)(k - 1);
    const long double v = (long double)n_max * std::pow((long double)tau, e);
    c.push_back(std::max<Index>(1, (Index)std::floor(v + 0.5L)));
    if (k == 1) break;
  }
  return c;
}

}  // namespace oracle
