#pragma once

// Test-only oracles, deliberately independent of the library's computation
// paths: a one-sided Jacobi SVD for singular values, an order-stable dot
// product, and a one-epoch perceptron probe for linear separability.

#include <algorithm>
#include <cmath>
#include <vector>

#include "capmeter/linalg.hpp"
#include "capmeter/nn.hpp"
#include "capmeter/rng.hpp"

namespace oracles {

/// Singular values by one-sided Jacobi rotations on the columns of M,
/// descending order.
inline capmeter::Vector jacobi_singular_values(const capmeter::DenseMatrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  // Work on the tall orientation so columns are the short axis.
  std::vector<capmeter::Vector> col;
  if (rows >= cols) {
    col.assign(cols, capmeter::Vector(rows));
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t i = 0; i < rows; ++i) col[j][i] = m(i, j);
  } else {
    col.assign(rows, capmeter::Vector(cols));
    for (std::size_t j = 0; j < rows; ++j)
      for (std::size_t i = 0; i < cols; ++i) col[j][i] = m(j, i);
  }

  const std::size_t n = col.size();
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0, aqq = 0, apq = 0;
        for (std::size_t i = 0; i < col[p].size(); ++i) {
          app += col[p][i] * col[p][i];
          aqq += col[q][i] * col[q][i];
          apq += col[p][i] * col[q][i];
        }
        if (std::abs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0)
          continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < col[p].size(); ++i) {
          const double vp = col[p][i], vq = col[q][i];
          col[p][i] = c * vp - s * vq;
          col[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  capmeter::Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = capmeter::norm2(col[j]);
  std::sort(sigma.rbegin(), sigma.rend());
  return sigma;
}

inline double jacobi_spectral_norm(const capmeter::DenseMatrix& m) {
  return jacobi_singular_values(m).front();
}

/// Dot product summed in decreasing order of term magnitude; bit-identical
/// under any permutation applied to both inputs.
inline double stable_dot(const capmeter::Vector& a, const capmeter::Vector& b) {
  capmeter::Vector terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = a[i] * b[i];
  std::sort(terms.begin(), terms.end(), [](double x, double y) {
    if (std::abs(x) != std::abs(y)) return std::abs(x) > std::abs(y);
    return x > y;
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

/// One-epoch multiclass perceptron over a seeded shuffle of the samples;
/// returns training accuracy afterwards.
inline double perceptron_probe_accuracy(const capmeter::LabeledDataset& data) {
  const std::size_t m = data.size(), d = data.dim();
  const auto c = static_cast<std::size_t>(data.num_classes);
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  capmeter::rng::Engine shuffle_eng(0x9e3779b9);
  shuffle_eng.shuffle(order);
  std::vector<capmeter::Vector> w(c, capmeter::Vector(d, 0.0));
  capmeter::Vector bias(c, 0.0);
  for (const std::size_t i : order) {
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < c; ++k) {
      double score = bias[k];
      for (std::size_t j = 0; j < d; ++j) score += w[k][j] * data.X(i, j);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    const auto truth = static_cast<std::size_t>(data.y[i]);
    if (best != truth) {
      for (std::size_t j = 0; j < d; ++j) {
        w[truth][j] += data.X(i, j);
        w[best][j] -= data.X(i, j);
      }
      bias[truth] += 1.0;
      bias[best] -= 1.0;
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < c; ++k) {
      double score = bias[k];
      for (std::size_t j = 0; j < d; ++j) score += w[k][j] * data.X(i, j);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    if (best == static_cast<std::size_t>(data.y[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(m);
}

}  // namespace oracles
