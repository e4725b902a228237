#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capmeter/rng.hpp"

namespace capmeter {

using Vector = std::vector<double>;

inline bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Row-major dense matrix of doubles. The single container used for weight
/// matrices, reference (initialization) snapshots and design matrices.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("DenseMatrix: dimensions must be >= 1");
  }

  DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("DenseMatrix: dimensions must be >= 1");
    if (data_.size() != rows * cols)
      throw std::invalid_argument("DenseMatrix: data length != rows*cols");
    if (!all_finite(data_))
      throw std::invalid_argument("DenseMatrix: non-finite entry");
  }

  static DenseMatrix from_rows(const std::vector<Vector>& rows) {
    if (rows.empty() || rows.front().empty())
      throw std::invalid_argument("DenseMatrix: empty row list");
    const std::size_t c = rows.front().size();
    Vector flat;
    flat.reserve(rows.size() * c);
    for (const auto& r : rows) {
      if (r.size() != c)
        throw std::invalid_argument("DenseMatrix: ragged rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return DenseMatrix(rows.size(), c, std::move(flat));
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }

  const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }
  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  Vector row(std::size_t i) const {
    return Vector(row_ptr(i), row_ptr(i) + cols_);
  }
  Vector col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMajor>;
using EigenConstMap = Eigen::Map<const EigenRowMajor>;

inline EigenConstMap as_eigen(const DenseMatrix& m) {
  return EigenConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                       static_cast<Eigen::Index>(m.cols()));
}

inline EigenMap as_eigen(DenseMatrix& m) {
  return EigenMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

/// A * B. Dense products delegate to Eigen; everything norm-like below is
/// computed directly so the bound evaluations do not depend on a BLAS path.
inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("multiply: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
  return out;
}

/// A * B^T without materializing the transpose.
inline DenseMatrix multiply_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("multiply_nt: inner dimensions differ");
  DenseMatrix out(a.rows(), b.rows());
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b).transpose();
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("subtract: shape mismatch");
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

inline double dot(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm2(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double frobenius_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

struct SpectralResult {
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

namespace detail {

// One power-iteration run on the PSD matrix B from a given start vector.
inline SpectralResult power_iterate(const EigenRowMajor& b, Eigen::VectorXd v,
                                    double tol, std::size_t max_iter) {
  SpectralResult res;
  const double nv = v.norm();
  if (nv == 0.0) return res;
  v /= nv;
  double prev = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = b * v;
    const double lambda = v.dot(w);
    const double nw = w.norm();
    res.iterations = it;
    if (nw == 0.0) {
      // v is in the null space; nothing to converge to from this start.
      res.value = 0.0;
      res.converged = (lambda == 0.0);
      return res;
    }
    v = w / nw;
    const double sigma = std::sqrt(std::max(lambda, 0.0));
    res.value = sigma;
    if (std::abs(sigma - prev) <= tol * std::max(sigma, 1e-300)) {
      res.converged = true;
      return res;
    }
    prev = sigma;
  }
  return res;
}

}  // namespace detail

/// Largest singular value by power iteration on M^T M (or M M^T, whichever is
/// smaller). Runs from the deterministic all-ones start, then from a seeded
/// random start; the random restart guards against the all-ones vector being
/// orthogonal to the top singular direction (detected as a stagnant, smaller
/// estimate).
inline SpectralResult spectral_norm(const DenseMatrix& m, double tol = 1e-9,
                                    std::size_t max_iter = 10000) {
  if (tol <= 0.0) throw std::invalid_argument("spectral_norm: tol must be > 0");
  if (max_iter == 0)
    throw std::invalid_argument("spectral_norm: max_iter must be >= 1");
  const auto a = as_eigen(m);
  const Eigen::Index n = std::min(a.rows(), a.cols());
  EigenRowMajor b(n, n);
  if (a.cols() <= a.rows())
    b.noalias() = a.transpose() * a;
  else
    b.noalias() = a * a.transpose();

  SpectralResult best =
      detail::power_iterate(b, Eigen::VectorXd::Ones(n), tol, max_iter);

  rng::Engine eng(rng::derive_seed(0x5eedULL, rng::Stream::spectral_restart));
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r[i] = eng.gaussian();
  SpectralResult alt = detail::power_iterate(b, r, tol, max_iter);
  if (alt.value > best.value ||
      (!best.converged && alt.converged &&
       alt.value >= best.value * (1.0 - 10.0 * tol)))
    best = alt;
  return best;
}

enum class Axis { rows, cols };

/// Group norm: take the inner l_q norm of each row (or column), then the
/// outer l_p norm (max for p = inf) of the resulting vector.
inline double group_norm(const DenseMatrix& m, Axis axis, double p,
                         int inner_q) {
  if (!(p >= 1.0))
    throw std::invalid_argument("group_norm: p must be >= 1 (or infinity)");
  if (inner_q != 1 && inner_q != 2)
    throw std::invalid_argument("group_norm: inner_q must be 1 or 2");

  const std::size_t groups = (axis == Axis::rows) ? m.rows() : m.cols();
  const std::size_t len = (axis == Axis::rows) ? m.cols() : m.rows();
  Vector inner(groups, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    double acc = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double x = (axis == Axis::rows) ? m(g, t) : m(t, g);
      acc += (inner_q == 1) ? std::abs(x) : x * x;
    }
    inner[g] = (inner_q == 1) ? acc : std::sqrt(acc);
  }

  if (std::isinf(p)) return *std::max_element(inner.begin(), inner.end());
  // Scaled accumulation keeps large p (e.g. p = ln h) overflow-free.
  const double top = *std::max_element(inner.begin(), inner.end());
  if (top == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : inner) acc += std::pow(x / top, p);
  return top * std::pow(acc, 1.0 / p);
}

/// The 2^k x 2^k Sylvester Hadamard matrix normalized by 2^{-k/2}, so that
/// F^T F = I and every entry is +-2^{-k/2}.
inline DenseMatrix hadamard(std::size_t k, std::size_t max_dim = 1u << 14) {
  const std::size_t n = std::size_t{1} << k;
  if (k >= 63 || n > max_dim)
    throw std::invalid_argument("hadamard: 2^k exceeds the size cap");
  const double scale = std::pow(2.0, -static_cast<double>(k) / 2.0);
  DenseMatrix f(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      f(i, j) = (std::popcount(i & j) % 2 == 0) ? scale : -scale;
  return f;
}

/// Angle between two vectors in degrees, clamped to [0, 180].
inline double angle_degrees(const Vector& u, const Vector& v) {
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu < 1e-30 || nv < 1e-30)
    throw std::invalid_argument("angle_degrees: degenerate (near-zero) vector");
  double c = dot(u, v) / (nu * nv);
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) * (180.0 / 3.14159265358979323846);
}

/// Nearest-rank percentile: sort ascending, return the element at 1-based
/// index ceil(q*n/100).
inline double percentile_nearest_rank(Vector values, double q) {
  if (values.empty())
    throw std::invalid_argument("percentile_nearest_rank: empty input");
  if (!(q > 0.0 && q <= 100.0))
    throw std::invalid_argument("percentile_nearest_rank: q must be in (0,100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

}  // namespace capmeter
