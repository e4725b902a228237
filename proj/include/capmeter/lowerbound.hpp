#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "capmeter/linalg.hpp"
#include "capmeter/nn.hpp"
#include "capmeter/rng.hpp"

namespace capmeter {

/// Adversarial instance realizing the Rademacher lower bound: d = h = 2^k,
/// m = n 2^k samples that are n copies of each standard basis vector, and a
/// sign-adjusted Hadamard matrix F whose columns all satisfy
/// <s, [f_i]_+> >= 2^{-k/2-1} sum_j s_j with s_j = alpha_j beta_j.
struct LowerBoundInstance {
  std::size_t k = 0;
  std::size_t n = 0;
  Vector alpha;
  Vector beta;
  DenseMatrix F;
  LabeledDataset dataset;
  Vector col_pos;  // col_pos[j] = <s, [f_j]_+>

  std::size_t dim() const { return std::size_t{1} << k; }
  std::size_t samples() const { return n * dim(); }
};

inline LowerBoundInstance build_instance(std::size_t k, std::size_t n,
                                         Vector alpha, Vector beta) {
  const std::size_t h = std::size_t{1} << k;
  if (n < 1) throw std::invalid_argument("build_instance: n must be >= 1");
  if (alpha.size() != h || beta.size() != h)
    throw std::invalid_argument("build_instance: alpha/beta must have length 2^k");
  for (std::size_t j = 0; j < h; ++j)
    if (!(alpha[j] > 0.0) || !(beta[j] > 0.0))
      throw std::invalid_argument("build_instance: alpha, beta must be positive");

  LowerBoundInstance inst;
  inst.k = k;
  inst.n = n;
  inst.alpha = std::move(alpha);
  inst.beta = std::move(beta);
  inst.F = hadamard(k);

  Vector s(h);
  for (std::size_t j = 0; j < h; ++j) s[j] = inst.alpha[j] * inst.beta[j];

  // Constructive version of the proof's sign flip: per column keep the sign
  // with the larger <s, [+-f]_+>, ties resolved to +. Either choice reaches
  // at least half of <s, |f|> = 2^{-k/2} sum_j s_j.
  inst.col_pos.assign(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double pos = 0.0, neg = 0.0;
    for (std::size_t l = 0; l < h; ++l) {
      const double f = inst.F(l, j);
      if (f > 0.0)
        pos += s[l] * f;
      else
        neg += s[l] * (-f);
    }
    if (neg > pos) {
      for (std::size_t l = 0; l < h; ++l) inst.F(l, j) = -inst.F(l, j);
      inst.col_pos[j] = neg;
    } else {
      inst.col_pos[j] = pos;
    }
  }

  // Dataset: sample i is basis vector e_{ceil(i/n)} (groups of n copies).
  const std::size_t m = n * h;
  DenseMatrix x(m, h);
  std::vector<int> labels(m, 0);
  for (std::size_t i = 0; i < m; ++i) x(i, i / n) = 1.0;
  inst.dataset.X = std::move(x);
  inst.dataset.y = std::move(labels);
  inst.dataset.num_classes = 1;
  inst.dataset.name = "lowerbound_basis";
  return inst;
}

struct Witness {
  DenseMatrix V;  // 1 x h
  DenseMatrix U;  // h x d
  bool v_norms_ok = false;
  bool u_row_norms_ok = false;
  bool u_spectral_ok = false;

  bool feasible() const { return v_norms_ok && u_row_norms_ok && u_spectral_ok; }
};

/// The proof's witness for a sign vector xi: column j of F is kept when the
/// group sign sum eps_j(xi) >= 0 and zeroed otherwise; U = Diag(beta) F~ and
/// V = alpha^T. The three W' constraints are checked post-hoc.
inline Witness witness(const LowerBoundInstance& inst,
                       const std::vector<int>& xi) {
  const std::size_t h = inst.dim();
  const std::size_t m = inst.samples();
  if (xi.size() != m)
    throw std::invalid_argument("witness: xi length != m");
  for (int s : xi)
    if (s != 1 && s != -1)
      throw std::invalid_argument("witness: xi entries must be +-1");

  Witness w;
  w.V = DenseMatrix(1, h);
  for (std::size_t j = 0; j < h; ++j) w.V(0, j) = inst.alpha[j];

  w.U = DenseMatrix(h, h);
  for (std::size_t j = 0; j < h; ++j) {
    long eps = 0;
    for (std::size_t i = j * inst.n; i < (j + 1) * inst.n; ++i) eps += xi[i];
    if (eps >= 0)
      for (std::size_t l = 0; l < h; ++l)
        w.U(l, j) = inst.beta[l] * inst.F(l, j);
  }

  w.v_norms_ok = true;
  for (std::size_t j = 0; j < h; ++j)
    if (std::abs(w.V(0, j)) > inst.alpha[j] * (1.0 + 1e-12)) w.v_norms_ok = false;

  w.u_row_norms_ok = true;
  for (std::size_t l = 0; l < h; ++l) {
    double row_sq = 0.0;
    for (std::size_t j = 0; j < h; ++j) row_sq += w.U(l, j) * w.U(l, j);
    if (std::sqrt(row_sq) > inst.beta[l] * (1.0 + 1e-9))
      w.u_row_norms_ok = false;
  }

  double beta_max = 0.0;
  for (double b : inst.beta) beta_max = std::max(beta_max, b);
  const auto spec = spectral_norm(w.U, 1e-10, 20000);
  w.u_spectral_ok = spec.value <= beta_max * (1.0 + 1e-6);
  return w;
}

namespace detail {

// value(xi) = sum_j [eps_j]_+ <s, [f~_j]_+>, the witnessed correlation.
inline double instance_value(const LowerBoundInstance& inst, std::uint64_t bits) {
  const std::size_t h = inst.dim();
  const std::uint64_t group_mask =
      inst.n == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << inst.n) - 1);
  double value = 0.0;
  for (std::size_t j = 0; j < h; ++j) {
    const std::uint64_t group = (bits >> (j * inst.n)) & group_mask;
    // bit set = +1: eps_j = (#set) - (#clear) over the group's n samples.
    const long eps = 2 * static_cast<long>(std::popcount(group)) -
                     static_cast<long>(inst.n);
    if (eps > 0) value += static_cast<double>(eps) * inst.col_pos[j];
  }
  return value;
}

}  // namespace detail

struct RademacherEstimate {
  double value = 0.0;      // estimate of R_S
  double std_error = 0.0;  // 0 in exact mode
  std::size_t trials = 0;
  bool exact = false;
};

/// Exact empirical Rademacher lower estimate: (1/m) E_xi[value(xi)] with the
/// expectation enumerated over all 2^m sign vectors. Valid lower estimate of
/// R_S(F_W') because every witness lies in W'.
inline RademacherEstimate rademacher_lower_estimate_exact(
    const LowerBoundInstance& inst) {
  const std::size_t m = inst.samples();
  if (m > 20)
    throw std::invalid_argument(
        "rademacher_lower_estimate_exact: m > 20 (2^m enumeration)");
  const std::uint64_t total = std::uint64_t{1} << m;
  double acc = 0.0;
  for (std::uint64_t bits = 0; bits < total; ++bits)
    acc += detail::instance_value(inst, bits);
  RademacherEstimate est;
  est.value = acc / static_cast<double>(total) / static_cast<double>(m);
  est.trials = total;
  est.exact = true;
  return est;
}

inline RademacherEstimate rademacher_lower_estimate_sampled(
    const LowerBoundInstance& inst, std::size_t trials, std::uint64_t seed) {
  const std::size_t m = inst.samples();
  if (m > 64)
    throw std::invalid_argument("rademacher_lower_estimate_sampled: m > 64");
  if (trials == 0)
    throw std::invalid_argument("rademacher_lower_estimate_sampled: no trials");
  rng::Engine eng(rng::derive_seed(seed, rng::Stream::sampling));
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uint64_t bits = eng.next_u64();
    if (m < 64) bits &= (std::uint64_t{1} << m) - 1;
    const double v = detail::instance_value(inst, bits) / static_cast<double>(m);
    sum += v;
    sum_sq += v * v;
  }
  RademacherEstimate est;
  est.value = sum / static_cast<double>(trials);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(trials) - est.value * est.value);
  est.std_error = std::sqrt(var / static_cast<double>(trials));
  est.trials = trials;
  return est;
}

/// The proof chain's closed-form value for the m = n 2^k construction:
/// R_S >= alpha^T beta sqrt(2m) / (8m).
inline double analytic_lower_value(const LowerBoundInstance& inst) {
  const double s = dot(inst.alpha, inst.beta);
  const auto m = static_cast<double>(inst.samples());
  return s * std::sqrt(2.0 * m) / (8.0 * m);
}

/// General-size variant (sizes not powers of two): alpha^T beta sqrt(m)/(16m).
inline double analytic_lower_value_general(const Vector& alpha,
                                           const Vector& beta, std::size_t m) {
  return dot(alpha, beta) * std::sqrt(static_cast<double>(m)) /
         (16.0 * static_cast<double>(m));
}

/// Exact E|xi_1 + ... + xi_n| = sum_j |n-2j| binom(n,j) / 2^n.
inline double abs_sum_expectation(std::size_t n) {
  if (n < 1 || n > 40)
    throw std::invalid_argument("abs_sum_expectation: n must be in [1, 40]");
  // Pascal row n; all values fit exactly in 64 bits for n <= 40.
  std::vector<std::uint64_t> row(n + 1, 0);
  row[0] = 1;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = i; j > 0; --j) row[j] += row[j - 1];
  double num = 0.0;
  for (std::size_t j = 0; j <= n; ++j)
    num += std::abs(static_cast<double>(n) - 2.0 * static_cast<double>(j)) *
           static_cast<double>(row[j]);
  return num / std::pow(2.0, static_cast<double>(n));
}

/// Exact E_xi[sup_{||V-V0||_F <= r} sum_i <xi_i, V x_i>] over all 2^{cm} sign
/// assignments, using the closed form sup = r ||sum_i xi_i x_i^T||_F (the V0
/// part averages to zero and is dropped: V0 = 0 here). When grid_density > 0
/// the closed form is cross-checked against a seeded direction grid, which can
/// only fall short of the true supremum.
inline double brute_force_linear_rademacher(std::size_t c, double r,
                                            const DenseMatrix& x_cols,
                                            std::size_t grid_density = 0) {
  if (r < 0.0)
    throw std::invalid_argument("brute_force_linear_rademacher: r < 0");
  const std::size_t d = x_cols.rows();
  const std::size_t m = x_cols.cols();
  if (m > 12 || c * m > 24)
    throw std::invalid_argument(
        "brute_force_linear_rademacher: 2^{cm} enumeration too large");

  std::vector<DenseMatrix> grid;
  if (grid_density > 0) {
    rng::Engine eng(rng::derive_seed(0xD1CEULL, rng::Stream::sampling));
    for (std::size_t g = 0; g < grid_density; ++g) {
      DenseMatrix dir(c, d);
      for (double& v : dir.data()) v = eng.gaussian();
      const double norm = frobenius_norm(dir);
      if (norm == 0.0) continue;
      for (double& v : dir.data()) v *= r / norm;
      grid.push_back(std::move(dir));
    }
  }

  const std::uint64_t total = std::uint64_t{1} << (c * m);
  double acc = 0.0;
  DenseMatrix sum_outer(c, d);
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    for (double& v : sum_outer.data()) v = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        const double sign = (bits >> (i * c + k)) & 1u ? 1.0 : -1.0;
        for (std::size_t l = 0; l < d; ++l)
          sum_outer(k, l) += sign * x_cols(l, i);
      }
    const double sup = r * frobenius_norm(sum_outer);
    if (!grid.empty()) {
      double best = 0.0;
      for (const auto& dir : grid) {
        double val = 0.0;
        for (std::size_t t = 0; t < dir.size(); ++t)
          val += dir.data()[t] * sum_outer.data()[t];
        best = std::max(best, val);
      }
      if (best > sup * (1.0 + 1e-9))
        throw std::logic_error(
            "brute_force_linear_rademacher: grid exceeded the closed form");
    }
    acc += sup;
  }
  return acc / static_cast<double>(total);
}

/// Returns (||v||_2, sqrt(2) E|<xi, v>|) with the expectation exact by
/// enumeration; the contraction inequality asserts lhs <= rhs.
inline std::pair<double, double> contraction_check(const Vector& v) {
  if (v.empty() || v.size() > 20)
    throw std::invalid_argument("contraction_check: dim must be in [1, 20]");
  const std::uint64_t total = std::uint64_t{1} << v.size();
  double acc = 0.0;
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    double inner = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      inner += ((bits >> i) & 1u) ? v[i] : -v[i];
    acc += std::abs(inner);
  }
  const double expectation = acc / static_cast<double>(total);
  return {norm2(v), std::sqrt(2.0) * expectation};
}

}  // namespace capmeter
